//! Fixed-length cropping and balanced training-set construction.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};

use crate::audio::AudioClip;
use crate::{rng, Error, Label, Result};

pub const DEFAULT_CROP_S: f64 = 4.0;
pub const DEFAULT_EVAL_CAP: usize = 89;

/// A fixed-length window of one speaker's recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCrop {
    pub speaker_id: String,
    pub crop_index: u32,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub label: Option<Label>,
}

/// Crop length in samples for a crop of `crop_s` seconds.
pub fn crop_len(crop_s: f64, sample_rate: u32) -> usize {
    (crop_s * sample_rate as f64).round() as usize
}

/// Split a clip into consecutive non-overlapping crops from offset 0. The
/// trailing remainder is discarded; a clip shorter than one crop yields none.
pub fn crop(clip: &AudioClip, crop_s: f64) -> Result<Vec<SampleCrop>> {
    let len = crop_len(crop_s, clip.sample_rate);
    if !(crop_s > 0.0) || len == 0 {
        return Err(Error::InvalidArgument(format!("crop length must be positive, got {crop_s} s")));
    }
    Ok(clip
        .samples
        .chunks_exact(len)
        .enumerate()
        .map(|(i, w)| SampleCrop {
            speaker_id: clip.speaker_id.clone(),
            crop_index: i as u32,
            samples: w.to_vec(),
            sample_rate: clip.sample_rate,
            label: clip.label,
        })
        .collect())
}

/// Equal crops per speaker, equal speakers per class.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedPlan {
    pub crops_per_speaker: usize,
    pub speakers_per_class: usize,
    pub selected: BTreeMap<Label, Vec<String>>,
    pub total_samples: usize,
}

impl BalancedPlan {
    pub fn selected_speakers(&self) -> impl Iterator<Item = &str> {
        self.selected.values().flatten().map(String::as_str)
    }
}

/// Choose crops-per-speaker `c` and speakers-per-class `K` maximizing
/// `2*K*c`, where a speaker is eligible for `c` when it has at least `c`
/// crops and `K` is the smaller eligible pool. Ties go to the larger `c`.
/// Pools larger than `K` are subsampled uniformly with `seed`.
pub fn plan_balanced(
    crop_counts: &BTreeMap<String, usize>,
    labels: &BTreeMap<String, Label>,
    seed: u64,
) -> Result<BalancedPlan> {
    let mut counts_by_class: BTreeMap<Label, Vec<(&str, usize)>> = BTreeMap::new();
    for (speaker, &label) in labels {
        let n = crop_counts.get(speaker).copied().unwrap_or(0);
        counts_by_class.entry(label).or_default().push((speaker, n));
    }
    for class in [Label::NonDepressed, Label::Depressed] {
        if counts_by_class.get(&class).map_or(true, |v| v.is_empty()) {
            return Err(Error::EmptyClass(class));
        }
    }
    if let Some(s) = crop_counts.keys().find(|s| !labels.contains_key(*s)) {
        return Err(Error::InvalidArgument(format!("speaker {s} has crops but no label")));
    }

    let mut candidates: Vec<usize> = crop_counts.values().copied().filter(|&c| c > 0).collect();
    candidates.sort_unstable();
    candidates.dedup();

    let eligible = |class: Label, c: usize| counts_by_class[&class].iter().filter(|(_, n)| *n >= c).count();
    let mut best: Option<(usize, usize, usize)> = None; // (total, c, k)
    for &c in &candidates {
        let k = eligible(Label::NonDepressed, c).min(eligible(Label::Depressed, c));
        let total = 2 * k * c;
        // ascending c, so >= prefers the larger c on ties
        if k > 0 && best.map_or(true, |(t, _, _)| total >= t) {
            best = Some((total, c, k));
        }
    }
    let (total, c, k) = match best {
        Some(b) => b,
        None => {
            let empty = [Label::NonDepressed, Label::Depressed]
                .into_iter()
                .find(|&l| counts_by_class[&l].iter().all(|(_, n)| *n == 0))
                .unwrap_or(Label::Depressed);
            return Err(Error::EmptyClass(empty));
        }
    };

    let mut selected = BTreeMap::new();
    for (&class, pool) in &counts_by_class {
        let eligible: Vec<&str> = pool.iter().filter(|(_, n)| *n >= c).map(|(s, _)| *s).collect();
        let mut rng = rng::seeded(rng::derive(seed, &[class as u64]));
        let mut chosen: Vec<String> = if eligible.len() > k {
            index::sample(&mut rng, eligible.len(), k)
                .into_iter()
                .map(|i| eligible[i].to_string())
                .collect()
        } else {
            eligible.iter().map(|s| s.to_string()).collect()
        };
        chosen.sort();
        selected.insert(class, chosen);
    }
    Ok(BalancedPlan {
        crops_per_speaker: c,
        speakers_per_class: k,
        selected,
        total_samples: total,
    })
}

fn group_by_speaker(crops: &[SampleCrop]) -> BTreeMap<&str, Vec<&SampleCrop>> {
    let mut by: BTreeMap<&str, Vec<&SampleCrop>> = BTreeMap::new();
    for c in crops {
        by.entry(c.speaker_id.as_str()).or_default().push(c);
    }
    for v in by.values_mut() {
        v.sort_by_key(|c| c.crop_index);
    }
    by
}

/// Draw `c` crops uniformly without replacement for every selected speaker,
/// then shuffle the whole set.
pub fn materialize_training_set(plan: &BalancedPlan, crops: &[SampleCrop], seed: u64) -> Result<Vec<SampleCrop>> {
    let by_speaker = group_by_speaker(crops);
    let mut rng = rng::seeded(seed);
    let mut out = Vec::with_capacity(plan.total_samples);
    for speaker in plan.selected_speakers() {
        let available = by_speaker.get(speaker).map(Vec::as_slice).unwrap_or(&[]);
        if available.len() < plan.crops_per_speaker {
            return Err(Error::InvalidArgument(format!(
                "speaker {speaker} has {} crops, plan needs {}",
                available.len(),
                plan.crops_per_speaker
            )));
        }
        let mut picks = index::sample(&mut rng, available.len(), plan.crops_per_speaker).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| available[i].clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Keep the first `min(cap, available)` crops of every speaker.
pub fn materialize_eval_set(crops: &[SampleCrop], cap: usize) -> Vec<SampleCrop> {
    group_by_speaker(crops)
        .into_values()
        .flat_map(|v| v.into_iter().take(cap).cloned())
        .collect()
}
