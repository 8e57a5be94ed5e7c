//! Speaker-level decisions and ensemble fusion.
//!
//! A machine produces one probability per crop. A single machine decides a
//! speaker either by thresholding the mean crop probability or by the mode
//! of thresholded crop labels. `M` machines are fused by one of:
//!
//! - Method 1: average probabilities per crop across machines, then apply
//!   the mean rule per speaker.
//! - Method 2: pool all `M * L` crop labels of a speaker and take the mode.
//! - Method 3: take each machine's speaker-level mode, then the mode of those.
//!
//! Exact ties in a mode are broken by a seeded coin flip.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation::{confusion, metrics, PerClass};
use crate::features::LogSpectrogram;
use crate::{rng, Error, Label, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FusionMethod {
    /// Mean of sample probabilities across machines.
    SampleMean = 1,
    /// Mode over all sample labels of all machines.
    PooledMode = 2,
    /// Mode of per-machine speaker modes.
    SpeakerMode = 3,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [FusionMethod::SampleMean, FusionMethod::PooledMode, FusionMethod::SpeakerMode];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for FusionMethod {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(FusionMethod::SampleMean),
            2 => Ok(FusionMethod::PooledMode),
            3 => Ok(FusionMethod::SpeakerMode),
            _ => Err(format!("fusion method must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<FusionMethod> for u8 {
    fn from(m: FusionMethod) -> u8 {
        m as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub machines: usize,
    pub method: FusionMethod,
    pub threshold: f64,
    #[serde(skip)]
    pub tie_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            machines: 50,
            method: FusionMethod::SampleMean,
            threshold: DEFAULT_THRESHOLD,
            tie_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.machines < 1 {
            return Err(Error::InvalidArgument("ensemble needs at least one machine".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// One speaker's crop probabilities from one machine, ordered by crop index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPredictions {
    pub crop_indices: Vec<u32>,
    pub probabilities: Vec<f64>,
}

/// All crop probabilities of one machine, keyed by speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub machine: usize,
    pub speakers: BTreeMap<String, SpeakerPredictions>,
}

impl PredictionSet {
    /// Group per-crop probabilities by speaker.
    pub fn from_features(machine: usize, features: &[LogSpectrogram], probabilities: &[f64]) -> Result<Self> {
        if features.len() != probabilities.len() {
            return Err(Error::shape(format!("{} probabilities", features.len()), probabilities.len()));
        }
        let mut rows: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
        for (f, &p) in features.iter().zip(probabilities) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
            }
            rows.entry(f.speaker_id.clone()).or_default().push((f.crop_index, p));
        }
        let speakers = rows
            .into_iter()
            .map(|(s, mut v)| {
                v.sort_by_key(|(i, _)| *i);
                let (crop_indices, probabilities) = v.into_iter().unzip();
                (s, SpeakerPredictions { crop_indices, probabilities })
            })
            .collect();
        Ok(Self { machine, speakers })
    }
}

/// Label 1 iff `p >= threshold`.
pub fn sample_labels(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities.iter().map(|&p| threshold_label(p, threshold)).collect()
}

fn threshold_label(p: f64, threshold: f64) -> Label {
    if p >= threshold {
        Label::Depressed
    } else {
        Label::NonDepressed
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Averages within this distance below the threshold count as reaching it,
/// so that decimal ties such as the mean of `[0.0, 0.6, 0.7, 0.7]` resolve to 1.
pub const MEAN_SLACK: f64 = 1e-12;

/// Threshold on the mean sample probability.
pub fn speaker_label_mean(probabilities: &[f64], threshold: f64) -> Label {
    threshold_label(mean(probabilities) + MEAN_SLACK, threshold)
}

fn mode_of_counts(ones: usize, zeros: usize, rng: &mut rng::Rng) -> Label {
    match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => Label::Depressed,
        std::cmp::Ordering::Less => Label::NonDepressed,
        std::cmp::Ordering::Equal => {
            if rng.gen_bool(0.5) {
                Label::Depressed
            } else {
                Label::NonDepressed
            }
        }
    }
}

/// Majority label; an exact tie draws from `rng`.
pub fn speaker_label_mode(labels: &[Label], rng: &mut rng::Rng) -> Label {
    let ones = labels.iter().filter(|&&l| l == Label::Depressed).count();
    mode_of_counts(ones, labels.len() - ones, rng)
}

fn check_consistent(sets: &[PredictionSet]) -> Result<()> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InconsistentPredictions("no machines to fuse".into()))?;
    for s in &sets[1..] {
        if s.speakers.len() != first.speakers.len() {
            return Err(Error::InconsistentPredictions(format!(
                "machine {} scores {} speakers, machine {} scores {}",
                first.machine,
                first.speakers.len(),
                s.machine,
                s.speakers.len()
            )));
        }
        for ((a, pa), (b, pb)) in first.speakers.iter().zip(&s.speakers) {
            if a != b {
                return Err(Error::InconsistentPredictions(format!(
                    "machine {} has speaker {a} where machine {} has {b}",
                    first.machine, s.machine
                )));
            }
            if pa.crop_indices != pb.crop_indices {
                return Err(Error::InconsistentPredictions(format!(
                    "speaker {a}: machines {} and {} scored different crops",
                    first.machine, s.machine
                )));
            }
        }
    }
    for (s, p) in &first.speakers {
        if p.probabilities.is_empty() {
            return Err(Error::InconsistentPredictions(format!("speaker {s} has no crops")));
        }
    }
    Ok(())
}

/// Method 1.
pub fn fuse_method1(sets: &[PredictionSet], threshold: f64) -> Result<BTreeMap<String, Label>> {
    check_consistent(sets)?;
    let m = sets.len() as f64;
    Ok(sets[0]
        .speakers
        .iter()
        .map(|(speaker, first)| {
            let averaged: Vec<f64> = (0..first.probabilities.len())
                .map(|l| sets.iter().map(|s| s.speakers[speaker].probabilities[l]).sum::<f64>() / m)
                .collect();
            (speaker.clone(), speaker_label_mean(&averaged, threshold))
        })
        .collect())
}

/// Method 2.
pub fn fuse_method2(sets: &[PredictionSet], threshold: f64, rng: &mut rng::Rng) -> Result<BTreeMap<String, Label>> {
    check_consistent(sets)?;
    Ok(sets[0]
        .speakers
        .keys()
        .map(|speaker| {
            let (mut ones, mut total) = (0, 0);
            for s in sets {
                let probs = &s.speakers[speaker].probabilities;
                ones += probs.iter().filter(|&&p| p >= threshold).count();
                total += probs.len();
            }
            (speaker.clone(), mode_of_counts(ones, total - ones, rng))
        })
        .collect())
}

/// Method 3.
pub fn fuse_method3(sets: &[PredictionSet], threshold: f64, rng: &mut rng::Rng) -> Result<BTreeMap<String, Label>> {
    check_consistent(sets)?;
    Ok(sets[0]
        .speakers
        .keys()
        .map(|speaker| {
            let votes: Vec<Label> = sets
                .iter()
                .map(|s| speaker_label_mode(&sample_labels(&s.speakers[speaker].probabilities, threshold), rng))
                .collect();
            (speaker.clone(), speaker_label_mode(&votes, rng))
        })
        .collect())
}

pub fn fuse(
    sets: &[PredictionSet],
    method: FusionMethod,
    threshold: f64,
    tie_seed: u64,
) -> Result<BTreeMap<String, Label>> {
    let mut rng = rng::seeded(tie_seed);
    match method {
        FusionMethod::SampleMean => fuse_method1(sets, threshold),
        FusionMethod::PooledMode => fuse_method2(sets, threshold, &mut rng),
        FusionMethod::SpeakerMode => fuse_method3(sets, threshold, &mut rng),
    }
}

/// Mean and standard deviation of per-class F1 over machine subsets of one size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub machines: usize,
    pub f1_mean: PerClass<f64>,
    pub f1_std: PerClass<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.iter().all(|&x| x == v[0]) {
        return (v[0], 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// F1 as a function of ensemble size.
///
/// For each size `M`, `n_combinations` subsets of the pool are drawn without
/// replacement from a stream keyed by `(seed, M, combination)`. Tie draws
/// are keyed by the subset itself, so equal subsets fuse identically.
pub fn f1_vs_m_experiment(
    pool: &[PredictionSet],
    truth: &BTreeMap<String, Label>,
    m_values: &[usize],
    n_combinations: usize,
    method: FusionMethod,
    threshold: f64,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if n_combinations < 1 {
        return Err(Error::InvalidArgument("need at least one combination".into()));
    }
    m_values
        .iter()
        .map(|&m| {
            if m < 1 || m > pool.len() {
                return Err(Error::InvalidArgument(format!(
                    "ensemble size {m} is outside 1..={}",
                    pool.len()
                )));
            }
            let scores: Vec<PerClass<f64>> = (0..n_combinations)
                .into_par_iter()
                .map(|c| {
                    let mut pick_rng = rng::seeded(rng::derive(seed, &[m as u64, c as u64]));
                    let mut subset = index::sample(&mut pick_rng, pool.len(), m).into_vec();
                    subset.sort_unstable();
                    let tie_key: Vec<u64> = std::iter::once(u64::MAX).chain(subset.iter().map(|&i| i as u64)).collect();
                    let chosen: Vec<PredictionSet> = subset.iter().map(|&i| pool[i].clone()).collect();
                    let fused = fuse(&chosen, method, threshold, rng::derive(seed, &tie_key))?;
                    let report = metrics(&confusion(truth, &fused)?);
                    Ok(PerClass {
                        depressed: report.depressed.f1,
                        non_depressed: report.non_depressed.f1,
                    })
                })
                .collect::<Result<_>>()?;
            let (dm, ds) = mean_std(&scores.iter().map(|s| s.depressed).collect::<Vec<_>>());
            let (nm, ns) = mean_std(&scores.iter().map(|s| s.non_depressed).collect::<Vec<_>>());
            Ok(CurvePoint {
                machines: m,
                f1_mean: PerClass {
                    depressed: dm,
                    non_depressed: nm,
                },
                f1_std: PerClass {
                    depressed: ds,
                    non_depressed: ns,
                },
            })
        })
        .collect()
}

/// Prediction interchange: `machine,speaker_id,crop_index,probability,label`.
pub fn predictions_to_csv(sets: &[PredictionSet], threshold: f64) -> String {
    let mut s = String::from("machine,speaker_id,crop_index,probability,label\n");
    for set in sets {
        for (speaker, p) in &set.speakers {
            for (&idx, &prob) in p.crop_indices.iter().zip(&p.probabilities) {
                let label = threshold_label(prob, threshold).as_u8();
                s.push_str(&format!("{},{},{},{},{}\n", set.machine, speaker, idx, prob, label));
            }
        }
    }
    s
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    machine: usize,
    speaker_id: String,
    crop_index: u32,
    probability: f64,
    #[allow(dead_code)]
    label: u8,
}

/// Parse interchange CSV back into one set per machine, ordered by machine id.
pub fn predictions_from_csv(data: &[u8]) -> Result<Vec<PredictionSet>> {
    let mut r = csv::Reader::from_reader(data);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["machine", "speaker_id", "crop_index", "probability", "label"] {
        return Err(Error::InconsistentPredictions(format!("unexpected header {headers:?}")));
    }
    let mut by_machine: BTreeMap<usize, BTreeMap<String, Vec<(u32, f64)>>> = BTreeMap::new();
    for row in r.deserialize::<PredictionRow>() {
        let row = row?;
        if !(0.0..=1.0).contains(&row.probability) {
            return Err(Error::InvalidArgument(format!("probability {} outside [0, 1]", row.probability)));
        }
        by_machine
            .entry(row.machine)
            .or_default()
            .entry(row.speaker_id)
            .or_default()
            .push((row.crop_index, row.probability));
    }
    Ok(by_machine
        .into_iter()
        .map(|(machine, speakers)| PredictionSet {
            machine,
            speakers: speakers
                .into_iter()
                .map(|(s, mut v)| {
                    v.sort_by_key(|(i, _)| *i);
                    let (crop_indices, probabilities) = v.into_iter().unzip();
                    (s, SpeakerPredictions { crop_indices, probabilities })
                })
                .collect(),
        })
        .collect())
}

pub fn write_predictions(path: impl AsRef<Path>, sets: &[PredictionSet], threshold: f64) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(predictions_to_csv(sets, threshold).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Depressed as D, NonDepressed as N};

    fn set(machine: usize, speakers: &[(&str, &[f64])]) -> PredictionSet {
        PredictionSet {
            machine,
            speakers: speakers
                .iter()
                .map(|(s, p)| {
                    (
                        s.to_string(),
                        SpeakerPredictions {
                            crop_indices: (0..p.len() as u32).collect(),
                            probabilities: p.to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn sample_label_threshold_rule() {
        assert_eq!(sample_labels(&[0.2, 0.8], 0.5), vec![N, D]);
        assert_eq!(sample_labels(&[0.5], 0.5), vec![D]);
        assert_eq!(sample_labels(&[0.1, 0.49], 0.5), vec![N, N]);
    }

    #[test]
    fn mean_rule() {
        assert_eq!(speaker_label_mean(&[0.9, 0.2, 0.8], 0.5), D);
        assert_eq!(speaker_label_mean(&[0.4, 0.4], 0.5), N);
        assert_eq!(speaker_label_mean(&[0.7], 0.5), sample_labels(&[0.7], 0.5)[0]);
    }

    #[test]
    fn decimal_ties_reach_the_threshold() {
        assert!(mean(&[0.0, 0.6, 0.7, 0.7]) < 0.5);
        assert_eq!(speaker_label_mean(&[0.0, 0.6, 0.7, 0.7], 0.5), D);
        assert_eq!(speaker_label_mean(&[0.0, 0.6, 0.7, 0.69], 0.5), N);
    }

    #[test]
    fn mode_rule_and_seeded_ties() {
        let mut r = rng::seeded(1);
        assert_eq!(speaker_label_mode(&[D, D, N], &mut r), D);
        assert_eq!(speaker_label_mode(&[N, N, N, N], &mut r), N);
        let draws = |seed| {
            let mut r = rng::seeded(seed);
            (0..16).map(|_| speaker_label_mode(&[N, D], &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draws(4), draws(4));
        let d = draws(4);
        assert!(d.contains(&D) && d.contains(&N));
    }

    #[test]
    fn method1_examples() {
        let a = set(0, &[("s", &[0.2])]);
        let b = set(1, &[("s", &[0.9])]);
        assert_eq!(fuse_method1(&[a.clone(), b], 0.5).unwrap()["s"], D);
        let single = set(0, &[("x", &[0.9, 0.2, 0.8]), ("y", &[0.4, 0.4])]);
        let fused = fuse_method1(std::slice::from_ref(&single), 0.5).unwrap();
        assert_eq!(fused["x"], D);
        assert_eq!(fused["y"], N);
        let dup = fuse_method1(&[single.clone(), single.clone(), single], 0.5).unwrap();
        assert_eq!(dup, fused);
    }

    #[test]
    fn method2_examples() {
        let mut r = rng::seeded(0);
        let sets = [set(0, &[("s", &[0.9])]), set(1, &[("s", &[0.8])]), set(2, &[("s", &[0.1])])];
        assert_eq!(fuse_method2(&sets, 0.5, &mut r).unwrap()["s"], D);
        let unanimous = [set(0, &[("s", &[0.1, 0.2])]), set(1, &[("s", &[0.3, 0.0])])];
        assert_eq!(fuse_method2(&unanimous, 0.5, &mut r).unwrap()["s"], N);
        // [1,0] and [0,1]: a tie decided by the seeded generator
        let tie = [set(0, &[("s", &[0.9, 0.1])]), set(1, &[("s", &[0.1, 0.9])])];
        let a = fuse(&tie, FusionMethod::PooledMode, 0.5, 77).unwrap();
        assert_eq!(a, fuse(&tie, FusionMethod::PooledMode, 0.5, 77).unwrap());
    }

    #[test]
    fn method2_and_method3_can_disagree() {
        // pooled 4 of 10 positive; the machines split 1-1
        let a = set(0, &[("s", &[0.9, 0.1, 0.1, 0.1, 0.1])]);
        let b = set(1, &[("s", &[0.9, 0.9, 0.9, 0.1, 0.1])]);
        let sets = [a, b];
        for seed in 0..20 {
            assert_eq!(fuse(&sets, FusionMethod::PooledMode, 0.5, seed).unwrap()["s"], N);
        }
        let outcomes: Vec<Label> = (0..20)
            .map(|seed| fuse(&sets, FusionMethod::SpeakerMode, 0.5, seed).unwrap()["s"])
            .collect();
        assert!(outcomes.contains(&D) && outcomes.contains(&N));
    }

    #[test]
    fn method3_majority_of_machines() {
        let sets = [set(0, &[("s", &[0.9])]), set(1, &[("s", &[0.7])]), set(2, &[("s", &[0.2])])];
        assert_eq!(fuse(&sets, FusionMethod::SpeakerMode, 0.5, 0).unwrap()["s"], D);
    }

    #[test]
    fn inconsistent_sets_are_rejected() {
        let a = set(0, &[("s", &[0.9])]);
        let b = set(1, &[("t", &[0.9])]);
        let c = set(2, &[("s", &[0.9, 0.1])]);
        assert!(fuse_method1(&[a.clone(), b], 0.5).is_err());
        assert!(fuse_method1(&[a, c], 0.5).is_err());
        assert!(fuse_method1(&[], 0.5).is_err());
    }

    #[test]
    fn curve_std_vanishes_for_full_pool_and_single_combination() {
        let pool: Vec<PredictionSet> = (0..4)
            .map(|m| {
                let shift = m as f64 * 0.1;
                set(m, &[("a", &[0.3 + shift, 0.6]), ("b", &[0.7 - shift, 0.4]), ("c", &[0.55, 0.45])])
            })
            .collect();
        let truth: BTreeMap<String, Label> = [("a", D), ("b", N), ("c", D)].iter().map(|(s, l)| (s.to_string(), *l)).collect();
        for method in FusionMethod::ALL {
            let full = f1_vs_m_experiment(&pool, &truth, &[4], 10, method, 0.5, 3).unwrap();
            assert_eq!(full[0].f1_std.depressed, 0.0);
            assert_eq!(full[0].f1_std.non_depressed, 0.0);
            let one = f1_vs_m_experiment(&pool, &truth, &[1, 2], 1, method, 0.5, 3).unwrap();
            assert!(one.iter().all(|p| p.f1_std.depressed == 0.0 && p.f1_std.non_depressed == 0.0));
        }
        assert!(f1_vs_m_experiment(&pool, &truth, &[5], 10, FusionMethod::SampleMean, 0.5, 3).is_err());
        let r1 = f1_vs_m_experiment(&pool, &truth, &[1, 2, 3], 25, FusionMethod::SampleMean, 0.5, 9).unwrap();
        let r2 = f1_vs_m_experiment(&pool, &truth, &[1, 2, 3], 25, FusionMethod::SampleMean, 0.5, 9).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn interchange_round_trip() {
        let sets = vec![
            set(0, &[("a", &[0.25, 0.5]), ("b", &[0.125])]),
            set(1, &[("a", &[0.75, 0.0]), ("b", &[1.0])]),
        ];
        let csv = predictions_to_csv(&sets, 0.5);
        assert!(csv.starts_with("machine,speaker_id,crop_index,probability,label\n0,a,0,0.25,0\n0,a,1,0.5,1\n"));
        assert_eq!(predictions_from_csv(csv.as_bytes()).unwrap(), sets);
        assert!(predictions_from_csv(b"m,s\n").is_err());
    }

    #[test]
    fn from_features_groups_and_sorts() {
        use ndarray::Array2;
        let f = |s: &str, i: u32| LogSpectrogram {
            values: Array2::zeros((1, 1)),
            speaker_id: s.into(),
            crop_index: i,
            label: Some(D),
            normalized: true,
        };
        let feats = vec![f("b", 1), f("a", 0), f("b", 0)];
        let ps = PredictionSet::from_features(3, &feats, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(ps.speakers["b"].crop_indices, vec![0, 1]);
        assert_eq!(ps.speakers["b"].probabilities, vec![0.3, 0.1]);
        assert!(PredictionSet::from_features(0, &feats, &[0.1]).is_err());
    }
}
