//! Configuration, pipeline glue and the command implementations behind the
//! `voicedep` binary.
//!
//! Every command writes its resolved configuration to `config.toml` in its
//! output directory; passing that file back with `--config` reproduces the
//! run.

mod config;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{CurveConfig, RunConfig, SamplingConfig, Seeds};
pub use svg::f1_curve_svg;

use crate::audio::{load_wav, synth_from_entry, synth_train_test, trim_silence, write_wav, AudioClip, CorpusManifest, ManifestEntry, Split};
use crate::ensemble::{self, f1_vs_m_experiment, fuse, CurvePoint, FusionMethod, PredictionSet};
use crate::evaluation::{self, confusion, cross_validate, metrics, metrics_csv, predict_sets, speaker_truth, CvReport, MetricsReport};
use crate::features::{featurize_all, read_cache, write_cache, LogSpectrogram};
use crate::network::{load_model, save_model, NetworkConfig, NetworkParams};
use crate::sampling::{crop, materialize_eval_set, materialize_training_set, plan_balanced, BalancedPlan};
use crate::trainer::{train_ensemble, TrainHistory};
use crate::{Error, Label, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAIN_CACHE: &str = "train.lspg";
pub const TEST_CACHE: &str = "test.lspg";
pub const CONFIG_ECHO: &str = "config.toml";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join(CONFIG_ECHO), cfg.to_toml())
}

pub fn model_path(dir: &Path, machine: usize) -> PathBuf {
    dir.join(format!("machine_{machine}.sdm"))
}

pub fn history_path(dir: &Path, machine: usize) -> PathBuf {
    dir.join(format!("history_{machine}.csv"))
}

/// A cache argument may name a file or a directory holding `train.lspg`
/// and `test.lspg`.
pub fn cache_file(path: &Path, split: Split) -> PathBuf {
    if path.is_dir() {
        path.join(match split {
            Split::Train => TRAIN_CACHE,
            Split::Test => TEST_CACHE,
        })
    } else {
        path.to_path_buf()
    }
}

/// Audio for one manifest entry: regenerated for `synth:` paths, read from
/// disk otherwise. Relative paths resolve against `base_dir`.
pub fn load_clip(entry: &ManifestEntry, base_dir: &Path, sample_rate: u32) -> Result<AudioClip> {
    let mut clip = match synth_from_entry(entry, sample_rate)? {
        Some(c) => c,
        None => {
            let p = Path::new(&entry.path);
            let p = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
            load_wav(&p)?
        }
    };
    clip.speaker_id = entry.speaker_id.clone();
    clip.label = Some(entry.label);
    Ok(clip)
}

/// Unnormalized features for both splits.
#[derive(Debug, Clone)]
pub struct PreparedFeatures {
    pub train: Vec<LogSpectrogram>,
    pub test: Vec<LogSpectrogram>,
    pub plan: Option<BalancedPlan>,
}

/// Trim, crop and featurize. The train split goes through the balanced
/// planner; each test speaker keeps at most `eval_cap` crops.
pub fn prepare_features(manifest: &CorpusManifest, clips: &[AudioClip], cfg: &RunConfig) -> Result<PreparedFeatures> {
    if manifest.entries.len() != clips.len() {
        return Err(Error::shape(format!("{} clips", manifest.entries.len()), clips.len()));
    }
    let s = &cfg.sampling;
    let mut train_crops = Vec::new();
    let mut test_crops = Vec::new();
    let mut train_labels = BTreeMap::new();
    let mut train_counts = BTreeMap::new();
    for (entry, clip) in manifest.entries.iter().zip(clips) {
        let clip = if s.trim {
            trim_silence(clip, s.trim_frame_s, s.trim_floor_db)?
        } else {
            clip.clone()
        };
        let crops = crop(&clip, s.crop_s)?;
        match entry.split {
            Split::Train => {
                train_labels.insert(entry.speaker_id.clone(), entry.label);
                train_counts.insert(entry.speaker_id.clone(), crops.len());
                train_crops.extend(crops);
            }
            Split::Test => test_crops.extend(crops),
        }
    }
    let plan = if train_labels.is_empty() {
        None
    } else {
        Some(plan_balanced(&train_counts, &train_labels, cfg.seeds().sampling)?)
    };
    let train = match &plan {
        Some(p) => {
            let chosen = materialize_training_set(p, &train_crops, cfg.seeds().sampling)?;
            featurize_all(&chosen, &cfg.stft, false)?
        }
        None => Vec::new(),
    };
    let test = featurize_all(&materialize_eval_set(&test_crops, s.eval_cap), &cfg.stft, false)?;
    Ok(PreparedFeatures { train, test, plan })
}

/// Generate the synthetic corpus. With `write_audio`, clips are written as
/// WAV files under `out/wav` and the manifest points at them; otherwise the
/// manifest stores `synth:<seed>` entries that regenerate on load.
pub fn cmd_synth(cfg: &RunConfig, out: &Path, write_audio: bool) -> Result<CorpusManifest> {
    echo_config(cfg, out)?;
    let (mut manifest, clips) = synth_train_test(&cfg.synth, cfg.seeds().synth)?;
    if write_audio {
        let wav_dir = out.join("wav");
        create_dir(&wav_dir)?;
        for (entry, clip) in manifest.entries.iter_mut().zip(&clips) {
            let rel = format!("wav/{}.wav", entry.speaker_id);
            write_wav(clip, out.join(&rel))?;
            entry.path = rel;
        }
    }
    manifest.write(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturizeSummary {
    pub train_crops: usize,
    pub test_crops: usize,
    pub crops_per_speaker: usize,
    pub speakers_per_class: usize,
    pub train_speakers: Vec<String>,
    pub f0: usize,
    pub t0: usize,
}

/// Featurize a manifest into `out/train.lspg` and `out/test.lspg`.
pub fn cmd_featurize(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<FeaturizeSummary> {
    let manifest = CorpusManifest::read(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::Manifest(format!("{} has no entries", manifest_path.display())));
    }
    echo_config(cfg, out)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let clips = manifest
        .entries
        .iter()
        .map(|e| load_clip(e, base, cfg.synth.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    let prepared = prepare_features(&manifest, &clips, cfg)?;
    write_cache(out.join(TRAIN_CACHE), &prepared.train)?;
    write_cache(out.join(TEST_CACHE), &prepared.test)?;
    let (f0, t0) = prepared
        .train
        .first()
        .or(prepared.test.first())
        .map_or((0, 0), LogSpectrogram::dims);
    let summary = FeaturizeSummary {
        train_crops: prepared.train.len(),
        test_crops: prepared.test.len(),
        crops_per_speaker: prepared.plan.as_ref().map_or(0, |p| p.crops_per_speaker),
        speakers_per_class: prepared.plan.as_ref().map_or(0, |p| p.speakers_per_class),
        train_speakers: prepared
            .plan
            .as_ref()
            .map(|p| p.selected_speakers().map(str::to_string).collect())
            .unwrap_or_default(),
        f0,
        t0,
    };
    write_file(&out.join("plan.json"), serde_json::to_string_pretty(&summary).expect("serializable"))?;
    Ok(summary)
}

fn network_config(features: &[LogSpectrogram], cfg: &RunConfig) -> Result<NetworkConfig> {
    let (f0, t0) = features.first().ok_or(Error::EmptyTrainingSet)?.dims();
    NetworkConfig::new(f0, t0, cfg.network)
}

/// Train `ensemble.machines` networks on the train cache and write
/// `machine_<m>.sdm` and `history_<m>.csv` for each.
pub fn cmd_train(
    cache: &Path,
    cfg: &RunConfig,
    out: &Path,
    val: Option<&Path>,
    progress: &(dyn Fn(usize, &crate::trainer::EpochRecord) + Sync),
) -> Result<Vec<(NetworkParams, TrainHistory)>> {
    let features = read_cache(cache_file(cache, Split::Train))?;
    let val = match val {
        Some(p) => read_cache(cache_file(p, Split::Test))?,
        None => Vec::new(),
    };
    echo_config(cfg, out)?;
    let net = network_config(&features, cfg)?;
    let trained = train_ensemble(&features, &val, &cfg.train_config(), &net, cfg.ensemble.machines, progress)?;
    for (m, (params, history)) in trained.iter().enumerate() {
        save_model(params, model_path(out, m))?;
        history.write(history_path(out, m))?;
    }
    Ok(trained)
}

/// Load `machine_0.sdm` .. `machine_<count-1>.sdm`.
pub fn load_models(dir: &Path, count: usize) -> Result<Vec<NetworkParams>> {
    (0..count).map(|m| load_model(model_path(dir, m))).collect()
}

#[derive(Debug, Clone, Serialize)]
struct EvaluateSummary<'a> {
    machines: usize,
    method: u8,
    speakers: usize,
    metrics: &'a MetricsReport,
    config: &'a RunConfig,
}

/// Score the test cache with the trained machines, fuse per speaker and
/// write `metrics.csv`, `predictions.csv`, `speakers.csv` and
/// `summary.json`.
pub fn cmd_evaluate(models: &Path, cache: &Path, cfg: &RunConfig, out: &Path) -> Result<MetricsReport> {
    let features = read_cache(cache_file(cache, Split::Test))?;
    let params = load_models(models, cfg.ensemble.machines)?;
    echo_config(cfg, out)?;
    let sets = predict_sets(&params, &features)?;
    let ens = cfg.ensemble_config();
    let truth = speaker_truth(&features)?;
    let decided = fuse(&sets, ens.method, ens.threshold, ens.tie_seed)?;
    let report = metrics(&confusion(&truth, &decided)?);
    write_file(&out.join("metrics.csv"), metrics_csv(&[("pooled".into(), report)]))?;
    ensemble::write_predictions(out.join("predictions.csv"), &sets, ens.threshold)?;
    write_file(&out.join("speakers.csv"), speakers_csv(&truth, &decided))?;
    let summary = EvaluateSummary {
        machines: params.len(),
        method: ens.method.number(),
        speakers: truth.len(),
        metrics: &report,
        config: cfg,
    };
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializable"))?;
    Ok(report)
}

fn speakers_csv(truth: &BTreeMap<String, Label>, decided: &BTreeMap<String, Label>) -> String {
    let mut s = String::from("speaker_id,truth,predicted\n");
    for (k, t) in truth {
        s.push_str(&format!("{k},{},{}\n", t.as_u8(), decided[k].as_u8()));
    }
    s
}

/// Ensemble sizes for the curve: the configured list or `1..=pool`.
pub fn curve_sizes(cfg: &RunConfig, pool: usize) -> Vec<usize> {
    if cfg.curve.sizes.is_empty() {
        (1..=pool).collect()
    } else {
        cfg.curve.sizes.clone()
    }
}

/// `method,M,class,f1_mean,f1_std`.
pub fn curve_csv(curves: &[(FusionMethod, Vec<CurvePoint>)]) -> String {
    let mut s = String::from("method,M,class,f1_mean,f1_std\n");
    for (method, pts) in curves {
        for p in pts {
            for label in Label::BOTH {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    method.number(),
                    p.machines,
                    label.name(),
                    p.f1_mean.get(label),
                    p.f1_std.get(label)
                ));
            }
        }
    }
    s
}

/// F1 against ensemble size for all three methods, computed from
/// prediction sets of the whole pool.
pub fn f1_curves(pool: &[PredictionSet], truth: &BTreeMap<String, Label>, cfg: &RunConfig) -> Result<Vec<(FusionMethod, Vec<CurvePoint>)>> {
    let sizes = curve_sizes(cfg, pool.len());
    FusionMethod::ALL
        .iter()
        .map(|&method| {
            let pts = f1_vs_m_experiment(
                pool,
                truth,
                &sizes,
                cfg.curve.combinations,
                method,
                cfg.ensemble.threshold,
                cfg.seeds().curve,
            )?;
            Ok((method, pts))
        })
        .collect()
}

/// Write `curve.csv` and `curve.svg`.
pub fn cmd_curve(models: &Path, cache: &Path, cfg: &RunConfig, out: &Path) -> Result<Vec<(FusionMethod, Vec<CurvePoint>)>> {
    let features = read_cache(cache_file(cache, Split::Test))?;
    let params = load_models(models, cfg.ensemble.machines)?;
    echo_config(cfg, out)?;
    let pool = predict_sets(&params, &features)?;
    let truth = speaker_truth(&features)?;
    let curves = f1_curves(&pool, &truth, cfg)?;
    write_file(&out.join("curve.csv"), curve_csv(&curves))?;
    write_file(&out.join("curve.svg"), f1_curve_svg(&curves))?;
    Ok(curves)
}

/// Speaker-disjoint cross-validation over the train cache, scored on the
/// test cache. Writes `metrics.csv` (one scope per fold plus `pooled`),
/// `pooled_predictions.csv` and `folds.json`.
pub fn cmd_crossval(cache: &Path, cfg: &RunConfig, out: &Path) -> Result<CvReport> {
    let train = read_cache(cache_file(cache, Split::Train))?;
    let test = read_cache(cache_file(cache, Split::Test))?;
    echo_config(cfg, out)?;
    let net = network_config(&train, cfg)?;
    let report = cross_validate(&train, &test, &net, &cfg.train_config(), &cfg.ensemble_config(), &cfg.cv_config())?;
    write_file(&out.join("metrics.csv"), metrics_csv(&report.metrics_rows()))?;
    let mut rows = String::from("fold,speaker_id,truth,predicted\n");
    for r in &report.rows {
        rows.push_str(&format!("{},{},{},{}\n", r.fold, r.speaker_id, r.truth.as_u8(), r.predicted.as_u8()));
    }
    write_file(&out.join("pooled_predictions.csv"), rows)?;
    write_file(&out.join("folds.json"), serde_json::to_string_pretty(&report.plan).expect("serializable"))?;
    Ok(report)
}

/// Speaker-level metrics of each machine on its own.
pub fn single_machine_metrics(sets: &[PredictionSet], truth: &BTreeMap<String, Label>, threshold: f64) -> Result<Vec<MetricsReport>> {
    sets.iter()
        .map(|s| {
            let decided = ensemble::fuse_method1(std::slice::from_ref(s), threshold)?;
            Ok(evaluation::metrics(&confusion(truth, &decided)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.synth.train_per_class = 2;
        c.synth.test_per_class = 1;
        c.synth.duration_s = 12.0;
        c.network.filters = 2;
        c.network.hidden = 3;
        c.train.epochs = 2;
        c.train.batch_size = 4;
        c.ensemble.machines = 2;
        c.curve.combinations = 3;
        c.crossval.folds = 2;
        c
    }

    #[test]
    fn synth_featurize_train_evaluate_curve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let corpus = dir.path().join("corpus");
        let manifest = cmd_synth(&cfg, &corpus, true).unwrap();
        assert_eq!(manifest.entries.len(), 6);
        assert!(corpus.join("wav/tr_d000.wav").exists());
        let feats = dir.path().join("feats");
        let summary = cmd_featurize(&corpus.join(MANIFEST_FILE), &cfg, &feats).unwrap();
        assert_eq!((summary.f0, summary.t0), (513, 125));
        assert_eq!(summary.train_crops, 2 * summary.speakers_per_class * summary.crops_per_speaker);
        let models = dir.path().join("models");
        let trained = cmd_train(&feats, &cfg, &models, Some(&feats), &|_, _| {}).unwrap();
        assert_eq!(trained.len(), 2);
        assert!(model_path(&models, 1).exists());
        let eval = dir.path().join("eval");
        let report = cmd_evaluate(&models, &feats, &cfg, &eval).unwrap();
        assert_eq!(report.counts.total(), 2);
        for f in ["metrics.csv", "predictions.csv", "speakers.csv", "summary.json", CONFIG_ECHO] {
            assert!(eval.join(f).exists(), "{f}");
        }
        let curves = cmd_curve(&models, &feats, &cfg, &dir.path().join("curve")).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("curve/curve.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 3 * 2);
        assert_eq!(curves.len(), 3);
        let echoed = RunConfig::read(eval.join(CONFIG_ECHO)).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn virtual_corpus_regenerates_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let m = cmd_synth(&cfg, dir.path(), false).unwrap();
        assert!(m.entries[0].path.starts_with("synth:"));
        let (_, clips) = synth_train_test(&cfg.synth, cfg.seeds().synth).unwrap();
        let again = load_clip(&m.entries[0], dir.path(), cfg.synth.sample_rate).unwrap();
        assert_eq!(again, clips[0]);
    }

    #[test]
    fn empty_manifest_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        CorpusManifest::default().write(&path).unwrap();
        let err = cmd_featurize(&path, &tiny(), &dir.path().join("out")).unwrap_err();
        assert!(err.to_string().contains("empty.csv"));
    }

    #[test]
    fn missing_model_lists_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_models(dir.path(), 1).unwrap_err();
        assert!(err.to_string().contains("machine_0.sdm"));
    }
}
