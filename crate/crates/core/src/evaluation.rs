//! Speaker-level metrics and speaker-disjoint cross-validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ensemble::{fuse, EnsembleConfig, PredictionSet};
use crate::features::LogSpectrogram;
use crate::network::{NetworkConfig, NetworkParams};
use crate::trainer::{self, TrainConfig};
use crate::{rng, Error, Label, Result};

/// A value for each class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerClass<T> {
    pub depressed: T,
    pub non_depressed: T,
}

impl<T> PerClass<T> {
    pub fn get(&self, label: Label) -> &T {
        match label {
            Label::Depressed => &self.depressed,
            Label::NonDepressed => &self.non_depressed,
        }
    }
}

/// Counts with the depressed class as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with the non-depressed class as positive.
    pub fn flipped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Depressed, Label::Depressed) => self.tp += 1,
            (Label::NonDepressed, Label::Depressed) => self.fp += 1,
            (Label::NonDepressed, Label::NonDepressed) => self.tn += 1,
            (Label::Depressed, Label::NonDepressed) => self.fn_ += 1,
        }
    }
}

/// Counts over speakers. Both maps must have the same keys.
pub fn confusion(truth: &BTreeMap<String, Label>, predicted: &BTreeMap<String, Label>) -> Result<ConfusionCounts> {
    if truth.len() != predicted.len() || truth.keys().zip(predicted.keys()).any(|(a, b)| a != b) {
        let t: BTreeSet<_> = truth.keys().collect();
        let p: BTreeSet<_> = predicted.keys().collect();
        let missing: Vec<_> = t.difference(&p).take(3).collect();
        let extra: Vec<_> = p.difference(&t).take(3).collect();
        return Err(Error::InconsistentPredictions(format!(
            "speaker sets differ: unpredicted {missing:?}, unknown {extra:?}"
        )));
    }
    Ok(confusion_from_pairs(truth.values().copied().zip(predicted.values().copied())))
}

/// Counts over `(truth, predicted)` pairs.
pub fn confusion_from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (t, p) in pairs {
        c.add(t, p);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the value was set to 0 because its denominator was 0.
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

impl ClassMetrics {
    /// Metrics for the positive class of `c`.
    pub fn positive(c: &ConfusionCounts) -> Self {
        let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
        let (f1, f1_defined) = f1_score(precision, recall);
        Self {
            precision,
            recall,
            f1,
            precision_defined,
            recall_defined,
            f1_defined: f1_defined && precision_defined && recall_defined,
        }
    }
}

/// Harmonic mean; `(0, false)` when `p + r = 0`.
pub fn f1_score(precision: f64, recall: f64) -> (f64, bool) {
    if precision + recall == 0.0 {
        (0.0, false)
    } else {
        (2.0 * precision * recall / (precision + recall), true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub depressed: ClassMetrics,
    pub non_depressed: ClassMetrics,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        match label {
            Label::Depressed => &self.depressed,
            Label::NonDepressed => &self.non_depressed,
        }
    }

    pub fn f1(&self) -> PerClass<f64> {
        PerClass {
            depressed: self.depressed.f1,
            non_depressed: self.non_depressed.f1,
        }
    }
}

pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    MetricsReport {
        accuracy: ratio(c.tp + c.tn, c.total()).0,
        depressed: ClassMetrics::positive(c),
        non_depressed: ClassMetrics::positive(&c.flipped()),
        counts: *c,
    }
}

/// `scope,class,accuracy,precision,recall,f1`.
pub fn metrics_csv(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("scope,class,accuracy,precision,recall,f1\n");
    for (scope, m) in rows {
        for label in Label::BOTH {
            let c = m.class(label);
            s.push_str(&format!(
                "{scope},{},{},{},{},{}\n",
                label.name(),
                m.accuracy,
                c.precision,
                c.recall,
                c.f1
            ));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub folds: usize,
    pub stratified: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            stratified: true,
            seed: 0,
        }
    }
}

/// Speaker-disjoint k-fold plan.
///
/// With `stratified`, each class is shuffled separately and dealt
/// round-robin, so every fold holds `floor` or `ceil` of `n_c / k` speakers
/// of class `c`. Otherwise all speakers are shuffled and dealt together.
/// `k = 1` yields a single fold that trains on everything.
pub fn kfold_split(speakers: &BTreeMap<String, Label>, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k == 1 {
        return Ok(FoldPlan {
            folds: vec![Fold {
                train: speakers.keys().cloned().collect(),
                validation: Vec::new(),
            }],
        });
    }
    let mut rng = rng::seeded(seed);
    let groups: Vec<Vec<&String>> = if stratified {
        Label::BOTH
            .iter()
            .map(|&l| speakers.iter().filter(|(_, &v)| v == l).map(|(s, _)| s).collect())
            .collect()
    } else {
        vec![speakers.keys().collect()]
    };
    let mut assignment: BTreeMap<&String, usize> = BTreeMap::new();
    for (g, mut group) in groups.into_iter().enumerate() {
        if group.len() < k {
            return Err(if stratified {
                Error::InvalidArgument(format!(
                    "{k} folds need at least {k} {} speakers, found {}",
                    Label::BOTH[g].name(),
                    group.len()
                ))
            } else {
                Error::InvalidArgument(format!("{k} folds need at least {k} speakers, found {}", group.len()))
            });
        }
        group.shuffle(&mut rng);
        for (i, s) in group.into_iter().enumerate() {
            assignment.insert(s, i % k);
        }
    }
    let folds = (0..k)
        .map(|f| {
            let (validation, train): (Vec<_>, Vec<_>) = assignment.iter().partition(|(_, &a)| a == f);
            Fold {
                train: train.into_iter().map(|(s, _)| (*s).clone()).collect(),
                validation: validation.into_iter().map(|(s, _)| (*s).clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Score `features` with every model.
pub fn predict_sets(models: &[NetworkParams], features: &[LogSpectrogram]) -> Result<Vec<PredictionSet>> {
    models
        .iter()
        .enumerate()
        .map(|(m, params)| PredictionSet::from_features(m, features, &trainer::predict_all(params, features)?))
        .collect()
}

/// Ground truth per speaker. Crops of one speaker must agree.
pub fn speaker_truth(features: &[LogSpectrogram]) -> Result<BTreeMap<String, Label>> {
    let mut truth = BTreeMap::new();
    for f in features {
        let label = f
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("crop {} of {} is unlabeled", f.crop_index, f.speaker_id)))?;
        if let Some(prev) = truth.insert(f.speaker_id.clone(), label) {
            if prev != label {
                return Err(Error::InvalidArgument(format!("speaker {} has mixed labels", f.speaker_id)));
            }
        }
    }
    Ok(truth)
}

/// One test speaker's decision in one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PooledRow {
    pub fold: usize,
    pub speaker_id: String,
    pub truth: Label,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub pooled: MetricsReport,
    pub folds: Vec<MetricsReport>,
    pub rows: Vec<PooledRow>,
    pub plan: FoldPlan,
}

impl CvReport {
    pub fn metrics_rows(&self) -> Vec<(String, MetricsReport)> {
        self.folds
            .iter()
            .enumerate()
            .map(|(i, m)| (format!("fold_{i}"), *m))
            .chain(std::iter::once(("pooled".to_string(), self.pooled)))
            .collect()
    }
}

/// Metrics over concatenated fold predictions.
pub fn pooled_metrics(rows: &[PooledRow]) -> MetricsReport {
    metrics(&confusion_from_pairs(rows.iter().map(|r| (r.truth, r.predicted))))
}

/// For each fold, train `ens.machines` machines on the fold's training
/// speakers (validation speakers are tracked in history only), fuse their
/// predictions on every test speaker, and pool the decisions of all folds.
///
/// Fold `f` initializes machines from `train_cfg.seed + f * machines` and
/// breaks ties with `ens.tie_seed + f`, so `k = 1` reproduces a plain
/// train-then-evaluate run.
pub fn cross_validate(
    train_features: &[LogSpectrogram],
    test_features: &[LogSpectrogram],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    ens: &EnsembleConfig,
    cv: &CvConfig,
) -> Result<CvReport> {
    ens.validate()?;
    let speakers = speaker_truth(train_features)?;
    let test_truth = speaker_truth(test_features)?;
    let plan = kfold_split(&speakers, cv.folds, cv.seed, cv.stratified)?;
    let mut folds = Vec::with_capacity(plan.k());
    let mut rows = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let train_set: BTreeSet<&str> = fold.train.iter().map(String::as_str).collect();
        let (fit, val): (Vec<LogSpectrogram>, Vec<LogSpectrogram>) = train_features
            .iter()
            .cloned()
            .partition(|x| train_set.contains(x.speaker_id.as_str()));
        let cfg = TrainConfig {
            seed: train_cfg.seed.wrapping_add((f * ens.machines) as u64),
            ..*train_cfg
        };
        let models: Vec<NetworkParams> = trainer::train_ensemble(&fit, &val, &cfg, net_cfg, ens.machines, &|_, _| {})?
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let sets = predict_sets(&models, test_features)?;
        let decided = fuse(&sets, ens.method, ens.threshold, ens.tie_seed.wrapping_add(f as u64))?;
        folds.push(metrics(&confusion(&test_truth, &decided)?));
        rows.extend(decided.into_iter().map(|(speaker_id, predicted)| PooledRow {
            fold: f,
            truth: test_truth[&speaker_id],
            speaker_id,
            predicted,
        }));
    }
    Ok(CvReport {
        pooled: pooled_metrics(&rows),
        folds,
        rows,
        plan,
    })
}
