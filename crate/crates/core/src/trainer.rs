//! Mini-batch Adadelta training with a geometric learning-rate decay, and
//! ensembles of independently initialized machines.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::LogSpectrogram;
use crate::network::{self, Gradients, NetworkConfig, NetworkParams};
use crate::{rng, Error, Label, Result};

/// Samples per gradient work unit. Fixed so the reduction order, and
/// therefore every bit of the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta stabilizer.
    pub eps: f64,
    /// Initialization seed.
    #[serde(skip)]
    pub seed: u64,
    /// Data-order seed, shared by all machines of an ensemble.
    #[serde(skip)]
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 80,
            lr_start: 1.0,
            lr_end: 0.01,
            rho: 0.95,
            eps: 1e-6,
            seed: 0,
            shuffle_seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        // lr_end = lr_start = 0 is accepted: it freezes the parameters
        if !(self.lr_end >= 0.0 && self.lr_end <= self.lr_start) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must decay: start {}, end {}",
                self.lr_start, self.lr_end
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("Adadelta epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// `lr_start * (lr_end / lr_start)^(epoch / (epochs - 1))`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 || cfg.lr_start == cfg.lr_end {
        return cfg.lr_start;
    }
    if epoch + 1 >= cfg.epochs {
        return cfg.lr_end;
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(frac)
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub eg2: Vec<f64>,
    pub edx2: Vec<f64>,
}

impl AdadeltaState {
    pub fn new(n: usize) -> Self {
        Self {
            eg2: vec![0.0; n],
            edx2: vec![0.0; n],
        }
    }
}

/// One Adadelta update scaled by `lr`:
///
/// ```text
/// eg2  <- rho eg2 + (1 - rho) g^2
/// dx    = -g sqrt(edx2 + eps) / sqrt(eg2 + eps)
/// edx2 <- rho edx2 + (1 - rho) dx^2
/// x    <- x + lr dx
/// ```
pub fn adadelta_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdadeltaState,
    lr: f64,
    rho: f64,
    eps: f64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.eg2.len() != n || state.edx2.len() != n {
        return Err(Error::shape(
            format!("{n} parameters"),
            format!("{} gradients, {}/{} state", grads.len(), state.eg2.len(), state.edx2.len()),
        ));
    }
    for (((x, &g), eg2), edx2) in params.iter_mut().zip(grads).zip(&mut state.eg2).zip(&mut state.edx2) {
        *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
        let dx = -g * (*edx2 + eps).sqrt() / (*eg2 + eps).sqrt();
        *edx2 = rho * *edx2 + (1.0 - rho) * dx * dx;
        *x += lr * dx;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// NaN when no validation set was given.
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,val_loss,val_acc\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_loss, r.val_acc));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn label_of(f: &LogSpectrogram) -> Result<Label> {
    f.label.ok_or_else(|| {
        Error::InvalidArgument(format!("crop {}#{} has no label", f.speaker_id, f.crop_index))
    })
}

/// Batch-averaged gradient and summed loss.
fn batch_gradient(params: &NetworkParams, batch: &[&LogSpectrogram]) -> Result<(Gradients, f64)> {
    let parts: Vec<(Gradients, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = NetworkParams::zeros(*params.config());
            let mut loss = 0.0;
            for f in chunk {
                loss += network::sample_step(params, f.values.view(), label_of(f)?, &mut g)?;
            }
            Ok((g, loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut loss) = iter.next().expect("batch is non-empty");
    for (g, l) in iter {
        total.add_scaled(1.0, &g)?;
        loss += l;
    }
    total.scale(1.0 / batch.len() as f64);
    Ok((total, loss))
}

/// Probabilities for each feature, in order.
pub fn predict_all(params: &NetworkParams, features: &[LogSpectrogram]) -> Result<Vec<f64>> {
    features.par_iter().map(|f| network::predict(params, f.values.view())).collect()
}

fn validation_scores(params: &NetworkParams, val: &[LogSpectrogram]) -> Result<(f64, f64)> {
    if val.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let probs = predict_all(params, val)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (p, f) in probs.iter().zip(val) {
        let y = label_of(f)?;
        loss += network::loss_bce(*p, y);
        let pred = if *p >= 0.5 { Label::Depressed } else { Label::NonDepressed };
        correct += (pred == y) as usize;
    }
    Ok((loss / val.len() as f64, correct as f64 / val.len() as f64))
}

/// Train from an explicit starting point. `on_epoch` sees every record as it
/// is produced.
pub fn train_from(
    mut params: NetworkParams,
    features: &[LogSpectrogram],
    val: &[LogSpectrogram],
    cfg: &TrainConfig,
    on_epoch: &(dyn Fn(&EpochRecord) + Sync),
) -> Result<(NetworkParams, TrainHistory)> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut state = AdadeltaState::new(params.len());
    let mut order: Vec<&LogSpectrogram> = features.iter().collect();
    let mut rng = rng::seeded(cfg.shuffle_seed);
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (grad, loss) = batch_gradient(&params, batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss;
            adadelta_step(params.as_mut_slice(), grad.as_slice(), &mut state, lr, cfg.rho, cfg.eps)?;
        }
        let (val_loss, val_acc) = validation_scores(&params, val)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / features.len() as f64,
            val_loss,
            val_acc,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((params, history))
}

/// Initialize with `cfg.seed` and train.
pub fn train(
    features: &[LogSpectrogram],
    val: &[LogSpectrogram],
    cfg: &TrainConfig,
    net_cfg: &NetworkConfig,
) -> Result<(NetworkParams, TrainHistory)> {
    let init = network::init_params(net_cfg, cfg.seed)?;
    train_from(init, features, val, cfg, &|_| {})
}

/// Train `machines` networks; machine `m` is initialized with `cfg.seed + m`
/// and all machines see the same data order.
pub fn train_ensemble(
    features: &[LogSpectrogram],
    val: &[LogSpectrogram],
    cfg: &TrainConfig,
    net_cfg: &NetworkConfig,
    machines: usize,
    on_epoch: &(dyn Fn(usize, &EpochRecord) + Sync),
) -> Result<Vec<(NetworkParams, TrainHistory)>> {
    if machines < 1 {
        return Err(Error::InvalidArgument("ensemble needs at least one machine".into()));
    }
    (0..machines)
        .into_par_iter()
        .map(|m| {
            let machine_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(m as u64),
                ..*cfg
            };
            let init = network::init_params(net_cfg, machine_cfg.seed)?;
            train_from(init, features, val, &machine_cfg, &|r| on_epoch(m, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;
    use ndarray::Array2;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 1.0);
        assert_eq!(lr_schedule(49, &cfg), 0.01);
        let three = TrainConfig { epochs: 3, ..cfg };
        assert!((lr_schedule(1, &three) - 0.1).abs() < 1e-15);
        let one = TrainConfig { epochs: 1, ..cfg };
        assert_eq!(lr_schedule(0, &one), 1.0);
        for e in 1..50 {
            assert!(lr_schedule(e, &cfg) < lr_schedule(e - 1, &cfg));
        }
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut p = vec![0.3, -1.2];
        let mut st = AdadeltaState::new(2);
        adadelta_step(&mut p, &[0.0, 0.0], &mut st, 1.0, 0.95, 1e-6).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(st, AdadeltaState::new(2));

        // warm state only decays; parameters stay put
        let mut st = AdadeltaState {
            eg2: vec![0.1, 0.2],
            edx2: vec![0.01, 0.02],
        };
        adadelta_step(&mut p, &[0.0, 0.0], &mut st, 1.0, 0.95, 1e-6).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert!((st.eg2[0] - 0.095).abs() < 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![0.0];
        let mut st = AdadeltaState::new(1);
        adadelta_step(&mut p, &[1.0], &mut st, 1.0, 0.95, 1e-6).unwrap();
        let expect = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((p[0] - expect).abs() < 1e-12);
        assert!((p[0] + 0.004_472_09).abs() < 1e-8);
        assert!((st.eg2[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn update_opposes_gradient() {
        let mut p = vec![0.0; 4];
        let mut st = AdadeltaState::new(4);
        adadelta_step(&mut p, &[2.0, -0.5, 1e-3, -7.0], &mut st, 0.5, 0.9, 1e-6).unwrap();
        assert!(p[0] < 0.0 && p[1] > 0.0 && p[2] < 0.0 && p[3] > 0.0);
        assert!(st.eg2.iter().chain(&st.edx2).all(|&v| v >= 0.0));
        assert!(adadelta_step(&mut p, &[1.0], &mut st, 1.0, 0.9, 1e-6).is_err());
    }

    fn toy_set(n: usize) -> (Vec<LogSpectrogram>, NetworkConfig) {
        let cfg = NetworkConfig::new(
            4,
            6,
            Architecture {
                filters: 2,
                pool_kernel: 2,
                pool_stride: 2,
                pool_padding: 2,
                hidden: 3,
            },
        )
        .unwrap();
        let feats = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Depressed } else { Label::NonDepressed };
                let hot = if label == Label::Depressed { 0 } else { 3 };
                LogSpectrogram {
                    values: Array2::from_shape_fn((4, 6), |(f, t)| {
                        if f == hot {
                            0.8 + 0.02 * t as f64
                        } else {
                            0.1 * ((i + t) % 3) as f64
                        }
                    }),
                    speaker_id: format!("s{}", i % 4),
                    crop_index: i as u32,
                    label: Some(label),
                    normalized: true,
                }
            })
            .collect();
        (feats, cfg)
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (feats, net) = toy_set(24);
        let cfg = TrainConfig {
            epochs: 150,
            batch_size: 4,
            lr_end: 0.1,
            ..TrainConfig::default()
        };
        let (p1, h1) = train(&feats, &feats, &cfg, &net).unwrap();
        let (p2, h2) = train(&feats, &feats, &cfg, &net).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
        assert_eq!(h1.epochs.len(), 150);
        assert!(h1.epochs.last().unwrap().train_loss < h1.epochs[0].train_loss);
        assert_eq!(h1.epochs.last().unwrap().val_acc, 1.0);
    }

    #[test]
    fn zero_learning_rate_freezes_params() {
        let (feats, net) = toy_set(10);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            lr_start: 0.0,
            lr_end: 0.0,
            ..TrainConfig::default()
        };
        let (p, _) = train(&feats, &[], &cfg, &net).unwrap();
        assert_eq!(p, network::init_params(&net, cfg.seed).unwrap());
    }

    #[test]
    fn ensemble_machines_differ_and_reduce_to_single() {
        let (feats, net) = toy_set(12);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let ens = train_ensemble(&feats, &[], &cfg, &net, 2, &|_, _| {}).unwrap();
        assert_eq!(ens.len(), 2);
        assert_ne!(ens[0].0, ens[1].0);
        let single = train(&feats, &[], &cfg, &net).unwrap();
        assert_eq!(ens[0].0, single.0);
        assert_eq!(ens[0].1.to_csv(), single.1.to_csv());
        assert!(train_ensemble(&feats, &[], &cfg, &net, 0, &|_, _| {}).is_err());
    }

    #[test]
    fn errors_on_empty_or_unlabeled() {
        let (mut feats, net) = toy_set(3);
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&[], &[], &cfg, &net), Err(Error::EmptyTrainingSet)));
        feats[1].label = None;
        assert!(train(&feats, &[], &cfg, &net).is_err());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let (mut feats, net) = toy_set(6);
        feats[0].values[[0, 0]] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 100,
            ..TrainConfig::default()
        };
        match train(&feats, &[], &cfg, &net) {
            Err(Error::InvalidArgument(m)) if m.contains("not finite") => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn divergence_aborts_with_location() {
        let (feats, net) = toy_set(6);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr_start: 1e300,
            lr_end: 1e300,
            ..TrainConfig::default()
        };
        match train(&feats, &[], &cfg, &net) {
            Err(Error::NonFiniteLoss { epoch: 0, batch }) if batch > 0 => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn history_csv_header() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 0,
                lr: 1.0,
                train_loss: 0.5,
                val_loss: f64::NAN,
                val_acc: f64::NAN,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,lr,train_loss,val_loss,val_acc\n0,1,0.5,NaN,NaN\n");
    }

    #[test]
    fn batch_count_arithmetic() {
        let order: Vec<usize> = (0..5518).collect();
        let sizes: Vec<usize> = order.chunks(80).map(|c| c.len()).collect();
        assert_eq!(sizes.len(), 69);
        assert_eq!(*sizes.last().unwrap(), 78);
    }
}
