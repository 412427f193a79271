//! Supervised training: standardization, stratified splits, mixup, softmax
//! cross-entropy and a seeded SGD loop with best-validation model selection.
//!
//! Runs are fully deterministic: one ChaCha stream drives shuffling, mixup
//! draws and pairings, and every accumulation is single-threaded in a fixed
//! order, so a (seed, config, data) triple reproduces bit-identical
//! parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelGrads, SpectralModel};
use crate::scalar::Scalar;

/// Training recipe hyperparameters.
///
/// Defaults: 100 epochs, batch 32, SGD momentum 0.9 with weight decay 5e-4,
/// lr 0.01 stepped x0.1 at epochs 50 and 75, mixup alpha 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub mixup_alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr0: 0.01,
            lr_milestones: vec![50, 75],
            lr_gamma: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            mixup_alpha: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::InvalidConfig { detail });
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr0 > 0.0) {
            return bad(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..=1.0).contains(&self.lr_gamma) {
            return bad(format!("lr_gamma must be in [0, 1], got {}", self.lr_gamma));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.mixup_alpha < 0.0 {
            return bad(format!("mixup_alpha must be >= 0, got {}", self.mixup_alpha));
        }
        Ok(())
    }

    /// Learning rate at a 0-based epoch: decayed once per passed milestone.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr0 * self.lr_gamma.powi(passed as i32)
    }

    pub fn steps_per_epoch(&self, train_len: usize) -> usize {
        train_len.div_ceil(self.batch_size)
    }
}

/// Index sets of the train/val/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split with deterministic rounding.
///
/// Per class, floor quotas are assigned first; leftover units go to the split
/// with the largest accumulated fractional remainder, ties resolved in
/// train, val, test order. Class proportions per split deviate from the
/// global fractions by at most one sample.
pub fn split_dataset(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (ft, fv, fs) = fractions;
    if (ft + fv + fs - 1.0).abs() > 1e-9 || ft < 0.0 || fv < 0.0 || fs < 0.0 {
        return Err(Error::InvalidConfig {
            detail: format!("fractions {fractions:?} do not sum to 1"),
        });
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes() as usize];
    for s in 0..ds.n_samples() {
        per_class[ds.label(s) as usize].push(s);
    }
    for (class, members) in per_class.iter().enumerate() {
        if members.len() < 3 {
            return Err(Error::ClassTooSmall {
                class: class as u32,
                count: members.len(),
                need: 3,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let mut remainders = [0.0f64; 3];
    for members in per_class.iter_mut() {
        members.shuffle(&mut rng);
        let m = members.len() as f64;
        let quotas = [ft * m, fv * m, fs * m];
        let mut counts = [0usize; 3];
        let mut assigned = 0usize;
        for i in 0..3 {
            counts[i] = quotas[i].floor() as usize;
            remainders[i] += quotas[i] - quotas[i].floor();
            assigned += counts[i];
        }
        let mut leftover = members.len() - assigned;
        while leftover > 0 {
            let mut pick = 0usize;
            for i in 1..3 {
                if remainders[i] > remainders[pick] {
                    pick = i;
                }
            }
            counts[pick] += 1;
            remainders[pick] -= 1.0;
            leftover -= 1;
        }
        let (a, b) = (counts[0], counts[0] + counts[1]);
        splits.train.extend_from_slice(&members[..a]);
        splits.val.extend_from_slice(&members[a..b]);
        splits.test.extend_from_slice(&members[b..]);
    }
    Ok(splits)
}

/// Per-vertex mean and standard deviation over the train split only.
///
/// Standard deviation is the population estimate, floored at 1e-8 so constant
/// vertices standardize to zero instead of blowing up.
pub fn standardize_fit(ds: &Dataset, train_idx: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if train_idx.is_empty() {
        return Err(Error::EmptySplit { which: "train" });
    }
    if train_idx.len() < 2 {
        return Err(Error::InvalidConfig {
            detail: "standardization needs at least 2 training samples".into(),
        });
    }
    let n = ds.n_vertices();
    let count = train_idx.len() as f64;
    let mut mean = vec![0.0f64; n];
    for &s in train_idx {
        for (m, &v) in mean.iter_mut().zip(ds.signal(s).iter()) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0f64; n];
    for &s in train_idx {
        for (v, (&x, &m)) in var.iter_mut().zip(ds.signal(s).iter().zip(mean.iter())) {
            let d = x as f64 - m;
            *v += d * d;
        }
    }
    let std: Vec<f64> = var.into_iter().map(|v| (v / count).sqrt().max(1e-8)).collect();
    Ok((mean, std))
}

/// Applies fitted statistics to every sample, producing a new dataset.
pub fn standardize_apply(ds: &Dataset, mean: &[f64], std: &[f64]) -> Result<Dataset> {
    let n = ds.n_vertices();
    if mean.len() != n || std.len() != n {
        return Err(Error::DimensionMismatch {
            module: "train",
            detail: format!("stats length {} / {} != n {}", mean.len(), std.len(), n),
        });
    }
    let mut signals = Vec::with_capacity(ds.signals().len());
    for s in 0..ds.n_samples() {
        for (i, &v) in ds.signal(s).iter().enumerate() {
            signals.push(((v as f64 - mean[i]) / std[i]) as f32);
        }
    }
    ds.with_signals(signals)
}

/// Mixup target pair: loss is `lam * CE(., a) + (1 - lam) * CE(., b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixTarget {
    pub a: usize,
    pub b: usize,
    pub lam: f64,
}

impl MixTarget {
    pub fn pure(label: usize) -> Self {
        Self {
            a: label,
            b: label,
            lam: 1.0,
        }
    }
}

/// Convex combination of two signals with its paired loss target.
pub fn mixup(
    xa: &[f32],
    ya: u32,
    xb: &[f32],
    yb: u32,
    lambda: f64,
) -> Result<(Vec<f32>, MixTarget)> {
    if xa.len() != xb.len() {
        return Err(Error::DimensionMismatch {
            module: "train",
            detail: format!("mixup inputs differ: {} vs {}", xa.len(), xb.len()),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig {
            detail: format!("mixup lambda must be in [0, 1], got {lambda}"),
        });
    }
    let l = lambda as f32;
    let x = xa
        .iter()
        .zip(xb.iter())
        .map(|(&a, &b)| l * a + (1.0 - l) * b)
        .collect();
    Ok((
        x,
        MixTarget {
            a: ya as usize,
            b: yb as usize,
            lam: lambda,
        },
    ))
}

/// Softmax cross-entropy with mixup-pair weighting.
///
/// Returns the mean loss and the gradient at the logits (already divided by
/// the batch size).
pub fn cross_entropy<S: Scalar>(
    logits: &[S],
    classes: usize,
    targets: &[MixTarget],
) -> Result<(f64, Vec<S>)> {
    let batch = targets.len();
    if classes < 2 {
        return Err(Error::InvalidConfig {
            detail: format!("cross entropy needs at least 2 classes, got {classes}"),
        });
    }
    if logits.len() != batch * classes {
        return Err(Error::DimensionMismatch {
            module: "train",
            detail: format!(
                "logits length {} != batch {} x classes {}",
                logits.len(),
                batch,
                classes
            ),
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { epoch: 0 });
    }
    let inv_batch = S::from_f64(1.0 / batch as f64);
    let mut grad = vec![S::ZERO; logits.len()];
    let mut loss = 0.0f64;
    for (s, t) in targets.iter().enumerate() {
        let row = &logits[s * classes..(s + 1) * classes];
        let mut max = row[0];
        for &v in row.iter().skip(1) {
            max = max.maximum(v);
        }
        let mut sum = S::ZERO;
        for &v in row {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        let lam = t.lam;
        loss += lse.to_f64() - lam * row[t.a].to_f64() - (1.0 - lam) * row[t.b].to_f64();
        let lam_s = S::from_f64(lam);
        for c in 0..classes {
            let p = (row[c] - lse).exp();
            let mut g = p;
            if c == t.a {
                g -= lam_s;
            }
            if c == t.b {
                g -= S::ONE - lam_s;
            }
            grad[s * classes + c] = g * inv_batch;
        }
    }
    let loss = loss / batch as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { epoch: 0 });
    }
    Ok((loss, grad))
}

/// Argmax-logit accuracy over a split; ties break toward the lower class.
pub fn evaluate(model: &SpectralModel<f32>, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptySplit { which: "eval" });
    }
    let n = ds.n_vertices();
    let classes = model.classes();
    let mut correct = 0usize;
    for chunk in idx.chunks(256) {
        let mut x = Vec::with_capacity(chunk.len() * n);
        for &s in chunk {
            x.extend_from_slice(ds.signal(s));
        }
        let logits = model.forward_eval(&x, chunk.len())?;
        for (i, &s) in chunk.iter().enumerate() {
            let row = &logits[i * classes..(i + 1) * classes];
            if argmax(row) == ds.label(s) as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / idx.len() as f64)
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Per-epoch metrics of one run plus the final test accuracy.
///
/// Wall time is not serialized: run artifacts must be byte-identical across
/// reruns, so timing lives in log files only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub best_val_epoch: usize,
    pub test_acc: f64,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Which parameters a run returns.
pub(crate) enum FinalSelection {
    /// Snapshot at the best validation epoch (ties to the earliest).
    BestVal,
    /// End-of-run parameters (selective weight decay needs the decayed state).
    Final,
}

/// SGD with momentum, weight decay, milestone LR schedule, mixup and
/// best-validation selection. The returned model is the best-validation
/// snapshot; its test accuracy is recorded in the history.
pub fn train_model(
    model: SpectralModel<f32>,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(SpectralModel<f32>, RunHistory)> {
    train_with_hook(model, ds, splits, cfg, FinalSelection::BestVal, &mut |_, _, _| Ok(()))
}

/// Training loop with a per-step gradient hook (used by pruning). The hook
/// runs after backward and before the optimizer step; it must not consume
/// randomness, so a no-op hook reproduces `train_model` bit for bit.
pub(crate) fn train_with_hook(
    mut model: SpectralModel<f32>,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
    selection: FinalSelection,
    hook: &mut dyn FnMut(usize, &SpectralModel<f32>, &mut ModelGrads<f32>) -> Result<()>,
) -> Result<(SpectralModel<f32>, RunHistory)> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(Error::EmptySplit { which: "train" });
    }
    if splits.val.is_empty() {
        return Err(Error::EmptySplit { which: "val" });
    }
    if splits.test.is_empty() {
        return Err(Error::EmptySplit { which: "test" });
    }
    let start = std::time::Instant::now();
    let n = ds.n_vertices();
    let classes = model.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let beta = if cfg.mixup_alpha > 0.0 {
        Some(Beta::new(cfg.mixup_alpha, cfg.mixup_alpha).map_err(|e| Error::InvalidConfig {
            detail: format!("mixup alpha {}: {e}", cfg.mixup_alpha),
        })?)
    } else {
        None
    };

    let mut velocity = model.zero_grads();
    let mut history = RunHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        train_acc: Vec::with_capacity(cfg.epochs),
        val_acc: Vec::with_capacity(cfg.epochs),
        best_val_epoch: 0,
        test_acc: 0.0,
        wall_time: 0.0,
    };
    let mut best: Option<(f64, usize, SpectralModel<f32>)> = None;
    let mut indices = splits.train.clone();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = f32::from_f64(cfg.lr_at(epoch));
        let momentum = f32::from_f64(cfg.momentum);
        let wd = f32::from_f64(cfg.weight_decay);
        indices.shuffle(&mut rng);

        let mut epoch_loss = 0.0f64;
        let mut epoch_acc = 0.0f64;
        let mut seen = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let bsz = chunk.len();
            let mut x = Vec::with_capacity(bsz * n);
            for &s in chunk {
                x.extend_from_slice(ds.signal(s));
            }
            let mut targets: Vec<MixTarget> = chunk
                .iter()
                .map(|&s| MixTarget::pure(ds.label(s) as usize))
                .collect();
            if let Some(beta) = &beta {
                let lam: f64 = beta.sample(&mut rng);
                let mut partners: Vec<usize> = (0..bsz).collect();
                partners.shuffle(&mut rng);
                let l = lam as f32;
                let mut mixed = vec![0.0f32; bsz * n];
                for i in 0..bsz {
                    let p = partners[i];
                    for v in 0..n {
                        mixed[i * n + v] = l * x[i * n + v] + (1.0 - l) * x[p * n + v];
                    }
                    targets[i] = MixTarget {
                        a: ds.label(chunk[i]) as usize,
                        b: ds.label(chunk[p]) as usize,
                        lam,
                    };
                }
                x = mixed;
            }

            let (logits, cache) = model.forward_train(&x, bsz)?;
            let (loss, dlogits) = cross_entropy(&logits, classes, &targets)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFinite { epoch },
                    other => other,
                })?;
            let mut grads = model.backward(&cache, &dlogits, bsz)?;
            hook(step, &model, &mut grads)?;
            model.sgd_step(&grads, &mut velocity, lr, momentum, wd);
            step += 1;

            epoch_loss += loss * bsz as f64;
            for (i, t) in targets.iter().enumerate() {
                let pred = argmax(&logits[i * classes..(i + 1) * classes]);
                epoch_acc += t.lam * (pred == t.a) as usize as f64
                    + (1.0 - t.lam) * (pred == t.b) as usize as f64;
            }
            seen += bsz;
        }

        history.train_loss.push(epoch_loss / seen as f64);
        history.train_acc.push(epoch_acc / seen as f64);
        let val_acc = evaluate(&model, ds, &splits.val)?;
        history.val_acc.push(val_acc);
        let improved = match &best {
            Some((best_acc, _, _)) => val_acc > *best_acc,
            None => true,
        };
        if improved {
            best = Some((val_acc, epoch, model.clone()));
        }
    }

    let (chosen, best_epoch) = match selection {
        FinalSelection::BestVal => {
            let (_, epoch, m) = best.expect("epochs >= 1 guarantees a snapshot");
            (m, epoch)
        }
        FinalSelection::Final => {
            let (_, epoch, _) = best.expect("epochs >= 1 guarantees a snapshot");
            (model, epoch)
        }
    };
    history.best_val_epoch = best_epoch;
    history.test_acc = evaluate(&chosen, ds, &splits.test)?;
    history.wall_time = start.elapsed().as_secs_f64();
    Ok((chosen, history))
}

/// Mean and half-width of a normal-approximation 95% confidence interval
/// (`1.96 sd / sqrt(r)`; zero width for a single run).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, 1.96 * var.sqrt() / r.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::{ArchKind, ArchSpec};
    use crate::prune::KeptSet;
    use crate::spectral::SpectralBasis;
    use rand::Rng;

    fn ring_basis(n: usize) -> SpectralBasis {
        let mut w = vec![0.0f64; n * n];
        for i in 0..n {
            let j = (i + 1) % n;
            w[i * n + j] = 1.0;
            w[j * n + i] = 1.0;
        }
        let g = Graph::from_dense(n, w).unwrap();
        SpectralBasis::build(&g.normalized_laplacian().unwrap()).unwrap()
    }

    fn balanced_dataset(n_vertices: usize, per_class: usize, classes: u32) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n_samples = per_class * classes as usize;
        let signals: Vec<f32> = (0..n_samples * n_vertices)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect();
        let labels: Vec<u32> = (0..n_samples).map(|i| (i % classes as usize) as u32).collect();
        Dataset::new(n_vertices, classes, signals, labels).unwrap()
    }

    #[test]
    fn standardize_two_sample_example() {
        let ds = Dataset::new(2, 2, vec![0.0, 2.0, 2.0, 0.0], vec![0, 1]).unwrap();
        let (mean, std) = standardize_fit(&ds, &[0, 1]).unwrap();
        assert_eq!(mean, vec![1.0, 1.0]);
        assert_eq!(std, vec![1.0, 1.0]);
    }

    #[test]
    fn standardize_floors_constant_vertex() {
        let ds = Dataset::new(2, 2, vec![3.0, 1.0, 3.0, 2.0], vec![0, 1]).unwrap();
        let (mean, std) = standardize_fit(&ds, &[0, 1]).unwrap();
        assert_eq!(mean[0], 3.0);
        assert_eq!(std[0], 1e-8);
        let out = standardize_apply(&ds, &mean, &std).unwrap();
        assert_eq!(out.signal(0)[0], 0.0);
        assert_eq!(out.signal(1)[0], 0.0);
    }

    #[test]
    fn standardized_train_split_has_unit_stats() {
        let ds = balanced_dataset(6, 40, 2);
        let idx: Vec<usize> = (0..ds.n_samples()).collect();
        let (mean, std) = standardize_fit(&ds, &idx).unwrap();
        let out = standardize_apply(&ds, &mean, &std).unwrap();
        let (mean2, std2) = standardize_fit(&out, &idx).unwrap();
        for v in 0..6 {
            assert!(mean2[v].abs() < 1e-6, "vertex {v} mean {}", mean2[v]);
            assert!((std2[v] - 1.0).abs() < 1e-4, "vertex {v} std {}", std2[v]);
        }
    }

    #[test]
    fn mixup_limits() {
        let (x, t) = mixup(&[1.0, 2.0], 0, &[3.0, 4.0], 1, 1.0).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert_eq!(t.lam, 1.0);
        let (x, _) = mixup(&[1.0, 2.0], 0, &[3.0, 4.0], 1, 0.5).unwrap();
        assert_eq!(x, vec![2.0, 3.0]);
    }

    #[test]
    fn beta_draws_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let beta = Beta::new(0.2, 0.2).unwrap();
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| beta.sample(&mut rng)).sum::<f64>() / draws as f64;
        // var of Beta(0.2, 0.2) = 0.04 / (0.16 * 1.4); 3 sigma of the mean
        let sd = (0.04f64 / (0.16 * 1.4)).sqrt();
        let bound = 3.0 * sd / (draws as f64).sqrt();
        assert!((mean - 0.5).abs() < bound, "mean {mean}");
    }

    #[test]
    fn split_hundred_samples_two_classes() {
        let ds = balanced_dataset(4, 50, 2);
        let splits = split_dataset(&ds, (0.70, 0.15, 0.15), 3).unwrap();
        assert_eq!(splits.train.len(), 70);
        assert_eq!(splits.val.len(), 15);
        assert_eq!(splits.test.len(), 15);
        for class in 0..2u32 {
            let count = |idx: &[usize]| idx.iter().filter(|&&s| ds.label(s) == class).count();
            assert_eq!(count(&splits.train), 35);
            let v = count(&splits.val);
            let t = count(&splits.test);
            assert!(v == 7 || v == 8, "val class count {v}");
            assert_eq!(v + t, 15);
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ds = balanced_dataset(4, 17, 3);
        let a = split_dataset(&ds, (0.70, 0.15, 0.15), 9).unwrap();
        let b = split_dataset(&ds, (0.70, 0.15, 0.15), 9).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ds, (0.70, 0.15, 0.15), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_class_proportions_deviate_by_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for trial in 0..10 {
            let classes = rng.random_range(2..=4u32);
            let per = rng.random_range(5..=40usize);
            let ds = balanced_dataset(3, per, classes);
            let splits = split_dataset(&ds, (0.70, 0.15, 0.15), trial).unwrap();
            let total = ds.n_samples() as f64;
            for (idx, frac) in [
                (&splits.train, 0.70f64),
                (&splits.val, 0.15),
                (&splits.test, 0.15),
            ] {
                for class in 0..classes {
                    let got = idx.iter().filter(|&&s| ds.label(s) == class).count() as f64;
                    let expect = frac * (ds.class_count(class) as f64);
                    assert!(
                        (got - expect).abs() <= 1.0 + 1e-9,
                        "trial {trial}: class {class} got {got}, expect {expect}"
                    );
                }
            }
            let _ = total;
        }
    }

    #[test]
    fn split_rejects_tiny_class() {
        let ds = Dataset::new(2, 2, vec![0.0; 10], vec![0, 0, 0, 1, 1]).unwrap();
        assert!(matches!(
            split_dataset(&ds, (0.70, 0.15, 0.15), 0),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let targets = [MixTarget::pure(2)];
        let (loss, _) = cross_entropy(&[0.0f64; 4], 4, &targets).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_vanishes_with_margin() {
        let mut prev = f64::MAX;
        for margin in [1.0f64, 5.0, 20.0, 80.0] {
            let logits = [margin, 0.0];
            let (loss, _) = cross_entropy(&logits, 2, &[MixTarget::pure(0)]).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn cross_entropy_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let batch = 3;
        let classes = 4;
        let logits: Vec<f64> = (0..batch * classes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let targets = [
            MixTarget { a: 0, b: 2, lam: 0.3 },
            MixTarget::pure(1),
            MixTarget { a: 3, b: 1, lam: 0.9 },
        ];
        let (_, grad) = cross_entropy(&logits, classes, &targets).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut lp = logits.clone();
            lp[i] += eps;
            let mut lm = logits.clone();
            lm[i] -= eps;
            let (up, _) = cross_entropy(&lp, classes, &targets).unwrap();
            let (um, _) = cross_entropy(&lm, classes, &targets).unwrap();
            let fd = (up - um) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() < 1e-6 * fd.abs().max(1.0),
                "grad[{i}]: {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn cross_entropy_rejects_non_finite() {
        let logits = [f64::NAN, 0.0];
        assert!(matches!(
            cross_entropy(&logits, 2, &[MixTarget::pure(0)]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn sgd_plain_step_is_exactly_minus_lr_grad() {
        let basis = ring_basis(6);
        let mut model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 4,
            depth: 1,
        }
        .build(&basis, (0..6).collect(), 2, 1)
        .unwrap();
        let before = model.flat_params();
        let (_, cache) = model
            .forward_train(&(0..12).map(|i| i as f32 * 0.1).collect::<Vec<_>>(), 2)
            .unwrap();
        let (_, dlogits) =
            cross_entropy(&model.forward_eval(&(0..12).map(|i| i as f32 * 0.1).collect::<Vec<_>>(), 2).unwrap(),
                2, &[MixTarget::pure(0), MixTarget::pure(1)]).unwrap();
        let grads = model.backward(&cache, &dlogits, 2).unwrap();
        let mut velocity = model.zero_grads();
        let lr = 0.05f32;
        model.sgd_step(&grads, &mut velocity, lr, 0.0, 0.0);
        let after = model.flat_params();
        let mut flat_grads = Vec::new();
        match &grads {
            ModelGrads::Mlp(g) => {
                for (w, b) in g.weights.iter().zip(g.biases.iter()) {
                    flat_grads.extend_from_slice(w);
                    flat_grads.extend_from_slice(b);
                }
            }
            _ => unreachable!(),
        }
        for ((b, a), g) in before.iter().zip(after.iter()).zip(flat_grads.iter()) {
            let expect = b - lr * g;
            let tol = 1e-7 * expect.abs().max(1e-12);
            assert!((a - expect).abs() <= tol, "{a} vs {expect}");
        }
    }

    #[test]
    fn weight_decay_is_geometric_without_gradient() {
        let basis = ring_basis(4);
        let mut model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 3,
            depth: 1,
        }
        .build(&basis, (0..4).collect(), 2, 2)
        .unwrap();
        let zero = model.zero_grads();
        let mut velocity = model.zero_grads();
        let before = model.flat_params();
        let (lr, wd) = (0.1f32, 0.5f32);
        let steps = 4;
        for _ in 0..steps {
            model.sgd_step(&zero, &mut velocity, lr, 0.0, wd);
        }
        let factor = (1.0 - lr * wd).powi(steps);
        for (b, a) in before.iter().zip(model.flat_params().iter()) {
            let expect = b * factor;
            assert!((a - expect).abs() <= 1e-6 * expect.abs().max(1e-12));
        }
    }

    #[test]
    fn trains_separable_planted_band_to_high_accuracy() {
        let basis = ring_basis(16);
        let band = KeptSet::new((0..4).collect()).unwrap();
        let ds = Dataset::synth_planted_band(&basis, 2, &band, 8.0, 40, 3).unwrap();
        let splits = split_dataset(&ds, (0.70, 0.15, 0.15), 3).unwrap();
        let (mean, std) = standardize_fit(&ds, &splits.train).unwrap();
        let ds = standardize_apply(&ds, &mean, &std).unwrap();
        let model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 16,
            depth: 2,
        }
        .build(&basis, (0..16).collect(), 2, 5)
        .unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr_milestones: vec![15, 22],
            seed: 5,
            ..TrainConfig::default()
        };
        let (_, history) = train_model(model, &ds, &splits, &cfg).unwrap();
        let final_train_acc = *history.train_acc.last().unwrap();
        assert!(
            final_train_acc >= 0.99,
            "train accuracy {final_train_acc} after 30 epochs"
        );
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn fixed_seed_reproduces_history_and_params() {
        let basis = ring_basis(8);
        let band = KeptSet::new((0..3).collect()).unwrap();
        let ds = Dataset::synth_planted_band(&basis, 2, &band, 4.0, 20, 7).unwrap();
        let splits = split_dataset(&ds, (0.70, 0.15, 0.15), 7).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let build = || -> SpectralModel<f32> {
            ArchSpec {
                kind: ArchKind::Mlp,
                width: 8,
                depth: 1,
            }
            .build(&basis, (0..8).collect(), 2, 11)
            .unwrap()
        };
        let (m1, mut h1) = train_model(build(), &ds, &splits, &cfg).unwrap();
        let (m2, mut h2) = train_model(build(), &ds, &splits, &cfg).unwrap();
        // wall time is the one legitimately nondeterministic field
        h1.wall_time = 0.0;
        h2.wall_time = 0.0;
        assert_eq!(h1, h2);
        let b1: Vec<u32> = m1.flat_params().iter().map(|v| v.to_bits()).collect();
        let b2: Vec<u32> = m2.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(b1, b2);
    }

    #[test]
    fn best_val_selection_matches_history_max() {
        let basis = ring_basis(8);
        let band = KeptSet::new((0..3).collect()).unwrap();
        let ds = Dataset::synth_planted_band(&basis, 2, &band, 2.0, 25, 13).unwrap();
        let splits = split_dataset(&ds, (0.70, 0.15, 0.15), 13).unwrap();
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 8,
            seed: 2,
            ..TrainConfig::default()
        };
        let model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 8,
            depth: 1,
        }
        .build(&basis, (0..8).collect(), 2, 2)
        .unwrap();
        let (best, history) = train_model(model, &ds, &splits, &cfg).unwrap();
        let max_val = history.val_acc.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(history.val_acc[history.best_val_epoch], max_val);
        // earliest epoch wins ties
        for (e, &v) in history.val_acc.iter().enumerate() {
            if v == max_val {
                assert_eq!(history.best_val_epoch, e);
                break;
            }
        }
        let val_of_best = evaluate(&best, &ds, &splits.val).unwrap();
        assert_eq!(val_of_best, max_val);
    }

    #[test]
    fn evaluate_constant_predictor() {
        let basis = ring_basis(4);
        let mut model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 2,
            depth: 1,
        }
        .build(&basis, (0..4).collect(), 2, 0)
        .unwrap();
        if let SpectralModel::Mlp(m) = &mut model {
            for w in m.weights.iter_mut() {
                w.iter_mut().for_each(|v| *v = 0.0);
            }
            // bias head toward class 0
            let last = m.biases.len() - 1;
            m.biases[last] = vec![1.0, 0.0];
        }
        // 3 of 10 samples are class 0
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let ds = Dataset::new(4, 2, vec![0.5; 40], labels).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let acc = evaluate(&model, &ds, &idx).unwrap();
        assert!((acc - 0.3).abs() < 1e-12);
        // invariant under reordering
        let rev: Vec<usize> = (0..10).rev().collect();
        assert_eq!(evaluate(&model, &ds, &rev).unwrap(), acc);
    }

    #[test]
    fn mean_ci_basics() {
        let (m, ci) = mean_ci95(&[0.5]);
        assert_eq!(m, 0.5);
        assert_eq!(ci, 0.0);
        let (m, ci) = mean_ci95(&[0.5, 0.7]);
        assert!((m - 0.6).abs() < 1e-12);
        assert!(ci > 0.0);
    }
}
