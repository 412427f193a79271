//! Selective weight decay over graph frequencies.
//!
//! At every optimizer step the per-frequency importance (grouped weight
//! magnitude) is recomputed; frequencies outside the current top-K receive an
//! extra decay term whose coefficient grows geometrically from `alpha_min` to
//! `alpha_max` over the run. By the end the penalized groups are numerically
//! dead, the survivors form the kept set, and the model is truncated to it
//! and retrained with the original schedule restarted (LR-rewinding).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ArchSpec, SpectralModel};
use crate::spectral::{BandSpec, SpectralBasis};
use crate::train::{
    evaluate, mean_ci95, train_model, train_with_hook, FinalSelection, RunHistory, Splits,
    TrainConfig,
};

/// Penalty schedule: geometric interpolation from `alpha_min` to `alpha_max`
/// over `total_steps` optimizer steps, keeping `k_keep` frequencies.
///
/// Both alphas zero disables the penalty entirely (the zero-penalty run is
/// bit-identical to plain training); a zero `alpha_min` with a positive
/// `alpha_max` has no geometric interpolation and is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwdSchedule {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub total_steps: usize,
    pub k_keep: usize,
}

impl SwdSchedule {
    pub fn new(alpha_min: f64, alpha_max: f64, total_steps: usize, k_keep: usize) -> Result<Self> {
        if alpha_min < 0.0 || alpha_max < alpha_min {
            return Err(Error::InvalidSchedule {
                detail: format!("need 0 <= alpha_min <= alpha_max, got {alpha_min}..{alpha_max}"),
            });
        }
        if alpha_min == 0.0 && alpha_max > 0.0 {
            return Err(Error::InvalidSchedule {
                detail: "alpha_min = 0 with alpha_max > 0 breaks the geometric schedule".into(),
            });
        }
        if total_steps == 0 {
            return Err(Error::InvalidSchedule {
                detail: "total_steps must be at least 1".into(),
            });
        }
        if k_keep == 0 {
            return Err(Error::InvalidSchedule {
                detail: "k_keep must be at least 1".into(),
            });
        }
        Ok(Self {
            alpha_min,
            alpha_max,
            total_steps,
            k_keep,
        })
    }

    /// Schedule spanning exactly one training run of `cfg` over `train_len`
    /// samples.
    pub fn for_run(
        alpha_min: f64,
        alpha_max: f64,
        k_keep: usize,
        cfg: &TrainConfig,
        train_len: usize,
    ) -> Result<Self> {
        Self::new(
            alpha_min,
            alpha_max,
            cfg.epochs * cfg.steps_per_epoch(train_len),
            k_keep,
        )
    }
}

/// `alpha(step) = alpha_min (alpha_max / alpha_min)^(step / total_steps)`.
pub fn swd_alpha(step: usize, sched: &SwdSchedule) -> Result<f64> {
    if step > sched.total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: sched.total_steps,
        });
    }
    if sched.alpha_max == 0.0 {
        return Ok(0.0);
    }
    let t = step as f64 / sched.total_steps as f64;
    Ok(sched.alpha_min * (sched.alpha_max / sched.alpha_min).powf(t))
}

/// Ascending set of retained frequency indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptSet {
    indices: Vec<usize>,
}

impl KeptSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::BadKeptSet {
                    detail: format!("indices not strictly ascending: {} then {}", w[0], w[1]),
                });
            }
        }
        Ok(Self { indices })
    }

    /// Top-k scores, ties broken toward the lower frequency index; the result
    /// is stored ascending.
    pub fn from_topk(scores: &[f64], k: usize) -> Result<Self> {
        if k == 0 || k > scores.len() {
            return Err(Error::BadKeptSet {
                detail: format!("k = {k} out of range for {} scores", scores.len()),
            });
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut top: Vec<usize> = order[..k].to_vec();
        top.sort_unstable();
        Ok(Self { indices: top })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, freq: usize) -> bool {
        self.indices.binary_search(&freq).is_ok()
    }
}

/// Intersection over union of two kept sets; errors when both are empty.
pub fn iou(a: &KeptSet, b: &KeptSet) -> Result<f64> {
    if a.k() == 0 && b.k() == 0 {
        return Err(Error::IouBothEmpty);
    }
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.k() + b.k() - inter;
    Ok(inter as f64 / union as f64)
}

/// How often each frequency appears across kept sets.
pub fn occurrence_histogram(kept_sets: &[KeptSet], n: usize) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; n];
    for set in kept_sets {
        for &l in set.indices() {
            if l >= n {
                return Err(Error::InconsistentN { index: l, n });
            }
            counts[l] += 1;
        }
    }
    Ok(counts)
}

/// Importance snapshot kept every few steps for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSample {
    pub step: usize,
    pub scores: Vec<f64>,
}

/// Artifacts of one SWD run: the kept set, the (downsampled) importance
/// trace and accuracies before truncation and after the rewound retrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub schedule: SwdSchedule,
    pub kept: KeptSet,
    pub importance_trace: Vec<ImportanceSample>,
    pub pre_test_acc: f64,
    pub post_test_acc: Option<f64>,
}

const TRACE_EVERY: usize = 10;

/// Trains with the selective-weight-decay penalty and returns the final-step
/// model (the decayed state the kept set was read from), the kept set, and a
/// report with `post_test_acc` still unset.
pub fn swd_train(
    model: SpectralModel<f32>,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
    sched: &SwdSchedule,
) -> Result<(SpectralModel<f32>, KeptSet, PruneReport, RunHistory)> {
    let n = model.n();
    if model.is_truncated() {
        return Err(Error::TruncatedModel { n, k: model.k() });
    }
    if sched.k_keep > n {
        return Err(Error::InvalidSchedule {
            detail: format!("k_keep = {} exceeds n = {}", sched.k_keep, n),
        });
    }
    let expected_steps = cfg.epochs * cfg.steps_per_epoch(splits.train.len());
    if sched.total_steps != expected_steps {
        return Err(Error::InvalidSchedule {
            detail: format!(
                "schedule spans {} steps but the run has {}",
                sched.total_steps, expected_steps
            ),
        });
    }

    let mut trace: Vec<ImportanceSample> = Vec::new();
    let k_keep = sched.k_keep;
    let (final_model, history) = {
        let mut hook = |step: usize,
                        m: &SpectralModel<f32>,
                        grads: &mut crate::model::ModelGrads<f32>|
         -> Result<()> {
            let scores = m.frequency_importance()?;
            if step % TRACE_EVERY == 0 {
                trace.push(ImportanceSample {
                    step,
                    scores: scores.clone(),
                });
            }
            let alpha = swd_alpha(step, sched)?;
            if alpha != 0.0 {
                let top = KeptSet::from_topk(&scores, k_keep)?;
                let penalized: Vec<bool> = (0..n).map(|l| !top.contains(l)).collect();
                m.add_frequency_penalty(grads, alpha, &penalized);
            }
            Ok(())
        };
        train_with_hook(model, ds, splits, cfg, FinalSelection::Final, &mut hook)?
    };

    // The kept set is read from the end-of-run weights: that is the state the
    // penalty drove the pruned groups to zero in.
    let final_scores = final_model.frequency_importance()?;
    let kept = KeptSet::from_topk(&final_scores, k_keep)?;
    let pre_test_acc = evaluate(&final_model, ds, &splits.test)?;
    let report = PruneReport {
        schedule: *sched,
        kept: kept.clone(),
        importance_trace: trace,
        pre_test_acc,
        post_test_acc: None,
    };
    Ok((final_model, kept, report, history))
}

/// LR-rewinding retrain: the original schedule restarted from step zero on a
/// truncated, warm-started model. Plain `train_model` with the baseline
/// config is exactly that.
pub fn rewind_retrain(
    truncated: SpectralModel<f32>,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(SpectralModel<f32>, RunHistory)> {
    train_model(truncated, ds, splits, cfg)
}

/// Everything one SWD + truncate + rewind pipeline produces.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    /// Best-validation model of the rewound retrain.
    pub model: SpectralModel<f32>,
    pub kept: KeptSet,
    pub report: PruneReport,
    pub swd_history: RunHistory,
    pub retrain_history: RunHistory,
}

/// Full pipeline: SWD training, truncation to the kept set, LR-rewinding
/// retrain, report with both accuracies.
pub fn prune_pipeline(
    arch: &ArchSpec,
    basis: &SpectralBasis,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
    sched: &SwdSchedule,
) -> Result<PruneOutcome> {
    let model: SpectralModel<f32> = arch.build(
        basis,
        (0..basis.n()).collect(),
        ds.n_classes() as usize,
        cfg.seed,
    )?;
    let (swd_model, kept, mut report, swd_history) = swd_train(model, ds, splits, cfg, sched)?;
    let truncated = swd_model.truncate(kept.indices())?;
    let (retrained, retrain_history) = rewind_retrain(truncated, ds, splits, cfg)?;
    report.post_test_acc = Some(retrain_history.test_acc);
    Ok(PruneOutcome {
        model: retrained,
        kept,
        report,
        swd_history,
        retrain_history,
    })
}

/// One point of a band-selection scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScanPoint {
    pub offset: usize,
    pub accs: Vec<f64>,
    pub mean_acc: f64,
    pub ci95: f64,
}

/// Trains a fresh model per (offset, repetition) whose kept set is the
/// contiguous band, recording test accuracies. Repetition r uses seed
/// `cfg.seed + r` for both init and training.
pub fn band_scan(
    arch: &ArchSpec,
    basis: &SpectralBasis,
    ds: &Dataset,
    splits: &Splits,
    cfg: &TrainConfig,
    bandwidth: usize,
    offsets: &[usize],
    reps: usize,
) -> Result<Vec<BandScanPoint>> {
    if reps == 0 {
        return Err(Error::InvalidConfig {
            detail: "band scan needs at least one repetition".into(),
        });
    }
    let n = basis.n();
    let mut curve = Vec::with_capacity(offsets.len());
    for &offset in offsets {
        let band = BandSpec::new(offset, bandwidth)?;
        band.validate(n)?;
        let kept: Vec<usize> = band.indices().collect();
        let mut accs = Vec::with_capacity(reps);
        for rep in 0..reps {
            let seed = cfg.seed + rep as u64;
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            let model: SpectralModel<f32> =
                arch.build(basis, kept.clone(), ds.n_classes() as usize, seed)?;
            let (_, history) = train_model(model, ds, splits, &run_cfg)?;
            accs.push(history.test_acc);
        }
        let (mean_acc, ci95) = mean_ci95(&accs);
        curve.push(BandScanPoint {
            offset,
            accs,
            mean_acc,
            ci95,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::model::ArchKind;
    use crate::train::split_dataset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    #[test]
    fn alpha_endpoints_and_midpoint() {
        let sched = SwdSchedule::new(1e-4, 1e2, 100, 4).unwrap();
        assert_eq!(swd_alpha(0, &sched).unwrap(), 1e-4);
        let end = swd_alpha(100, &sched).unwrap();
        assert!((end - 1e2).abs() < 1e-10 * 1e2);
        let mid = swd_alpha(50, &sched).unwrap();
        let expect = (1e-4f64 * 1e2).sqrt();
        assert!((mid - expect).abs() < 1e-12 * expect);
        assert!(matches!(
            swd_alpha(101, &sched),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn alpha_ratio_is_constant() {
        let sched = SwdSchedule::new(1e-3, 10.0, 64, 2).unwrap();
        let ratio = swd_alpha(1, &sched).unwrap() / swd_alpha(0, &sched).unwrap();
        for s in 1..64 {
            let r = swd_alpha(s + 1, &sched).unwrap() / swd_alpha(s, &sched).unwrap();
            assert!((r - ratio).abs() < 1e-12, "step {s}: {r} vs {ratio}");
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(SwdSchedule::new(0.0, 0.0, 10, 1).is_ok());
        assert!(SwdSchedule::new(0.0, 1.0, 10, 1).is_err());
        assert!(SwdSchedule::new(2.0, 1.0, 10, 1).is_err());
        assert!(SwdSchedule::new(1e-4, 1.0, 0, 1).is_err());
        assert!(SwdSchedule::new(1e-4, 1.0, 10, 0).is_err());
        let zero = SwdSchedule::new(0.0, 0.0, 10, 1).unwrap();
        assert_eq!(swd_alpha(5, &zero).unwrap(), 0.0);
    }

    #[test]
    fn kept_set_construction_and_iou() {
        let a = KeptSet::new(vec![1, 2]).unwrap();
        let b = KeptSet::new(vec![2, 3]).unwrap();
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let c = KeptSet::new(vec![5, 6]).unwrap();
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        let empty = KeptSet::new(vec![]).unwrap();
        assert!(matches!(iou(&empty, &empty), Err(Error::IouBothEmpty)));
        assert_eq!(iou(&a, &empty).unwrap(), 0.0);
        assert!(KeptSet::new(vec![2, 2]).is_err());
        assert!(KeptSet::new(vec![3, 1]).is_err());
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        let scores = [1.0, 3.0, 3.0, 0.5];
        let top = KeptSet::from_topk(&scores, 2).unwrap();
        assert_eq!(top.indices(), &[1, 2]);
        let top3 = KeptSet::from_topk(&scores, 3).unwrap();
        assert_eq!(top3.indices(), &[0, 1, 2]);
    }

    #[test]
    fn histogram_counts() {
        let sets = vec![KeptSet::new(vec![0, 1]).unwrap()];
        assert_eq!(occurrence_histogram(&sets, 4).unwrap(), vec![1, 1, 0, 0]);
        let twenty: Vec<KeptSet> = (0..20).map(|_| KeptSet::new(vec![1, 3]).unwrap()).collect();
        let counts = occurrence_histogram(&twenty, 4).unwrap();
        assert_eq!(counts, vec![0, 20, 0, 20]);
        let total: u32 = counts.iter().sum();
        assert_eq!(total as usize, twenty.iter().map(|s| s.k()).sum::<usize>());
        assert!(matches!(
            occurrence_histogram(&sets, 1),
            Err(Error::InconsistentN { .. })
        ));
    }

    #[test]
    fn importance_is_permutation_equivariant() {
        let basis = ring_basis(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m: SpectralModel<f64> = ArchSpec {
            kind: ArchKind::Resnet,
            width: 2,
            depth: 1,
        }
        .build(&basis, (0..6).collect(), 2, 1)
        .unwrap();
        if let SpectralModel::ResNet(r) = &mut m {
            for t in r.embed.theta.iter_mut() {
                *t = rng.random_range(-1.0..1.0);
            }
            for (c1, c2) in r.blocks.iter_mut() {
                for t in c1.theta.iter_mut().chain(c2.theta.iter_mut()) {
                    *t = rng.random_range(-1.0..1.0);
                }
            }
        }
        let base = m.frequency_importance().unwrap();

        // rotate the frequency rows of every theta by 2
        let perm: Vec<usize> = (0..6).map(|l| (l + 2) % 6).collect();
        let mut permuted = m.clone();
        if let (SpectralModel::ResNet(src), SpectralModel::ResNet(dst)) = (&m, &mut permuted) {
            let apply = |from: &crate::model::GspConvLayer<f64>,
                         to: &mut crate::model::GspConvLayer<f64>| {
                let slice = from.c_in * from.c_out;
                for l in 0..6 {
                    let target = perm[l];
                    to.theta[target * slice..(target + 1) * slice]
                        .copy_from_slice(&from.theta[l * slice..(l + 1) * slice]);
                }
            };
            apply(&src.embed, &mut dst.embed);
            for ((s1, s2), (d1, d2)) in src.blocks.iter().zip(dst.blocks.iter_mut()) {
                apply(s1, d1);
                apply(s2, d2);
            }
        }
        let moved = permuted.frequency_importance().unwrap();
        for l in 0..6 {
            assert!((moved[perm[l]] - base[l]).abs() < 1e-15);
        }
    }

    fn planted_setup_classes(
        n: usize,
        classes: u32,
        band_indices: Vec<usize>,
        snr: f64,
        per_class: usize,
        seed: u64,
    ) -> (SpectralBasis, Dataset, Splits) {
        let basis = ring_basis(n);
        let band = KeptSet::new(band_indices).unwrap();
        let ds = Dataset::synth_planted_band(&basis, classes, &band, snr, per_class, seed).unwrap();
        let splits = split_dataset(&ds, (0.70, 0.15, 0.15), seed).unwrap();
        let (mean, std) = crate::train::standardize_fit(&ds, &splits.train).unwrap();
        let ds = crate::train::standardize_apply(&ds, &mean, &std).unwrap();
        (basis, ds, splits)
    }

    fn planted_setup(
        n: usize,
        band_indices: Vec<usize>,
        snr: f64,
        per_class: usize,
        seed: u64,
    ) -> (SpectralBasis, Dataset, Splits) {
        planted_setup_classes(n, 2, band_indices, snr, per_class, seed)
    }

    #[test]
    fn zero_alpha_swd_matches_plain_training_trajectory() {
        let (basis, ds, splits) = planted_setup(8, (0..3).collect(), 4.0, 20, 5);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let build = || -> SpectralModel<f32> {
            ArchSpec {
                kind: ArchKind::Mlp,
                width: 6,
                depth: 1,
            }
            .build(&basis, (0..8).collect(), 2, 3)
            .unwrap()
        };
        let sched = SwdSchedule::for_run(0.0, 0.0, 3, &cfg, splits.train.len()).unwrap();
        let (_, _, _, swd_history) = swd_train(build(), &ds, &splits, &cfg, &sched).unwrap();
        let (_, plain_history) = train_model(build(), &ds, &splits, &cfg).unwrap();
        assert_eq!(swd_history.train_loss, plain_history.train_loss);
        assert_eq!(swd_history.train_acc, plain_history.train_acc);
        assert_eq!(swd_history.val_acc, plain_history.val_acc);
    }

    #[test]
    fn keep_all_penalizes_nothing() {
        let (basis, ds, splits) = planted_setup(8, (0..3).collect(), 4.0, 20, 6);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 4,
            ..TrainConfig::default()
        };
        let build = || -> SpectralModel<f32> {
            ArchSpec {
                kind: ArchKind::Mlp,
                width: 6,
                depth: 1,
            }
            .build(&basis, (0..8).collect(), 2, 4)
            .unwrap()
        };
        let sched = SwdSchedule::for_run(1e-4, 1e2, 8, &cfg, splits.train.len()).unwrap();
        let (swd_model, kept, _, _) = swd_train(build(), &ds, &splits, &cfg, &sched).unwrap();
        assert_eq!(kept.k(), 8);
        let (plain_model, _) = crate::train::train_with_hook(
            build(),
            &ds,
            &splits,
            &cfg,
            FinalSelection::Final,
            &mut |_, _, _| Ok(()),
        )
        .unwrap();
        let a: Vec<u32> = swd_model.flat_params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = plain_model.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn swd_nullifies_offband_weights_and_recovers_plant() {
        // 4 classes so the discriminative structure spans the whole plant;
        // with 2 classes only the 1-d mean difference matters and weakly
        // loaded planted frequencies can legitimately lose the ranking.
        let band: Vec<usize> = (0..4).collect();
        let (basis, ds, splits) = planted_setup_classes(16, 4, band.clone(), 5.0, 60, 7);
        let cfg = TrainConfig {
            epochs: 25,
            batch_size: 16,
            lr_milestones: vec![12, 18],
            seed: 1,
            ..TrainConfig::default()
        };
        let model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 12,
            depth: 1,
        }
        .build(&basis, (0..16).collect(), 4, 1)
        .unwrap();
        let sched = SwdSchedule::for_run(1e-4, 1e2, 4, &cfg, splits.train.len()).unwrap();
        let (swd_model, kept, report, _) = swd_train(model, &ds, &splits, &cfg, &sched).unwrap();
        let recovered = band.iter().filter(|l| kept.contains(**l)).count();
        assert!(recovered >= 3, "kept {:?}", kept.indices());
        assert!(report.pre_test_acc > 0.7, "pre acc {}", report.pre_test_acc);

        // whatever was penalized at the end is numerically dead
        let scores = swd_model.frequency_importance().unwrap();
        let kept_mean: f64 =
            kept.indices().iter().map(|&l| scores[l]).sum::<f64>() / kept.k() as f64;
        let pruned: Vec<f64> = (0..16)
            .filter(|l| !kept.contains(*l))
            .map(|l| scores[l])
            .collect();
        let pruned_mean: f64 = pruned.iter().sum::<f64>() / pruned.len() as f64;
        assert!(
            pruned_mean < 1e-3 * kept_mean,
            "pruned {pruned_mean} vs kept {kept_mean}"
        );
    }

    #[test]
    fn pipeline_truncates_and_retrains() {
        let band: Vec<usize> = (0..4).collect();
        let (basis, ds, splits) = planted_setup(16, band.clone(), 5.0, 50, 8);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 16,
            lr_milestones: vec![10, 15],
            seed: 2,
            ..TrainConfig::default()
        };
        let arch = ArchSpec {
            kind: ArchKind::Mlp,
            width: 12,
            depth: 1,
        };
        let sched = SwdSchedule::for_run(1e-4, 1e2, 4, &cfg, splits.train.len()).unwrap();
        let outcome = prune_pipeline(&arch, &basis, &ds, &splits, &cfg, &sched).unwrap();
        assert_eq!(outcome.model.k(), 4);
        assert_eq!(outcome.kept.k(), 4);
        let post = outcome.report.post_test_acc.unwrap();
        assert_eq!(post, outcome.retrain_history.test_acc);
        assert!(post > 0.85, "post-retrain accuracy {post}");
        // bookkeeping: histories have full length each
        assert_eq!(outcome.swd_history.train_loss.len(), cfg.epochs);
        assert_eq!(outcome.retrain_history.train_loss.len(), cfg.epochs);
    }

    #[test]
    fn swd_requires_matching_schedule_and_untruncated_model() {
        let (basis, ds, splits) = planted_setup(8, (0..3).collect(), 4.0, 20, 9);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 4,
            ..TrainConfig::default()
        };
        let model: SpectralModel<f32> = ArchSpec {
            kind: ArchKind::Mlp,
            width: 4,
            depth: 1,
        }
        .build(&basis, (0..8).collect(), 2, 4)
        .unwrap();
        let wrong = SwdSchedule::new(1e-4, 1e2, 999, 3).unwrap();
        assert!(matches!(
            swd_train(model.clone(), &ds, &splits, &cfg, &wrong),
            Err(Error::InvalidSchedule { .. })
        ));
        let truncated = model.truncate(&[0, 1, 2]).unwrap();
        let sched = SwdSchedule::for_run(1e-4, 1e2, 2, &cfg, splits.train.len()).unwrap();
        assert!(matches!(
            swd_train(truncated, &ds, &splits, &cfg, &sched),
            Err(Error::TruncatedModel { .. })
        ));
    }

    #[test]
    fn band_scan_produces_one_point_per_offset() {
        let (basis, ds, splits) = planted_setup(8, (0..2).collect(), 5.0, 20, 10);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 0,
            ..TrainConfig::default()
        };
        let arch = ArchSpec {
            kind: ArchKind::Mlp,
            width: 4,
            depth: 1,
        };
        let curve = band_scan(&arch, &basis, &ds, &splits, &cfg, 2, &[0, 3, 6], 2).unwrap();
        assert_eq!(curve.len(), 3);
        assert_eq!(curve[0].offset, 0);
        assert_eq!(curve[0].accs.len(), 2);
        assert!(matches!(
            band_scan(&arch, &basis, &ds, &splits, &cfg, 2, &[7], 1),
            Err(Error::BandOutOfRange { .. })
        ));
    }

    #[test]
    fn full_bandwidth_scan_equals_baseline_training() {
        let (basis, ds, splits) = planted_setup(8, (0..3).collect(), 4.0, 20, 11);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 8,
            seed: 6,
            ..TrainConfig::default()
        };
        let arch = ArchSpec {
            kind: ArchKind::Mlp,
            width: 6,
            depth: 1,
        };
        let curve = band_scan(&arch, &basis, &ds, &splits, &cfg, 8, &[0], 1).unwrap();
        let model: SpectralModel<f32> = arch.build(&basis, (0..8).collect(), 2, 6).unwrap();
        let (_, history) = train_model(model, &ds, &splits, &cfg).unwrap();
        assert_eq!(curve[0].accs[0], history.test_acc);
    }

}
