//! Spectral models: GSPConv layers, the spectral ResNet and the spectral MLP.
//!
//! Models are generic over [`Scalar`]: training runs in `f32`, gradient
//! checks in `f64`. A model owns a [`Projector`] (the kept columns of the
//! Fourier basis) and is tagged with the fingerprint of the basis it was
//! built from.
//!
//! Checkpoint format ("GSPM"): magic, little-endian u32 length-prefixed JSON
//! header (kind, n, k, kept, width, depth, classes, seed, basis_id), then all
//! tensors as little-endian f32 in this order:
//! - resnet: embed theta, embed bn (scale, shift, running_mean, running_var),
//!   then per block conv1 theta + bn, conv2 theta + bn, then head weights,
//!   head bias;
//! - mlp: weights and bias per layer, input layer first, head last.

pub mod batchnorm;
pub mod conv;
pub mod mlp;
pub mod resnet;

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;

pub use batchnorm::{BatchNorm, BnCache};
pub use conv::{spectral_mix, Activation, ConvCache, ConvGrads, GspConvLayer, Projector};
pub use mlp::{MlpCache, MlpGrads, SpectralMlp};
pub use resnet::{ResNetCache, ResNetGrads, SpectralResNet};

const MAGIC: &[u8; 4] = b"GSPM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Mlp,
    Resnet,
}

/// Architecture choice plus width/depth; enough to build a fresh model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub width: usize,
    pub depth: usize,
}

impl ArchSpec {
    pub fn build<S: Scalar>(
        &self,
        basis: &SpectralBasis,
        kept: Vec<usize>,
        classes: usize,
        seed: u64,
    ) -> Result<SpectralModel<S>> {
        match self.kind {
            ArchKind::Mlp => Ok(SpectralModel::Mlp(SpectralMlp::new(
                basis, kept, self.width, self.depth, classes, seed,
            )?)),
            ArchKind::Resnet => Ok(SpectralModel::ResNet(SpectralResNet::new(
                basis, kept, self.width, self.depth, classes, seed,
            )?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralModel<S: Scalar> {
    ResNet(SpectralResNet<S>),
    Mlp(SpectralMlp<S>),
}

#[derive(Debug, Clone)]
pub enum ModelCache<S: Scalar> {
    ResNet(ResNetCache<S>),
    Mlp(MlpCache<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelGrads<S: Scalar> {
    ResNet(ResNetGrads<S>),
    Mlp(MlpGrads<S>),
}

impl<S: Scalar> SpectralModel<S> {
    pub fn projector(&self) -> &Projector<S> {
        match self {
            SpectralModel::ResNet(m) => &m.projector,
            SpectralModel::Mlp(m) => &m.projector,
        }
    }

    pub fn n(&self) -> usize {
        self.projector().n()
    }

    pub fn k(&self) -> usize {
        self.projector().k()
    }

    pub fn kept(&self) -> &[usize] {
        self.projector().kept()
    }

    pub fn classes(&self) -> usize {
        match self {
            SpectralModel::ResNet(m) => m.classes,
            SpectralModel::Mlp(m) => m.classes,
        }
    }

    pub fn arch(&self) -> ArchSpec {
        match self {
            SpectralModel::ResNet(m) => ArchSpec {
                kind: ArchKind::Resnet,
                width: m.gamma,
                depth: m.depth(),
            },
            SpectralModel::Mlp(m) => ArchSpec {
                kind: ArchKind::Mlp,
                width: m.width,
                depth: m.depth,
            },
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SpectralModel::ResNet(m) => m.seed,
            SpectralModel::Mlp(m) => m.seed,
        }
    }

    pub fn is_truncated(&self) -> bool {
        !self.projector().is_full()
    }

    pub fn init_params(&mut self, seed: u64) {
        match self {
            SpectralModel::ResNet(m) => m.init_params(seed),
            SpectralModel::Mlp(m) => m.init_params(seed),
        }
    }

    pub fn forward_train(&mut self, x: &[S], batch: usize) -> Result<(Vec<S>, ModelCache<S>)> {
        match self {
            SpectralModel::ResNet(m) => {
                let (logits, cache) = m.forward_train(x, batch)?;
                Ok((logits, ModelCache::ResNet(cache)))
            }
            SpectralModel::Mlp(m) => {
                let (logits, cache) = m.forward(x, batch)?;
                Ok((logits, ModelCache::Mlp(cache)))
            }
        }
    }

    pub fn forward_eval(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        match self {
            SpectralModel::ResNet(m) => m.forward_eval(x, batch),
            SpectralModel::Mlp(m) => m.forward_eval(x, batch),
        }
    }

    pub fn backward(
        &self,
        cache: &ModelCache<S>,
        grad_logits: &[S],
        batch: usize,
    ) -> Result<ModelGrads<S>> {
        match (self, cache) {
            (SpectralModel::ResNet(m), ModelCache::ResNet(c)) => {
                Ok(ModelGrads::ResNet(m.backward(c, grad_logits, batch)?))
            }
            (SpectralModel::Mlp(m), ModelCache::Mlp(c)) => {
                Ok(ModelGrads::Mlp(m.backward(c, grad_logits, batch)?))
            }
            _ => Err(Error::DimensionMismatch {
                module: "model",
                detail: "cache does not match model architecture".into(),
            }),
        }
    }

    pub fn zero_grads(&self) -> ModelGrads<S> {
        match self {
            SpectralModel::ResNet(m) => ModelGrads::ResNet(m.zero_grads()),
            SpectralModel::Mlp(m) => ModelGrads::Mlp(m.zero_grads()),
        }
    }

    /// Parameter counts: (formula over frequency-indexed weights and head,
    /// full count of every trainable parameter).
    ///
    /// ResNet formula: gamma K + 2 d gamma^2 K + gamma C; full adds bn
    /// scale/shift and the head bias. MLP formula: h K + (d-1) h^2 + h C;
    /// full adds all biases.
    pub fn param_count(&self) -> (usize, usize) {
        match self {
            SpectralModel::ResNet(m) => {
                let (k, g, d, c) = (m.projector.k(), m.gamma, m.depth(), m.classes);
                let formula = g * k + 2 * d * g * g * k + g * c;
                let full = formula + 2 * g * (1 + 2 * d) + c;
                (formula, full)
            }
            SpectralModel::Mlp(m) => {
                let (k, h, d, c) = (m.projector.k(), m.width, m.depth, m.classes);
                let formula = h * k + (d - 1) * h * h + h * c;
                let full = formula + d * h + c;
                (formula, full)
            }
        }
    }

    /// Every trainable parameter in checkpoint order.
    pub fn flat_params(&self) -> Vec<S> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    fn visit_params(&self, f: &mut impl FnMut(&[S])) {
        match self {
            SpectralModel::ResNet(m) => {
                let conv = |layer: &GspConvLayer<S>, f: &mut dyn FnMut(&[S])| {
                    f(&layer.theta);
                    if let Some(bn) = &layer.bn {
                        f(&bn.scale);
                        f(&bn.shift);
                    }
                };
                conv(&m.embed, f);
                for (c1, c2) in &m.blocks {
                    conv(c1, f);
                    conv(c2, f);
                }
                f(&m.head_w);
                f(&m.head_b);
            }
            SpectralModel::Mlp(m) => {
                for (w, b) in m.weights.iter().zip(m.biases.iter()) {
                    f(w);
                    f(b);
                }
            }
        }
    }

    /// One SGD step with momentum and weight decay:
    /// `v = momentum v + (g + wd w); w -= lr v`.
    pub fn sgd_step(
        &mut self,
        grads: &ModelGrads<S>,
        velocity: &mut ModelGrads<S>,
        lr: S,
        momentum: S,
        weight_decay: S,
    ) {
        let update = |w: &mut [S], g: &[S], v: &mut [S]| {
            debug_assert_eq!(w.len(), g.len());
            debug_assert_eq!(w.len(), v.len());
            for i in 0..w.len() {
                let ge = g[i] + weight_decay * w[i];
                v[i] = momentum * v[i] + ge;
                w[i] -= lr * v[i];
            }
        };
        match (self, grads, velocity) {
            (SpectralModel::ResNet(m), ModelGrads::ResNet(g), ModelGrads::ResNet(v)) => {
                let conv = |l: &mut GspConvLayer<S>, lg: &ConvGrads<S>, lv: &mut ConvGrads<S>| {
                    update(&mut l.theta, &lg.theta, &mut lv.theta);
                    if let Some(bn) = &mut l.bn {
                        update(&mut bn.scale, &lg.bn_scale, &mut lv.bn_scale);
                        update(&mut bn.shift, &lg.bn_shift, &mut lv.bn_shift);
                    }
                };
                conv(&mut m.embed, &g.embed, &mut v.embed);
                for ((l1, l2), ((g1, g2), (v1, v2))) in m
                    .blocks
                    .iter_mut()
                    .zip(g.blocks.iter().zip(v.blocks.iter_mut()))
                {
                    conv(l1, g1, v1);
                    conv(l2, g2, v2);
                }
                update(&mut m.head_w, &g.head_w, &mut v.head_w);
                update(&mut m.head_b, &g.head_b, &mut v.head_b);
            }
            (SpectralModel::Mlp(m), ModelGrads::Mlp(g), ModelGrads::Mlp(v)) => {
                for i in 0..m.weights.len() {
                    update(&mut m.weights[i], &g.weights[i], &mut v.weights[i]);
                    update(&mut m.biases[i], &g.biases[i], &mut v.biases[i]);
                }
            }
            _ => panic!("gradient structure does not match model"),
        }
    }

    /// Per-frequency importance: l2 norm of all weights tied to frequency l.
    ///
    /// ResNet aggregates theta slices over every GSPConv layer; the MLP uses
    /// only its first layer (the single frequency-indexed tensor). Requires an
    /// untruncated model.
    pub fn frequency_importance(&self) -> Result<Vec<f64>> {
        if self.is_truncated() {
            return Err(Error::TruncatedModel {
                n: self.n(),
                k: self.k(),
            });
        }
        Ok(self.frequency_norms())
    }

    fn frequency_norms(&self) -> Vec<f64> {
        let k = self.k();
        let mut sq = vec![0.0f64; k];
        match self {
            SpectralModel::ResNet(m) => {
                let mut add = |layer: &GspConvLayer<S>| {
                    let slice = layer.c_in * layer.c_out;
                    for l in 0..k {
                        for &w in &layer.theta[l * slice..(l + 1) * slice] {
                            let w = w.to_f64();
                            sq[l] += w * w;
                        }
                    }
                };
                add(&m.embed);
                for (c1, c2) in &m.blocks {
                    add(c1);
                    add(c2);
                }
            }
            SpectralModel::Mlp(m) => {
                let h = m.width;
                for l in 0..k {
                    for &w in &m.weights[0][l * h..(l + 1) * h] {
                        let w = w.to_f64();
                        sq[l] += w * w;
                    }
                }
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Adds `alpha * w` to the gradient of every frequency-indexed weight
    /// whose frequency is flagged in `penalized` (length = kept count).
    /// Batch-norm, bias and head parameters are never penalized.
    pub fn add_frequency_penalty(&self, grads: &mut ModelGrads<S>, alpha: f64, penalized: &[bool]) {
        let k = self.k();
        debug_assert_eq!(penalized.len(), k);
        let a = S::from_f64(alpha);
        match (self, grads) {
            (SpectralModel::ResNet(m), ModelGrads::ResNet(g)) => {
                let mut pen = |layer: &GspConvLayer<S>, lg: &mut ConvGrads<S>| {
                    let slice = layer.c_in * layer.c_out;
                    for (l, &p) in penalized.iter().enumerate() {
                        if !p {
                            continue;
                        }
                        for i in l * slice..(l + 1) * slice {
                            lg.theta[i] += a * layer.theta[i];
                        }
                    }
                };
                pen(&m.embed, &mut g.embed);
                for ((c1, c2), (g1, g2)) in m.blocks.iter().zip(g.blocks.iter_mut()) {
                    pen(c1, g1);
                    pen(c2, g2);
                }
            }
            (SpectralModel::Mlp(m), ModelGrads::Mlp(g)) => {
                let h = m.width;
                for (l, &p) in penalized.iter().enumerate() {
                    if !p {
                        continue;
                    }
                    for i in l * h..(l + 1) * h {
                        g.weights[0][i] += a * m.weights[0][i];
                    }
                }
            }
            _ => panic!("gradient structure does not match model"),
        }
    }

    /// Restriction of the model to a subset of its kept frequencies.
    ///
    /// Theta rows outside the subset are dropped; everything that is not
    /// frequency-indexed (batch norm, biases, head) is copied. The truncated
    /// model's logits equal those of the original with the dropped rows set
    /// to zero.
    pub fn truncate(&self, kept: &[usize]) -> Result<SpectralModel<S>> {
        let positions = self.projector().positions_of(kept)?;
        match self {
            SpectralModel::ResNet(m) => {
                let projector = m.projector.restrict(kept)?;
                let conv = |layer: &GspConvLayer<S>| {
                    let slice = layer.c_in * layer.c_out;
                    let mut theta = Vec::with_capacity(positions.len() * slice);
                    for &pos in &positions {
                        theta.extend_from_slice(&layer.theta[pos * slice..(pos + 1) * slice]);
                    }
                    GspConvLayer {
                        theta,
                        c_in: layer.c_in,
                        c_out: layer.c_out,
                        bn: layer.bn.clone(),
                        activation: layer.activation,
                    }
                };
                Ok(SpectralModel::ResNet(SpectralResNet {
                    projector,
                    embed: conv(&m.embed),
                    blocks: m.blocks.iter().map(|(c1, c2)| (conv(c1), conv(c2))).collect(),
                    head_w: m.head_w.clone(),
                    head_b: m.head_b.clone(),
                    gamma: m.gamma,
                    classes: m.classes,
                    seed: m.seed,
                }))
            }
            SpectralModel::Mlp(m) => {
                let projector = m.projector.restrict(kept)?;
                let h = m.width;
                let mut w0 = Vec::with_capacity(positions.len() * h);
                for &pos in &positions {
                    w0.extend_from_slice(&m.weights[0][pos * h..(pos + 1) * h]);
                }
                let mut weights = m.weights.clone();
                weights[0] = w0;
                Ok(SpectralModel::Mlp(SpectralMlp {
                    projector,
                    weights,
                    biases: m.biases.clone(),
                    width: m.width,
                    depth: m.depth,
                    classes: m.classes,
                    seed: m.seed,
                }))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: ArchKind,
    n: usize,
    k: usize,
    kept: Vec<usize>,
    width: usize,
    depth: usize,
    classes: usize,
    seed: u64,
    basis_id: u64,
}

impl SpectralModel<f32> {
    /// Tensors in checkpoint stream order, including batch-norm buffers.
    fn visit_stream(&self, f: &mut impl FnMut(&[f32])) {
        match self {
            SpectralModel::ResNet(m) => {
                let conv = |layer: &GspConvLayer<f32>, f: &mut dyn FnMut(&[f32])| {
                    f(&layer.theta);
                    if let Some(bn) = &layer.bn {
                        f(&bn.scale);
                        f(&bn.shift);
                        f(&bn.running_mean);
                        f(&bn.running_var);
                    }
                };
                conv(&m.embed, f);
                for (c1, c2) in &m.blocks {
                    conv(c1, f);
                    conv(c2, f);
                }
                f(&m.head_w);
                f(&m.head_b);
            }
            SpectralModel::Mlp(m) => {
                for (w, b) in m.weights.iter().zip(m.biases.iter()) {
                    f(w);
                    f(b);
                }
            }
        }
    }

    fn visit_stream_mut(&mut self, f: &mut impl FnMut(&mut [f32])) {
        match self {
            SpectralModel::ResNet(m) => {
                let mut conv = |layer: &mut GspConvLayer<f32>| {
                    f(&mut layer.theta);
                    if let Some(bn) = &mut layer.bn {
                        f(&mut bn.scale);
                        f(&mut bn.shift);
                        f(&mut bn.running_mean);
                        f(&mut bn.running_var);
                    }
                };
                conv(&mut m.embed);
                for (c1, c2) in m.blocks.iter_mut() {
                    conv(c1);
                    conv(c2);
                }
                f(&mut m.head_w);
                f(&mut m.head_b);
            }
            SpectralModel::Mlp(m) => {
                for (w, b) in m.weights.iter_mut().zip(m.biases.iter_mut()) {
                    f(w);
                    f(b);
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let arch = self.arch();
        let header = CheckpointHeader {
            kind: arch.kind,
            n: self.n(),
            k: self.k(),
            kept: self.kept().to_vec(),
            width: arch.width,
            depth: arch.depth,
            classes: self.classes(),
            seed: self.seed(),
            basis_id: self.projector().basis_id(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&header_bytes);
        self.visit_stream(&mut |t| {
            for &v in t {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        });
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path, basis: &SpectralBasis) -> Result<Self> {
        let bad = |detail: String| Error::BadCheckpoint {
            path: path.to_path_buf(),
            detail,
        };
        let mut file = fs::File::open(path).map_err(|e| bad(e.to_string()))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[0..4] != MAGIC {
            return Err(bad("missing GSPM magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + header_len {
            return Err(bad("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
        if header.basis_id != basis.id() {
            return Err(Error::BasisMismatch {
                expected: header.basis_id,
                got: basis.id(),
            });
        }
        if header.n != basis.n() {
            return Err(bad(format!(
                "checkpoint n = {} but basis n = {}",
                header.n,
                basis.n()
            )));
        }
        let spec = ArchSpec {
            kind: header.kind,
            width: header.width,
            depth: header.depth,
        };
        let mut model: SpectralModel<f32> =
            spec.build(basis, header.kept.clone(), header.classes, header.seed)?;

        let mut expected = 0usize;
        model.visit_stream(&mut |t| expected += t.len());
        let payload = &bytes[8 + header_len..];
        if payload.len() != expected * 4 {
            return Err(bad(format!(
                "expected {} parameter bytes, got {}",
                expected * 4,
                payload.len()
            )));
        }
        let mut offset = 0usize;
        model.visit_stream_mut(&mut |t| {
            for v in t.iter_mut() {
                *v = f32::from_le_bytes(payload[offset..offset + 4].try_into().unwrap());
                offset += 4;
            }
        });
        // Loaded running stats came from training, so eval is legitimate.
        if let SpectralModel::ResNet(m) = &mut model {
            let mark = |l: &mut GspConvLayer<f32>| {
                if let Some(bn) = &mut l.bn {
                    bn.initialized = true;
                }
            };
            mark(&mut m.embed);
            for (c1, c2) in m.blocks.iter_mut() {
                mark(c1);
                mark(c2);
            }
        }
        Ok(model)
    }
}
