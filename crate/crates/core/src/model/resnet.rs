//! Spectral ResNet: embed conv, residual blocks of two convs, mean-pool head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::conv::{Activation, ConvCache, ConvGrads, GspConvLayer, Projector};
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;

/// Residual classifier over graph signals.
///
/// Input is a 1-channel graph signal, embedded to `gamma` channels by a first
/// GSPConv, passed through `depth` residual blocks (each a shortcut plus two
/// GSPConv layers), mean-pooled over vertices and fed to an affine head.
/// Every GSPConv carries batch norm; the second conv of a block has no
/// activation before the sum, relu applies after it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResNet<S: Scalar> {
    pub projector: Projector<S>,
    pub embed: GspConvLayer<S>,
    pub blocks: Vec<(GspConvLayer<S>, GspConvLayer<S>)>,
    /// gamma x classes, row-major.
    pub head_w: Vec<S>,
    pub head_b: Vec<S>,
    pub gamma: usize,
    pub classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ResNetCache<S: Scalar> {
    embed: ConvCache<S>,
    blocks: Vec<BlockCache<S>>,
    /// batch x gamma mean-pooled features.
    pooled: Vec<S>,
}

#[derive(Debug, Clone)]
struct BlockCache<S: Scalar> {
    conv1: ConvCache<S>,
    conv2: ConvCache<S>,
    /// Pre-relu shortcut sum, batch x n x gamma.
    sum: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResNetGrads<S: Scalar> {
    pub embed: ConvGrads<S>,
    pub blocks: Vec<(ConvGrads<S>, ConvGrads<S>)>,
    pub head_w: Vec<S>,
    pub head_b: Vec<S>,
}

impl<S: Scalar> SpectralResNet<S> {
    pub fn new(
        basis: &SpectralBasis,
        kept: Vec<usize>,
        gamma: usize,
        depth: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if gamma == 0 || classes == 0 {
            return Err(Error::InvalidConfig {
                detail: "gamma and classes must be positive".into(),
            });
        }
        let projector = Projector::new(basis, kept)?;
        let k = projector.k();
        let embed = GspConvLayer::new(k, 1, gamma, true, Activation::Relu);
        let blocks = (0..depth)
            .map(|_| {
                (
                    GspConvLayer::new(k, gamma, gamma, true, Activation::Relu),
                    GspConvLayer::new(k, gamma, gamma, true, Activation::None),
                )
            })
            .collect();
        let mut model = Self {
            projector,
            embed,
            blocks,
            head_w: vec![S::ZERO; gamma * classes],
            head_b: vec![S::ZERO; classes],
            gamma,
            classes,
            seed,
        };
        model.init_params(seed);
        Ok(model)
    }

    /// Draws all weights from zero-mean uniform distributions scaled by
    /// fan-in; bn scale/shift reset to 1/0. Same seed, same bits.
    pub fn init_params(&mut self, seed: u64) {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.seed = seed;
        fill_uniform(&mut rng, &mut self.embed.theta, 1);
        if let Some(bn) = &mut self.embed.bn {
            *bn = crate::model::batchnorm::BatchNorm::new(self.gamma);
        }
        let gamma = self.gamma;
        for (c1, c2) in self.blocks.iter_mut() {
            fill_uniform(&mut rng, &mut c1.theta, gamma);
            if let Some(bn) = &mut c1.bn {
                *bn = crate::model::batchnorm::BatchNorm::new(gamma);
            }
            fill_uniform(&mut rng, &mut c2.theta, gamma);
            if let Some(bn) = &mut c2.bn {
                *bn = crate::model::batchnorm::BatchNorm::new(gamma);
            }
        }
        fill_uniform(&mut rng, &mut self.head_w, gamma);
        self.head_b.iter_mut().for_each(|b| *b = S::ZERO);
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    fn check_input(&self, x: &[S], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.projector.n() {
            return Err(Error::DimensionMismatch {
                module: "model",
                detail: format!(
                    "input length {} != batch {} x n {}",
                    x.len(),
                    batch,
                    self.projector.n()
                ),
            });
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &[S], batch: usize) -> Result<(Vec<S>, ResNetCache<S>)> {
        self.check_input(x, batch)?;
        let n = self.projector.n();
        let (cur, embed_cache, block_caches) = {
            let Self {
                projector,
                embed,
                blocks,
                ..
            } = self;
            let (mut cur, embed_cache) = embed.forward_train(projector, x, batch)?;
            let mut block_caches = Vec::with_capacity(blocks.len());
            for (c1, c2) in blocks.iter_mut() {
                let (h1, cache1) = c1.forward_train(projector, &cur, batch)?;
                let (h2, cache2) = c2.forward_train(projector, &h1, batch)?;
                let mut sum = cur;
                for (s, &p) in sum.iter_mut().zip(h2.iter()) {
                    *s += p;
                }
                let pre = sum.clone();
                crate::model::conv::apply_activation(Activation::Relu, &mut sum);
                block_caches.push(BlockCache {
                    conv1: cache1,
                    conv2: cache2,
                    sum: pre,
                });
                cur = sum;
            }
            (cur, embed_cache, block_caches)
        };
        let (logits, pooled) = self.head(&cur, batch, n);
        Ok((
            logits,
            ResNetCache {
                embed: embed_cache,
                blocks: block_caches,
                pooled,
            },
        ))
    }

    pub fn forward_eval(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        self.check_input(x, batch)?;
        let n = self.projector.n();
        let mut cur = self.embed.forward_eval(&self.projector, x, batch)?;
        for (c1, c2) in &self.blocks {
            let h1 = c1.forward_eval(&self.projector, &cur, batch)?;
            let h2 = c2.forward_eval(&self.projector, &h1, batch)?;
            for (s, &p) in cur.iter_mut().zip(h2.iter()) {
                *s += p;
            }
            crate::model::conv::apply_activation(Activation::Relu, &mut cur);
        }
        let (logits, _) = self.head(&cur, batch, n);
        Ok(logits)
    }

    /// Mean over vertices then affine map to class logits.
    fn head(&self, features: &[S], batch: usize, n: usize) -> (Vec<S>, Vec<S>) {
        let gamma = self.gamma;
        let classes = self.classes;
        let inv_n = S::from_f64(1.0 / n as f64);
        let mut pooled = vec![S::ZERO; batch * gamma];
        for s in 0..batch {
            for v in 0..n {
                let row = &features[(s * n + v) * gamma..(s * n + v + 1) * gamma];
                for (g, &f) in row.iter().enumerate() {
                    pooled[s * gamma + g] += f;
                }
            }
            for g in 0..gamma {
                pooled[s * gamma + g] *= inv_n;
            }
        }
        let mut logits = vec![S::ZERO; batch * classes];
        for s in 0..batch {
            for c in 0..classes {
                let mut acc = self.head_b[c];
                for g in 0..gamma {
                    acc += pooled[s * gamma + g] * self.head_w[g * classes + c];
                }
                logits[s * classes + c] = acc;
            }
        }
        (logits, pooled)
    }

    pub fn zero_grads(&self) -> ResNetGrads<S> {
        ResNetGrads {
            embed: self.embed.zero_grads(),
            blocks: self
                .blocks
                .iter()
                .map(|(c1, c2)| (c1.zero_grads(), c2.zero_grads()))
                .collect(),
            head_w: vec![S::ZERO; self.head_w.len()],
            head_b: vec![S::ZERO; self.head_b.len()],
        }
    }

    pub fn backward(
        &self,
        cache: &ResNetCache<S>,
        grad_logits: &[S],
        batch: usize,
    ) -> Result<ResNetGrads<S>> {
        let n = self.projector.n();
        let gamma = self.gamma;
        let classes = self.classes;
        if grad_logits.len() != batch * classes {
            return Err(Error::DimensionMismatch {
                module: "model",
                detail: format!(
                    "grad_logits length {} != batch {} x classes {}",
                    grad_logits.len(),
                    batch,
                    classes
                ),
            });
        }
        let mut grads = self.zero_grads();

        // head
        let mut dpooled = vec![S::ZERO; batch * gamma];
        for s in 0..batch {
            for c in 0..classes {
                let dl = grad_logits[s * classes + c];
                grads.head_b[c] += dl;
                for g in 0..gamma {
                    grads.head_w[g * classes + c] += cache.pooled[s * gamma + g] * dl;
                    dpooled[s * gamma + g] += self.head_w[g * classes + c] * dl;
                }
            }
        }

        // mean pool spreads gradient uniformly over vertices
        let inv_n = S::from_f64(1.0 / n as f64);
        let mut dcur = vec![S::ZERO; batch * n * gamma];
        for s in 0..batch {
            for v in 0..n {
                for g in 0..gamma {
                    dcur[(s * n + v) * gamma + g] = dpooled[s * gamma + g] * inv_n;
                }
            }
        }

        for i in (0..self.blocks.len()).rev() {
            let (c1, c2) = &self.blocks[i];
            let bc = &cache.blocks[i];
            // relu after the shortcut sum
            for (d, &z) in dcur.iter_mut().zip(bc.sum.iter()) {
                if z <= S::ZERO {
                    *d = S::ZERO;
                }
            }
            let dsum = dcur;
            let (g1, g2) = &mut grads.blocks[i];
            let dc1 = c2.backward(&self.projector, &bc.conv2, &dsum, batch, g2);
            let dpath = c1.backward(&self.projector, &bc.conv1, &dc1, batch, g1);
            // shortcut and sequential path gradients add up
            let mut dprev = dsum;
            for (d, &p) in dprev.iter_mut().zip(dpath.iter()) {
                *d += p;
            }
            dcur = dprev;
        }
        self.embed
            .backward(&self.projector, &cache.embed, &dcur, batch, &mut grads.embed);
        Ok(grads)
    }
}

fn fill_uniform<S: Scalar>(rng: &mut ChaCha8Rng, weights: &mut [S], fan_in: usize) {
    let bound = (3.0 / fan_in as f64).sqrt();
    for w in weights.iter_mut() {
        *w = S::from_f64(rng.random_range(-bound..bound));
    }
}
