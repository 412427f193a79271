//! Spectral MLP: a plain MLP whose input domain is the graph frequency domain.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::conv::Projector;
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;

/// MLP over kept GFT coefficients.
///
/// Layer stack: K -> h (relu), then `depth - 1` times h -> h (relu), then an
/// affine head h -> classes. Weights are row-major (in x out), biases per
/// layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMlp<S: Scalar> {
    pub projector: Projector<S>,
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
    pub width: usize,
    pub depth: usize,
    pub classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MlpCache<S: Scalar> {
    /// Input to each affine layer (first entry is the restricted spectrum).
    inputs: Vec<Vec<S>>,
    /// Pre-activation outputs of the relu layers.
    preacts: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<S: Scalar> {
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
}

impl<S: Scalar> SpectralMlp<S> {
    pub fn new(
        basis: &SpectralBasis,
        kept: Vec<usize>,
        width: usize,
        depth: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if width == 0 || depth == 0 || classes == 0 {
            return Err(Error::InvalidConfig {
                detail: "width, depth and classes must be positive".into(),
            });
        }
        let projector = Projector::new(basis, kept)?;
        let k = projector.k();
        let mut dims = vec![(k, width)];
        for _ in 1..depth {
            dims.push((width, width));
        }
        dims.push((width, classes));
        let weights = dims.iter().map(|&(i, o)| vec![S::ZERO; i * o]).collect();
        let biases = dims.iter().map(|&(_, o)| vec![S::ZERO; o]).collect();
        let mut model = Self {
            projector,
            weights,
            biases,
            width,
            depth,
            classes,
            seed,
        };
        model.init_params(seed);
        Ok(model)
    }

    pub fn init_params(&mut self, seed: u64) {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.seed = seed;
        let mut fan_in = self.projector.k();
        let width = self.width;
        for w in self.weights.iter_mut() {
            let bound = (3.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = S::from_f64(rng.random_range(-bound..bound));
            }
            fan_in = width;
        }
        for b in self.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = S::ZERO);
        }
    }

    fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let k = self.projector.k();
        if layer == 0 {
            (k, self.width)
        } else if layer < self.depth {
            (self.width, self.width)
        } else {
            (self.width, self.classes)
        }
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

    /// Forward pass; MLPs have no train/eval distinction.
    pub fn forward(&self, x: &[S], batch: usize) -> Result<(Vec<S>, MlpCache<S>)> {
        self.check_input(x, batch)?;
        let k = self.projector.k();
        let mut spectrum = vec![S::ZERO; batch * k];
        self.projector.gft_batch(x, batch, 1, &mut spectrum);

        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut preacts = Vec::with_capacity(self.depth);
        let mut cur = spectrum;
        for layer in 0..self.weights.len() {
            let (d_in, d_out) = self.layer_dims(layer);
            let w = &self.weights[layer];
            let b = &self.biases[layer];
            let mut out = vec![S::ZERO; batch * d_out];
            for s in 0..batch {
                let xrow = &cur[s * d_in..(s + 1) * d_in];
                let orow = &mut out[s * d_out..(s + 1) * d_out];
                orow.copy_from_slice(b);
                for (i, &xv) in xrow.iter().enumerate() {
                    let wrow = &w[i * d_out..(i + 1) * d_out];
                    for (o, &wv) in wrow.iter().enumerate() {
                        orow[o] += xv * wv;
                    }
                }
            }
            inputs.push(cur);
            if layer < self.depth {
                preacts.push(out.clone());
                for v in out.iter_mut() {
                    if *v < S::ZERO {
                        *v = S::ZERO;
                    }
                }
                cur = out;
            } else {
                cur = out;
            }
        }
        Ok((cur, MlpCache { inputs, preacts }))
    }

    pub fn forward_eval(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        Ok(self.forward(x, batch)?.0)
    }

    pub fn zero_grads(&self) -> MlpGrads<S> {
        MlpGrads {
            weights: self.weights.iter().map(|w| vec![S::ZERO; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![S::ZERO; b.len()]).collect(),
        }
    }

    pub fn backward(
        &self,
        cache: &MlpCache<S>,
        grad_logits: &[S],
        batch: usize,
    ) -> Result<MlpGrads<S>> {
        if grad_logits.len() != batch * self.classes {
            return Err(Error::DimensionMismatch {
                module: "model",
                detail: format!(
                    "grad_logits length {} != batch {} x classes {}",
                    grad_logits.len(),
                    batch,
                    self.classes
                ),
            });
        }
        let mut grads = self.zero_grads();
        let mut dz = grad_logits.to_vec();
        for layer in (0..self.weights.len()).rev() {
            let (d_in, d_out) = self.layer_dims(layer);
            let input = &cache.inputs[layer];
            let w = &self.weights[layer];
            let gw = &mut grads.weights[layer];
            let gb = &mut grads.biases[layer];
            let mut dinput = vec![S::ZERO; batch * d_in];
            for s in 0..batch {
                let xrow = &input[s * d_in..(s + 1) * d_in];
                let drow = &dz[s * d_out..(s + 1) * d_out];
                for (o, &dv) in drow.iter().enumerate() {
                    gb[o] += dv;
                }
                for (i, &xv) in xrow.iter().enumerate() {
                    let wrow = &w[i * d_out..(i + 1) * d_out];
                    let gwrow = &mut gw[i * d_out..(i + 1) * d_out];
                    let mut acc = S::ZERO;
                    for (o, &dv) in drow.iter().enumerate() {
                        gwrow[o] += xv * dv;
                        acc += wrow[o] * dv;
                    }
                    dinput[s * d_in + i] = acc;
                }
            }
            if layer > 0 {
                // relu of the previous layer
                let pre = &cache.preacts[layer - 1];
                for (d, &z) in dinput.iter_mut().zip(pre.iter()) {
                    if z <= S::ZERO {
                        *d = S::ZERO;
                    }
                }
            }
            dz = dinput;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
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
    fn zero_weights_zero_logits() {
        let basis = ring_basis(6);
        let mut m = SpectralMlp::<f64>::new(&basis, (0..6).collect(), 4, 2, 3, 1).unwrap();
        for w in m.weights.iter_mut() {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        let (logits, _) = m.forward(&[0.5; 6], 1).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_gives_composed_biases() {
        let basis = ring_basis(5);
        let mut m = SpectralMlp::<f64>::new(&basis, (0..5).collect(), 3, 1, 2, 1).unwrap();
        for w in m.weights.iter_mut() {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        m.biases[0] = vec![1.0, -2.0, 0.5];
        m.biases[1] = vec![0.25, -0.75];
        let (logits, _) = m.forward(&[0.0; 5], 1).unwrap();
        // relu(biases[0]) = (1, 0, 0.5); head weights zero, so logits = head bias
        assert_eq!(logits, vec![0.25, -0.75]);
    }

    #[test]
    fn full_spectrum_first_layer_matches_dense_matmul_oracle() {
        // With K = n, logits of a depth-1 MLP equal relu(U^T x W0 + b0) W1 + b1
        // computed by an explicit dense oracle.
        let n = 5;
        let basis = ring_basis(n);
        let m = SpectralMlp::<f64>::new(&basis, (0..n).collect(), 4, 1, 3, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (logits, _) = m.forward(&x, 1).unwrap();

        let xhat = basis.gft(&x, 1).unwrap();
        let mut h = vec![0.0f64; 4];
        for i in 0..n {
            for o in 0..4 {
                h[o] += xhat[i] * m.weights[0][i * 4 + o];
            }
        }
        for (v, b) in h.iter_mut().zip(m.biases[0].iter()) {
            *v = (*v + b).max(0.0);
        }
        let mut oracle = m.biases[1].clone();
        for i in 0..4 {
            for o in 0..3 {
                oracle[o] += h[i] * m.weights[1][i * 3 + o];
            }
        }
        for (a, b) in logits.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 6;
        let basis = ring_basis(n);
        let mut m = SpectralMlp::<f64>::new(&basis, (0..n).collect(), 3, 2, 2, 7).unwrap();
        let batch = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // nonzero biases keep preactivations away from the exact relu kink,
        // where central differences are invalid
        for b in m.biases.iter_mut() {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..batch * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wsum: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss = |model: &SpectralMlp<f64>| -> f64 {
            let (logits, _) = model.forward(&x, batch).unwrap();
            logits.iter().zip(wsum.iter()).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = m.forward(&x, batch).unwrap();
        let grads = m.backward(&cache, &wsum, batch).unwrap();

        let eps = 1e-5;
        for layer in 0..m.weights.len() {
            for i in 0..m.weights[layer].len() {
                let mut mp = m.clone();
                mp.weights[layer][i] += eps;
                let mut mm = m.clone();
                mm.weights[layer][i] -= eps;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * eps);
                let got = grads.weights[layer][i];
                assert!(
                    (fd - got).abs() < 1e-6 * fd.abs().max(1.0),
                    "w[{layer}][{i}]: {got} vs fd {fd}"
                );
            }
            for i in 0..m.biases[layer].len() {
                let mut mp = m.clone();
                mp.biases[layer][i] += eps;
                let mut mm = m.clone();
                mm.biases[layer][i] -= eps;
                let fd = (loss(&mp) - loss(&mm)) / (2.0 * eps);
                let got = grads.biases[layer][i];
                assert!(
                    (fd - got).abs() < 1e-6 * fd.abs().max(1.0),
                    "b[{layer}][{i}]: {got} vs fd {fd}"
                );
            }
        }
    }
}
