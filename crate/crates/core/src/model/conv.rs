//! The spectral convolution layer and its hand-derived backward pass.
//!
//! A layer holds a weight tensor `theta` of shape K x c_in x c_out (row-major,
//! frequency-major so per-frequency slices are contiguous). Forward, per
//! sample: project the signal onto the kept frequencies, mix channels
//! independently per frequency, project back, then batch-norm and activation.

use crate::error::{Error, Result};
use crate::model::batchnorm::{BatchNorm, BnCache};
use crate::scalar::Scalar;
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
}

/// Kept columns of the Fourier basis, cast to the model's precision.
///
/// Models apply the (I)GFT only on their kept frequencies; the projector is
/// the n x K slice of U that does it, tagged with the source basis identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<S: Scalar> {
    n: usize,
    kept: Vec<usize>,
    /// Row-major n x K: u_kept[v * K + j] = U[v, kept[j]].
    u_kept: Vec<S>,
    basis_id: u64,
}

impl<S: Scalar> Projector<S> {
    pub fn new(basis: &SpectralBasis, kept: Vec<usize>) -> Result<Self> {
        let n = basis.n();
        if kept.is_empty() {
            return Err(Error::BadKeptSet {
                detail: "kept set is empty".into(),
            });
        }
        for w in kept.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::BadKeptSet {
                    detail: format!("indices not strictly ascending at {} >= {}", w[0], w[1]),
                });
            }
        }
        if *kept.last().unwrap() >= n {
            return Err(Error::BadKeptSet {
                detail: format!("index {} out of range for n = {}", kept.last().unwrap(), n),
            });
        }
        let k = kept.len();
        let mut u_kept = vec![S::ZERO; n * k];
        for v in 0..n {
            for (j, &l) in kept.iter().enumerate() {
                u_kept[v * k + j] = S::from_f64(basis.u_entry(v, l));
            }
        }
        Ok(Self {
            n,
            kept,
            u_kept,
            basis_id: basis.id(),
        })
    }

    pub fn full(basis: &SpectralBasis) -> Self {
        Self::new(basis, (0..basis.n()).collect()).expect("full kept set is always valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.kept.len()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    pub fn is_full(&self) -> bool {
        self.kept.len() == self.n
    }

    /// Restriction to a subset of the currently kept frequencies.
    pub fn restrict(&self, kept: &[usize]) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::BadKeptSet {
                detail: "kept set is empty".into(),
            });
        }
        let k = self.k();
        let mut positions = Vec::with_capacity(kept.len());
        for w in kept.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::BadKeptSet {
                    detail: "indices not strictly ascending".into(),
                });
            }
        }
        for &l in kept {
            match self.kept.binary_search(&l) {
                Ok(pos) => positions.push(pos),
                Err(_) => {
                    return Err(Error::BadKeptSet {
                        detail: format!("frequency {l} is not kept by the current model"),
                    })
                }
            }
        }
        let nk = positions.len();
        let mut u_kept = vec![S::ZERO; self.n * nk];
        for v in 0..self.n {
            for (j, &pos) in positions.iter().enumerate() {
                u_kept[v * nk + j] = self.u_kept[v * k + pos];
            }
        }
        Ok(Self {
            n: self.n,
            kept: kept.to_vec(),
            u_kept,
            basis_id: self.basis_id,
        })
    }

    /// Positions (into the current kept list) of a frequency subset.
    pub fn positions_of(&self, kept: &[usize]) -> Result<Vec<usize>> {
        kept.iter()
            .map(|&l| {
                self.kept.binary_search(&l).map_err(|_| Error::BadKeptSet {
                    detail: format!("frequency {l} is not kept by the current model"),
                })
            })
            .collect()
    }

    /// Batched restricted GFT: x (batch x n x c) -> out (batch x K x c).
    pub fn gft_batch(&self, x: &[S], batch: usize, c: usize, out: &mut [S]) {
        let (n, k) = (self.n, self.k());
        debug_assert_eq!(x.len(), batch * n * c);
        debug_assert_eq!(out.len(), batch * k * c);
        out.iter_mut().for_each(|o| *o = S::ZERO);
        for s in 0..batch {
            let xs = &x[s * n * c..(s + 1) * n * c];
            let os = &mut out[s * k * c..(s + 1) * k * c];
            for v in 0..n {
                let urow = &self.u_kept[v * k..(v + 1) * k];
                for (j, &u) in urow.iter().enumerate() {
                    for ch in 0..c {
                        os[j * c + ch] += u * xs[v * c + ch];
                    }
                }
            }
        }
    }

    /// Batched restricted IGFT: xhat (batch x K x c) -> out (batch x n x c).
    pub fn igft_batch(&self, xhat: &[S], batch: usize, c: usize, out: &mut [S]) {
        let (n, k) = (self.n, self.k());
        debug_assert_eq!(xhat.len(), batch * k * c);
        debug_assert_eq!(out.len(), batch * n * c);
        out.iter_mut().for_each(|o| *o = S::ZERO);
        for s in 0..batch {
            let hs = &xhat[s * k * c..(s + 1) * k * c];
            let os = &mut out[s * n * c..(s + 1) * n * c];
            for v in 0..n {
                let urow = &self.u_kept[v * k..(v + 1) * k];
                for (j, &u) in urow.iter().enumerate() {
                    for ch in 0..c {
                        os[v * c + ch] += u * hs[j * c + ch];
                    }
                }
            }
        }
    }
}

/// Per-frequency channel mixing: `out[l, co] = sum_ci xhat[l, ci] theta[l, ci, co]`.
pub fn spectral_mix<S: Scalar>(
    xhat: &[S],
    theta: &[S],
    k: usize,
    c_in: usize,
    c_out: usize,
) -> Result<Vec<S>> {
    if xhat.len() != k * c_in || theta.len() != k * c_in * c_out {
        return Err(Error::DimensionMismatch {
            module: "model",
            detail: format!(
                "spectral_mix: xhat {} != {}x{} or theta {} != {}x{}x{}",
                xhat.len(),
                k,
                c_in,
                theta.len(),
                k,
                c_in,
                c_out
            ),
        });
    }
    let mut out = vec![S::ZERO; k * c_out];
    mix_into(xhat, theta, 1, k, c_in, c_out, &mut out);
    Ok(out)
}

fn mix_into<S: Scalar>(
    xhat: &[S],
    theta: &[S],
    batch: usize,
    k: usize,
    c_in: usize,
    c_out: usize,
    out: &mut [S],
) {
    for s in 0..batch {
        for l in 0..k {
            let xrow = &xhat[(s * k + l) * c_in..(s * k + l + 1) * c_in];
            let trow = &theta[l * c_in * c_out..(l + 1) * c_in * c_out];
            let orow = &mut out[(s * k + l) * c_out..(s * k + l + 1) * c_out];
            for (ci, &xv) in xrow.iter().enumerate() {
                let tslice = &trow[ci * c_out..(ci + 1) * c_out];
                for (co, &tv) in tslice.iter().enumerate() {
                    orow[co] += xv * tv;
                }
            }
        }
    }
}

/// One GSPConv layer: theta (K x c_in x c_out), optional batch norm, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct GspConvLayer<S: Scalar> {
    pub theta: Vec<S>,
    pub c_in: usize,
    pub c_out: usize,
    pub bn: Option<BatchNorm<S>>,
    pub activation: Activation,
}

/// Intermediates of a train-mode forward, consumed by [`GspConvLayer::backward`].
#[derive(Debug, Clone)]
pub struct ConvCache<S: Scalar> {
    /// Restricted spectrum of the input, batch x K x c_in.
    pub xhat: Vec<S>,
    pub bn: Option<BnCache<S>>,
    /// Post-norm, pre-activation output, batch x n x c_out.
    pub z: Vec<S>,
}

/// Gradient slots matching a layer's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<S: Scalar> {
    pub theta: Vec<S>,
    pub bn_scale: Vec<S>,
    pub bn_shift: Vec<S>,
}

impl<S: Scalar> GspConvLayer<S> {
    pub fn new(k: usize, c_in: usize, c_out: usize, bn: bool, activation: Activation) -> Self {
        Self {
            theta: vec![S::ZERO; k * c_in * c_out],
            c_in,
            c_out,
            bn: if bn { Some(BatchNorm::new(c_out)) } else { None },
            activation,
        }
    }

    pub fn k(&self) -> usize {
        self.theta.len() / (self.c_in * self.c_out)
    }

    pub fn zero_grads(&self) -> ConvGrads<S> {
        let bn_len = self.bn.as_ref().map_or(0, |_| self.c_out);
        ConvGrads {
            theta: vec![S::ZERO; self.theta.len()],
            bn_scale: vec![S::ZERO; bn_len],
            bn_shift: vec![S::ZERO; bn_len],
        }
    }

    fn check_input(&self, proj: &Projector<S>, x: &[S], batch: usize) -> Result<()> {
        if self.k() != proj.k() {
            return Err(Error::DimensionMismatch {
                module: "model",
                detail: format!("layer keeps {} frequencies, projector {}", self.k(), proj.k()),
            });
        }
        if batch == 0 || x.len() != batch * proj.n() * self.c_in {
            return Err(Error::DimensionMismatch {
                module: "model",
                detail: format!(
                    "input length {} != batch {} x n {} x c_in {}",
                    x.len(),
                    batch,
                    proj.n(),
                    self.c_in
                ),
            });
        }
        Ok(())
    }

    /// Projection, mixing and inverse projection; everything before norm.
    fn linear_part(&self, proj: &Projector<S>, x: &[S], batch: usize) -> (Vec<S>, Vec<S>) {
        let k = proj.k();
        let mut xhat = vec![S::ZERO; batch * k * self.c_in];
        proj.gft_batch(x, batch, self.c_in, &mut xhat);
        let mut mixed = vec![S::ZERO; batch * k * self.c_out];
        mix_into(&xhat, &self.theta, batch, k, self.c_in, self.c_out, &mut mixed);
        let mut y = vec![S::ZERO; batch * proj.n() * self.c_out];
        proj.igft_batch(&mixed, batch, self.c_out, &mut y);
        (y, xhat)
    }

    pub fn forward_train(
        &mut self,
        proj: &Projector<S>,
        x: &[S],
        batch: usize,
    ) -> Result<(Vec<S>, ConvCache<S>)> {
        self.check_input(proj, x, batch)?;
        let (mut y, xhat) = self.linear_part(proj, x, batch);
        let rows = batch * proj.n();
        let bn_cache = self.bn.as_mut().map(|bn| bn.forward_train(&mut y, rows));
        let z = y.clone();
        apply_activation(self.activation, &mut y);
        Ok((
            y,
            ConvCache {
                xhat,
                bn: bn_cache,
                z,
            },
        ))
    }

    pub fn forward_eval(&self, proj: &Projector<S>, x: &[S], batch: usize) -> Result<Vec<S>> {
        self.check_input(proj, x, batch)?;
        let (mut y, _) = self.linear_part(proj, x, batch);
        if let Some(bn) = &self.bn {
            bn.forward_eval(&mut y, batch * proj.n())?;
        }
        apply_activation(self.activation, &mut y);
        Ok(y)
    }

    /// Backward through a train-mode forward. Accumulates parameter gradients
    /// into `grads` and returns the gradient at the layer input.
    pub fn backward(
        &self,
        proj: &Projector<S>,
        cache: &ConvCache<S>,
        grad_out: &[S],
        batch: usize,
        grads: &mut ConvGrads<S>,
    ) -> Vec<S> {
        let n = proj.n();
        let k = proj.k();
        let rows = batch * n;
        debug_assert_eq!(grad_out.len(), rows * self.c_out);

        // activation
        let mut dz = grad_out.to_vec();
        if self.activation == Activation::Relu {
            for (d, &z) in dz.iter_mut().zip(cache.z.iter()) {
                if z <= S::ZERO {
                    *d = S::ZERO;
                }
            }
        }

        // batch norm
        let dy = match (&self.bn, &cache.bn) {
            (Some(bn), Some(bn_cache)) => {
                let mut dy = vec![S::ZERO; dz.len()];
                bn.backward(
                    bn_cache,
                    &dz,
                    rows,
                    &mut grads.bn_scale,
                    &mut grads.bn_shift,
                    &mut dy,
                );
                dy
            }
            _ => dz,
        };

        // adjoint of the inverse projection
        let mut dmixed = vec![S::ZERO; batch * k * self.c_out];
        proj.gft_batch(&dy, batch, self.c_out, &mut dmixed);

        // theta gradient and spectrum gradient
        let mut dxhat = vec![S::ZERO; batch * k * self.c_in];
        for s in 0..batch {
            for l in 0..k {
                let xrow = &cache.xhat[(s * k + l) * self.c_in..(s * k + l + 1) * self.c_in];
                let drow = &dmixed[(s * k + l) * self.c_out..(s * k + l + 1) * self.c_out];
                let trow = &self.theta[l * self.c_in * self.c_out..(l + 1) * self.c_in * self.c_out];
                let dxrow = &mut dxhat[(s * k + l) * self.c_in..(s * k + l + 1) * self.c_in];
                for ci in 0..self.c_in {
                    let tslice = &trow[ci * self.c_out..(ci + 1) * self.c_out];
                    let gslice = &mut grads.theta
                        [(l * self.c_in + ci) * self.c_out..(l * self.c_in + ci + 1) * self.c_out];
                    let xv = xrow[ci];
                    let mut acc = S::ZERO;
                    for co in 0..self.c_out {
                        gslice[co] += xv * drow[co];
                        acc += tslice[co] * drow[co];
                    }
                    dxrow[ci] += acc;
                }
            }
        }

        // adjoint of the forward projection
        let mut dx = vec![S::ZERO; rows * self.c_in];
        proj.igft_batch(&dxhat, batch, self.c_in, &mut dx);
        dx
    }
}

pub fn apply_activation<S: Scalar>(activation: Activation, data: &mut [S]) {
    if activation == Activation::Relu {
        for v in data.iter_mut() {
            if *v < S::ZERO {
                *v = S::ZERO;
            }
        }
    }
}
