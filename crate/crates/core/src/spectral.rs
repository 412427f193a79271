//! Graph Fourier transform, spectral convolution and band masks.
//!
//! A [`SpectralBasis`] wraps the eigendecomposition of a normalized Laplacian:
//! column `l` of `u` is the eigenvector of the l-th graph frequency, and
//! `lambdas` are the ascending frequencies. The basis is computed once per
//! graph and cached to disk ("GSPB" files) because the eigendecomposition
//! dominates startup cost and every model over the same graph shares it.
//!
//! Spectra are stored frequency-major (row l = frequency l) so per-frequency
//! slices stay contiguous for channel mixing and pruning.

use std::fs;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, EigenPairs, SymMatrix, DEFAULT_TOL};

const MAGIC: &[u8; 4] = b"GSPB";

/// Tolerance for accepting eigenvalues as belonging to a normalized Laplacian.
const SPECTRUM_SLACK: f64 = 1e-6;

/// Orthonormal eigenbasis and ascending frequencies of a normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    n: usize,
    /// Row-major n x n; column l is the eigenvector of frequency l.
    u: Vec<f64>,
    lambdas: Vec<f64>,
    id: u64,
}

impl SpectralBasis {
    /// Validating constructor from raw parts.
    pub fn new(n: usize, u: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if u.len() != n * n || lambdas.len() != n {
            return Err(Error::DimensionMismatch {
                module: "spectral",
                detail: format!(
                    "basis needs {}x{} vectors and {} values, got {} and {}",
                    n,
                    n,
                    n,
                    u.len(),
                    lambdas.len()
                ),
            });
        }
        for (i, w) in lambdas.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(Error::ValuesNotSorted { index: i + 1 });
            }
        }
        for (i, &l) in lambdas.iter().enumerate() {
            if l < -SPECTRUM_SLACK || l > 2.0 + SPECTRUM_SLACK {
                return Err(Error::SpectrumOutOfRange { index: i, value: l });
            }
        }
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..n).map(|r| u[r * n + a] * u[r * n + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        if worst >= 1e-10 {
            return Err(Error::NotOrthonormal { deviation: worst });
        }
        let id = fingerprint(n, &u, &lambdas);
        Ok(Self { n, u, lambdas, id })
    }

    /// Diagonalizes a normalized Laplacian into a basis.
    ///
    /// Rejects inputs whose spectrum falls outside `[0, 2]` or lacks the zero
    /// eigenvalue every normalized Laplacian has.
    pub fn build(l: &SymMatrix) -> Result<Self> {
        let pairs = jacobi_eigh(l, DEFAULT_TOL)?;
        Self::from_eigenpairs(&pairs)
    }

    pub fn from_eigenpairs(pairs: &EigenPairs) -> Result<Self> {
        let basis = Self::new(pairs.n(), pairs.vectors().to_vec(), pairs.values().to_vec())?;
        // Every normalized Laplacian has eigenvalue 0 (eigenvector D^{1/2} 1);
        // a spectrum without it means the input was something else.
        let first = basis.lambdas[0];
        if first.abs() > SPECTRUM_SLACK {
            return Err(Error::MissingZeroEigenvalue { value: first });
        }
        Ok(basis)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Row-major n x n eigenvector matrix (column l = frequency l).
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn u_entry(&self, vertex: usize, freq: usize) -> f64 {
        self.u[vertex * self.n + freq]
    }

    pub fn eigenvector(&self, freq: usize) -> Vec<f64> {
        (0..self.n).map(|v| self.u_entry(v, freq)).collect()
    }

    /// Content fingerprint used to match models to the basis they were built
    /// on.
    pub fn id(&self) -> u64 {
        self.id
    }

    fn check_rows(&self, rows: usize, channels: usize, len: usize) -> Result<()> {
        if rows != self.n || channels == 0 || len != rows * channels {
            return Err(Error::DimensionMismatch {
                module: "spectral",
                detail: format!(
                    "expected {} x {} values, got {} ({} rows declared)",
                    self.n, channels, len, rows
                ),
            });
        }
        Ok(())
    }

    /// Graph Fourier transform `xhat = U^T x`, applied per channel.
    ///
    /// `x` is row-major n x channels; the result is frequency-major
    /// n x channels.
    pub fn gft(&self, x: &[f64], channels: usize) -> Result<Vec<f64>> {
        self.check_rows(x.len() / channels.max(1), channels, x.len())?;
        let n = self.n;
        let mut out = vec![0.0f64; n * channels];
        for v in 0..n {
            for l in 0..n {
                let uvl = self.u[v * n + l];
                for c in 0..channels {
                    out[l * channels + c] += uvl * x[v * channels + c];
                }
            }
        }
        Ok(out)
    }

    /// Inverse transform `x = U xhat`, applied per channel.
    pub fn igft(&self, xhat: &[f64], channels: usize) -> Result<Vec<f64>> {
        self.check_rows(xhat.len() / channels.max(1), channels, xhat.len())?;
        let n = self.n;
        let mut out = vec![0.0f64; n * channels];
        for v in 0..n {
            for l in 0..n {
                let uvl = self.u[v * n + l];
                for c in 0..channels {
                    out[v * channels + c] += uvl * xhat[l * channels + c];
                }
            }
        }
        Ok(out)
    }

    /// Spectral convolution `x * h = IGFT(GFT(x) .* GFT(h))`, single channel.
    pub fn convolve(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let xhat = self.gft(x, 1)?;
        let hhat = self.gft(h, 1)?;
        let prod: Vec<f64> = xhat.iter().zip(hhat.iter()).map(|(a, b)| a * b).collect();
        self.igft(&prod, 1)
    }

    /// Writes the "GSPB" cache: magic, LE u32 n, n f64 lambdas, then u in
    /// column-major order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.n;
        let mut bytes = Vec::with_capacity(4 + 4 + 8 * n * (n + 1));
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&(n as u32).to_le_bytes());
        for &l in &self.lambdas {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
        for col in 0..n {
            for row in 0..n {
                bytes.extend_from_slice(&self.u[row * n + col].to_le_bytes());
            }
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |detail: &str| Error::BadBasisFile {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut file = fs::File::open(path).map_err(|e| Error::BadBasisFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.len() < 8 || &bytes[0..4] != MAGIC {
            return Err(bad("missing GSPB magic"));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = 8 + 8 * n + 8 * n * n;
        if bytes.len() != expected {
            return Err(bad(&format!(
                "expected {} bytes for n = {}, got {}",
                expected,
                n,
                bytes.len()
            )));
        }
        let mut offset = 8;
        let mut read_f64 = || {
            let v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
            offset += 8;
            v
        };
        let lambdas: Vec<f64> = (0..n).map(|_| read_f64()).collect();
        let mut u = vec![0.0f64; n * n];
        for col in 0..n {
            for row in 0..n {
                u[row * n + col] = read_f64();
            }
        }
        Self::new(n, u, lambdas)
    }
}

fn fingerprint(n: usize, u: &[f64], lambdas: &[f64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update((n as u64).to_le_bytes());
    for &l in lambdas {
        hasher.update(l.to_le_bytes());
    }
    for &x in u {
        hasher.update(x.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[0..8].try_into().unwrap())
}

/// Contiguous frequency band: `bandwidth` frequencies starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandSpec {
    pub offset: usize,
    pub bandwidth: usize,
}

impl BandSpec {
    pub fn new(offset: usize, bandwidth: usize) -> Result<Self> {
        if bandwidth == 0 {
            return Err(Error::EmptyBand);
        }
        Ok(Self { offset, bandwidth })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bandwidth == 0 {
            return Err(Error::EmptyBand);
        }
        if self.offset + self.bandwidth > n {
            return Err(Error::BandOutOfRange {
                offset: self.offset,
                bandwidth: self.bandwidth,
                n,
            });
        }
        Ok(())
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.offset..self.offset + self.bandwidth
    }
}

/// Boolean mask over `n` frequencies, true exactly on the band.
pub fn band_mask(n: usize, band: &BandSpec) -> Result<Vec<bool>> {
    band.validate(n)?;
    let mut mask = vec![false; n];
    for i in band.indices() {
        mask[i] = true;
    }
    Ok(mask)
}
