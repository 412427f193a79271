//! Dataset container, on-disk formats and the planted-band synthesizer.
//!
//! On disk a dataset is a directory with `manifest.json`, a raw little-endian
//! f32 signals payload (row-major samples x vertices) and a little-endian u32
//! labels payload; the manifest carries dimensions and a sha256 per payload.
//! The formats are deliberately trivial to parse from any language.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prune::KeptSet;
use crate::spectral::SpectralBasis;

const MANIFEST_NAME: &str = "manifest.json";
const SIGNALS_NAME: &str = "signals.f32";
const LABELS_NAME: &str = "labels.u32";

/// Labeled graph signals, single channel per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_vertices: usize,
    n_classes: u32,
    /// Row-major n_samples x n_vertices.
    signals: Vec<f32>,
    labels: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    n_vertices: usize,
    n_samples: usize,
    n_classes: u32,
    signals: String,
    labels: String,
    signals_sha256: String,
    labels_sha256: String,
}

impl Dataset {
    pub fn new(
        n_vertices: usize,
        n_classes: u32,
        signals: Vec<f32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if n_vertices == 0 || labels.is_empty() {
            return Err(Error::InvalidDataset {
                detail: "dataset needs at least one vertex and one sample".into(),
            });
        }
        if signals.len() != labels.len() * n_vertices {
            return Err(Error::InvalidDataset {
                detail: format!(
                    "{} signal values do not match {} samples x {} vertices",
                    signals.len(),
                    labels.len(),
                    n_vertices
                ),
            });
        }
        if let Some((i, &v)) = signals.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset {
                detail: format!("non-finite signal value {v} at offset {i}"),
            });
        }
        let mut seen = vec![false; n_classes as usize];
        for (index, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    n_classes,
                });
            }
            seen[label as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset {
                detail: format!("class {missing} has no samples"),
            });
        }
        Ok(Self {
            n_vertices,
            n_classes,
            signals,
            labels,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn signal(&self, sample: usize) -> &[f32] {
        &self.signals[sample * self.n_vertices..(sample + 1) * self.n_vertices]
    }

    pub fn label(&self, sample: usize) -> u32 {
        self.labels[sample]
    }

    pub fn signals(&self) -> &[f32] {
        &self.signals
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self, class: u32) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Same labels, new signal matrix (used by standardization).
    pub fn with_signals(&self, signals: Vec<f32>) -> Result<Self> {
        Self::new(self.n_vertices, self.n_classes, signals, self.labels.clone())
    }

    /// Writes manifest + payloads into `dir`; refuses to clobber an existing
    /// manifest unless `overwrite` is set. Returns the manifest path.
    pub fn save(&self, dir: &Path, overwrite: bool) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let manifest_path = dir.join(MANIFEST_NAME);
        if manifest_path.exists() && !overwrite {
            return Err(Error::OverwriteRefused {
                path: manifest_path,
            });
        }
        let mut signal_bytes = Vec::with_capacity(self.signals.len() * 4);
        for &v in &self.signals {
            signal_bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut label_bytes = Vec::with_capacity(self.labels.len() * 4);
        for &l in &self.labels {
            label_bytes.extend_from_slice(&l.to_le_bytes());
        }
        let manifest = Manifest {
            version: 1,
            n_vertices: self.n_vertices,
            n_samples: self.n_samples(),
            n_classes: self.n_classes,
            signals: SIGNALS_NAME.into(),
            labels: LABELS_NAME.into(),
            signals_sha256: hex_sha256(&signal_bytes),
            labels_sha256: hex_sha256(&label_bytes),
        };
        fs::write(dir.join(SIGNALS_NAME), &signal_bytes)?;
        fs::write(dir.join(LABELS_NAME), &label_bytes)?;
        fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest_path)
    }

    /// Loads and fully validates a dataset from its manifest path.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        if !manifest_path.exists() {
            return Err(Error::MissingFile {
                path: manifest_path.to_path_buf(),
            });
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));

        let read_payload = |name: &str, expected: usize, sha: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::MissingFile { path });
            }
            let bytes = fs::read(&path)?;
            if bytes.len() != expected {
                return Err(Error::PayloadSizeMismatch {
                    path,
                    expected,
                    got: bytes.len(),
                });
            }
            if hex_sha256(&bytes) != sha {
                return Err(Error::ChecksumMismatch { path });
            }
            Ok(bytes)
        };

        let signal_bytes = read_payload(
            &manifest.signals,
            manifest.n_samples * manifest.n_vertices * 4,
            &manifest.signals_sha256,
        )?;
        let label_bytes = read_payload(
            &manifest.labels,
            manifest.n_samples * 4,
            &manifest.labels_sha256,
        )?;

        let signals: Vec<f32> = signal_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels: Vec<u32> = label_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(manifest.n_vertices, manifest.n_classes, signals, labels)
    }

    /// Synthesizes a classification dataset whose class means live on a known
    /// frequency subset.
    ///
    /// Each class gets a fixed unit-norm spectral mean supported only on
    /// `band`; a sample is `igft(snr * mean + white noise)` with unit-variance
    /// noise on every coefficient. Noise white in the spectral domain is white
    /// in the vertex domain too (orthonormal basis), so the informative /
    /// uninformative frequency split is exact by construction.
    pub fn synth_planted_band(
        basis: &SpectralBasis,
        n_classes: u32,
        band: &KeptSet,
        snr: f64,
        samples_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        if band.k() == 0 {
            return Err(Error::InvalidDataset {
                detail: "planted band is empty".into(),
            });
        }
        if samples_per_class == 0 {
            return Err(Error::InvalidDataset {
                detail: "samples_per_class must be at least 1".into(),
            });
        }
        if n_classes < 2 {
            return Err(Error::InvalidDataset {
                detail: "need at least 2 classes".into(),
            });
        }
        if !(snr > 0.0) {
            return Err(Error::InvalidDataset {
                detail: format!("snr must be positive, got {snr}"),
            });
        }
        let n = basis.n();
        if let Some(&max) = band.indices().last() {
            if max >= n {
                return Err(Error::InconsistentN { index: max, n });
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;

        let mut class_means = Vec::with_capacity(n_classes as usize);
        for _ in 0..n_classes {
            let mut mean = vec![0.0f64; n];
            let mut norm_sq = 0.0;
            for &l in band.indices() {
                let v: f64 = normal.sample(&mut rng);
                mean[l] = v;
                norm_sq += v * v;
            }
            let norm = norm_sq.sqrt().max(f64::MIN_POSITIVE);
            for &l in band.indices() {
                mean[l] /= norm;
            }
            class_means.push(mean);
        }

        let n_samples = n_classes as usize * samples_per_class;
        let mut signals = Vec::with_capacity(n_samples * n);
        let mut labels = Vec::with_capacity(n_samples);
        for (class, mean) in class_means.iter().enumerate() {
            for _ in 0..samples_per_class {
                let mut coeffs = vec![0.0f64; n];
                for (l, c) in coeffs.iter_mut().enumerate() {
                    let noise: f64 = normal.sample(&mut rng);
                    *c = snr * mean[l] + noise;
                }
                let x = basis.igft(&coeffs, 1)?;
                signals.extend(x.into_iter().map(|v| v as f32));
                labels.push(class as u32);
            }
        }
        Self::new(n, n_classes, signals, labels)
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
