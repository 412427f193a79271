//! Graph ingestion, kNN binarization and the normalized Laplacian.
//!
//! Graphs are undirected with nonnegative weights and no self-loops. Files are
//! UTF-8 text: either a dense CSV (n lines of n comma-separated decimals) or
//! an edge list ("i,j,w" with 0-based integer indices). A file is read as an
//! edge list iff every line has exactly 3 fields and the first two fields of
//! every line are pure-digit integers; anything else is dense. The writer
//! emits dense CSV with 17 significant digits, which round-trips f64 exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Symmetric nonnegative weight matrix over `n >= 2` vertices, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    weights: Vec<f64>,
}

impl Graph {
    /// Builds a graph from a square weight matrix (row-major).
    ///
    /// Symmetry is enforced by averaging `(w + w^T) / 2`; the diagonal is
    /// zeroed. Any negative entry is rejected: a correlation matrix must be
    /// rectified by the caller before it becomes a graph.
    pub fn from_dense(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::NotSquare {
                rows: n,
                cols: if n == 0 { 0 } else { weights.len() / n },
            });
        }
        if n < 2 {
            return Err(Error::TooFewVertices { n });
        }
        for i in 0..n {
            for j in 0..n {
                let v = weights[i * n + j];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::NegativeWeight { i, j, value: v });
                }
            }
        }
        let mut sym = vec![0.0f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (weights[i * n + j] + weights[j * n + i]) / 2.0;
                sym[i * n + j] = v;
                sym[j * n + i] = v;
            }
        }
        Ok(Self { n, weights: sym })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len() });
            }
        }
        Self::from_dense(n, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self, i: usize) -> f64 {
        (0..self.n).map(|j| self.weight(i, j)).sum()
    }

    /// Unit-weight graph connecting each vertex to its `k` strongest
    /// neighbors, union-symmetrized: edge {i,j} exists iff j is among i's k
    /// strongest or i is among j's k strongest.
    ///
    /// "Among the k strongest" uses competition ranking: every neighbor whose
    /// weight ties the k-th strongest is kept. This keeps the selection a
    /// deterministic function of the weights and makes binarization
    /// idempotent (a binarized graph is all ties, so it is a fixed point).
    pub fn knn_binarize(&self, k: usize) -> Result<Self> {
        let n = self.n;
        if k == 0 || k >= n {
            return Err(Error::KOutOfRange { k, n });
        }
        let mut out = vec![0.0f64; n * n];
        for i in 0..n {
            let mut strengths: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| self.weight(i, j))
                .filter(|&w| w > 0.0)
                .collect();
            if strengths.is_empty() {
                continue;
            }
            strengths.sort_by(|a, b| b.total_cmp(a));
            let threshold = strengths[k.min(strengths.len()) - 1];
            for j in 0..n {
                if j != i && self.weight(i, j) >= threshold && self.weight(i, j) > 0.0 {
                    out[i * n + j] = 1.0;
                    out[j * n + i] = 1.0;
                }
            }
        }
        Ok(Self { n, weights: out })
    }

    /// Normalized Laplacian `L = I - D^{-1/2} W D^{-1/2}`.
    ///
    /// Fails on isolated vertices; the pipelines here assume graphs stay
    /// connected, so a zero degree signals bad input.
    pub fn normalized_laplacian(&self) -> Result<SymMatrix> {
        let n = self.n;
        let mut inv_sqrt_deg = vec![0.0f64; n];
        for i in 0..n {
            let d = self.degree(i);
            if d <= 0.0 {
                return Err(Error::IsolatedVertex { vertex: i });
            }
            inv_sqrt_deg[i] = 1.0 / d.sqrt();
        }
        SymMatrix::from_fn(n, |i, j| {
            if i == j {
                1.0
            } else {
                -self.weight(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j]
            }
        })
    }

    /// True iff a single BFS component covers all vertices.
    pub fn is_connected(&self) -> bool {
        let n = self.n;
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[0] = true;
        queue.push_back(0usize);
        let mut count = 1usize;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && self.weight(i, j) > 0.0 {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Reads a graph file, auto-detecting dense CSV vs edge list.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::BadGraphFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let bad = |detail: String| Error::BadGraphFile {
            path: path.to_path_buf(),
            detail,
        };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(bad("empty file".into()));
        }
        let rows: Vec<Vec<&str>> = lines
            .iter()
            .map(|l| l.split(',').map(str::trim).collect())
            .collect();

        let is_edge_list = rows.iter().all(|f| {
            f.len() == 3
                && f[0].bytes().all(|b| b.is_ascii_digit())
                && !f[0].is_empty()
                && f[1].bytes().all(|b| b.is_ascii_digit())
                && !f[1].is_empty()
        });

        if is_edge_list {
            let mut edges = Vec::with_capacity(rows.len());
            let mut max_idx = 0usize;
            for (lineno, f) in rows.iter().enumerate() {
                let i: usize = f[0]
                    .parse()
                    .map_err(|_| bad(format!("bad index on line {}", lineno + 1)))?;
                let j: usize = f[1]
                    .parse()
                    .map_err(|_| bad(format!("bad index on line {}", lineno + 1)))?;
                let w: f64 = f[2]
                    .parse()
                    .map_err(|_| bad(format!("bad weight on line {}", lineno + 1)))?;
                max_idx = max_idx.max(i).max(j);
                edges.push((i, j, w));
            }
            let n = max_idx + 1;
            let mut weights = vec![0.0f64; n * n];
            for (i, j, w) in edges {
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
            Self::from_dense(n, weights)
        } else {
            let n = rows.len();
            let mut weights = Vec::with_capacity(n * n);
            for (lineno, f) in rows.iter().enumerate() {
                if f.len() != n {
                    return Err(bad(format!(
                        "line {} has {} columns, expected {}",
                        lineno + 1,
                        f.len(),
                        n
                    )));
                }
                for field in f {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| bad(format!("bad value {:?} on line {}", field, lineno + 1)))?;
                    weights.push(v);
                }
            }
            Self::from_dense(n, weights)
        }
    }

    /// Writes the dense CSV form with 17 significant digits.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| format!("{:.16e}", self.weight(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{jacobi_eigh, DEFAULT_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Graph {
        Graph::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    /// Random connected graph: spanning tree plus extra random edges.
    pub(crate) fn random_connected(n: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut w = vec![0.0f64; n * n];
        for v in 1..n {
            let parent = rng.random_range(0..v);
            let weight: f64 = rng.random_range(0.05..1.0);
            w[v * n + parent] = weight;
            w[parent * n + v] = weight;
        }
        let extras = rng.random_range(0..=n);
        for _ in 0..extras {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                let weight: f64 = rng.random_range(0.05..1.0);
                w[i * n + j] = weight;
                w[j * n + i] = weight;
            }
        }
        Graph::from_dense(n, w).unwrap()
    }

    #[test]
    fn from_dense_unit_edge() {
        let g = Graph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn from_dense_symmetrizes_by_averaging() {
        let g = Graph::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(g.weight(0, 1), 0.5);
        assert_eq!(g.weight(1, 0), 0.5);
    }

    #[test]
    fn from_dense_rejects_negative() {
        let err = Graph::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }));
    }

    #[test]
    fn from_dense_zeroes_diagonal() {
        let g = Graph::from_rows(&[vec![3.0, 1.0], vec![1.0, 7.0]]).unwrap();
        assert_eq!(g.weight(0, 0), 0.0);
        assert_eq!(g.weight(1, 1), 0.0);
    }

    #[test]
    fn knn_k1_keeps_strongest_union() {
        let g = Graph::from_rows(&[
            vec![0.0, 0.9, 0.1],
            vec![0.9, 0.0, 0.5],
            vec![0.1, 0.5, 0.0],
        ])
        .unwrap();
        let b = g.knn_binarize(1).unwrap();
        assert_eq!(b.weight(0, 1), 1.0);
        assert_eq!(b.weight(1, 2), 1.0);
        assert_eq!(b.weight(0, 2), 0.0);
    }

    fn complete_graph(n: usize) -> Graph {
        let mut w = vec![1.0f64; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        Graph::from_dense(n, w).unwrap()
    }

    #[test]
    fn knn_complete_graph_unchanged() {
        let g = complete_graph(4);
        let b = g.knn_binarize(3).unwrap();
        assert_eq!(b.weights(), g.weights());
    }

    #[test]
    fn knn_kmax_binarizes_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_connected(9, &mut rng);
        let b = g.knn_binarize(8).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let expect = if g.weight(i, j) > 0.0 { 1.0 } else { 0.0 };
                assert_eq!(b.weight(i, j), expect);
            }
        }
    }

    #[test]
    fn knn_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let n = rng.random_range(5..=20);
            let g = random_connected(n, &mut rng);
            let k = rng.random_range(1..n);
            let once = g.knn_binarize(k).unwrap();
            let twice = once.knn_binarize(k).unwrap();
            assert_eq!(once.weights(), twice.weights());
        }
    }

    #[test]
    fn knn_degree_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let n = rng.random_range(5..=24);
            let g = random_connected(n, &mut rng);
            let k = rng.random_range(1..n);
            let b = g.knn_binarize(k).unwrap();
            for i in 0..n {
                let pos_neighbors = (0..n).filter(|&j| g.weight(i, j) > 0.0).count();
                let incident = (0..n).filter(|&j| b.weight(i, j) > 0.0).count();
                assert!(incident >= k.min(pos_neighbors));
            }
        }
    }

    #[test]
    fn knn_k_out_of_range() {
        let g = path3();
        assert!(matches!(g.knn_binarize(0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(g.knn_binarize(3), Err(Error::KOutOfRange { .. })));
    }

    #[test]
    fn laplacian_two_node() {
        let g = Graph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = g.normalized_laplacian().unwrap();
        assert_eq!(l.entries(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn laplacian_p3_tridiagonal() {
        // degrees (1, 2, 1); off-diagonal entries -1/sqrt(2) on the edges
        let l = path3().normalized_laplacian().unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert!((l.get(0, 1) + r).abs() < 1e-15);
        assert!((l.get(1, 2) + r).abs() < 1e-15);
        assert_eq!(l.get(0, 2), 0.0);
        for i in 0..3 {
            assert_eq!(l.get(i, i), 1.0);
        }
    }

    #[test]
    fn laplacian_rejects_isolated_vertex() {
        let g = Graph::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            g.normalized_laplacian(),
            Err(Error::IsolatedVertex { vertex: 2 })
        ));
    }

    #[test]
    fn connectivity() {
        assert!(path3().is_connected());
        let two_edges = Graph::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(!two_edges.is_connected());
        let edge = Graph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(edge.is_connected());
    }

    #[test]
    fn laplacian_spectrum_in_range_and_connected_has_one_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = rng.random_range(3..=24);
            let g = random_connected(n, &mut rng);
            let l = g.normalized_laplacian().unwrap();
            let e = jacobi_eigh(&l, DEFAULT_TOL).unwrap();
            for &v in e.values() {
                assert!(v >= -1e-10 && v <= 2.0 + 1e-10, "eigenvalue {v}");
            }
            let zeros = e.values().iter().filter(|&&v| v < 1e-8).count();
            assert_eq!(zeros, 1);
        }
    }

    #[test]
    fn file_round_trip_dense() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_connected(7, &mut rng);
        g.save(&path).unwrap();
        let g2 = Graph::load(&path).unwrap();
        assert_eq!(g.weights(), g2.weights());
    }

    #[test]
    fn file_edge_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        std::fs::write(&path, "0,1,1.0\n1,2,0.5\n").unwrap();
        let g = Graph::load(&path).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 2), 0.5);
        assert_eq!(g.weight(0, 2), 0.0);
    }

    #[test]
    fn file_bad_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "0.0,abc\n1.0,0.0\n").unwrap();
        assert!(matches!(Graph::load(&path), Err(Error::BadGraphFile { .. })));
    }
}
