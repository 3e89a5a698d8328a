use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparse matrix in compressed-row form. Both triangles are
/// stored and are bitwise equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricSparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SymmetricSparseMatrix { n, row_ptr: vec![0; n + 1], cols: Vec::new(), vals: Vec::new() }
    }

    /// Builds the matrix `(T + T^T) / 2` from triplets `T`; duplicates are
    /// summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut all = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
            all.push((i, j, 0.5 * v));
            all.push((j, i, 0.5 * v));
        }
        all.sort_by_key(|&(i, j, _)| (i, j));
        Ok(Self::from_sorted(n, all.into_iter()))
    }

    /// `entries` must be sorted by (row, column) and already symmetric.
    pub(crate) fn from_sorted(n: usize, entries: impl Iterator<Item = (usize, usize, f64)>) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymmetricSparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Triplets in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.mul(y)).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &SymmetricSparseMatrix, alpha: f64) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::InvalidArgument("matrix dimensions differ".into()));
        }
        let mut entries = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(usize::MAX);
                let jb = cb.get(q).copied().unwrap_or(usize::MAX);
                if ja < jb {
                    entries.push((i, ja, va[p]));
                    p += 1;
                } else if jb < ja {
                    entries.push((i, jb, alpha * vb[q]));
                    q += 1;
                } else {
                    entries.push((i, ja, va[p] + alpha * vb[q]));
                    p += 1;
                    q += 1;
                }
            }
        }
        Ok(Self::from_sorted(self.n, entries.into_iter()))
    }

    /// Principal submatrix on `index` (which must be sorted and unique).
    pub fn restrict(&self, index: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in index.iter().enumerate() {
            pos[i] = k;
        }
        let entries = index.iter().enumerate().flat_map(|(k, &i)| {
            let (c, v) = self.row(i);
            let pos = &pos;
            c.iter().zip(v).filter(move |(&j, _)| pos[j] != usize::MAX).map(move |(&j, &x)| (k, pos[j], x))
        });
        let entries: Vec<_> = entries.collect();
        Self::from_sorted(index.len(), entries.into_iter())
    }

    /// Removes entries below `rel * max_abs()` in magnitude.
    pub fn drop_below(&self, rel: f64) -> Self {
        let cut = rel * self.max_abs();
        Self::from_sorted(self.n, self.iter().filter(|t| t.2.abs() >= cut).collect::<Vec<_>>().into_iter())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// True when the stored entries are bitwise symmetric.
    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(i, j, v)| self.get(j, i).to_bits() == v.to_bits())
    }

    /// Coordinate dump, one `i j value` line per stored entry in
    /// lexicographic order.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for (i, j, v) in self.iter() {
            writeln!(out, "{i} {j} {v:e}").unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
