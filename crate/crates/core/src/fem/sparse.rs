use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Explicit zeros produced during assembly are
/// kept so that matrices assembled together share one sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; columns within a row end up sorted.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (i, j, v) = triplets[t];
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Iterates `(col, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(p) => self.data[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.nrows.min(self.ncols),
            (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)),
        )
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        assert_eq!(y.len(), self.nrows, "matvec dimension");
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            y[i] = acc;
        }
    }

    /// `self * B` for dense `B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols, "matmul dimension");
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for c in 0..b.ncols() {
            for i in 0..self.nrows {
                let mut acc = 0.0;
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.data[p] * b[(self.indices[p], c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Same pattern, values mapped by `f(row, col, value)`.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.data[p] = f(i, self.indices[p], self.data[p]);
            }
        }
        out
    }

    /// `alpha * self + beta * other`; both must share a sparsity pattern.
    pub fn lin_comb_same_pattern(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert!(
            self.indptr == other.indptr && self.indices == other.indices,
            "patterns differ"
        );
        let mut out = self.clone();
        for (o, (a, b)) in out.data.iter_mut().zip(self.data.iter().zip(&other.data)) {
            *o = alpha * a + beta * b;
        }
        out
    }

    /// Entrywise combination of three matrices sharing this pattern:
    /// `out_ij = f(i, j, self_ij, b_ij, c_ij)`.
    pub fn combine3(
        &self,
        b: &CsrMatrix,
        c: &CsrMatrix,
        mut f: impl FnMut(usize, usize, f64, f64, f64) -> f64,
    ) -> CsrMatrix {
        assert!(
            self.indptr == b.indptr
                && self.indices == b.indices
                && self.indptr == c.indptr
                && self.indices == c.indices,
            "patterns differ"
        );
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.data[p] = f(i, self.indices[p], self.data[p], b.data[p], c.data[p]);
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> CsrMatrix {
        self.map_entries(|_, _, v| alpha * v)
    }

    /// Copies the sub-block `rows x cols`.
    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> CsrMatrix {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in rows.clone() {
            for (j, v) in self.row(i) {
                if cols.contains(&j) {
                    indices.push(j - cols.start);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols: cols.len(),
            indptr,
            indices,
            data,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `i j value` lines, 1-based, for debugging exports.
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v).unwrap();
            }
        }
        s
    }

    pub(crate) fn check_square(&self, what: &str) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::dim(format!(
                "{what} is {}x{}",
                self.nrows, self.ncols
            )));
        }
        Ok(())
    }
}
