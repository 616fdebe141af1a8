//! Dense-per-block linear algebra.
//!
//! Every covariance this crate manipulates is block diagonal (identity and
//! AR(1) blocks by construction, dense input as a single block), so matrix
//! functions of it — square roots, resolvents, trace chains — are computed
//! block by block and never touch O(p^2) memory unless a block really is
//! p x p. Repeated blocks share storage, and anything derived from them
//! (eigenvalues, square roots) is computed once per unique block.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric block-diagonal matrix with shared repeated blocks.
#[derive(Debug, Clone)]
pub struct BlockDiag {
    blocks: Vec<Arc<DMatrix<f64>>>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockDiag {
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::from_shared(blocks.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(blocks: Vec<Arc<DMatrix<f64>>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::dimension("block-diagonal matrix needs at least one block"));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            if b.nrows() != b.ncols() {
                return Err(Error::dimension(format!(
                    "block is {}x{}, expected square",
                    b.nrows(),
                    b.ncols()
                )));
            }
            offsets.push(dim);
            dim += b.nrows();
        }
        Ok(Self { blocks, offsets, dim })
    }

    /// `count` copies of one block.
    pub fn repeated(block: DMatrix<f64>, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::dimension("repeated block count must be >= 1"));
        }
        let shared = Arc::new(block);
        Self::from_shared(vec![shared; count])
    }

    pub fn identity(p: usize) -> Self {
        let one = Arc::new(DMatrix::from_element(1, 1, 1.0));
        Self::from_shared(vec![one; p]).expect("p >= 1")
    }

    /// Diagonal matrix in the partition of `like`.
    pub fn diagonal_like(like: &BlockDiag, diag: &[f64]) -> Result<Self> {
        if diag.len() != like.dim {
            return Err(Error::dimension(format!(
                "diagonal has {} entries for dimension {}",
                diag.len(),
                like.dim
            )));
        }
        let blocks = like
            .blocks
            .iter()
            .zip(&like.offsets)
            .map(|(b, &off)| {
                let n = b.nrows();
                Arc::new(DMatrix::from_diagonal(&DVector::from_column_slice(
                    &diag[off..off + n],
                )))
            })
            .collect();
        Self::from_shared(blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn same_partition(&self, other: &BlockDiag) -> bool {
        self.dim == other.dim
            && self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.nrows() == b.nrows())
    }

    fn check_partition(&self, other: &BlockDiag) -> Result<()> {
        if !self.same_partition(other) {
            return Err(Error::dimension(
                "block-diagonal operands have different block partitions",
            ));
        }
        Ok(())
    }

    /// Group block indices by identity of the underlying shared storage, so
    /// per-block decompositions run once per unique block.
    fn unique_blocks(&self) -> Vec<(usize, usize)> {
        let mut reps: Vec<(usize, usize)> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            match reps.iter_mut().find(|(j, _)| Arc::ptr_eq(&self.blocks[*j], b)) {
                Some((_, count)) => *count += 1,
                None => reps.push((i, 1)),
            }
        }
        reps
    }

    /// Apply a matrix function block-wise, computing it once per unique block.
    fn map_unique<F>(&self, mut f: F) -> Result<BlockDiag>
    where
        F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let mut cache: Vec<(usize, Arc<DMatrix<f64>>)> = Vec::new();
        let mut out = Vec::with_capacity(self.blocks.len());
        'outer: for (i, b) in self.blocks.iter().enumerate() {
            for (j, mapped) in &cache {
                if Arc::ptr_eq(&self.blocks[*j], b) {
                    out.push(mapped.clone());
                    continue 'outer;
                }
            }
            let mapped = Arc::new(f(b)?);
            cache.push((i, mapped.clone()));
            out.push(mapped);
        }
        BlockDiag::from_shared(out)
    }

    pub fn matvec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::dimension(format!(
                "matvec: vector length {} vs dimension {}",
                x.len(),
                self.dim
            )));
        }
        let mut out = DVector::zeros(self.dim);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            let seg = x.rows(off, n);
            out.rows_mut(off, n).copy_from(&(&**b * seg));
        }
        Ok(out)
    }

    /// x' M x
    pub fn quad_form(&self, x: &DVector<f64>) -> Result<f64> {
        self.bilinear(x, x)
    }

    /// x' M y
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::dimension("bilinear form: vector length mismatch"));
        }
        let mut acc = 0.0;
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            let xs = x.rows(off, n);
            let ys = y.rows(off, n);
            acc += (xs.transpose() * &**b * ys)[(0, 0)];
        }
        Ok(acc)
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// tr(M1 M2 ... Mk) over conformal block-diagonal factors.
    pub fn trace_chain(factors: &[&BlockDiag]) -> Result<f64> {
        let first = factors
            .first()
            .ok_or_else(|| Error::dimension("trace_chain needs at least one factor"))?;
        for f in &factors[1..] {
            first.check_partition(f)?;
        }
        let mut total = 0.0;
        for i in 0..first.blocks.len() {
            let mut prod: DMatrix<f64> = (*first.blocks[i]).clone();
            for f in &factors[1..] {
                prod = prod * &*f.blocks[i];
            }
            total += prod.trace();
        }
        Ok(total)
    }

    pub fn mul(&self, other: &BlockDiag) -> Result<BlockDiag> {
        self.check_partition(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| Arc::new(&**a * &**b))
            .collect();
        BlockDiag::from_shared(blocks)
    }

    pub fn scale(&self, c: f64) -> BlockDiag {
        let blocks = self.blocks.iter().map(|b| Arc::new(&**b * c)).collect();
        BlockDiag::from_shared(blocks).expect("same shape")
    }

    /// self + c * other
    pub fn add_scaled(&self, other: &BlockDiag, c: f64) -> Result<BlockDiag> {
        self.check_partition(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| Arc::new(&**a + &**b * c))
            .collect();
        BlockDiag::from_shared(blocks)
    }

    /// (self + shift I)^{-1} via per-block Cholesky; the shifted matrix must
    /// be positive definite.
    pub fn shifted_inverse(&self, shift: f64) -> Result<BlockDiag> {
        self.map_unique(|b| {
            let n = b.nrows();
            let shifted = b + DMatrix::<f64>::identity(n, n) * shift;
            shifted
                .clone()
                .cholesky()
                .map(|ch| ch.inverse())
                .ok_or_else(|| {
                    Error::numerical(format!(
                        "shifted block of size {n} is not positive definite (shift {shift})"
                    ))
                })
        })
    }

    /// Symmetric PSD square root, block by block.
    pub fn sqrt_psd(&self) -> Result<BlockDiag> {
        self.map_unique(matrix_sqrt_psd)
    }

    /// All eigenvalues with multiplicities, grouped per unique block.
    pub fn spectrum(&self) -> Spectrum {
        let mut entries = Vec::new();
        for (i, count) in self.unique_blocks() {
            let b = &self.blocks[i];
            if b.nrows() == 1 {
                entries.push((b[(0, 0)], count));
            } else {
                let eig = b.as_ref().clone().symmetric_eigen();
                for &ev in eig.eigenvalues.iter() {
                    entries.push((ev, count));
                }
            }
        }
        Spectrum { entries, dim: self.dim }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (b, &off) in self.blocks.iter().zip(&self.offsets) {
            let n = b.nrows();
            out.view_mut((off, off), (n, n)).copy_from(&**b);
        }
        out
    }

    /// Maximum absolute asymmetry over all blocks.
    pub fn max_asymmetry(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let mut worst: f64 = 0.0;
                for i in 0..b.nrows() {
                    for j in (i + 1)..b.ncols() {
                        worst = worst.max((b[(i, j)] - b[(j, i)]).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}

/// Eigenvalues with multiplicities; the compact form keeps fixed-point
/// solves O(#distinct blocks) instead of O(p).
#[derive(Debug, Clone)]
pub struct Spectrum {
    entries: Vec<(f64, usize)>,
    dim: usize,
}

impl Spectrum {
    pub fn from_eigenvalues(ev: &[f64]) -> Self {
        Spectrum {
            entries: ev.iter().map(|&v| (v, 1)).collect(),
            dim: ev.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.entries.iter().map(|&(v, c)| v * c as f64).sum()
    }

    /// sum_i w_i f(lambda_i)
    pub fn sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.entries.iter().map(|&(v, c)| c as f64 * f(v)).sum()
    }
}

/// Symmetric PSD square root of a dense matrix via eigendecomposition.
/// Eigenvalues in [-1e-10, 0) are clipped to zero; anything lower is an
/// error, as is asymmetry beyond 1e-8.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::dimension(format!(
            "matrix square root needs a square input, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > 1e-8 {
        return Err(Error::config(format!(
            "matrix is asymmetric: max |M - M'| = {worst:.3e} exceeds 1e-8"
        )));
    }
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        if v < -1e-10 {
            return Err(Error::config(format!("matrix is not PSD: eigenvalue {v:.3e}")));
        }
        return Ok(DMatrix::from_element(1, 1, v.max(0.0).sqrt()));
    }
    let eig = m.clone().symmetric_eigen();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-10 {
            return Err(Error::config(format!("matrix is not PSD: eigenvalue {v:.3e}")));
        }
        *v = v.max(0.0).sqrt();
    }
    // V diag(sqrt) V'
    let mut scaled = eig.eigenvectors.clone();
    for (j, col) in scaled.column_iter_mut().enumerate() {
        let mut col = col;
        col *= roots[j];
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sqrt_of_identity_is_identity() {
        let m = DMatrix::<f64>::identity(4, 4);
        let r = matrix_sqrt_psd(&m).unwrap();
        assert_abs_diff_eq!(r, m, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 9.0]));
        let r = matrix_sqrt_psd(&m).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(1, 1)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back_to_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let a = DMatrix::<f64>::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let m = &a * a.transpose();
        let r = matrix_sqrt_psd(&m).unwrap();
        let back = &r * &r;
        let err = (&back - &m).abs().max();
        assert!(err < 1e-10, "max |RR - M| = {err}");
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(matrix_sqrt_psd(&m).is_err());
    }

    #[test]
    fn non_psd_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, -0.5]));
        assert!(matrix_sqrt_psd(&m).is_err());
    }

    #[test]
    fn block_ops_match_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mk = |n: usize, rng: &mut ChaCha12Rng| {
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            &a * a.transpose()
        };
        let b1 = mk(3, &mut rng);
        let b2 = mk(2, &mut rng);
        let m = BlockDiag::from_blocks(vec![b1, b2]).unwrap();
        let n = BlockDiag::from_blocks(vec![mk(3, &mut rng), mk(2, &mut rng)]).unwrap();
        let md = m.to_dense();
        let nd = n.to_dense();

        let x = DVector::from_fn(5, |i, _| (i as f64 + 1.0) * 0.3);
        assert_abs_diff_eq!(m.matvec(&x).unwrap(), &md * &x, epsilon = 1e-12);
        assert_abs_diff_eq!(
            m.quad_form(&x).unwrap(),
            (x.transpose() * &md * &x)[(0, 0)],
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            BlockDiag::trace_chain(&[&m, &n, &m]).unwrap(),
            (&md * &nd * &md).trace(),
            epsilon = 1e-9
        );
        let inv = m.shifted_inverse(0.7).unwrap().to_dense();
        let dense_inv = (&md + DMatrix::<f64>::identity(5, 5) * 0.7)
            .try_inverse()
            .unwrap();
        assert_abs_diff_eq!(inv, dense_inv, epsilon = 1e-9);
    }

    #[test]
    fn repeated_blocks_share_spectrum_entries() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let m = BlockDiag::repeated(b, 10).unwrap();
        let spec = m.spectrum();
        assert_eq!(spec.dim(), 20);
        assert_abs_diff_eq!(spec.min(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.max(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.trace(), 20.0, epsilon = 1e-12);
    }
}
