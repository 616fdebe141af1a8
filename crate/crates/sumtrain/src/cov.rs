//! Population covariance construction.
//!
//! Supported shapes: identity, block-diagonal AR(1) (the local-correlation
//! structure used throughout the synthetic experiments), and explicit dense
//! input. The built [`Covariance`] caches the square root and the eigenvalue
//! spectrum since both are consumed repeatedly downstream.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{BlockDiag, Spectrum};

/// Declarative covariance description; maps one-to-one onto the `[covariance]`
/// section of config files.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    Identity { p: usize },
    /// `n_block` equal AR(1) blocks with correlation `rho`; entry (i, j)
    /// within a block is rho^|i-j|, zero across blocks.
    BlockAr1 { p: usize, n_block: usize, rho: f64 },
    Dense { matrix: DMatrix<f64> },
}

impl CovarianceSpec {
    pub fn dim(&self) -> usize {
        match self {
            CovarianceSpec::Identity { p } => *p,
            CovarianceSpec::BlockAr1 { p, .. } => *p,
            CovarianceSpec::Dense { matrix } => matrix.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovarianceSpec::Identity { p } => {
                if *p == 0 {
                    return Err(Error::config("covariance dimension p must be >= 1"));
                }
            }
            CovarianceSpec::BlockAr1 { p, n_block, rho } => {
                if *p == 0 {
                    return Err(Error::config("covariance dimension p must be >= 1"));
                }
                if *n_block == 0 {
                    return Err(Error::config("n_block must be >= 1"));
                }
                if p % n_block != 0 {
                    return Err(Error::config(format!(
                        "p = {p} is not divisible by n_block = {n_block}"
                    )));
                }
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::config(format!(
                        "AR(1) correlation rho = {rho} must lie in [0, 1)"
                    )));
                }
            }
            CovarianceSpec::Dense { matrix } => {
                if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
                    return Err(Error::config(format!(
                        "dense covariance must be square and non-empty, got {}x{}",
                        matrix.nrows(),
                        matrix.ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A built covariance: the matrix, its symmetric PSD square root, and the
/// eigenvalue spectrum with multiplicities.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: BlockDiag,
    sqrt: BlockDiag,
    spectrum: Spectrum,
}

impl Covariance {
    pub fn p(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &BlockDiag {
        &self.matrix
    }

    pub fn sqrt(&self) -> &BlockDiag {
        &self.sqrt
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn trace(&self) -> f64 {
        self.spectrum.trace()
    }

    pub fn identity(p: usize) -> Self {
        build_covariance(&CovarianceSpec::Identity { p }).expect("identity is always valid")
    }
}

fn ar1_block(size: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(size, size, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Materialize a [`CovarianceSpec`].
///
/// The result is symmetric positive definite: AR(1) blocks with rho < 1 have
/// eigenvalues bounded away from zero, and dense input is checked.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<Covariance> {
    spec.validate()?;
    let matrix = match spec {
        CovarianceSpec::Identity { p } => BlockDiag::identity(*p),
        CovarianceSpec::BlockAr1 { p, n_block, rho } => {
            let size = p / n_block;
            BlockDiag::repeated(ar1_block(size, *rho), *n_block)?
        }
        CovarianceSpec::Dense { matrix } => {
            let m = BlockDiag::from_blocks(vec![matrix.clone()])?;
            if m.max_asymmetry() > 1e-8 {
                return Err(Error::config(format!(
                    "dense covariance is asymmetric: max |M - M'| = {:.3e}",
                    m.max_asymmetry()
                )));
            }
            m
        }
    };
    let spectrum = matrix.spectrum();
    if spectrum.min() <= 0.0 {
        return Err(Error::config(format!(
            "covariance is not positive definite: min eigenvalue {:.3e}",
            spectrum.min()
        )));
    }
    let sqrt = matrix.sqrt_psd()?;
    Ok(Covariance { matrix, sqrt, spectrum })
}
