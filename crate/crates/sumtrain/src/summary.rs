//! Summary statistics and the two split constructions: the pseudo
//! train/validation resampler that needs only X'y, and the individual-level
//! Bernoulli row split it imitates.
//!
//! The resampler draws
//!
//! ```text
//! s_train = (n_train/n) * s + sqrt(n_train*(n - n_train)/n^2) * Cov(X'y)^{1/2} h
//! s_valid = s - s_train
//! ```
//!
//! so the two halves always sum back to s exactly, and the first two moments
//! of s_train match those of an actual row split. Cov(X'y) can be the
//! rank-one oracle form (s - n Sigma beta)(s - n Sigma beta)', whose root
//! collapses to a single scalar draw along that direction, or any plug-in
//! PSD surrogate supplied through its root.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cov::Covariance;
use crate::error::{Error, Result};
use crate::linalg::BlockDiag;

/// Marginal summary statistics s = X'y with sample metadata.
#[derive(Debug, Clone)]
pub struct SummaryStats {
    pub s: DVector<f64>,
    pub n: usize,
    pub y_norm2: Option<f64>,
    pub label: String,
}

impl SummaryStats {
    pub fn p(&self) -> usize {
        self.s.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p() == 0 {
            return Err(Error::config("summary statistics are empty"));
        }
        if self.n == 0 {
            return Err(Error::config("summary statistics need n >= 1"));
        }
        if let Some(v) = self.y_norm2 {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::config(format!(
                    "y_norm2 = {v} must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Plug-in phenotype variance estimate ||y||^2 / n.
    pub fn variance_estimate(&self) -> Option<f64> {
        self.y_norm2.map(|v| v / self.n as f64)
    }
}

/// s = X'y and ||y||^2 from individual-level data.
pub fn compute_summary(x: &DMatrix<f64>, y: &DVector<f64>, label: impl Into<String>) -> Result<SummaryStats> {
    if x.nrows() != y.len() {
        return Err(Error::dimension(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    Ok(SummaryStats {
        s: x.transpose() * y,
        n: x.nrows(),
        y_norm2: Some(y.dot(y)),
        label: label.into(),
    })
}

/// Reference-panel Gram matrix G = W'W.
#[derive(Debug, Clone)]
pub struct LDReference {
    pub g: DMatrix<f64>,
    pub n_w: usize,
}

impl LDReference {
    pub fn from_panel(w: &DMatrix<f64>) -> Self {
        LDReference {
            g: w.transpose() * w,
            n_w: w.nrows(),
        }
    }

    pub fn p(&self) -> usize {
        self.g.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.nrows() != self.g.ncols() {
            return Err(Error::dimension("LD matrix must be square"));
        }
        if self.n_w == 0 {
            return Err(Error::config("LD reference needs n_w >= 1"));
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.g.nrows() {
            for j in (i + 1)..self.g.ncols() {
                worst = worst.max((self.g[(i, j)] - self.g[(j, i)]).abs());
            }
        }
        if worst > 1e-8 {
            return Err(Error::config(format!(
                "LD matrix is asymmetric: max |G - G'| = {worst:.3e}"
            )));
        }
        Ok(())
    }
}

/// Root of the plug-in covariance.
#[derive(Debug, Clone)]
pub enum PluginRoot {
    /// Symmetric PSD root R with Cov = scale * R R.
    SymmetricSqrt(BlockDiag),
    /// Rectangular factor F (p x m) with Cov = scale * F F'.
    Factor(DMatrix<f64>),
}

/// Covariance model for X'y used by the resampler.
#[derive(Debug, Clone)]
pub enum XtYCovariance {
    /// Oracle rank-one form: Cov = v v' with v = X'y - n Sigma beta. The
    /// root applied to a standard Gaussian vector is distributionally v * z
    /// for a scalar standard Gaussian z, which is how it is sampled.
    OracleRank1 { v: DVector<f64> },
    /// Cov = scale * (root root').
    Plugin { scale: f64, root: PluginRoot },
}

impl XtYCovariance {
    pub fn p(&self) -> usize {
        match self {
            XtYCovariance::OracleRank1 { v } => v.len(),
            XtYCovariance::Plugin { root, .. } => match root {
                PluginRoot::SymmetricSqrt(r) => r.dim(),
                PluginRoot::Factor(f) => f.nrows(),
            },
        }
    }

    /// Draw Cov^{1/2} h with h standard Gaussian of the appropriate size.
    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> Result<DVector<f64>> {
        match self {
            XtYCovariance::OracleRank1 { v } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(v * z)
            }
            XtYCovariance::Plugin { scale, root } => {
                if *scale < 0.0 {
                    return Err(Error::config("plug-in covariance scale must be >= 0"));
                }
                let sd = scale.sqrt();
                match root {
                    PluginRoot::SymmetricSqrt(r) => {
                        let h = DVector::from_fn(r.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
                        Ok(r.matvec(&h)? * sd)
                    }
                    PluginRoot::Factor(f) => {
                        let h = DVector::from_fn(f.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
                        Ok(f * h * sd)
                    }
                }
            }
        }
    }
}

/// Oracle covariance of X'y: rank-one factor v = s - n Sigma beta.
pub fn oracle_xty_covariance(stats: &SummaryStats, sigma: &Covariance, beta: &DVector<f64>) -> Result<XtYCovariance> {
    if sigma.p() != stats.p() || beta.len() != stats.p() {
        return Err(Error::dimension(format!(
            "oracle covariance: p mismatch (stats {}, sigma {}, beta {})",
            stats.p(),
            sigma.p(),
            beta.len()
        )));
    }
    let v = &stats.s - sigma.matrix().matvec(beta)? * stats.n as f64;
    Ok(XtYCovariance::OracleRank1 { v })
}

/// Population plug-in covariance n * var_y * Sigma, the full-rank surrogate
/// whose trace functionals match the oracle form in expectation. This is the
/// covariance the harness uses for theory cross-validation.
pub fn population_xty_covariance(sigma: &Covariance, n: usize, var_y: f64) -> Result<XtYCovariance> {
    if var_y <= 0.0 || !var_y.is_finite() {
        return Err(Error::config(format!("var_y = {var_y} must be positive")));
    }
    Ok(XtYCovariance::Plugin {
        scale: n as f64 * var_y,
        root: PluginRoot::SymmetricSqrt(sigma.sqrt().clone()),
    })
}

/// Summary-only plug-in covariance c * W'W given the panel itself; the
/// factor W' is its natural root.
pub fn panel_xty_covariance(w: &DMatrix<f64>, c: f64) -> Result<XtYCovariance> {
    if c < 0.0 || !c.is_finite() {
        return Err(Error::config(format!("plug-in scale c = {c} must be >= 0")));
    }
    Ok(XtYCovariance::Plugin {
        scale: c,
        root: PluginRoot::Factor(w.transpose()),
    })
}

/// Resampled pseudo train/validation pair; s_train + s_valid = s exactly.
#[derive(Debug, Clone)]
pub struct PseudoSplit {
    pub s_train: DVector<f64>,
    pub s_valid: DVector<f64>,
    pub n_train: usize,
    pub n_valid: usize,
}

/// Training-side sample count: round(ratio * n) with ties to even, clamped
/// away from empty sides.
pub fn train_count(n: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!(
            "split ratio {ratio} must lie strictly inside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::config("need n >= 2 to split"));
    }
    let raw = (ratio * n as f64).round_ties_even() as usize;
    Ok(raw.clamp(1, n - 1))
}

/// Algorithm core of the summary-data resampler.
pub fn pseudo_split<R: Rng>(stats: &SummaryStats, cov: &XtYCovariance, ratio: f64, rng: &mut R) -> Result<PseudoSplit> {
    stats.validate()?;
    if cov.p() != stats.p() {
        return Err(Error::dimension(format!(
            "covariance dimension {} does not match summary dimension {}",
            cov.p(),
            stats.p()
        )));
    }
    let n = stats.n;
    let n_train = train_count(n, ratio)?;
    let n_valid = n - n_train;
    let frac = n_train as f64 / n as f64;
    let noise_sd = (n_train as f64 * n_valid as f64).sqrt() / n as f64;
    let noise = cov.sample_noise(rng)?;
    let s_train = &stats.s * frac + noise * noise_sd;
    let s_valid = &stats.s - &s_train;
    Ok(PseudoSplit { s_train, s_valid, n_train, n_valid })
}

/// Bernoulli row split of individual-level data. Only the assignment mask is
/// stored; summaries and submatrices are derived on demand.
#[derive(Debug, Clone)]
pub struct IndividualSplit {
    pub mask: Vec<bool>,
    pub n_train: usize,
    pub n_valid: usize,
}

impl IndividualSplit {
    pub fn train_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| (!m).then_some(i))
            .collect()
    }

    /// (X_train' y_train, X_valid' y_valid), computed as X' (q .* y) without
    /// materializing submatrices.
    pub fn summary_pair(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if x.nrows() != self.mask.len() || y.len() != self.mask.len() {
            return Err(Error::dimension("split mask does not match data shape"));
        }
        let masked = DVector::from_fn(y.len(), |i, _| if self.mask[i] { y[i] } else { 0.0 });
        let s_train = x.transpose() * masked;
        let s_full = x.transpose() * y;
        let s_valid = s_full - &s_train;
        Ok((s_train, s_valid))
    }

    /// ||y_valid||^2
    pub fn valid_y_norm2(&self, y: &DVector<f64>) -> f64 {
        y.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| !m)
            .map(|(v, _)| v * v)
            .sum()
    }

    /// Materialized (X, y) rows for one side.
    pub fn submatrix(&self, x: &DMatrix<f64>, y: &DVector<f64>, train_side: bool) -> (DMatrix<f64>, DVector<f64>) {
        let idx: Vec<usize> = if train_side {
            self.train_indices()
        } else {
            self.valid_indices()
        };
        let xs = x.select_rows(idx.iter());
        let ys = DVector::from_fn(idx.len(), |i, _| y[idx[i]]);
        (xs, ys)
    }
}

/// Assign each row to the training side independently with probability
/// `ratio`; redraw in the (exponentially unlikely) case one side is empty.
pub fn individual_split<R: Rng>(n: usize, ratio: f64, rng: &mut R) -> Result<IndividualSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::config(format!(
            "split ratio {ratio} must lie strictly inside (0, 1)"
        )));
    }
    if n < 2 {
        return Err(Error::config("need n >= 2 to split"));
    }
    loop {
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < ratio).collect();
        let n_train = mask.iter().filter(|&&m| m).count();
        if n_train == 0 || n_train == n {
            continue;
        }
        return Ok(IndividualSplit {
            n_train,
            n_valid: n - n_train,
            mask,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    fn stats_from(vals: &[f64], n: usize) -> SummaryStats {
        SummaryStats {
            s: DVector::from_column_slice(vals),
            n,
            y_norm2: Some(1.0),
            label: "test".into(),
        }
    }

    #[test]
    fn summary_identity_design() {
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::from_column_slice(&[3.0, -1.0]);
        let st = compute_summary(&x, &y, "t").unwrap();
        assert_eq!(st.s, y);
        assert_abs_diff_eq!(st.y_norm2.unwrap(), 10.0, epsilon = 1e-15);
    }

    #[test]
    fn summary_matches_hand_product() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 0.5]);
        let y = DVector::from_column_slice(&[1.0, -2.0, 3.0]);
        let st = compute_summary(&x, &y, "t").unwrap();
        assert_abs_diff_eq!(st.s[0], 1.0 - 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(st.s[1], 2.0 - 2.0 + 1.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_phenotype_flagged() {
        let x = DMatrix::<f64>::identity(2, 2);
        let y = DVector::zeros(2);
        let st = compute_summary(&x, &y, "t").unwrap();
        assert!(st.validate().is_err());
    }

    #[test]
    fn oracle_v_reduces_to_s_for_zero_beta() {
        let st = stats_from(&[1.0, 2.0, 3.0], 4);
        let cov = Covariance::identity(3);
        let v = oracle_xty_covariance(&st, &cov, &DVector::zeros(3)).unwrap();
        match v {
            XtYCovariance::OracleRank1 { v } => assert_eq!(v, st.s),
            _ => panic!("wrong mode"),
        }
    }

    #[test]
    fn exact_sum_invariant() {
        let st = stats_from(&[0.3, -0.7, 2.0, 0.05], 10);
        let cov = XtYCovariance::OracleRank1 {
            v: DVector::from_column_slice(&[1.0, 0.5, -0.5, 2.0]),
        };
        let mut rng = substream(9, &[1]);
        for _ in 0..50 {
            let sp = pseudo_split(&st, &cov, 0.8, &mut rng).unwrap();
            let sum = &sp.s_train + &sp.s_valid;
            assert_eq!(sum, st.s); // forced by construction
            assert_eq!(sp.n_train + sp.n_valid, st.n);
        }
    }

    #[test]
    fn zero_direction_is_deterministic() {
        let st = stats_from(&[1.0, 2.0], 10);
        let cov = XtYCovariance::OracleRank1 { v: DVector::zeros(2) };
        let sp = pseudo_split(&st, &cov, 0.8, &mut substream(1, &[1])).unwrap();
        assert_abs_diff_eq!(sp.s_train, &st.s * 0.8, epsilon = 1e-15);
    }

    #[test]
    fn ratio_bounds_enforced() {
        let st = stats_from(&[1.0], 10);
        let cov = XtYCovariance::OracleRank1 { v: DVector::zeros(1) };
        assert!(pseudo_split(&st, &cov, 0.0, &mut substream(1, &[1])).is_err());
        assert!(pseudo_split(&st, &cov, 1.0, &mut substream(1, &[1])).is_err());
        let tiny = stats_from(&[1.0], 1);
        assert!(pseudo_split(&tiny, &cov, 0.5, &mut substream(1, &[1])).is_err());
    }

    #[test]
    fn train_count_rounds_ties_to_even() {
        assert_eq!(train_count(10, 0.25).unwrap(), 2); // 2.5 -> 2
        assert_eq!(train_count(10, 0.35).unwrap(), 4); // 3.5 -> 4
        assert_eq!(train_count(10, 0.8).unwrap(), 8);
    }

    #[test]
    fn pseudo_first_moment_matches() {
        let st = stats_from(&[2.0, -1.0, 0.5], 10);
        let cov = XtYCovariance::OracleRank1 {
            v: DVector::from_column_slice(&[1.0, 1.0, -1.0]),
        };
        let mut rng = substream(33, &[2]);
        let reps = 20_000;
        let mut mean = DVector::<f64>::zeros(3);
        for _ in 0..reps {
            mean += pseudo_split(&st, &cov, 0.8, &mut rng).unwrap().s_train / reps as f64;
        }
        // sd of each coordinate of the mean: 0.4*|v_i|/sqrt(reps)
        for i in 0..3 {
            let se = 0.4 / (reps as f64).sqrt();
            assert!(
                (mean[i] - 0.8 * st.s[i]).abs() < 4.0 * se,
                "coordinate {i}: {} vs {}",
                mean[i],
                0.8 * st.s[i]
            );
        }
    }

    #[test]
    fn pseudo_second_moment_along_v() {
        let st = stats_from(&[2.0, -1.0, 0.5, 0.0], 10);
        let v = DVector::from_column_slice(&[1.0, 2.0, -1.0, 0.5]);
        let vnorm2 = v.dot(&v);
        let cov = XtYCovariance::OracleRank1 { v: v.clone() };
        let mut rng = substream(34, &[2]);
        let reps = 20_000;
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let sp = pseudo_split(&st, &cov, 0.8, &mut rng).unwrap();
            vals.push(v.dot(&sp.s_train) / vnorm2.sqrt());
        }
        let m = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (reps - 1) as f64;
        let expected = 0.8 * 0.2 * vnorm2; // n_tr*n_v/n^2 * ||v||^2
        assert!(
            (var - expected).abs() / expected < 0.05,
            "variance along v: {var} vs {expected}"
        );
    }

    #[test]
    fn individual_split_partitions_and_sums() {
        let x = DMatrix::from_fn(20, 3, |i, j| ((i * 3 + j) as f64 * 0.17).sin());
        let y = DVector::from_fn(20, |i, _| (i as f64 * 0.31).cos());
        let sp = individual_split(20, 0.7, &mut substream(5, &[3])).unwrap();
        assert_eq!(sp.n_train + sp.n_valid, 20);
        let mut all = sp.train_indices();
        all.extend(sp.valid_indices());
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        let (st, sv) = sp.summary_pair(&x, &y).unwrap();
        let full = x.transpose() * &y;
        assert_abs_diff_eq!(&st + &sv, full, epsilon = 1e-12);
    }

    #[test]
    fn individual_split_binomial_size() {
        let mut rng = substream(6, &[4]);
        let reps = 10_000;
        let mut total = 0usize;
        for _ in 0..reps {
            total += individual_split(1000, 0.8, &mut rng).unwrap().n_train;
        }
        let mean = total as f64 / reps as f64;
        let se = (1000.0_f64 * 0.16).sqrt() / (reps as f64).sqrt();
        assert!((mean - 800.0).abs() < 4.0 * se, "mean train size {mean}");
    }
}
