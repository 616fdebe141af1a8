//! Prediction-accuracy measures and hyperparameter selection.
//!
//! The pseudo and individual-level criteria share one functional form,
//!
//! ```text
//! R^2 = (n_v / ||y_v||^2) * <s_valid, b>^2 / (n_v^2 * b' Sigma b),
//! ```
//!
//! differing only in what plays s_valid (the resampled half or X_v' y_v)
//! and in how ||y_v||^2 is obtained (a surrogate n_v * var_hat(y) in the
//! pure-summary workflow, the realized norm with individual data). The
//! measure is the large-n form of the squared out-of-sample correlation, so
//! values land in [0, 1] up to sampling noise, and it is invariant to
//! positive rescaling of b — tuning therefore ignores constant factors in
//! the rule matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::BlockDiag;
use crate::summary::{IndividualSplit, LDReference, PseudoSplit};

/// Ingredients of the R^2 denominator and prefactor.
#[derive(Debug, Clone)]
pub struct R2Inputs {
    /// Matrix defining the ||.||_Sigma norm: the oracle covariance in
    /// simulation mode, G / n_w in summary-only mode.
    pub sigma: BlockDiag,
    pub n_valid: usize,
    /// ||y_valid||^2, or the surrogate n_valid * var_hat(y).
    pub y_norm2_valid: f64,
}

impl R2Inputs {
    pub fn validate(&self) -> Result<()> {
        if self.n_valid == 0 {
            return Err(Error::config("R2 inputs need n_valid >= 1"));
        }
        if self.y_norm2_valid <= 0.0 || !self.y_norm2_valid.is_finite() {
            return Err(Error::config(format!(
                "y_norm2_valid = {} must be positive",
                self.y_norm2_valid
            )));
        }
        Ok(())
    }
}

/// Shared core of the pseudo and individual criteria.
pub fn r2_summary_form(s_valid: &DVector<f64>, beta: &DVector<f64>, inp: &R2Inputs) -> Result<f64> {
    inp.validate()?;
    if s_valid.len() != beta.len() || beta.len() != inp.sigma.dim() {
        return Err(Error::dimension(format!(
            "r2: lengths s_valid {}, beta {}, sigma {}",
            s_valid.len(),
            beta.len(),
            inp.sigma.dim()
        )));
    }
    let denom = inp.sigma.quad_form(beta)?;
    if denom <= 0.0 || beta.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate(
            "estimator has zero Sigma-norm; R^2 is undefined",
        ));
    }
    let n_v = inp.n_valid as f64;
    let inner = s_valid.dot(beta);
    let val = (n_v / inp.y_norm2_valid) * inner * inner / (n_v * n_v * denom);
    if !val.is_finite() {
        return Err(Error::numerical("R^2 evaluated to a non-finite value"));
    }
    Ok(val)
}

/// Pseudo R^2 on a resampled split.
pub fn r2_pseudo(split: &PseudoSplit, beta: &DVector<f64>, inp: &R2Inputs) -> Result<f64> {
    r2_summary_form(&split.s_valid, beta, inp)
}

/// Individual-level R^2 on the held-out rows of a Bernoulli split.
pub fn r2_individual(
    split: &IndividualSplit,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    sigma: &BlockDiag,
) -> Result<f64> {
    let (_, s_valid) = split.summary_pair(x, y)?;
    let inp = R2Inputs {
        sigma: sigma.clone(),
        n_valid: split.n_valid,
        y_norm2_valid: split.valid_y_norm2(y),
    };
    r2_summary_form(&s_valid, beta, &inp)
}

/// Squared Pearson correlation between X_test * beta and y_test.
pub fn r2_holdout(x_test: &DMatrix<f64>, y_test: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
    if x_test.nrows() != y_test.len() || x_test.ncols() != beta.len() {
        return Err(Error::dimension("holdout: shapes do not conform"));
    }
    if x_test.nrows() < 2 {
        return Err(Error::config("holdout set needs at least two rows"));
    }
    let pred = x_test * beta;
    let n = pred.len() as f64;
    let mp = pred.sum() / n;
    let my = y_test.sum() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..pred.len() {
        let a = pred[i] - mp;
        let b = y_test[i] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::degenerate("zero-variance prediction or outcome"));
    }
    Ok(sxy * sxy / (sxx * syy))
}

/// Grid search outcome. Degenerate evaluations are kept in the curve as NaN
/// and ordered below every finite value; ties break to the smallest index.
#[derive(Debug, Clone)]
pub struct TuneResult {
    pub grid: Vec<f64>,
    pub r2_curve: Vec<f64>,
    pub best_index: usize,
    pub best_value: f64,
    pub degenerate_count: usize,
}

/// Shared grid-search engine.
pub fn tune_grid<T: Copy + Into<f64>>(
    grid: &[T],
    mut eval_point: impl FnMut(T) -> Result<f64>,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::config("tuning grid is empty"));
    }
    let mut curve = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    let mut degenerate = 0usize;
    for (i, &g) in grid.iter().enumerate() {
        let val = match eval_point(g) {
            Ok(v) => v,
            Err(Error::Degenerate(_)) => {
                degenerate += 1;
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        if val.is_finite() {
            match best {
                Some((_, b)) if b >= val => {}
                _ => best = Some((i, val)),
            }
        }
        curve.push(val);
    }
    let (best_index, best_value) =
        best.ok_or_else(|| Error::degenerate("every grid point evaluated as degenerate"))?;
    Ok(TuneResult {
        grid: grid.iter().map(|&g| g.into()).collect(),
        r2_curve: curve,
        best_index,
        best_value,
        degenerate_count: degenerate,
    })
}

/// One shared split viewed as (s_train, s_valid).
#[derive(Debug, Clone, Copy)]
pub struct SplitView<'a> {
    pub s_train: &'a DVector<f64>,
    pub s_valid: &'a DVector<f64>,
}

impl<'a> From<&'a PseudoSplit> for SplitView<'a> {
    fn from(sp: &'a PseudoSplit) -> Self {
        SplitView {
            s_train: &sp.s_train,
            s_valid: &sp.s_valid,
        }
    }
}

/// Ridge theta selection on one shared split.
pub fn tune_theta(ld: &LDReference, grid: &[f64], view: SplitView<'_>, inp: &R2Inputs) -> Result<TuneResult> {
    if grid.iter().any(|&t| t <= 0.0) {
        return Err(Error::config("ridge grid must be strictly positive"));
    }
    tune_grid(grid, |theta| {
        let beta = crate::estimators::ridge_fit(view.s_train, ld, theta)?;
        r2_summary_form(view.s_valid, &beta, inp)
    })
}

/// Top-k selection over nested prefixes of a marginal ranking.
pub fn tune_threshold(order: &[usize], ks: &[usize], view: SplitView<'_>, inp: &R2Inputs) -> Result<TuneResult> {
    if ks.iter().any(|&k| k == 0 || k > order.len()) {
        return Err(Error::config("top-k grid outside [1, p]"));
    }
    let grid: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    tune_grid(&grid, |kf| {
        let k = kf as usize;
        let beta = crate::estimators::threshold_fit(view.s_train, &order[..k])?;
        r2_summary_form(view.s_valid, &beta, inp)
    })
}

/// Weight selection for an ensemble whose component estimators have already
/// been fitted on the shared split. Evaluates the pseudo criterion on the
/// simplex with the given step; component hyperparameters are tuned by the
/// caller first (conditional search).
pub struct EnsembleTune {
    pub weights: Vec<f64>,
    pub r2: f64,
    pub candidates_evaluated: usize,
    pub degenerate_count: usize,
}

pub fn tune_ensemble_weights(
    fits: &[DVector<f64>],
    view: SplitView<'_>,
    inp: &R2Inputs,
    step: f64,
) -> Result<EnsembleTune> {
    let k = fits.len();
    if k == 0 {
        return Err(Error::config("ensemble weight search needs >= 1 component"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("weight step {step} must lie in (0, 1]")));
    }
    inp.validate()?;
    // Precompute the bilinear pieces so each weight vector costs O(k^2).
    let a: Vec<f64> = fits.iter().map(|f| view.s_valid.dot(f)).collect();
    let mut q = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = inp.sigma.bilinear(&fits[i], &fits[j])?;
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    let m = (1.0 / step).round() as usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut count = 0usize;
    let mut degenerate = 0usize;
    let n_v = inp.n_valid as f64;
    let pref = n_v / inp.y_norm2_valid / (n_v * n_v);
    let mut weights = vec![0usize; k];
    enumerate_compositions(m, k, &mut weights, &mut |w| {
        count += 1;
        let om: Vec<f64> = w.iter().map(|&x| x as f64 / m as f64).collect();
        let num: f64 = om.iter().zip(&a).map(|(o, ai)| o * ai).sum();
        let mut den = 0.0;
        for i in 0..k {
            for j in 0..k {
                den += om[i] * om[j] * q[(i, j)];
            }
        }
        if den <= 0.0 {
            degenerate += 1;
            return;
        }
        let val = pref * num * num / den;
        match &best {
            Some((_, b)) if *b >= val => {}
            _ => best = Some((om, val)),
        }
    });
    let (weights, r2) = best.ok_or_else(|| {
        Error::degenerate("every weight combination evaluated as degenerate")
    })?;
    Ok(EnsembleTune {
        weights,
        r2,
        candidates_evaluated: count,
        degenerate_count: degenerate,
    })
}

/// All length-k nonnegative integer vectors summing to m, in lexicographic
/// order (deterministic tie-breaking).
fn enumerate_compositions(m: usize, k: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
    fn rec(remaining: usize, pos: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if pos == buf.len() - 1 {
            buf[pos] = remaining;
            f(buf);
            return;
        }
        for v in (0..=remaining).rev() {
            buf[pos] = v;
            rec(remaining - v, pos + 1, buf, f);
        }
    }
    let _ = k;
    rec(m, 0, buf, f);
}

/// Closed-form optimal two-population weights from the scalar terms of the
/// K = 2 accuracy decomposition:
///
/// ```text
/// omega_1 = min{1, (D2 N1 - D3 N2) / (D2 N1 - D3 N1 + D1 N2 - D3 N2)}
/// ```
///
/// clamped into [0, 1], with omega_2 = 1 - omega_1.
pub fn optimal_two_pop_weights(n1: f64, n2: f64, d1: f64, d2: f64, d3: f64) -> Result<(f64, f64)> {
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::config(format!(
            "variance terms must be positive: D1 = {d1}, D2 = {d2}"
        )));
    }
    let num = d2 * n1 - d3 * n2;
    let den = d2 * n1 - d3 * n1 + d1 * n2 - d3 * n2;
    if den.abs() < 1e-300 {
        return Err(Error::degenerate(format!(
            "optimal-weight denominator vanishes (N1={n1}, N2={n2}, D1={d1}, D2={d2}, D3={d3})"
        )));
    }
    let raw = num / den;
    let w1 = raw.min(1.0).max(0.0);
    Ok((w1, 1.0 - w1))
}
