//! Linear estimators acting on a summary vector: reference-panel ridge,
//! marginal thresholding, explicit-matrix rules, and their ensemble and
//! multi-population combinations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::summary::LDReference;

/// A single linear rule beta_hat = A(W'W, theta) * s_train.
#[derive(Debug, Clone)]
pub enum LinearRule {
    /// (W'W + theta * n_w * I)^{-1}
    Ridge { theta: f64 },
    /// Diagonal 0/1 selector on an index set.
    Threshold { indices: Vec<usize> },
    /// Explicit p x p matrix.
    Custom { matrix: DMatrix<f64> },
}

/// Weighted combination of rules sharing one pseudo split.
#[derive(Debug, Clone)]
pub struct EnsembleRule {
    pub components: Vec<(f64, LinearRule)>,
}

/// Per-population weighted combination; population 1 (index 0) is the
/// prediction target and owns the validation summary.
#[derive(Debug, Clone)]
pub struct MultiAncestryRule {
    pub components: Vec<(f64, LinearRule)>,
}

/// Ridge-type estimator: solve (G + theta * n_w * I) b = s_train with a
/// symmetric positive-definite factorization. If the factorization fails
/// (G numerically rank-deficient and theta tiny), the ridge shift is
/// enlarged by 1e-10 * n_w once before giving up.
pub fn ridge_fit(s_train: &DVector<f64>, ld: &LDReference, theta: f64) -> Result<DVector<f64>> {
    if theta <= 0.0 || !theta.is_finite() {
        return Err(Error::config(format!("ridge theta = {theta} must be positive")));
    }
    if ld.p() != s_train.len() {
        return Err(Error::dimension(format!(
            "LD matrix is {}x{} but s_train has length {}",
            ld.g.nrows(),
            ld.g.ncols(),
            s_train.len()
        )));
    }
    let p = ld.p();
    let shift = theta * ld.n_w as f64;
    let shifted = &ld.g + DMatrix::<f64>::identity(p, p) * shift;
    let chol = match shifted.cholesky() {
        Some(c) => c,
        None => {
            let bumped = shift + 1e-10 * ld.n_w as f64;
            let retry = &ld.g + DMatrix::<f64>::identity(p, p) * bumped;
            retry.cholesky().ok_or_else(|| {
                Error::numerical(format!(
                    "ridge system is not positive definite at theta = {theta}"
                ))
            })?
        }
    };
    let out = chol.solve(s_train);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("ridge solve produced non-finite values"));
    }
    Ok(out)
}

/// Marginal thresholding: keep s_train on the index set, zero elsewhere.
pub fn threshold_fit(s_train: &DVector<f64>, indices: &[usize]) -> Result<DVector<f64>> {
    if indices.is_empty() {
        return Err(Error::config("threshold index set must be nonempty"));
    }
    let p = s_train.len();
    let mut out = DVector::zeros(p);
    for &i in indices {
        if i >= p {
            return Err(Error::config(format!(
                "threshold index {i} out of range for p = {p}"
            )));
        }
        out[i] = s_train[i];
    }
    Ok(out)
}

/// beta_hat = A * s_train for an explicit matrix rule.
pub fn custom_fit(a: &DMatrix<f64>, s_train: &DVector<f64>) -> Result<DVector<f64>> {
    if a.ncols() != s_train.len() {
        return Err(Error::dimension(format!(
            "rule matrix is {}x{} but s_train has length {}",
            a.nrows(),
            a.ncols(),
            s_train.len()
        )));
    }
    Ok(a * s_train)
}

/// Fit one rule; ridge needs the LD reference.
pub fn fit_rule(rule: &LinearRule, s_train: &DVector<f64>, ld: Option<&LDReference>) -> Result<DVector<f64>> {
    match rule {
        LinearRule::Ridge { theta } => {
            let ld = ld.ok_or_else(|| Error::config("ridge rule requires an LD reference"))?;
            ridge_fit(s_train, ld, *theta)
        }
        LinearRule::Threshold { indices } => threshold_fit(s_train, indices),
        LinearRule::Custom { matrix } => custom_fit(matrix, s_train),
    }
}

/// beta_hat = sum_j omega_j A_j s_train, every component on the same split.
pub fn ensemble_fit(rule: &EnsembleRule, s_train: &DVector<f64>, ld: Option<&LDReference>) -> Result<DVector<f64>> {
    if rule.components.is_empty() {
        return Err(Error::config("ensemble needs at least one component"));
    }
    let mut out = DVector::zeros(s_train.len());
    for (w, r) in &rule.components {
        if !w.is_finite() {
            return Err(Error::config("ensemble weight must be finite"));
        }
        out += fit_rule(r, s_train, ld)? * *w;
    }
    Ok(out)
}

/// beta_hat = sum_j omega_j A_j s_train_j across populations.
pub fn multi_fit(rule: &MultiAncestryRule, s_trains: &[DVector<f64>], lds: &[Option<&LDReference>]) -> Result<DVector<f64>> {
    let k = rule.components.len();
    if k == 0 {
        return Err(Error::config("multi-ancestry rule needs at least one population"));
    }
    if s_trains.len() != k || lds.len() != k {
        return Err(Error::dimension(format!(
            "multi-ancestry rule has {k} components but {} splits / {} references",
            s_trains.len(),
            lds.len()
        )));
    }
    let p = s_trains[0].len();
    let mut out = DVector::zeros(p);
    for (j, (w, r)) in rule.components.iter().enumerate() {
        if s_trains[j].len() != p {
            return Err(Error::dimension("populations disagree on p"));
        }
        out += fit_rule(r, &s_trains[j], lds[j])? * *w;
    }
    Ok(out)
}

/// Marginal ranking |s_i| / sqrt(G_ii) in decreasing order — the P-value
/// ordering used to build nested top-k candidate sets.
pub fn marginal_order(s: &DVector<f64>, g_diag: &[f64]) -> Result<Vec<usize>> {
    if s.len() != g_diag.len() {
        return Err(Error::dimension("s and diag(G) lengths differ"));
    }
    if g_diag.iter().any(|&d| d <= 0.0) {
        return Err(Error::config("diag(G) must be positive for marginal ranking"));
    }
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| {
        let za = s[a].abs() / g_diag[a].sqrt();
        let zb = s[b].abs() / g_diag[b].sqrt();
        zb.partial_cmp(&za).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    Ok(idx)
}

/// Log-spaced top-k candidate sizes in [k_min, p], deduplicated.
pub fn top_k_grid(p: usize, k_min: usize, points: usize) -> Vec<usize> {
    let k_min = k_min.max(1).min(p);
    if points <= 1 || k_min == p {
        return vec![p];
    }
    let lo = (k_min as f64).ln();
    let hi = (p as f64).ln();
    let mut ks: Vec<usize> = (0..points)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            (t.exp().round() as usize).clamp(1, p)
        })
        .collect();
    ks.dedup();
    ks
}

/// Reference-panel ridge solver reused across a theta grid and many split
/// vectors. Factors (WW' + theta n_w I) on the smaller Gram side once per
/// theta; each subsequent fit is matrix-vector work.
pub struct RidgePanel<'a> {
    w: &'a DMatrix<f64>,
    n_w: usize,
    p: usize,
    /// Gram matrix on the cheaper side: WW' (n_w x n_w) when n_w < p,
    /// otherwise W'W (p x p).
    gram: DMatrix<f64>,
    dual: bool,
    factors: Vec<(f64, Cholesky<f64, Dyn>)>,
}

impl<'a> RidgePanel<'a> {
    pub fn new(w: &'a DMatrix<f64>) -> Self {
        let n_w = w.nrows();
        let p = w.ncols();
        let dual = n_w < p;
        let gram = if dual {
            w * w.transpose()
        } else {
            w.transpose() * w
        };
        RidgePanel { w, n_w, p, gram, dual, factors: Vec::new() }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    /// Column norms squared of W, i.e. diag(W'W).
    pub fn g_diag(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| self.w.column(j).norm_squared())
            .collect()
    }

    /// Factor the shifted Gram for every theta in the grid.
    pub fn prepare(&mut self, thetas: &[f64]) -> Result<()> {
        for &theta in thetas {
            if self.factors.iter().any(|(t, _)| *t == theta) {
                continue;
            }
            if theta <= 0.0 || !theta.is_finite() {
                return Err(Error::config(format!("ridge theta = {theta} must be positive")));
            }
            let m = self.gram.nrows();
            let shifted = &self.gram + DMatrix::<f64>::identity(m, m) * (theta * self.n_w as f64);
            let chol = shifted.cholesky().ok_or_else(|| {
                Error::numerical(format!("panel Gram not positive definite at theta = {theta}"))
            })?;
            self.factors.push((theta, chol));
        }
        Ok(())
    }

    fn factor(&self, theta: f64) -> Result<&Cholesky<f64, Dyn>> {
        self.factors
            .iter()
            .find(|(t, _)| *t == theta)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::config(format!("theta = {theta} was not prepared")))
    }

    /// (W'W + theta n_w I)^{-1} s, via the dual (Woodbury) identity when the
    /// panel is wide.
    pub fn solve(&self, theta: f64, s: &DVector<f64>) -> Result<DVector<f64>> {
        if s.len() != self.p {
            return Err(Error::dimension(format!(
                "panel solve: s has length {}, expected {}",
                s.len(),
                self.p
            )));
        }
        let chol = self.factor(theta)?;
        if self.dual {
            let shift = theta * self.n_w as f64;
            let ws = self.w * s;
            let inner = chol.solve(&ws);
            Ok((s - self.w.transpose() * inner) / shift)
        } else {
            Ok(chol.solve(s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_panel(n_w: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, &[99]);
        DMatrix::from_fn(n_w, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn ridge_scalar_shrinkage() {
        // G = n_w * I  =>  beta = s / (n_w (1 + theta))
        let n_w = 50usize;
        let g = DMatrix::<f64>::identity(3, 3) * n_w as f64;
        let ld = LDReference { g, n_w };
        let s = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let b = ridge_fit(&s, &ld, 0.5).unwrap();
        assert_abs_diff_eq!(b, &s / (50.0 * 1.5), epsilon = 1e-12);
    }

    #[test]
    fn ridge_dominant_regularizer_limit() {
        let w = random_panel(40, 10, 3);
        let ld = LDReference::from_panel(&w);
        let s = DVector::from_fn(10, |i, _| (i as f64 - 4.0) * 0.3);
        let theta = 1e6;
        let b = ridge_fit(&s, &ld, theta).unwrap();
        let approx_b = &s / (theta * ld.n_w as f64);
        assert!((&b - &approx_b).norm() / b.norm() < 1e-3);
    }

    #[test]
    fn ridge_matches_explicit_solve() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let ld = LDReference { g: g.clone(), n_w: 7 };
        let s = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let theta = 0.3;
        let b = ridge_fit(&s, &ld, theta).unwrap();
        let lhs = &g + DMatrix::<f64>::identity(3, 3) * (theta * 7.0);
        let expected = lhs.lu().solve(&s).unwrap();
        assert_abs_diff_eq!(b, expected, epsilon = 1e-10);
    }

    #[test]
    fn ridge_rejects_bad_theta() {
        let ld = LDReference { g: DMatrix::identity(2, 2), n_w: 2 };
        let s = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(ridge_fit(&s, &ld, 0.0).is_err());
        assert!(ridge_fit(&s, &ld, -1.0).is_err());
    }

    #[test]
    fn threshold_selects_and_errors() {
        let s = DVector::from_column_slice(&[2.0, 5.0, -1.0]);
        let b = threshold_fit(&s, &[0]).unwrap();
        assert_eq!(b.as_slice(), &[2.0, 0.0, 0.0]);
        let full = threshold_fit(&s, &[0, 1, 2]).unwrap();
        assert_eq!(full, s);
        assert!(threshold_fit(&s, &[]).is_err());
        assert!(threshold_fit(&s, &[3]).is_err());
    }

    #[test]
    fn custom_matches_ridge_and_threshold() {
        let w = random_panel(30, 8, 5);
        let ld = LDReference::from_panel(&w);
        let s = DVector::from_fn(8, |i, _| ((i * i) as f64 * 0.11).sin());
        let theta = 0.7;
        // explicit ridge matrix
        let lhs = &ld.g + DMatrix::<f64>::identity(8, 8) * (theta * ld.n_w as f64);
        let a_ridge = lhs.try_inverse().unwrap();
        let via_custom = custom_fit(&a_ridge, &s).unwrap();
        let via_ridge = ridge_fit(&s, &ld, theta).unwrap();
        assert!((&via_custom - &via_ridge).norm() / via_ridge.norm() < 1e-8);
        // diagonal selector
        let mut a_sel = DMatrix::<f64>::zeros(8, 8);
        a_sel[(1, 1)] = 1.0;
        a_sel[(4, 4)] = 1.0;
        assert_eq!(
            custom_fit(&a_sel, &s).unwrap(),
            threshold_fit(&s, &[1, 4]).unwrap()
        );
    }

    #[test]
    fn ensemble_weighted_sum() {
        let w = random_panel(30, 8, 6);
        let ld = LDReference::from_panel(&w);
        let s = DVector::from_fn(8, |i, _| (i as f64 * 0.37).cos());
        let rule = EnsembleRule {
            components: vec![
                (0.3, LinearRule::Ridge { theta: 1.0 }),
                (0.7, LinearRule::Threshold { indices: vec![0, 1, 2] }),
            ],
        };
        let b = ensemble_fit(&rule, &s, Some(&ld)).unwrap();
        let by_hand = ridge_fit(&s, &ld, 1.0).unwrap() * 0.3
            + threshold_fit(&s, &[0, 1, 2]).unwrap() * 0.7;
        assert_abs_diff_eq!(b, by_hand, epsilon = 1e-12);
        // single component with unit weight reduces to that component
        let single = EnsembleRule {
            components: vec![(1.0, LinearRule::Ridge { theta: 1.0 })],
        };
        assert_eq!(
            ensemble_fit(&single, &s, Some(&ld)).unwrap(),
            ridge_fit(&s, &ld, 1.0).unwrap()
        );
    }

    #[test]
    fn multi_fit_weighted_populations() {
        let w1 = random_panel(30, 6, 7);
        let w2 = random_panel(30, 6, 8);
        let ld1 = LDReference::from_panel(&w1);
        let ld2 = LDReference::from_panel(&w2);
        let s1 = DVector::from_fn(6, |i, _| (i as f64 + 1.0) * 0.1);
        let s2 = DVector::from_fn(6, |i, _| (i as f64 - 3.0) * 0.2);
        let rule = MultiAncestryRule {
            components: vec![
                (0.6, LinearRule::Ridge { theta: 0.5 }),
                (0.4, LinearRule::Ridge { theta: 2.0 }),
            ],
        };
        let b = multi_fit(&rule, &[s1.clone(), s2.clone()], &[Some(&ld1), Some(&ld2)]).unwrap();
        let by_hand = ridge_fit(&s1, &ld1, 0.5).unwrap() * 0.6
            + ridge_fit(&s2, &ld2, 2.0).unwrap() * 0.4;
        assert_abs_diff_eq!(b, by_hand, epsilon = 1e-12);
        // weight (1, 0) ignores population 2
        let rule10 = MultiAncestryRule {
            components: vec![
                (1.0, LinearRule::Ridge { theta: 0.5 }),
                (0.0, LinearRule::Ridge { theta: 2.0 }),
            ],
        };
        let b10 = multi_fit(&rule10, &[s1.clone(), s2], &[Some(&ld1), Some(&ld2)]).unwrap();
        assert_abs_diff_eq!(b10, ridge_fit(&s1, &ld1, 0.5).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn panel_solver_agrees_with_direct_both_shapes() {
        for (n_w, p, seed) in [(40usize, 12usize, 11u64), (12, 40, 12)] {
            let w = random_panel(n_w, p, seed);
            let ld = LDReference::from_panel(&w);
            let mut panel = RidgePanel::new(&w);
            panel.prepare(&[0.1, 1.0, 10.0]).unwrap();
            let s = DVector::from_fn(p, |i, _| ((i as f64) * 0.21).sin() + 0.1);
            for theta in [0.1, 1.0, 10.0] {
                let direct = ridge_fit(&s, &ld, theta).unwrap();
                let fast = panel.solve(theta, &s).unwrap();
                assert!(
                    (&direct - &fast).norm() / direct.norm() < 1e-9,
                    "theta = {theta}, n_w = {n_w}, p = {p}"
                );
            }
        }
    }

    #[test]
    fn marginal_order_ranks_by_standardized_effect() {
        let s = DVector::from_column_slice(&[1.0, -4.0, 2.0]);
        let g = vec![1.0, 4.0, 1.0];
        // |z| = 1, 2, 2: ties broken by index
        let order = marginal_order(&s, &g).unwrap();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn linearity_of_rules() {
        let w = random_panel(25, 7, 21);
        let ld = LDReference::from_panel(&w);
        let s1 = DVector::from_fn(7, |i, _| (i as f64 * 0.4).sin());
        let s2 = DVector::from_fn(7, |i, _| (i as f64 * 0.9).cos());
        let combo = &s1 * 2.0 + &s2 * -0.5;
        for rule in [
            LinearRule::Ridge { theta: 0.8 },
            LinearRule::Threshold { indices: vec![0, 3, 5] },
        ] {
            let f_combo = fit_rule(&rule, &combo, Some(&ld)).unwrap();
            let f_parts = fit_rule(&rule, &s1, Some(&ld)).unwrap() * 2.0
                + fit_rule(&rule, &s2, Some(&ld)).unwrap() * -0.5;
            assert!((&f_combo - &f_parts).norm() < 1e-9 * (1.0 + f_combo.norm()));
        }
    }
}
