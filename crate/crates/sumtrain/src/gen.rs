//! Synthetic data generation: effect vectors, noise calibrated to a target
//! heritability, and individual-level datasets with a matching reference
//! panel.
//!
//! Rows of the design matrix are X0 * Sigma^{1/2} with i.i.d. standard
//! entries in X0, so the column covariance is exactly Sigma in expectation.
//! All sampling is driven by substreams derived from the config seed; the
//! same (seed, config) pair reproduces the dataset bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cov::{build_covariance, Covariance, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg::matrix_sqrt_psd;
use crate::rng::{substream, tag};

/// Default cap on any single generated matrix (row count x column count x 8
/// bytes). Configs beyond it are rejected rather than silently thrashing.
pub const DEFAULT_MATRIX_BYTES_CAP: usize = 4 << 30;

/// Distribution family for the nonzero effect coordinates. Both have mean
/// zero and variance sigma_beta2 / p; the Rademacher option exists to probe
/// sensitivity to fourth moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectDist {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub n: usize,
    pub p: usize,
    pub n_w: usize,
    /// Sparsity: each coordinate of beta is nonzero independently with this
    /// probability.
    pub kappa: f64,
    /// Signal strength; nonzero coordinates have variance sigma_beta2 / p.
    pub sigma_beta2: f64,
    pub target_h2: f64,
    pub effect_dist: EffectDist,
    pub cov: CovarianceSpec,
    pub seed: u64,
    pub matrix_bytes_cap: usize,
}

impl GenConfig {
    pub fn new(n: usize, p: usize, n_w: usize, kappa: f64, sigma_beta2: f64, target_h2: f64, cov: CovarianceSpec, seed: u64) -> Self {
        GenConfig {
            n,
            p,
            n_w,
            kappa,
            sigma_beta2,
            target_h2,
            effect_dist: EffectDist::Gaussian,
            cov,
            seed,
            matrix_bytes_cap: DEFAULT_MATRIX_BYTES_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.n_w == 0 {
            return Err(Error::config("n, p and n_w must all be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::config(format!("kappa = {} must lie in [0, 1]", self.kappa)));
        }
        if self.sigma_beta2 <= 0.0 {
            return Err(Error::config(format!(
                "sigma_beta2 = {} must be positive",
                self.sigma_beta2
            )));
        }
        if !(0.0..=1.0).contains(&self.target_h2) {
            return Err(Error::config(format!(
                "target_h2 = {} must lie in [0, 1]",
                self.target_h2
            )));
        }
        if self.target_h2 > 0.0 && self.kappa * self.sigma_beta2 <= 0.0 {
            return Err(Error::config(
                "target_h2 > 0 requires kappa * sigma_beta2 > 0",
            ));
        }
        self.cov.validate()?;
        if self.cov.dim() != self.p {
            return Err(Error::config(format!(
                "covariance dimension {} does not match p = {}",
                self.cov.dim(),
                self.p
            )));
        }
        let cells = self.n.max(self.n_w).saturating_mul(self.p).saturating_mul(8);
        if cells > self.matrix_bytes_cap {
            return Err(Error::config(format!(
                "requested matrices need {} bytes, above the cap of {}",
                cells, self.matrix_bytes_cap
            )));
        }
        Ok(())
    }

    /// Model-level phenotype variance kappa*sigma_beta2*tr(Sigma)/p + sigma_eps2.
    pub fn phenotype_variance(&self, cov: &Covariance) -> Result<f64> {
        let se2 = calibrate_noise(self.target_h2, self.kappa, self.sigma_beta2, cov)?;
        Ok(self.kappa * self.sigma_beta2 * cov.trace() / self.p as f64 + se2)
    }
}

/// One generated dataset. `y - X beta` equals `noise` exactly.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub sigma_eps2: f64,
    pub noise: DVector<f64>,
}

/// Noise variance hitting the target heritability:
/// sigma_eps2 = kappa * sigma_beta2 * (tr Sigma / p) * (1 - h2) / h2.
///
/// h2 = 1 returns exactly zero. h2 = 0 is only feasible when the signal is
/// itself zero; with positive signal it would demand infinite noise.
pub fn calibrate_noise(target_h2: f64, kappa: f64, sigma_beta2: f64, cov: &Covariance) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_h2) {
        return Err(Error::config(format!("target_h2 = {target_h2} must lie in [0, 1]")));
    }
    let signal = kappa * sigma_beta2 * cov.trace() / cov.p() as f64;
    if target_h2 == 0.0 {
        if signal > 0.0 {
            return Err(Error::config(
                "target_h2 = 0 with positive signal is infeasible (infinite noise)",
            ));
        }
        return Ok(1.0); // free parameter; unit noise for a pure-noise model
    }
    if target_h2 == 1.0 {
        return Ok(0.0);
    }
    Ok(signal * (1.0 - target_h2) / target_h2)
}

/// Independent per-coordinate effects: zero with probability 1 - kappa, else
/// a draw with mean zero and variance sigma_beta2 / p.
pub fn sample_effects<R: Rng>(cfg: &GenConfig, rng: &mut R) -> DVector<f64> {
    let sd = (cfg.sigma_beta2 / cfg.p as f64).sqrt();
    DVector::from_fn(cfg.p, |_, _| {
        if rng.random::<f64>() < cfg.kappa {
            match cfg.effect_dist {
                EffectDist::Gaussian => {
                    let z: f64 = rng.sample(StandardNormal);
                    sd * z
                }
                EffectDist::Rademacher => {
                    if rng.random::<bool>() {
                        sd
                    } else {
                        -sd
                    }
                }
            }
        } else {
            0.0
        }
    })
}

/// n x p matrix with i.i.d. standard normal entries, multiplied on the right
/// by Sigma^{1/2} block by block.
fn correlated_normal_matrix<R: Rng>(n: usize, cov: &Covariance, rng: &mut R) -> DMatrix<f64> {
    let p = cov.p();
    let x0 = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    let sqrt = cov.sqrt();
    let mut out = DMatrix::<f64>::zeros(n, p);
    for i in 0..sqrt.n_blocks() {
        let b = sqrt.block(i);
        let off = sqrt.offset(i);
        let cols = b.nrows();
        out.view_mut((0, off), (n, cols))
            .copy_from(&(x0.view((0, off), (n, cols)) * b));
    }
    out
}

/// Generate (X, y, W, beta) for one config. Substreams: effects, design,
/// noise, panel — all derived from `cfg.seed`.
pub fn generate_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cov = build_covariance(&cfg.cov)?;
    generate_dataset_with_cov(cfg, &cov)
}

/// Same as [`generate_dataset`] but reusing an already-built covariance
/// (the harness builds it once across replicates).
pub fn generate_dataset_with_cov(cfg: &GenConfig, cov: &Covariance) -> Result<Dataset> {
    cfg.validate()?;
    let sigma_eps2 = calibrate_noise(cfg.target_h2, cfg.kappa, cfg.sigma_beta2, cov)?;
    let beta = sample_effects(cfg, &mut substream(cfg.seed, &[tag::EFFECTS]));
    let x = correlated_normal_matrix(cfg.n, cov, &mut substream(cfg.seed, &[tag::DESIGN]));
    let w = correlated_normal_matrix(cfg.n_w, cov, &mut substream(cfg.seed, &[tag::PANEL]));
    let mut noise_rng = substream(cfg.seed, &[tag::NOISE]);
    let sd = sigma_eps2.sqrt();
    let noise = DVector::from_fn(cfg.n, |_, _| {
        let z: f64 = noise_rng.sample(StandardNormal);
        sd * z
    });
    let y = &x * &beta + &noise;
    Ok(Dataset { x, y, w, beta, sigma_eps2, noise })
}

/// Fresh draw from the same population (same beta, new design and noise),
/// for hold-out evaluation.
pub fn generate_holdout(cfg: &GenConfig, cov: &Covariance, beta: &DVector<f64>, n_test: usize, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sigma_eps2 = calibrate_noise(cfg.target_h2, cfg.kappa, cfg.sigma_beta2, cov)?;
    let x = correlated_normal_matrix(n_test, cov, &mut substream(seed, &[tag::TEST_SET, 1]));
    let mut noise_rng = substream(seed, &[tag::TEST_SET, 2]);
    let sd = sigma_eps2.sqrt();
    let eps = DVector::from_fn(n_test, |_, _| {
        let z: f64 = noise_rng.sample(StandardNormal);
        sd * z
    });
    let y = &x * beta + eps;
    Ok((x, y))
}

/// Per-population settings for the multi-ancestry generator.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    pub cov: CovarianceSpec,
    pub kappa: f64,
    pub target_h2: f64,
}

/// K populations sharing (n, p, n_w); effect vectors are coupled across
/// populations through the K x K matrix of sigma_{i,j}^2 values, with
/// sigma_{j,j}^2 playing the per-population signal-strength role.
#[derive(Debug, Clone)]
pub struct MultiAncestryConfig {
    pub n: usize,
    pub p: usize,
    pub n_w: usize,
    pub populations: Vec<PopulationSpec>,
    /// Symmetric PSD K x K matrix of cross-population effect covariances.
    pub sigma_cross: DMatrix<f64>,
    pub seed: u64,
}

impl MultiAncestryConfig {
    pub fn k(&self) -> usize {
        self.populations.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.populations.is_empty() {
            return Err(Error::config("need at least one population"));
        }
        let k = self.k();
        if self.sigma_cross.nrows() != k || self.sigma_cross.ncols() != k {
            return Err(Error::config(format!(
                "sigma_cross is {}x{}, expected {k}x{k}",
                self.sigma_cross.nrows(),
                self.sigma_cross.ncols()
            )));
        }
        for i in 0..k {
            if self.sigma_cross[(i, i)] <= 0.0 {
                return Err(Error::config(format!(
                    "sigma_cross[{i},{i}] must be positive"
                )));
            }
            for j in 0..k {
                if (self.sigma_cross[(i, j)] - self.sigma_cross[(j, i)]).abs() > 1e-12 {
                    return Err(Error::config("sigma_cross must be symmetric"));
                }
            }
        }
        // PSD check happens in sample_multi_effects via the square root.
        for (j, pop) in self.populations.iter().enumerate() {
            let cfg = GenConfig::new(
                self.n,
                self.p,
                self.n_w,
                pop.kappa,
                self.sigma_cross[(j, j)],
                pop.target_h2,
                pop.cov.clone(),
                self.seed,
            );
            cfg.validate()
                .map_err(|e| Error::config(format!("population {j}: {e}")))?;
        }
        Ok(())
    }

    fn pop_gen_config(&self, j: usize) -> GenConfig {
        let pop = &self.populations[j];
        GenConfig::new(
            self.n,
            self.p,
            self.n_w,
            pop.kappa,
            self.sigma_cross[(j, j)],
            pop.target_h2,
            pop.cov.clone(),
            self.seed,
        )
    }
}

/// Coupled effect vectors for K populations.
///
/// Coordinate-wise: one latent joint draw with covariance [sigma_{i,j}^2]/p,
/// then an independent Bernoulli(kappa_j) mask per population, so the
/// realized cross moment is p * E[beta_i beta_j] = kappa_i kappa_j
/// sigma_{i,j}^2 for i != j and kappa_j sigma_{j,j}^2 on the diagonal.
pub fn sample_multi_effects<R: Rng>(cfg: &MultiAncestryConfig, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    let k = cfg.k();
    let p = cfg.p;
    let root = matrix_sqrt_psd(&cfg.sigma_cross)
        .map_err(|e| Error::config(format!("sigma_cross is not a valid PSD matrix: {e}")))?;
    let scale = (p as f64).sqrt().recip();
    let mut betas = vec![DVector::zeros(p); k];
    let mut latent = DVector::zeros(k);
    for l in 0..p {
        for i in 0..k {
            latent[i] = rng.sample::<f64, _>(StandardNormal);
        }
        let coupled = &root * &latent;
        for j in 0..k {
            let keep = rng.random::<f64>() < cfg.populations[j].kappa;
            betas[j][l] = if keep { scale * coupled[j] } else { 0.0 };
        }
    }
    Ok(betas)
}

/// One generated dataset per population, with independent designs, panels
/// and noise; only the effect vectors are coupled.
pub fn generate_multi_dataset(cfg: &MultiAncestryConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    let betas = sample_multi_effects(cfg, &mut substream(cfg.seed, &[tag::EFFECTS]))?;
    let mut out = Vec::with_capacity(cfg.k());
    for (j, beta) in betas.into_iter().enumerate() {
        let pop_cfg = cfg.pop_gen_config(j);
        let cov = build_covariance(&pop_cfg.cov)?;
        let sigma_eps2 = calibrate_noise(pop_cfg.target_h2, pop_cfg.kappa, pop_cfg.sigma_beta2, &cov)?;
        let jt = j as u64 + 1;
        let x = correlated_normal_matrix(cfg.n, &cov, &mut substream(cfg.seed, &[tag::DESIGN, jt]));
        let w = correlated_normal_matrix(cfg.n_w, &cov, &mut substream(cfg.seed, &[tag::PANEL, jt]));
        let mut noise_rng = substream(cfg.seed, &[tag::NOISE, jt]);
        let sd = sigma_eps2.sqrt();
        let noise = DVector::from_fn(cfg.n, |_, _| {
            let z: f64 = noise_rng.sample(StandardNormal);
            sd * z
        });
        let y = &x * &beta + &noise;
        out.push(Dataset { x, y, w, beta, sigma_eps2, noise });
    }
    Ok(out)
}
