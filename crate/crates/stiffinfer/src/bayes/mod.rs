//! Posterior inference of pre-reaction initial compositions: truncated
//! Gaussian truth ensembles, synthetic observation summaries, a boxed
//! flat prior handled through a logistic change of variables, and NUTS
//! sampling of the resulting unconstrained density.

mod diagnostics;
mod nuts;

pub use diagnostics::{ess, split_rhat};
pub use nuts::{NutsOptions, PosteriorChain, Target, DIVERGENCE_ENERGY};

use crate::stiffode::{integrate, integrate_with_sensitivity, OdeError, OdeSystem, SolverConfig};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("invalid sampler settings: {0}")]
    InvalidSettings(String),
    #[error("integration failed for ensemble member {index}: {source}")]
    MemberIntegration { index: usize, source: OdeError },
    #[error("observation covariance is singular (smallest eigenvalue {min_eig:.6e})")]
    SingularCovariance { min_eig: f64 },
    #[error("component {index} sits on the prior boundary; the transform needs interior points")]
    BoundaryInput { index: usize },
    #[error("sampler initialization failed: log density = {logp}")]
    InitFailure { logp: f64 },
    #[error("every warmup iteration diverged; the target is numerically intractable here")]
    AllDivergentWarmup,
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// RNG for one reproducible role: a fixed base seed with role-separated
/// ChaCha streams, so truth sampling and each chain never share draws.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_TRUTH: u64 = 0;
const STREAM_CHAIN_BASE: u64 = 1;

/// Truncated-Gaussian specification of the uncertain initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub mu0: DVector<f64>,
    pub s0: DVector<f64>,
    /// mu0 - 3 s0, the lower prior bound.
    pub lower: DVector<f64>,
    /// mu0 + 3 s0, the upper prior bound.
    pub upper: DVector<f64>,
    pub n_truth: usize,
}

impl TruthSpec {
    pub fn new(mu0: DVector<f64>, s0: DVector<f64>, n_truth: usize) -> Result<Self, BayesError> {
        if mu0.len() != s0.len() {
            return Err(BayesError::InvalidSpec(format!(
                "mu0 has {} components but s0 has {}",
                mu0.len(),
                s0.len()
            )));
        }
        if mu0.is_empty() || n_truth == 0 {
            return Err(BayesError::InvalidSpec(
                "need at least one component and one truth sample".into(),
            ));
        }
        for (i, &s) in s0.iter().enumerate() {
            if !(s > 0.0) {
                return Err(BayesError::InvalidSpec(format!(
                    "s0[{i}] = {s} must be positive"
                )));
            }
        }
        let lower = &mu0 - 3.0 * &s0;
        let upper = &mu0 + 3.0 * &s0;
        Ok(TruthSpec {
            mu0,
            s0,
            lower,
            upper,
            n_truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

/// Which likelihood the observation summary feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// Diagonal Σ_obs built from the per-component variances.
    Variance,
    /// Full empirical covariance.
    Covariance,
}

/// Moments of the observable at t_obs, estimated from a truth ensemble.
#[derive(Debug, Clone)]
pub struct ObservationSummary {
    pub t_obs: f64,
    pub mu_obs: DVector<f64>,
    pub s_obs: DVector<f64>,
    /// Mode-selected covariance: diagonal in variance mode, full
    /// otherwise; jitter already applied when it was needed.
    pub sigma_obs: DMatrix<f64>,
    pub corr: DMatrix<f64>,
    pub mode: LikelihoodMode,
    /// Diagonal regularization added because the covariance had
    /// collapsed; `None` means none was needed.
    pub jitter: Option<f64>,
    pub n_truth: usize,
}

/// Draw a truth ensemble: componentwise rejection sampling of the
/// 3σ-truncated Gaussian. Rows are samples.
pub fn sample_truth(spec: &TruthSpec, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, STREAM_TRUTH);
    let n = spec.dim();
    let mut out = DMatrix::zeros(spec.n_truth, n);
    for r in 0..spec.n_truth {
        for c in 0..n {
            let x = loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = spec.mu0[c] + spec.s0[c] * z;
                if x >= spec.lower[c] && x <= spec.upper[c] {
                    break x;
                }
            };
            out[(r, c)] = x;
        }
    }
    out
}

/// Relative eigenvalue floor below which Σ_obs gets explicit jitter.
pub const COV_JITTER_REL: f64 = 1e-12;

/// Integrate every ensemble member to t_obs and summarize the spread.
pub fn generate_observation<S: OdeSystem>(
    ensemble: &DMatrix<f64>,
    sys: &S,
    t_obs: f64,
    mode: LikelihoodMode,
    cfg: &SolverConfig,
) -> Result<ObservationSummary, BayesError> {
    assert!(t_obs > 0.0, "t_obs must be positive");
    let n_samp = ensemble.nrows();
    let dim = ensemble.ncols();
    assert!(n_samp > 1, "need at least two members for a covariance");

    let mut at_obs = DMatrix::zeros(n_samp, dim);
    for i in 0..n_samp {
        let phi0 = ensemble.row(i).transpose();
        let traj = integrate(sys, &phi0, t_obs, cfg)
            .map_err(|source| BayesError::MemberIntegration { index: i, source })?;
        at_obs.row_mut(i).copy_from(&traj.final_state().transpose());
    }

    let mu_obs = DVector::from_fn(dim, |c, _| at_obs.column(c).mean());
    let mut sigma = DMatrix::zeros(dim, dim);
    for i in 0..n_samp {
        let d = at_obs.row(i).transpose() - &mu_obs;
        sigma += &d * d.transpose();
    }
    sigma /= (n_samp - 1) as f64;

    let s_obs = DVector::from_fn(dim, |c, _| sigma[(c, c)].max(0.0).sqrt());
    let corr = DMatrix::from_fn(dim, dim, |r, c| {
        let denom = s_obs[r] * s_obs[c];
        if denom > 0.0 {
            sigma[(r, c)] / denom
        } else if r == c {
            1.0
        } else {
            0.0
        }
    });

    let mut sigma_obs = match mode {
        LikelihoodMode::Covariance => sigma,
        LikelihoodMode::Variance => {
            DMatrix::from_diagonal(&DVector::from_fn(dim, |c, _| s_obs[c] * s_obs[c]))
        }
    };
    let trace = sigma_obs.trace();
    let min_eig = sigma_obs
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .min();
    let jitter = if trace > 0.0 && min_eig < COV_JITTER_REL * trace {
        let j = COV_JITTER_REL * trace;
        for c in 0..dim {
            sigma_obs[(c, c)] += j;
        }
        Some(j)
    } else {
        None
    };

    Ok(ObservationSummary {
        t_obs,
        mu_obs,
        s_obs,
        sigma_obs,
        corr,
        mode,
        jitter,
        n_truth: n_samp,
    })
}

fn factor_covariance(obs: &ObservationSummary) -> Result<Cholesky<f64, Dyn>, BayesError> {
    Cholesky::new(obs.sigma_obs.clone()).ok_or_else(|| {
        let min_eig = obs
            .sigma_obs
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .min();
        BayesError::SingularCovariance { min_eig }
    })
}

/// Gaussian log likelihood and its gradient with respect to the initial
/// state, using the forward sensitivity matrix at t_obs. The flat prior
/// contributes nothing inside the box.
pub fn log_posterior<S: OdeSystem>(
    phi0: &DVector<f64>,
    obs: &ObservationSummary,
    sys: &S,
    cfg: &SolverConfig,
) -> Result<(f64, DVector<f64>), BayesError> {
    let chol = factor_covariance(obs)?;
    log_posterior_prepared(phi0, obs, &chol, sys, cfg)
}

fn log_posterior_prepared<S: OdeSystem>(
    phi0: &DVector<f64>,
    obs: &ObservationSummary,
    chol: &Cholesky<f64, Dyn>,
    sys: &S,
    cfg: &SolverConfig,
) -> Result<(f64, DVector<f64>), BayesError> {
    let sens = integrate_with_sensitivity(sys, phi0, obs.t_obs, cfg)?;
    let r = sens.base.final_state() - &obs.mu_obs;
    let q = chol.solve(&r);
    let logp = -0.5 * r.dot(&q);
    let grad = -(sens.final_sensitivity().transpose() * q);
    Ok((logp, grad))
}

/// Componentwise scaled-logistic bijection between the prior box and
/// unconstrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxTransform {
    lower: DVector<f64>,
    width: DVector<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

impl BoxTransform {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, BayesError> {
        if lower.len() != upper.len() {
            return Err(BayesError::InvalidSpec(
                "transform bounds differ in length".into(),
            ));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) {
                return Err(BayesError::InvalidSpec(format!(
                    "bounds [{:.6e}, {:.6e}] at component {i} are not an interval",
                    lower[i], upper[i]
                )));
            }
        }
        let width = &upper - &lower;
        Ok(BoxTransform { lower, width })
    }

    pub fn from_spec(spec: &TruthSpec) -> Self {
        BoxTransform {
            lower: spec.lower.clone(),
            width: &spec.upper - &spec.lower,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Box → unbounded. Boundary points would map to ±∞ and are rejected.
    pub fn to_unbounded(&self, phi: &DVector<f64>) -> Result<DVector<f64>, BayesError> {
        let mut z = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let a = phi[i] - self.lower[i];
            let b = self.lower[i] + self.width[i] - phi[i];
            if !(a > 0.0 && b > 0.0) {
                return Err(BayesError::BoundaryInput { index: i });
            }
            z[i] = a.ln() - b.ln();
        }
        Ok(z)
    }

    /// Unbounded → box interior.
    pub fn to_box(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.lower[i] + self.width[i] * sigmoid(z[i])
        })
    }

    /// log |det dφ/dz|.
    pub fn log_jacobian(&self, z: &DVector<f64>) -> f64 {
        (0..self.dim())
            .map(|i| self.width[i].ln() - softplus(z[i]) - softplus(-z[i]))
            .sum()
    }

    /// d/dz of `log_jacobian`, componentwise.
    pub fn grad_log_jacobian(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| 1.0 - 2.0 * sigmoid(z[i]))
    }

    /// dφ_i/dz_i, the diagonal of the transform Jacobian.
    pub fn jacobian_diag(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            let s = sigmoid(z[i]);
            self.width[i] * s * (1.0 - s)
        })
    }
}

/// The unconstrained target: likelihood in φ plus the transform's
/// log-Jacobian (the boxed flat prior).
struct PosteriorTarget<'a, S: OdeSystem> {
    sys: &'a S,
    obs: &'a ObservationSummary,
    chol: Cholesky<f64, Dyn>,
    transform: &'a BoxTransform,
    cfg: &'a SolverConfig,
}

impl<S: OdeSystem + Sync> Target for PosteriorTarget<'_, S> {
    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn logp_grad(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>), BayesError> {
        let phi = self.transform.to_box(z);
        let (logp, grad_phi) =
            log_posterior_prepared(&phi, self.obs, &self.chol, self.sys, self.cfg)?;
        let lp = logp + self.transform.log_jacobian(z);
        let jd = self.transform.jacobian_diag(z);
        let grad = DVector::from_fn(self.dim(), |i, _| jd[i] * grad_phi[i])
            + self.transform.grad_log_jacobian(z);
        Ok((lp, grad))
    }
}

/// Sample a target with NUTS. The seed fully determines the chain.
pub fn nuts_sample(
    target: &dyn Target,
    init: &DVector<f64>,
    opts: &NutsOptions,
    seed: u64,
) -> Result<PosteriorChain, BayesError> {
    let rng = stream_rng(seed, STREAM_CHAIN_BASE);
    nuts::sample_chain(target, init, opts, rng, seed, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub n_chains: usize,
    pub delta_acc: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            n_warmup: 500,
            n_draws: 1000,
            n_chains: 4,
            delta_acc: 0.8,
            max_tree_depth: 10,
            seed: 0,
        }
    }
}

/// The full pipeline: truth ensemble → observation summary → posterior
/// chains, with draws returned both raw (in φ₀) and normalized as
/// (φ₀ − μ₀) ⊘ s₀.
pub fn run_inference<S: OdeSystem + Sync>(
    spec: &TruthSpec,
    sys: &S,
    t_obs: f64,
    mode: LikelihoodMode,
    settings: &SamplerSettings,
    cfg: &SolverConfig,
) -> Result<(Vec<PosteriorChain>, ObservationSummary), BayesError> {
    if settings.n_chains == 0 {
        return Err(BayesError::InvalidSettings("need at least one chain".into()));
    }
    let ensemble = sample_truth(spec, settings.seed);
    let obs = generate_observation(&ensemble, sys, t_obs, mode, cfg)?;
    let transform = BoxTransform::from_spec(spec);
    let chol = factor_covariance(&obs)?;
    let target = PosteriorTarget {
        sys,
        obs: &obs,
        chol,
        transform: &transform,
        cfg,
    };
    let opts = NutsOptions {
        n_warmup: settings.n_warmup,
        n_draws: settings.n_draws,
        delta_acc: settings.delta_acc,
        max_tree_depth: settings.max_tree_depth,
    };

    let mut chains: Vec<PosteriorChain> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..settings.n_chains)
            .map(|c| {
                let target = &target;
                let opts = &opts;
                scope.spawn(move || {
                    let mut rng = stream_rng(settings.seed, STREAM_CHAIN_BASE + c as u64);
                    // Stan-style init: uniform in the central region of
                    // z-space, drawn from the chain's own stream.
                    let init =
                        DVector::from_fn(target.dim(), |_, _| rng.gen_range(-2.0..2.0));
                    nuts::sample_chain(target, &init, opts, rng, settings.seed, c)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;

    // Map draws back to the box and attach normalized coordinates.
    for chain in &mut chains {
        let n = chain.draws.nrows();
        let mut phi = DMatrix::zeros(n, spec.dim());
        let mut norm = DMatrix::zeros(n, spec.dim());
        for r in 0..n {
            let z = chain.draws.row(r).transpose();
            let p = transform.to_box(&z);
            for c in 0..spec.dim() {
                phi[(r, c)] = p[c];
                norm[(r, c)] = (p[c] - spec.mu0[c]) / spec.s0[c];
            }
        }
        chain.draws = phi;
        chain.normalized_draws = Some(norm);
    }
    Ok((chains, obs))
}
