//! Self-contained No-U-Turn Sampler: multiplicative tree doubling with
//! multinomial state selection, position-difference U-turn termination,
//! and dual-averaging step-size adaptation during warmup.

use super::BayesError;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Energy error beyond which a trajectory is flagged divergent.
pub const DIVERGENCE_ENERGY: f64 = 1000.0;

/// A log density with gradient, defined on an unconstrained space.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn logp_grad(&self, z: &DVector<f64>) -> Result<(f64, DVector<f64>), BayesError>;
}

#[derive(Debug, Clone)]
pub struct NutsOptions {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub delta_acc: f64,
    pub max_tree_depth: usize,
}

impl Default for NutsOptions {
    fn default() -> Self {
        NutsOptions {
            n_warmup: 500,
            n_draws: 1000,
            delta_acc: 0.8,
            max_tree_depth: 10,
        }
    }
}

/// One sampled chain with per-draw diagnostics.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    /// Post-warmup draws, one row per draw.
    pub draws: DMatrix<f64>,
    /// Target log density at each draw (sampling space).
    pub log_densities: Vec<f64>,
    /// Doublings completed per draw.
    pub tree_depths: Vec<usize>,
    pub divergent: Vec<bool>,
    /// Mean leapfrog acceptance statistic per draw.
    pub accept_stats: Vec<f64>,
    /// Step size after dual-averaging warmup.
    pub step_size: f64,
    pub seed: u64,
    pub chain_id: usize,
    /// Draws mapped back to the model's natural coordinates and
    /// normalized as (φ₀ − μ₀) ⊘ s₀; filled by the inference pipeline.
    pub normalized_draws: Option<DMatrix<f64>>,
}

impl PosteriorChain {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn divergence_fraction(&self) -> f64 {
        if self.divergent.is_empty() {
            return 0.0;
        }
        self.divergent.iter().filter(|&&d| d).count() as f64 / self.divergent.len() as f64
    }

    /// More than 5% divergent draws marks the chain unreliable.
    pub fn flagged(&self) -> bool {
        self.divergence_fraction() > 0.05
    }

    pub fn mean_accept(&self) -> f64 {
        if self.accept_stats.is_empty() {
            return f64::NAN;
        }
        self.accept_stats.iter().sum::<f64>() / self.accept_stats.len() as f64
    }
}

/// One phase-space point with its cached density and gradient.
#[derive(Clone)]
struct Leaf {
    z: DVector<f64>,
    p: DVector<f64>,
    grad: DVector<f64>,
    logp: f64,
}

impl Leaf {
    fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * self.p.norm_squared()
    }
}

/// A (sub)tree built by recursive doubling. Weights are log-relative to
/// the initial energy, so the root state has log weight zero.
struct Tree {
    minus: Leaf,
    plus: Leaf,
    prop_z: DVector<f64>,
    prop_logp: f64,
    prop_grad: DVector<f64>,
    log_w: f64,
    alpha: f64,
    n_alpha: f64,
    turning: bool,
    diverged: bool,
}

fn leapfrog(target: &dyn Target, from: &Leaf, eps: f64) -> Option<Leaf> {
    let mut p = &from.p + 0.5 * eps * &from.grad;
    let z = &from.z + eps * &p;
    match target.logp_grad(&z) {
        Ok((logp, grad)) if logp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
            p += 0.5 * eps * &grad;
            Some(Leaf { z, p, grad, logp })
        }
        _ => None,
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn uturn(minus: &Leaf, plus: &Leaf) -> bool {
    let dz = &plus.z - &minus.z;
    dz.dot(&minus.p) < 0.0 || dz.dot(&plus.p) < 0.0
}

fn build_tree(
    target: &dyn Target,
    from: &Leaf,
    eps: f64,
    depth: usize,
    h0: f64,
    rng: &mut ChaCha8Rng,
) -> Tree {
    if depth == 0 {
        return match leapfrog(target, from, eps) {
            Some(leaf) => {
                let delta = leaf.hamiltonian() - h0;
                let diverged = !delta.is_finite() || delta > DIVERGENCE_ENERGY;
                Tree {
                    prop_z: leaf.z.clone(),
                    prop_logp: leaf.logp,
                    prop_grad: leaf.grad.clone(),
                    minus: leaf.clone(),
                    plus: leaf,
                    log_w: -delta,
                    alpha: (-delta).exp().min(1.0),
                    n_alpha: 1.0,
                    turning: false,
                    diverged,
                }
            }
            None => Tree {
                minus: from.clone(),
                plus: from.clone(),
                prop_z: from.z.clone(),
                prop_logp: from.logp,
                prop_grad: from.grad.clone(),
                log_w: f64::NEG_INFINITY,
                alpha: 0.0,
                n_alpha: 1.0,
                turning: false,
                diverged: true,
            },
        };
    }

    let mut inner = build_tree(target, from, eps, depth - 1, h0, rng);
    if inner.diverged || inner.turning {
        return inner;
    }
    let far = if eps > 0.0 { &inner.plus } else { &inner.minus };
    let outer = build_tree(target, far, eps, depth - 1, h0, rng);

    inner.alpha += outer.alpha;
    inner.n_alpha += outer.n_alpha;
    if outer.diverged || outer.turning {
        inner.diverged = outer.diverged;
        inner.turning = outer.turning;
        return inner;
    }

    // Multinomial selection between the halves.
    let log_w = log_add_exp(inner.log_w, outer.log_w);
    if (rng.gen::<f64>()).ln() < outer.log_w - log_w {
        inner.prop_z = outer.prop_z;
        inner.prop_logp = outer.prop_logp;
        inner.prop_grad = outer.prop_grad;
    }
    inner.log_w = log_w;
    if eps > 0.0 {
        inner.plus = outer.plus;
    } else {
        inner.minus = outer.minus;
    }
    inner.turning = uturn(&inner.minus, &inner.plus);
    inner
}

fn draw_momentum(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Heuristic initial step size: double or halve until one leapfrog step
/// crosses 50% joint-probability ratio.
fn find_reasonable_epsilon(
    target: &dyn Target,
    start: &Leaf,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut leaf = start.clone();
    leaf.p = draw_momentum(leaf.z.len(), rng);
    let h0 = leaf.hamiltonian();
    let mut eps = 1.0f64;
    let ratio = |eps: f64| -> f64 {
        match leapfrog(target, &leaf, eps) {
            Some(next) => (h0 - next.hamiltonian()).exp(),
            None => 0.0,
        }
    };
    let r0 = ratio(eps);
    let a = if r0 > 0.5 { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let r = ratio(eps);
        if (a * (r.max(1e-300)).ln()) <= -a * 2.0f64.ln() {
            break;
        }
        eps *= 2.0f64.powf(a);
        if !(1e-10..=1e10).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e10)
}

/// Sample one chain. `rng` must be dedicated to this chain; the caller
/// controls stream separation.
pub(super) fn sample_chain(
    target: &dyn Target,
    init: &DVector<f64>,
    opts: &NutsOptions,
    mut rng: ChaCha8Rng,
    seed: u64,
    chain_id: usize,
) -> Result<PosteriorChain, BayesError> {
    if opts.max_tree_depth == 0 || opts.n_draws == 0 {
        return Err(BayesError::InvalidSettings(
            "max_tree_depth and n_draws must be positive".into(),
        ));
    }
    if !(0.0 < opts.delta_acc && opts.delta_acc < 1.0) {
        return Err(BayesError::InvalidSettings(format!(
            "delta_acc must lie in (0, 1), got {}",
            opts.delta_acc
        )));
    }
    let dim = target.dim();
    let (logp, grad) = target.logp_grad(init)?;
    if !logp.is_finite() {
        return Err(BayesError::InitFailure { logp });
    }
    let mut current = Leaf {
        z: init.clone(),
        p: DVector::zeros(dim),
        grad,
        logp,
    };

    // Dual averaging state.
    let eps0 = find_reasonable_epsilon(target, &current, &mut rng);
    let mu = (10.0 * eps0).ln();
    let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
    let mut log_eps = eps0.ln();
    let mut log_eps_bar = 0.0f64;
    let mut h_bar = 0.0f64;

    let total = opts.n_warmup + opts.n_draws;
    let mut draws = DMatrix::zeros(opts.n_draws, dim);
    let mut log_densities = Vec::with_capacity(opts.n_draws);
    let mut tree_depths = Vec::with_capacity(opts.n_draws);
    let mut divergent_flags = Vec::with_capacity(opts.n_draws);
    let mut accept_stats = Vec::with_capacity(opts.n_draws);
    let mut warmup_divergences = 0usize;

    for iter in 0..total {
        let eps = log_eps.exp();
        current.p = draw_momentum(dim, &mut rng);
        let h0 = current.hamiltonian();

        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut z_sel = current.z.clone();
        let mut logp_sel = current.logp;
        let mut grad_sel = current.grad.clone();
        let mut log_w_tot = 0.0f64;
        let mut alpha_sum = 0.0f64;
        let mut n_alpha = 0.0f64;
        let mut divergent = false;
        let mut depth_reached = 0usize;

        for depth in 0..opts.max_tree_depth {
            let dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let from = if dir > 0.0 { &plus } else { &minus };
            let tree = build_tree(target, from, dir * eps, depth, h0, &mut rng);
            alpha_sum += tree.alpha;
            n_alpha += tree.n_alpha;
            if tree.diverged {
                divergent = true;
                break;
            }
            if tree.turning {
                break;
            }
            // Biased progressive selection favors the fresh half-tree.
            if (rng.gen::<f64>()).ln() < tree.log_w - log_w_tot {
                z_sel = tree.prop_z.clone();
                logp_sel = tree.prop_logp;
                grad_sel = tree.prop_grad.clone();
            }
            log_w_tot = log_add_exp(log_w_tot, tree.log_w);
            if dir > 0.0 {
                plus = tree.plus;
            } else {
                minus = tree.minus;
            }
            depth_reached = depth + 1;
            if uturn(&minus, &plus) {
                break;
            }
        }

        current = Leaf {
            z: z_sel,
            p: DVector::zeros(dim),
            grad: grad_sel,
            logp: logp_sel,
        };

        let alpha = if n_alpha > 0.0 { alpha_sum / n_alpha } else { 0.0 };
        if iter < opts.n_warmup {
            if divergent {
                warmup_divergences += 1;
            }
            let m = (iter + 1) as f64;
            let eta = 1.0 / (m + t0);
            h_bar = (1.0 - eta) * h_bar + eta * (opts.delta_acc - alpha);
            log_eps = mu - m.sqrt() / gamma * h_bar;
            let w = m.powf(-kappa);
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
            if iter + 1 == opts.n_warmup {
                if warmup_divergences == opts.n_warmup {
                    return Err(BayesError::AllDivergentWarmup);
                }
                log_eps = log_eps_bar;
            }
        } else {
            let k = iter - opts.n_warmup;
            draws.row_mut(k).copy_from(&current.z.transpose());
            log_densities.push(current.logp);
            tree_depths.push(depth_reached);
            divergent_flags.push(divergent);
            accept_stats.push(alpha);
        }
    }

    Ok(PosteriorChain {
        draws,
        log_densities,
        tree_depths,
        divergent: divergent_flags,
        accept_stats,
        step_size: log_eps.exp(),
        seed,
        chain_id,
        normalized_draws: None,
    })
}
