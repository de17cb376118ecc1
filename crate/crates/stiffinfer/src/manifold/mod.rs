//! Information-loss diagnostics: Jacobian eigen-analysis in decoupled
//! coordinates, conserved/reaction subspace bases, sensitivity-matrix
//! block projections, numerical rank tracking, and detection of the
//! times at which singular values of the reaction block fall below a
//! threshold.

use crate::mechanism::ElementMatrix;
use crate::stiffode::{OdeError, SensitivityTrajectory};
use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Eigenvalues with |λ| below this fraction of the dominant eigenvalue
/// count as the conserved (zero) cluster.
pub const ZERO_EIG_REL: f64 = 1e-6;
/// Default singular-value cutoff for numerical-rank decisions.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-6;
/// Eigenvector condition number beyond which results are flagged as
/// near-defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("conservation matrix is rank deficient: rank {rank} of {expected} columns")]
    RankDeficient { rank: usize, expected: usize },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Left eigen-decomposition of a reactor Jacobian, ordered by |Re(λ)|
/// descending so conserved (zero) modes come last.
#[derive(Debug, Clone)]
pub struct EigenAnalysis {
    pub lambda: Vec<Complex<f64>>,
    /// Rows are unit-norm left eigenvectors: L[k] J = λ_k L[k].
    pub l: DMatrix<Complex<f64>>,
    /// |Re λ₁| / |Re λ_slowest-nonzero|.
    pub stiffness_ratio: f64,
    /// Number of eigenvalues in the zero cluster.
    pub n_zero: usize,
    /// δψ = L δφ for the supplied perturbation, if any.
    pub psi_perturbation: Option<DVector<Complex<f64>>>,
    /// Condition number of the eigenvector matrix (via SVD).
    pub eigvec_condition: f64,
    /// Set when `eigvec_condition` exceeds `DEFECTIVE_CONDITION`;
    /// results are still reported.
    pub defective_warning: bool,
}

/// Orthonormal bases for the conserved subspace (columns of Q span
/// col(C)) and its complement, the reaction subspace (columns of W).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub q: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Conserved,
    Reaction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentEvent {
    pub block: BlockKind,
    pub old_rank: usize,
    pub new_rank: usize,
    pub time: f64,
}

/// Singular-value and rank history of the sensitivity blocks on a
/// log-spaced grid, plus refined threshold-crossing times.
#[derive(Debug, Clone)]
pub struct RankReport {
    pub threshold: f64,
    pub times: Vec<f64>,
    pub qaq_sigmas: Vec<Vec<f64>>,
    pub waw_sigmas: Vec<Vec<f64>>,
    pub waq_norms: Vec<f64>,
    pub qaq_ranks: Vec<usize>,
    pub waw_ranks: Vec<usize>,
    pub rank_descent_times: Vec<DescentEvent>,
}

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Eigen-decompose a Jacobian into left eigenvectors via shifted inverse
/// iteration on Jᵀ, with Gram–Schmidt inside eigenvalue clusters so
/// repeated (conserved) eigenvalues get independent vectors. The matrix
/// is never symmetrized.
pub fn eigen_analysis(j: &DMatrix<f64>, dphi0: Option<&DVector<f64>>) -> EigenAnalysis {
    let n = j.nrows();
    assert_eq!(n, j.ncols(), "Jacobian must be square");
    let mut lambda: Vec<Complex<f64>> = j.complex_eigenvalues().iter().copied().collect();
    lambda.sort_by(|a, b| {
        (b.re.abs(), b.im.abs(), b.im)
            .partial_cmp(&(a.re.abs(), a.im.abs(), a.im))
            .unwrap()
    });

    let scale = j.amax().max(f64::MIN_POSITIVE);
    let jt: DMatrix<Complex<f64>> = DMatrix::from_fn(n, n, |r, c| Complex::new(j[(c, r)], 0.0));

    let mut l = DMatrix::<Complex<f64>>::zeros(n, n);
    let mut rng_state = 0x1234_5678_9ABC_DEF0u64;
    for k in 0..n {
        let lam = lambda[k];
        // Members of this eigenvalue's cluster computed so far.
        let ctol = 1e-8 * scale + 1e-8 * lam.norm();
        let cluster: Vec<usize> = (0..k)
            .filter(|&m| (lambda[m] - lam).norm() <= ctol)
            .collect();

        let mut shifted = jt.clone();
        for i in 0..n {
            shifted[(i, i)] -= lam;
        }
        let mut lu = shifted.clone().lu();
        let mut v = DVector::from_fn(n, |_, _| {
            Complex::new(splitmix(&mut rng_state), splitmix(&mut rng_state))
        });
        let deflate = |v: &mut DVector<Complex<f64>>, l: &DMatrix<Complex<f64>>| {
            for &m in &cluster {
                let proj: Complex<f64> = (0..n).map(|i| l[(m, i)].conj() * v[i]).sum();
                for i in 0..n {
                    v[i] -= proj * l[(m, i)];
                }
            }
        };
        deflate(&mut v, &l);
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(next) => v = next,
                None => {
                    // Shift sat exactly on the eigenvalue; nudge it off.
                    let mut s2 = jt.clone();
                    let nudge = lam + Complex::new(1e-12 * scale, 1e-12 * scale);
                    for i in 0..n {
                        s2[(i, i)] -= nudge;
                    }
                    lu = s2.lu();
                    if let Some(next) = lu.solve(&v) {
                        v = next;
                    }
                }
            }
            // Deflating after each solve keeps cluster members from being
            // re-amplified out of the rounding floor.
            deflate(&mut v, &l);
            let norm = v.norm();
            if norm > 0.0 {
                v /= Complex::new(norm, 0.0);
            }
        }
        // Deterministic phase: largest entry made real and positive.
        let mut imax = 0;
        for i in 1..n {
            if v[i].norm() > v[imax].norm() {
                imax = i;
            }
        }
        if v[imax].norm() > 0.0 {
            let phase = v[imax].conj() / Complex::new(v[imax].norm(), 0.0);
            v *= phase;
        }
        l.row_mut(k).copy_from(&v.transpose());
    }

    let lam1 = lambda[0].norm();
    let zero_cut = ZERO_EIG_REL * lam1;
    let n_zero = if lam1 == 0.0 {
        n
    } else {
        lambda.iter().filter(|x| x.norm() < zero_cut).count()
    };
    let stiffness_ratio = if n_zero >= n || lam1 == 0.0 {
        1.0
    } else {
        let slowest = lambda[n - n_zero - 1].re.abs();
        if slowest > 0.0 {
            lambda[0].re.abs() / slowest
        } else {
            f64::INFINITY
        }
    };

    let eigvec_condition = condition_of_complex(&l);
    let psi_perturbation =
        dphi0.map(|d| &l * DVector::from_fn(n, |i, _| Complex::new(d[i], 0.0)));

    EigenAnalysis {
        lambda,
        l,
        stiffness_ratio,
        n_zero,
        psi_perturbation,
        eigvec_condition,
        defective_warning: eigvec_condition > DEFECTIVE_CONDITION,
    }
}

/// Condition number via the real embedding [Re −Im; Im Re], which has
/// the same singular values (doubled).
fn condition_of_complex(m: &DMatrix<Complex<f64>>) -> f64 {
    let n = m.nrows();
    let mut e = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            e[(r, c)] = m[(r, c)].re;
            e[(r, c + n)] = -m[(r, c)].im;
            e[(r + n, c)] = m[(r, c)].im;
            e[(r + n, c + n)] = m[(r, c)].re;
        }
    }
    let sv = e.svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Build orthonormal bases: Q spanning the conservation columns and W
/// spanning their orthogonal complement.
pub fn conserved_basis(c: &ElementMatrix) -> Result<SubspaceBasis, ManifoldError> {
    let n = c.c.nrows();
    let ne = c.c.ncols();
    // Modified Gram–Schmidt with re-orthogonalization on C's columns.
    let mut q_cols: Vec<DVector<f64>> = Vec::with_capacity(ne);
    for j in 0..ne {
        let mut v: DVector<f64> = c.c.column(j).into();
        let col_scale = v.norm();
        for _ in 0..2 {
            for qc in &q_cols {
                let p = qc.dot(&v);
                v -= qc * p;
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * col_scale.max(1.0) {
            return Err(ManifoldError::RankDeficient {
                rank: q_cols.len(),
                expected: ne,
            });
        }
        q_cols.push(v / norm);
    }
    // Complete with standard basis vectors for the reaction space.
    let mut w_cols: Vec<DVector<f64>> = Vec::with_capacity(n - ne);
    for j in 0..n {
        if w_cols.len() == n - ne {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            for qc in &q_cols {
                let p = qc.dot(&v);
                v -= qc * p;
            }
            for wc in &w_cols {
                let p = wc.dot(&v);
                v -= wc * p;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            w_cols.push(v / norm);
        }
    }
    assert_eq!(w_cols.len(), n - ne, "complement basis incomplete");
    Ok(SubspaceBasis {
        q: DMatrix::from_columns(&q_cols),
        w: DMatrix::from_columns(&w_cols),
    })
}

impl SubspaceBasis {
    pub fn n_species(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_conserved(&self) -> usize {
        self.q.ncols()
    }

    pub fn n_reaction(&self) -> usize {
        self.w.ncols()
    }
}

/// The four blocks of G^T A G with G = [Q W]:
/// (Q^T A Q, Q^T A W, W^T A Q, W^T A W).
pub fn subspace_blocks(
    a: &DMatrix<f64>,
    basis: &SubspaceBasis,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let qt = basis.q.transpose();
    let wt = basis.w.transpose();
    let aq = a * &basis.q;
    let aw = a * &basis.w;
    (&qt * &aq, &qt * &aw, &wt * &aq, &wt * &aw)
}

/// Singular values (descending) and the count above an absolute cutoff.
pub fn numerical_rank(m: &DMatrix<f64>, threshold: f64) -> (usize, Vec<f64>) {
    assert!(threshold > 0.0, "threshold must be positive");
    let mut sv: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    (rank, sv)
}

/// Points per decade of the internal analysis grid.
const GRID_PER_DECADE: f64 = 20.0;
/// Crossing times are refined to this many decades.
const REFINE_DECADES: f64 = 0.05;

/// Track block singular values over a log-spaced time grid spanning the
/// trajectory, then refine each singular value's first crossing below
/// `threshold` by bisection in log time.
pub fn rank_descent_times(
    sens: &SensitivityTrajectory,
    basis: &SubspaceBasis,
    threshold: f64,
) -> Result<RankReport, ManifoldError> {
    assert!(threshold > 0.0, "threshold must be positive");
    let t_lo = sens
        .base
        .times
        .iter()
        .copied()
        .find(|&t| t > 0.0)
        .unwrap_or(sens.base.t_end);
    let t_hi = sens.base.t_end;
    let decades = (t_hi / t_lo).log10().max(0.0);
    let n_grid = (decades * GRID_PER_DECADE).ceil() as usize + 1;
    let times: Vec<f64> = (0..n_grid)
        .map(|i| t_lo * 10f64.powf(decades * i as f64 / (n_grid - 1).max(1) as f64))
        .collect();

    let blocks_at = |t: f64| -> Result<(Vec<f64>, Vec<f64>, f64), ManifoldError> {
        let (_, a) = sens.evaluate_at(t)?;
        let (qaq, _, waq, waw) = subspace_blocks(&a, basis);
        let (_, qs) = numerical_rank(&qaq, threshold);
        let (_, ws) = numerical_rank(&waw, threshold);
        let waq_norm = numerical_rank(&waq, threshold).1.first().copied().unwrap_or(0.0);
        Ok((qs, ws, waq_norm))
    };

    let mut qaq_sigmas = Vec::with_capacity(times.len());
    let mut waw_sigmas = Vec::with_capacity(times.len());
    let mut waq_norms = Vec::with_capacity(times.len());
    for &t in &times {
        let (qs, ws, wq) = blocks_at(t)?;
        qaq_sigmas.push(qs);
        waw_sigmas.push(ws);
        waq_norms.push(wq);
    }
    let count_rank =
        |sv: &Vec<f64>| -> usize { sv.iter().filter(|&&s| s > threshold).count() };
    let qaq_ranks: Vec<usize> = qaq_sigmas.iter().map(count_rank).collect();
    let waw_ranks: Vec<usize> = waw_sigmas.iter().map(count_rank).collect();

    let mut rank_descent_times = Vec::new();
    for (block, sigmas) in [
        (BlockKind::Conserved, &qaq_sigmas),
        (BlockKind::Reaction, &waw_sigmas),
    ] {
        let nsig = sigmas[0].len();
        for k in 0..nsig {
            if sigmas[0][k] <= threshold {
                continue; // already below at the window start
            }
            let Some(i) = (1..times.len()).find(|&i| sigmas[i][k] <= threshold) else {
                continue; // never crosses in the window
            };
            // Bisect in log time to the reporting resolution.
            let mut lo = times[i - 1];
            let mut hi = times[i];
            while (hi / lo).log10() > REFINE_DECADES {
                let mid = (lo * hi).sqrt();
                let (qs, ws, _) = blocks_at(mid)?;
                let s = match block {
                    BlockKind::Conserved => qs[k],
                    BlockKind::Reaction => ws[k],
                };
                if s <= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            rank_descent_times.push(DescentEvent {
                block,
                old_rank: k + 1,
                new_rank: k,
                time: (lo * hi).sqrt(),
            });
        }
    }
    rank_descent_times.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());

    Ok(RankReport {
        threshold,
        times,
        qaq_sigmas,
        waw_sigmas,
        waq_norms,
        qaq_ranks,
        waw_ranks,
        rank_descent_times,
    })
}
