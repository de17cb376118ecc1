//! Convergence diagnostics over a set of chains: split-half potential
//! scale reduction and autocorrelation-based effective sample size.

use super::nuts::PosteriorChain;
use nalgebra::DVector;

/// Split each chain in half and collect per-sequence views of one
/// parameter column. Odd trailing draws are dropped.
fn split_sequences(chains: &[PosteriorChain], param: usize) -> Vec<Vec<f64>> {
    let mut seqs = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let n = chain.draws.nrows();
        let half = n / 2;
        let col: Vec<f64> = (0..n).map(|r| chain.draws[(r, param)]).collect();
        seqs.push(col[..half].to_vec());
        seqs.push(col[half..2 * half].to_vec());
    }
    seqs
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Within-variance W, between-variance B, and the pooled variance
/// estimate var⁺ = ((n−1)W + B)/n over split sequences of length n.
fn pooled_variances(seqs: &[Vec<f64>]) -> (f64, f64, f64) {
    let n = seqs[0].len() as f64;
    let w = mean(&seqs.iter().map(|s| sample_var(s)).collect::<Vec<_>>());
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let b = n * sample_var(&means);
    let var_plus = ((n - 1.0) * w + b) / n;
    (w, b, var_plus)
}

/// Split-half potential scale reduction factor, one value per parameter.
/// Values near 1 indicate the chains agree; > 1.05 is suspect.
pub fn split_rhat(chains: &[PosteriorChain]) -> DVector<f64> {
    assert!(!chains.is_empty(), "need at least one chain");
    let dim = chains[0].draws.ncols();
    DVector::from_fn(dim, |p, _| {
        let seqs = split_sequences(chains, p);
        if seqs[0].len() < 2 {
            return f64::NAN;
        }
        let (w, _b, var_plus) = pooled_variances(&seqs);
        if w <= 0.0 {
            // Constant chains: identical constants are converged,
            // differing constants never mix.
            let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
            let spread = means.iter().cloned().fold(f64::NAN, f64::max)
                - means.iter().cloned().fold(f64::NAN, f64::min);
            return if spread == 0.0 { 1.0 } else { f64::INFINITY };
        }
        (var_plus / w).sqrt()
    })
}

/// Autocovariance at lag t with the biased 1/n normalization, which
/// keeps the spectral estimate positive semidefinite.
fn autocov(xs: &[f64], t: usize) -> f64 {
    let n = xs.len();
    let m = mean(xs);
    (0..n - t).map(|i| (xs[i] - m) * (xs[i + t] - m)).sum::<f64>() / n as f64
}

/// Effective sample size per parameter across all chains, from combined
/// autocorrelations with paired-lag truncation: sum ρ̂ over pairs
/// (ρ_{2k} + ρ_{2k+1}) while the pair sums stay positive, enforcing
/// monotone non-increase.
pub fn ess(chains: &[PosteriorChain]) -> DVector<f64> {
    assert!(!chains.is_empty(), "need at least one chain");
    let dim = chains[0].draws.ncols();
    DVector::from_fn(dim, |p, _| {
        let seqs = split_sequences(chains, p);
        let n = seqs[0].len();
        if n < 4 {
            return f64::NAN;
        }
        let m_seq = seqs.len() as f64;
        let (w, _b, var_plus) = pooled_variances(&seqs);
        if var_plus <= 0.0 || w <= 0.0 {
            return f64::NAN;
        }
        let rho = |t: usize| -> f64 {
            let mean_acov = mean(&seqs.iter().map(|s| autocov(s, t)).collect::<Vec<_>>());
            1.0 - (w - mean_acov) / var_plus
        };
        // Geyer pairs Γ_k = ρ_{2k} + ρ_{2k+1}: sum while positive,
        // forced monotone non-increasing; τ = −1 + 2 Σ Γ.
        let mut pair_sum = 0.0;
        let mut prev_pair = f64::INFINITY;
        let mut t = 0;
        while t + 1 < n {
            let pair = rho(t) + rho(t + 1);
            if pair <= 0.0 {
                break;
            }
            let clipped = pair.min(prev_pair);
            pair_sum += clipped;
            prev_pair = clipped;
            t += 2;
        }
        let tau = (-1.0 + 2.0 * pair_sum).max(1.0 / (m_seq * n as f64));
        m_seq * n as f64 / tau
    })
}
