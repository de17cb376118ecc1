//! Mass-action rate evaluation in SI units (kmol, m³, J/kmol), with
//! reverse rates from equilibrium constants and Lindemann–Troe falloff.

use super::{nasa7_dimensionless, ThermoError};
use crate::mechanism::{Mechanism, Nasa7, RateKind, GAS_CONSTANT, P_STANDARD};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
struct Arr {
    a: f64,
    b: f64,
    ea: f64,
}

impl Arr {
    /// k = a·T^b·exp(−Ea/RuT), evaluated as a single exponential.
    #[inline]
    fn k(&self, ln_t: f64, inv_rt: f64) -> f64 {
        self.a * (self.b * ln_t - self.ea * inv_rt).exp()
    }

    fn from_si(raw: crate::mechanism::Arrhenius, conc_si: f64, order: f64) -> Arr {
        Arr {
            a: raw.a * conc_si.powf(order - 1.0),
            b: raw.b,
            ea: raw.ea,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TroeParams {
    a: f64,
    t3: f64,
    t1: f64,
    t2: Option<f64>,
}

#[derive(Debug, Clone)]
enum Kind {
    Elementary,
    ThreeBody { eff: Vec<(usize, f64)> },
    Falloff { low: Arr, troe: TroeParams, eff: Vec<(usize, f64)> },
}

#[derive(Debug, Clone)]
struct Rxn {
    equation: String,
    reactants: Vec<(usize, f64)>,
    products: Vec<(usize, f64)>,
    net: Vec<(usize, f64)>,
    reversible: bool,
    dnu: f64,
    high: Arr,
    kind: Kind,
}

/// Precomputed SI-unit kinetics for one mechanism.
#[derive(Debug, Clone)]
pub(crate) struct Kinetics {
    thermo: Vec<Nasa7>,
    rxns: Vec<Rxn>,
    n_species: usize,
}

impl Kinetics {
    pub fn new(mech: &Mechanism) -> Kinetics {
        let conc_si = mech.units.concentration_si();
        let rxns = mech
            .reactions
            .iter()
            .map(|r| {
                let order = r.forward_order();
                let mut net: Vec<(usize, f64)> = Vec::new();
                for &(i, _) in r.reactants.iter().chain(&r.products) {
                    if !net.iter().any(|&(j, _)| j == i) {
                        let c = r.net_coefficient(i);
                        if c != 0.0 {
                            net.push((i, c));
                        }
                    }
                }
                let (high, kind) = match &r.kind {
                    RateKind::Elementary => {
                        (Arr::from_si(r.rate, conc_si, order), Kind::Elementary)
                    }
                    RateKind::ThreeBody { efficiencies } => (
                        Arr::from_si(r.rate, conc_si, order + 1.0),
                        Kind::ThreeBody {
                            eff: efficiencies.clone(),
                        },
                    ),
                    RateKind::Falloff {
                        low,
                        troe,
                        efficiencies,
                    } => (
                        Arr::from_si(r.rate, conc_si, order),
                        Kind::Falloff {
                            low: Arr::from_si(*low, conc_si, order + 1.0),
                            troe: TroeParams {
                                a: troe.a,
                                t3: troe.t3,
                                t1: troe.t1,
                                t2: troe.t2,
                            },
                            eff: efficiencies.clone(),
                        },
                    ),
                };
                Rxn {
                    equation: r.equation.clone(),
                    reactants: r.reactants.clone(),
                    products: r.products.clone(),
                    net,
                    reversible: r.reversible,
                    dnu: r.delta_moles(),
                    high,
                    kind,
                }
            })
            .collect();
        Kinetics {
            thermo: mech.species.iter().map(|s| s.thermo.clone()).collect(),
            rxns,
            n_species: mech.n_species(),
        }
    }

    /// Net rate of progress of every reaction, kmol/(m³·s).
    pub fn rates_of_progress(
        &self,
        t: f64,
        conc: &DVector<f64>,
    ) -> Result<DVector<f64>, ThermoError> {
        let ln_t = t.ln();
        let inv_rt = 1.0 / (GAS_CONSTANT * t);
        // ln of the standard-state concentration P°/RuT for Kp -> Kc.
        let ln_c0 = (P_STANDARD * inv_rt).ln();
        let g_rt: Vec<f64> = self
            .thermo
            .iter()
            .map(|n| {
                let (_, h_rt, s_r) = nasa7_dimensionless(n, t);
                h_rt - s_r
            })
            .collect();

        let mut q = DVector::zeros(self.rxns.len());
        for (j, rxn) in self.rxns.iter().enumerate() {
            let (k_fwd, m_factor) = match &rxn.kind {
                Kind::Elementary => (rxn.high.k(ln_t, inv_rt), 1.0),
                Kind::ThreeBody { eff } => {
                    (rxn.high.k(ln_t, inv_rt), third_body(conc, eff))
                }
                Kind::Falloff { low, troe, eff } => {
                    let k_inf = rxn.high.k(ln_t, inv_rt);
                    let k0 = low.k(ln_t, inv_rt);
                    (falloff_rate(k_inf, k0, third_body(conc, eff), troe, t), 1.0)
                }
            };
            let qf = k_fwd * product_powers(conc, &rxn.reactants);
            let qr = if rxn.reversible {
                let dg_rt: f64 = rxn.net.iter().map(|&(i, nu)| nu * g_rt[i]).sum();
                // ln Kc = −ΔG°/RT + Δν·ln(c°), clamped against overflow.
                let ln_kc = (-dg_rt + rxn.dnu * ln_c0).clamp(-600.0, 600.0);
                k_fwd * (-ln_kc).exp() * product_powers(conc, &rxn.products)
            } else {
                0.0
            };
            let rate = m_factor * (qf - qr);
            if !rate.is_finite() {
                return Err(ThermoError::RateOverflow {
                    equation: rxn.equation.clone(),
                    t,
                });
            }
            q[j] = rate;
        }
        Ok(q)
    }

    /// Net molar production rate of every species, kmol/(m³·s).
    pub fn production_rates(
        &self,
        t: f64,
        conc: &DVector<f64>,
    ) -> Result<DVector<f64>, ThermoError> {
        let q = self.rates_of_progress(t, conc)?;
        let mut wdot = DVector::zeros(self.n_species);
        for (j, rxn) in self.rxns.iter().enumerate() {
            for &(i, nu) in &rxn.net {
                wdot[i] += nu * q[j];
            }
        }
        Ok(wdot)
    }
}

/// Π c_i^ν for one side of a reaction. Integer exponents are evaluated
/// with powi so tiny negative concentrations stay smooth; fractional
/// orders clip at zero.
#[inline]
fn product_powers(conc: &DVector<f64>, side: &[(usize, f64)]) -> f64 {
    let mut p = 1.0;
    for &(i, nu) in side {
        let c = conc[i];
        p *= if nu == 1.0 {
            c
        } else if nu == 2.0 {
            c * c
        } else if nu.fract() == 0.0 {
            c.powi(nu as i32)
        } else {
            c.max(0.0).powf(nu)
        };
    }
    p
}

/// Effective third-body concentration Σ ε_i c_i (unlisted ε = 1).
#[inline]
fn third_body(conc: &DVector<f64>, eff: &[(usize, f64)]) -> f64 {
    let mut m: f64 = conc.iter().sum();
    for &(i, e) in eff {
        m += (e - 1.0) * conc[i];
    }
    m
}

/// Troe-blended falloff rate constant.
fn falloff_rate(k_inf: f64, k0: f64, m: f64, troe: &TroeParams, t: f64) -> f64 {
    if k_inf <= 0.0 {
        return 0.0;
    }
    let pr = k0 * m / k_inf;
    if !(pr > 1e-300) {
        return 0.0;
    }
    let f_cent = (1.0 - troe.a) * (-t / troe.t3).exp()
        + troe.a * (-t / troe.t1).exp()
        + troe.t2.map_or(0.0, |t2| (-t2 / t).exp());
    let lfc = f_cent.max(1e-300).log10();
    let c = -0.4 - 0.67 * lfc;
    let n = 0.75 - 1.27 * lfc;
    let x = pr.log10() + c;
    let f1 = x / (n - 0.14 * x);
    let f = 10f64.powf(lfc / (1.0 + f1 * f1));
    k_inf * (pr / (1.0 + pr)) * f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::Mechanism;

    #[test]
    fn irreversible_reactions_have_no_reverse_path() {
        // All bundled reactions are reversible; build a tiny irreversible
        // variant and check the reverse flux is exactly zero.
        let mech = Mechanism::bundled_h2o2();
        let kin = Kinetics::new(&mech);
        let t = 1500.0;
        let n = mech.n_species();
        // Product-only composition: forward fluxes vanish, so any
        // nonzero rate is reverse flux.
        let mut conc = DVector::zeros(n);
        conc[mech.species_index("H2O").unwrap()] = 1e-2;
        conc[mech.species_index("N2").unwrap()] = 1e-2;
        let q = kin.rates_of_progress(t, &conc).unwrap();
        // H2O + M <=> H + OH + M runs backward from pure products.
        let j = mech
            .reactions
            .iter()
            .position(|r| r.equation == "H + OH + M <=> H2O + M")
            .unwrap();
        assert!(q[j] < 0.0, "reverse flux should be negative, got {}", q[j]);
    }

    #[test]
    fn rate_overflow_is_reported_not_propagated() {
        let mech = Mechanism::bundled_h2o2();
        let kin = Kinetics::new(&mech);
        let conc = DVector::from_element(mech.n_species(), f64::MAX / 4.0);
        let e = kin.rates_of_progress(1000.0, &conc).unwrap_err();
        assert!(matches!(e, ThermoError::RateOverflow { .. }));
    }

    #[test]
    fn equilibrium_constant_consistency_detailed_balance() {
        // At the equilibrium composition of an isolated reversible
        // reaction, qf = qr. Build that composition from ln Kc directly:
        // for O + H2 <=> H + OH pick concentrations with
        // [H][OH]/([O][H2]) = Kc and check q ~ 0.
        let mech = Mechanism::bundled_h2o2();
        let kin = Kinetics::new(&mech);
        let t = 1800.0;
        let g = |name: &str| {
            let sp = &mech.species[mech.species_index(name).unwrap()];
            let (_, h, s) = super::super::nasa7_dimensionless(&sp.thermo, t);
            h - s
        };
        let ln_kc = -(g("H") + g("OH") - g("O") - g("H2")); // Δν = 0
        let kc = ln_kc.exp();
        let n = mech.n_species();
        let mut conc = DVector::zeros(n);
        let s = |name: &str| mech.species_index(name).unwrap();
        conc[s("O")] = 1e-4;
        conc[s("H2")] = 1e-3;
        conc[s("H")] = 1e-4;
        conc[s("OH")] = kc * conc[s("O")] * conc[s("H2")] / conc[s("H")];
        let q = kin.rates_of_progress(t, &conc).unwrap();
        let j = mech
            .reactions
            .iter()
            .position(|r| r.equation == "O + H2 <=> H + OH")
            .unwrap();
        // Compare against the one-way flux scale.
        let scale = conc[s("O")] * conc[s("H2")];
        assert!(
            q[j].abs() < 1e-10 * scale.max(1.0),
            "detailed balance violated: q = {:e}",
            q[j]
        );
    }
}
