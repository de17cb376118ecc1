//! Thermodynamic properties, reaction rates, and reactor right-hand sides.
//!
//! Three reactor models share one interface: an adiabatic–isobaric gas
//! reactor (temperature recovered from conserved enthalpy at every
//! evaluation), an isothermal–isobaric gas reactor, and the analytic
//! Robertson system. The state vector is composition only — mass
//! fractions for the gas reactors, concentrations for Robertson — so the
//! Jacobian is square in composition space.

mod kinetics;
mod robertson;

pub use robertson::{
    robertson_eigen, robertson_jacobian, robertson_rhs, RobertsonEigen, ROBERTSON_RATES,
};

use crate::mechanism::{element_matrix, Mechanism, Nasa7, Species, GAS_CONSTANT};
use nalgebra::{DMatrix, DVector, Vector3};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Search bracket for temperature recovery, K.
pub const T_SOLVE_MIN: f64 = 200.0;
pub const T_SOLVE_MAX: f64 = 6000.0;

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("enthalpy {h0:.6e} J/kg not attainable for this composition between {lo} K and {hi} K")]
    EnthalpyOutOfRange { h0: f64, lo: f64, hi: f64 },
    #[error("non-finite rate of progress in `{equation}` at T = {t} K")]
    RateOverflow { equation: String, t: f64 },
    #[error("complex Jacobian spectrum: E^2 - 4F = {discriminant:.6e} < 0")]
    ComplexSpectrum { discriminant: f64 },
    #[error("repeated nonzero eigenvalue (E^2 = 4F); left eigenbasis undefined")]
    DegenerateSpectrum,
    #[error("non-positive mixture density: sum of phi_i/W_i is {denom:.6e}")]
    BadComposition { denom: f64 },
}

/// Dimensionless molar NASA-7 properties (cp/R, h/RT, s/R) with silent
/// extrapolation outside the fitted range.
pub(crate) fn nasa7_dimensionless(n: &Nasa7, t: f64) -> (f64, f64, f64) {
    let a = if t <= n.t_mid { &n.low } else { &n.high };
    let cp_r = a[0] + t * (a[1] + t * (a[2] + t * (a[3] + t * a[4])));
    let h_rt =
        a[0] + t * (a[1] / 2.0 + t * (a[2] / 3.0 + t * (a[3] / 4.0 + t * a[4] / 5.0))) + a[5] / t;
    let s_r =
        a[0] * t.ln() + t * (a[1] + t * (a[2] / 2.0 + t * (a[3] / 3.0 + t * a[4] / 4.0))) + a[6];
    (cp_r, h_rt, s_r)
}

/// Mass-specific heat capacity, enthalpy, and entropy of one species:
/// (J/(kg·K), J/kg, J/(kg·K)). Out-of-range temperatures extrapolate the
/// nearest polynomial and are logged, not fatal.
pub fn nasa7_properties(sp: &Species, t: f64) -> (f64, f64, f64) {
    if t < sp.thermo.t_min || t > sp.thermo.t_max {
        log::warn!(
            "extrapolating {} thermo to {t} K (fitted range {}..{} K)",
            sp.name,
            sp.thermo.t_min,
            sp.thermo.t_max
        );
    }
    let (cp_r, h_rt, s_r) = nasa7_dimensionless(&sp.thermo, t);
    let rw = GAS_CONSTANT / sp.molar_mass;
    (cp_r * rw, h_rt * rw * t, s_r * rw)
}

/// Mixture specific enthalpy, J/kg, for a raw (not necessarily
/// normalized) mass-fraction vector.
pub fn mixture_enthalpy(mech: &Mechanism, phi: &DVector<f64>, t: f64) -> f64 {
    let rt = GAS_CONSTANT * t;
    mech.species
        .iter()
        .zip(phi.iter())
        .map(|(sp, &x)| {
            let (_, h_rt, _) = nasa7_dimensionless(&sp.thermo, t);
            x * h_rt * rt / sp.molar_mass
        })
        .sum()
}

/// Mixture specific heat at constant pressure, J/(kg·K).
pub fn mixture_cp(mech: &Mechanism, phi: &DVector<f64>, t: f64) -> f64 {
    mech.species
        .iter()
        .zip(phi.iter())
        .map(|(sp, &x)| {
            let (cp_r, _, _) = nasa7_dimensionless(&sp.thermo, t);
            x * cp_r * GAS_CONSTANT / sp.molar_mass
        })
        .sum()
}

/// Invert h(phi, T) = h0 for T with a bracketed Newton iteration.
/// The bracket is [`T_SOLVE_MIN`, `T_SOLVE_MAX`]; enthalpy is monotone in
/// T (cp > 0), so failure to converge means h0 is unattainable.
pub fn temperature_from_enthalpy(
    mech: &Mechanism,
    phi: &DVector<f64>,
    h0: f64,
    t_guess: f64,
) -> Result<f64, ThermoError> {
    let mut t = if t_guess.is_finite() {
        t_guess.clamp(T_SOLVE_MIN, T_SOLVE_MAX)
    } else {
        1000.0
    };
    let (mut lo, mut hi) = (T_SOLVE_MIN, T_SOLVE_MAX);
    for _ in 0..120 {
        let h = mixture_enthalpy(mech, phi, t);
        let cp = mixture_cp(mech, phi, t);
        let resid = h - h0;
        if resid.abs() <= 1e-9 * cp * t {
            return Ok(t);
        }
        if resid > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let mut t_new = t - resid / cp;
        if !(t_new > lo && t_new < hi) {
            t_new = 0.5 * (lo + hi);
        }
        t = t_new;
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Err(ThermoError::EnthalpyOutOfRange {
        h0,
        lo: T_SOLVE_MIN,
        hi: T_SOLVE_MAX,
    })
}

/// Full thermodynamic state at a composition: temperature, pressure,
/// ideal-gas density, and specific enthalpy.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoState {
    pub phi: DVector<f64>,
    pub t: f64,
    pub p: f64,
    pub rho: f64,
    pub h: f64,
}

/// Which reactor closes the energy equation, and how.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactorModel {
    /// q_loss = 0 at constant pressure: h(phi(t), T(t)) = h0 for all t.
    AdiabaticIsobaric { h0: f64, p0: f64 },
    /// Fixed-temperature bath at constant pressure.
    Isothermal { t_fix: f64, p0: f64 },
    /// The analytic three-species test system (concentration state).
    Robertson { k1: f64, k2: f64, k3: f64 },
}

struct GasData<'a> {
    mech: &'a Mechanism,
    kin: kinetics::Kinetics,
    w: DVector<f64>,
    /// Orthonormal basis of the element-matrix range, for scrubbing
    /// finite-difference rounding out of conserved directions.
    qc: DMatrix<f64>,
}

/// A reactor bound to a mechanism (or to the Robertson constants),
/// exposing the ODE right-hand side S(phi) and its Jacobian.
pub struct Reactor<'a> {
    pub model: ReactorModel,
    gas: Option<GasData<'a>>,
    /// Warm start for the enthalpy→temperature Newton solve, stored as
    /// bits so the reactor stays shareable across threads. Races only
    /// change which recent temperature seeds the next solve.
    t_cache: AtomicU64,
}

impl<'a> Reactor<'a> {
    fn cache_t(&self, t: f64) {
        self.t_cache.store(t.to_bits(), Ordering::Relaxed);
    }

    fn cached_t(&self) -> f64 {
        f64::from_bits(self.t_cache.load(Ordering::Relaxed))
    }

    fn gas_reactor(mech: &'a Mechanism, model: ReactorModel) -> Self {
        let c = element_matrix(mech).c;
        let qr = c.clone().qr();
        let qc = qr.q();
        Reactor {
            model,
            gas: Some(GasData {
                mech,
                kin: kinetics::Kinetics::new(mech),
                w: DVector::from_vec(mech.molar_masses()),
                qc,
            }),
            t_cache: AtomicU64::new(1000.0f64.to_bits()),
        }
    }

    /// Adiabatic–isobaric reactor whose conserved enthalpy is evaluated
    /// from `phi0` at `t0`.
    pub fn adiabatic_isobaric(
        mech: &'a Mechanism,
        phi0: &DVector<f64>,
        t0: f64,
        p0: f64,
    ) -> Self {
        let h0 = mixture_enthalpy(mech, phi0, t0);
        let r = Self::gas_reactor(mech, ReactorModel::AdiabaticIsobaric { h0, p0 });
        r.cache_t(t0);
        r
    }

    /// Adiabatic–isobaric reactor with the conserved enthalpy given directly.
    pub fn adiabatic_with_enthalpy(mech: &'a Mechanism, h0: f64, p0: f64) -> Self {
        Self::gas_reactor(mech, ReactorModel::AdiabaticIsobaric { h0, p0 })
    }

    pub fn isothermal(mech: &'a Mechanism, t_fix: f64, p0: f64) -> Self {
        let r = Self::gas_reactor(mech, ReactorModel::Isothermal { t_fix, p0 });
        r.cache_t(t_fix);
        r
    }

    /// Robertson system with the standard rate constants.
    pub fn robertson() -> Reactor<'static> {
        Self::robertson_with(ROBERTSON_RATES)
    }

    pub fn robertson_with([k1, k2, k3]: [f64; 3]) -> Reactor<'static> {
        Reactor {
            model: ReactorModel::Robertson { k1, k2, k3 },
            gas: None,
            t_cache: AtomicU64::new(0.0f64.to_bits()),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.gas {
            Some(g) => g.mech.n_species(),
            None => 3,
        }
    }

    pub fn mechanism(&self) -> Option<&'a Mechanism> {
        self.gas.as_ref().map(|g| g.mech)
    }

    /// The conservation matrix C whose columns are left null vectors of
    /// the Jacobian: element-mass fractions for gas reactors, the ones
    /// column for Robertson.
    pub fn conserved_matrix(&self) -> DMatrix<f64> {
        match &self.gas {
            Some(g) => element_matrix(g.mech).c,
            None => DMatrix::from_element(3, 1, 1.0),
        }
    }

    /// Temperature at this composition under the reactor's energy closure.
    pub fn temperature(&self, phi: &DVector<f64>) -> Result<f64, ThermoError> {
        match self.model {
            ReactorModel::AdiabaticIsobaric { h0, .. } => {
                let g = self.gas.as_ref().expect("gas model");
                let t = temperature_from_enthalpy(g.mech, phi, h0, self.cached_t())?;
                self.cache_t(t);
                Ok(t)
            }
            ReactorModel::Isothermal { t_fix, .. } => Ok(t_fix),
            ReactorModel::Robertson { .. } => Ok(0.0),
        }
    }

    fn pressure(&self) -> f64 {
        match self.model {
            ReactorModel::AdiabaticIsobaric { p0, .. } | ReactorModel::Isothermal { p0, .. } => p0,
            ReactorModel::Robertson { .. } => 0.0,
        }
    }

    /// Mixture density from the ideal-gas law, robust to the tiny
    /// negative mass fractions an integrator can produce.
    fn density(&self, g: &GasData, phi: &DVector<f64>, t: f64) -> Result<f64, ThermoError> {
        let denom: f64 = phi
            .iter()
            .zip(g.w.iter())
            .map(|(&x, &w)| x.abs() / w)
            .sum();
        if denom <= 0.0 {
            return Err(ThermoError::BadComposition { denom });
        }
        Ok(self.pressure() / (GAS_CONSTANT * t * denom))
    }

    /// Resolved thermodynamic state (gas reactors only).
    pub fn thermo_state(&self, phi: &DVector<f64>) -> Result<ThermoState, ThermoError> {
        let g = self.gas.as_ref().expect("thermo_state needs a gas reactor");
        let t = self.temperature(phi)?;
        let rho = self.density(g, phi, t)?;
        Ok(ThermoState {
            phi: phi.clone(),
            t,
            p: self.pressure(),
            rho,
            h: mixture_enthalpy(g.mech, phi, t),
        })
    }

    /// Time derivative of the composition state.
    pub fn source_term(&self, phi: &DVector<f64>) -> Result<DVector<f64>, ThermoError> {
        match self.model {
            ReactorModel::Robertson { k1, k2, k3 } => {
                let y = Vector3::new(phi[0], phi[1], phi[2]);
                let dy = robertson::rhs_with(&y, [k1, k2, k3]);
                Ok(DVector::from_column_slice(dy.as_slice()))
            }
            _ => {
                let g = self.gas.as_ref().expect("gas model");
                let t = self.temperature(phi)?;
                let rho = self.density(g, phi, t)?;
                let conc = DVector::from_fn(phi.len(), |i, _| rho * phi[i] / g.w[i]);
                let wdot = g.kin.production_rates(t, &conc)?;
                Ok(DVector::from_fn(phi.len(), |i, _| {
                    wdot[i] * g.w[i] / rho
                }))
            }
        }
    }

    /// Jacobian dS/dphi. Analytic for Robertson; central finite
    /// differences for gas reactors, with the conserved directions
    /// projected out (C^T S vanishes identically, so any components of
    /// the difference quotients along range(C) are pure rounding).
    pub fn jacobian(&self, phi: &DVector<f64>) -> Result<DMatrix<f64>, ThermoError> {
        if let ReactorModel::Robertson { k1, k2, k3 } = self.model {
            let y = Vector3::new(phi[0], phi[1], phi[2]);
            let j = robertson::jacobian_with(&y, [k1, k2, k3]);
            return Ok(DMatrix::from_iterator(3, 3, j.iter().copied()));
        }
        let g = self.gas.as_ref().expect("gas model");
        let n = phi.len();
        let mut j = DMatrix::zeros(n, n);
        let mut work = phi.clone();
        for i in 0..n {
            let step = (1e-6 * phi[i].abs()).max(1e-8);
            work[i] = phi[i] + step;
            let sp = self.source_term(&work)?;
            work[i] = phi[i] - step;
            let sm = self.source_term(&work)?;
            work[i] = phi[i];
            let col = (sp - sm) / (2.0 * step);
            j.column_mut(i).copy_from(&col);
        }
        j -= &g.qc * (g.qc.transpose() * &j);
        Ok(j)
    }

    /// One-sided finite-difference Jacobian that reuses an already
    /// computed source term at `phi`. Half the cost of the central
    /// version; intended for inner loops (sensitivity stage matrices)
    /// where the Jacobian feeds linear solves rather than diagnostics.
    pub fn jacobian_forward(
        &self,
        phi: &DVector<f64>,
        s_at_phi: &DVector<f64>,
    ) -> Result<DMatrix<f64>, ThermoError> {
        if matches!(self.model, ReactorModel::Robertson { .. }) {
            return self.jacobian(phi);
        }
        let g = self.gas.as_ref().expect("gas model");
        let n = phi.len();
        let mut j = DMatrix::zeros(n, n);
        let mut work = phi.clone();
        for i in 0..n {
            let step = (1e-7 * phi[i].abs()).max(1e-8);
            work[i] = phi[i] + step;
            let sp = self.source_term(&work)?;
            work[i] = phi[i];
            let col = (sp - s_at_phi) / step;
            j.column_mut(i).copy_from(&col);
        }
        j -= &g.qc * (g.qc.transpose() * &j);
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::Mechanism;
    use approx::assert_relative_eq;

    fn mu0(mech: &Mechanism) -> DVector<f64> {
        let vals = [
            ("H2", 0.1),
            ("H", 1e-3),
            ("O", 1e-3),
            ("O2", 0.2),
            ("OH", 1e-3),
            ("H2O", 1e-3),
            ("HO2", 1e-3),
            ("H2O2", 1e-3),
            ("N2", 0.694),
        ];
        let mut phi = DVector::zeros(mech.n_species());
        for (name, x) in vals {
            phi[mech.species_index(name).unwrap()] = x;
        }
        phi
    }

    #[test]
    fn nasa7_ranges_are_continuous() {
        let mech = Mechanism::bundled_h2o2();
        for sp in &mech.species {
            let tm = sp.thermo.t_mid;
            let low = {
                let mut s = sp.clone();
                s.thermo.t_mid = tm + 1.0; // force low range at tm
                nasa7_properties(&s, tm)
            };
            let high = {
                let mut s = sp.clone();
                s.thermo.t_mid = tm - 1.0; // force high range at tm
                nasa7_properties(&s, tm)
            };
            for k in 0..3 {
                let (a, b) = match k {
                    0 => (low.0, high.0),
                    1 => (low.1, high.1),
                    _ => (low.2, high.2),
                };
                assert!(
                    (a - b).abs() <= 1e-3 * b.abs().max(1.0),
                    "{}: property {k} jumps at T_mid: {a} vs {b}",
                    sp.name
                );
            }
        }
    }

    #[test]
    fn n2_room_temperature_enthalpy_is_near_zero_formation() {
        let mech = Mechanism::bundled_h2o2();
        let n2 = &mech.species[mech.species_index("N2").unwrap()];
        let t = 298.15;
        let (_, h, _) = nasa7_properties(n2, t);

        // Independent plain-powers evaluation of the same coefficients.
        let a = &n2.thermo.low;
        let h_rt = a[0]
            + a[1] * t / 2.0
            + a[2] * t * t / 3.0
            + a[3] * t.powi(3) / 4.0
            + a[4] * t.powi(4) / 5.0
            + a[5] / t;
        let h_oracle = h_rt * GAS_CONSTANT * t / n2.molar_mass;
        assert_relative_eq!(h, h_oracle, max_relative = 1e-12);

        // N2 has zero formation enthalpy: |h(298.15)| is < 1% of the
        // sensible-enthalpy scale R*T/W.
        let scale = GAS_CONSTANT * t / n2.molar_mass;
        assert!(h.abs() < 0.01 * scale, "h(N2, 298.15) = {h} J/kg");
    }

    #[test]
    fn enthalpy_derivative_matches_cp() {
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        let t = 1200.0;
        let dt = 0.01;
        let dh = (mixture_enthalpy(&mech, &phi, t + dt) - mixture_enthalpy(&mech, &phi, t - dt))
            / (2.0 * dt);
        let cp = mixture_cp(&mech, &phi, t);
        assert!(
            (dh - cp).abs() < 1e-6 * cp,
            "dh/dT = {dh}, cp = {cp}, rel = {}",
            ((dh - cp) / cp).abs()
        );
    }

    #[test]
    fn temperature_inverts_enthalpy() {
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        let h0 = mixture_enthalpy(&mech, &phi, 1200.0);
        let t = temperature_from_enthalpy(&mech, &phi, h0, 900.0).unwrap();
        assert!((t - 1200.0).abs() < 1e-6, "recovered T = {t}");

        // Perturbed composition, same target enthalpy: forward
        // re-evaluation must reproduce h0.
        let mut phi2 = phi.clone();
        phi2[0] *= 1.05;
        phi2[3] *= 0.98;
        let t2 = temperature_from_enthalpy(&mech, &phi2, h0, 1200.0).unwrap();
        let h2 = mixture_enthalpy(&mech, &phi2, t2);
        assert!((h2 - h0).abs() < 1e-6 * h0.abs());
        assert!(t2 != 1200.0);
    }

    #[test]
    fn pure_n2_round_trip_and_unattainable_enthalpy() {
        let mech = Mechanism::bundled_h2o2();
        let mut phi = DVector::zeros(mech.n_species());
        phi[mech.species_index("N2").unwrap()] = 1.0;
        let h300 = mixture_enthalpy(&mech, &phi, 300.0);
        let t = temperature_from_enthalpy(&mech, &phi, h300, 2000.0).unwrap();
        assert!((t - 300.0).abs() < 1e-6);

        let h_big = mixture_enthalpy(&mech, &phi, 10_000.0);
        let e = temperature_from_enthalpy(&mech, &phi, h_big, 2000.0).unwrap_err();
        assert!(matches!(e, ThermoError::EnthalpyOutOfRange { .. }));
    }

    #[test]
    fn pure_n2_source_term_is_exactly_zero() {
        let mech = Mechanism::bundled_h2o2();
        let mut phi = DVector::zeros(mech.n_species());
        phi[mech.species_index("N2").unwrap()] = 1.0;
        let r = Reactor::isothermal(&mech, 1500.0, 101325.0);
        let s = r.source_term(&phi).unwrap();
        assert_eq!(s, DVector::zeros(mech.n_species()));
    }

    #[test]
    fn adiabatic_source_conserves_elements_pointwise() {
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        let r = Reactor::adiabatic_isobaric(&mech, &phi, 1200.0, 101325.0);
        let c = element_matrix(&mech).c;
        for scale in [1.0, 0.9, 1.07] {
            let s = r.source_term(&(scale * &phi)).unwrap();
            let viol = (c.transpose() * &s).abs().max();
            assert!(
                viol < 1e-12 * s.abs().max().max(1.0),
                "element production {viol:e} at scale {scale}"
            );
        }
    }

    #[test]
    fn jacobian_matches_directional_derivatives() {
        use rand::prelude::*;
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        let r = Reactor::adiabatic_isobaric(&mech, &phi, 1200.0, 101325.0);
        let j = r.jacobian(&phi).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = phi.len();
        for _ in 0..20 {
            let mut v = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
            v /= v.norm();
            let eps = 3e-8;
            let sp = r.source_term(&(&phi + eps * &v)).unwrap();
            let sm = r.source_term(&(&phi - eps * &v)).unwrap();
            let fd = (sp - sm) / (2.0 * eps);
            let jv = &j * &v;
            let err = (&fd - &jv).norm() / jv.norm().max(1e-30);
            assert!(err < 1e-4, "directional derivative error {err:e}");
        }
    }

    #[test]
    fn jacobian_left_null_space_contains_elements() {
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        for r in [
            Reactor::adiabatic_isobaric(&mech, &phi, 1200.0, 101325.0),
            Reactor::isothermal(&mech, 1075.5, 101325.0),
        ] {
            let j = r.jacobian(&phi).unwrap();
            let c = element_matrix(&mech).c;
            let viol = (c.transpose() * &j).abs().max();
            let scale = j.abs().max();
            assert!(viol <= 1e-8 * scale.max(1.0), "C^T J = {viol:e} vs |J| = {scale:e}");
        }
    }

    #[test]
    fn hand_evaluated_rates_match_three_reactions() {
        // Independent evaluation of one elementary, one three-body, and
        // the falloff reaction at T = 1200 K, 1 atm, straight from the
        // bundled rate parameters (cm-mol units, cal/mol activation).
        let mech = Mechanism::bundled_h2o2();
        let phi = mu0(&mech);
        let r = Reactor::isothermal(&mech, 1200.0, 101325.0);
        let st = r.thermo_state(&phi).unwrap();
        let t = st.t;
        let conc: Vec<f64> = (0..mech.n_species())
            .map(|i| st.rho * phi[i] / mech.species[i].molar_mass)
            .collect();
        let q = kinetics::Kinetics::new(&mech)
            .rates_of_progress(t, &DVector::from_vec(conc.clone()))
            .unwrap();
        let idx = |eq: &str| {
            mech.reactions
                .iter()
                .position(|r| r.equation == eq)
                .unwrap_or_else(|| panic!("no reaction `{eq}`"))
        };
        let ru = 8314.462618;
        let g_rt = |i: usize| {
            let a = if t <= mech.species[i].thermo.t_mid {
                &mech.species[i].thermo.low
            } else {
                &mech.species[i].thermo.high
            };
            let h = a[0]
                + a[1] * t / 2.0
                + a[2] * t * t / 3.0
                + a[3] * t.powi(3) / 4.0
                + a[4] * t.powi(4) / 5.0
                + a[5] / t;
            let s = a[0] * t.ln()
                + a[1] * t
                + a[2] * t * t / 2.0
                + a[3] * t.powi(3) / 3.0
                + a[4] * t.powi(4) / 4.0
                + a[6];
            h - s
        };
        let s = |n: &str| mech.species_index(n).unwrap();
        let c0 = 101325.0 / (ru * t);

        // O + H2 <=> H + OH: A = 3.87e4 (cm^3/mol)/s, b = 2.7, Ea = 6260 cal/mol.
        {
            let kf = 3.87e4 * 1e-3 * t.powf(2.7) * (-6260.0 * 4184.0 / (ru * t)).exp();
            let kc = (-(g_rt(s("H")) + g_rt(s("OH")) - g_rt(s("O")) - g_rt(s("H2")))).exp();
            let qf = kf * conc[s("O")] * conc[s("H2")];
            let qr = kf / kc * conc[s("H")] * conc[s("OH")];
            assert_relative_eq!(q[idx("O + H2 <=> H + OH")], qf - qr, max_relative = 1e-10);
        }

        // 2 O + M <=> O2 + M: A = 1.2e17 (cm^3/mol)^2/s, b = -1.
        {
            let kf = 1.2e17 * 1e-6 * t.powf(-1.0);
            let eff: &[(&str, f64)] = &[("H2", 2.4), ("H2O", 15.4), ("H2O2", 1.0)];
            let mut m: f64 = conc.iter().sum();
            for &(n, e) in eff {
                if e != 1.0 {
                    m += (e - 1.0) * conc[s(n)];
                }
            }
            let kc = (-(g_rt(s("O2")) - 2.0 * g_rt(s("O")))).exp() / c0;
            let qf = kf * conc[s("O")] * conc[s("O")];
            let qr = kf / kc * conc[s("O2")];
            assert_relative_eq!(q[idx("2 O + M <=> O2 + M")], m * (qf - qr), max_relative = 1e-10);
        }

        // 2 OH (+M) <=> H2O2 (+M), Troe falloff.
        {
            let kinf = 7.4e13 * 1e-3 * t.powf(-0.37);
            let k0 = 2.3e18 * 1e-6 * t.powf(-0.9) * (1700.0 * 4184.0 / (ru * t)).exp();
            let eff: &[(&str, f64)] = &[("H2", 2.0), ("H2O", 6.0)];
            let mut m: f64 = conc.iter().sum();
            for &(n, e) in eff {
                m += (e - 1.0) * conc[s(n)];
            }
            let pr = k0 * m / kinf;
            let fcent = (1.0 - 0.7346) * (-t / 94.0).exp()
                + 0.7346 * (-t / 1756.0).exp()
                + (-5182.0 / t).exp();
            let lfc = fcent.log10();
            let cc = -0.4 - 0.67 * lfc;
            let nn = 0.75 - 1.27 * lfc;
            let f1 = (pr.log10() + cc) / (nn - 0.14 * (pr.log10() + cc));
            let f = 10f64.powf(lfc / (1.0 + f1 * f1));
            let k = kinf * (pr / (1.0 + pr)) * f;
            let kc = (-(g_rt(s("H2O2")) - 2.0 * g_rt(s("OH")))).exp() / c0;
            let qf = k * conc[s("OH")] * conc[s("OH")];
            let qr = k / kc * conc[s("H2O2")];
            assert_relative_eq!(
                q[idx("2 OH (+M) <=> H2O2 (+M)")],
                qf - qr,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn robertson_reactor_wraps_analytic_system() {
        let r = Reactor::robertson();
        let phi = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let s = r.source_term(&phi).unwrap();
        assert_eq!(s.as_slice(), &[-0.04, 0.04, 0.0]);
        let j = r.jacobian(&phi).unwrap();
        assert_eq!(j[(0, 0)], -0.04);
        assert_eq!(j[(1, 0)], 0.04);
        assert_eq!(j[(2, 1)], 0.0);
        let ones = r.conserved_matrix();
        assert_eq!((ones.transpose() * &j).abs().max(), 0.0);
    }
}
