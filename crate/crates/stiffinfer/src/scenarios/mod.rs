//! Named experiment presets. Each scenario bundles a dynamical model,
//! a truth distribution over initial compositions, observation and
//! rank-analysis grids, and sampler defaults, so commands and tests
//! pull their constants from a single place. Scenarios round-trip
//! through a TOML config representation for inspection and overrides.

use crate::bayes::{BayesError, SamplerSettings, TruthSpec};
use crate::mechanism::{Mechanism, MechanismError};
use crate::metrics::{Support, DEFAULT_FAILURE_THRESHOLD, DEFAULT_SUPPORT};
use crate::thermokin::Reactor;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[cfg(test)]
mod tests;

/// Standard atmosphere in pascal.
pub const ATM_PA: f64 = 101_325.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}' (known: {})", Scenario::NAMES.join(", "))]
    UnknownScenario(String),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("config I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Which dynamical model a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// The classic three-species stiff benchmark (dimensionless).
    Robertson,
    /// Bundled hydrogen mechanism, adiabatic at constant pressure;
    /// the enthalpy anchor is evaluated at `t0_kelvin` with the truth
    /// mean composition.
    AdiabaticIsobaric { t0_kelvin: f64, pressure_pa: f64 },
    /// Bundled hydrogen mechanism with the temperature pinned, for
    /// quenched-sample studies.
    Isothermal { t_fix_kelvin: f64, pressure_pa: f64 },
}

impl ModelKind {
    /// Whether the model needs the bundled mechanism.
    pub fn needs_mechanism(&self) -> bool {
        !matches!(self, ModelKind::Robertson)
    }
}

/// A fully resolved experiment preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: ModelKind,
    pub truth: TruthSpec,
    /// Observation times for inference sweeps.
    pub t_obs_grid: Vec<f64>,
    /// Time window for sensitivity-rank analysis.
    pub rank_window: [f64; 2],
    pub sampler: SamplerSettings,
    pub support: Support,
    pub failure_threshold: f64,
    /// Initial perturbation preset for eigen-mode demonstrations.
    pub eigen_perturbation: Option<DVector<f64>>,
}

impl Scenario {
    pub const NAMES: [&'static str; 5] = [
        "robertson",
        "h2-autoignition",
        "quench-200",
        "quench-600",
        "quench-1075",
    ];

    pub fn by_name(name: &str) -> Result<Scenario, ScenarioError> {
        match name {
            "robertson" => Ok(scenario_robertson()),
            "h2-autoignition" => Ok(scenario_h2_autoignition()),
            "quench-200" => scenario_quench(200.0, &quench_default_composition()),
            "quench-600" => scenario_quench(600.0, &quench_default_composition()),
            "quench-1075" => scenario_quench(1075.5, &quench_default_composition()),
            other => Err(ScenarioError::UnknownScenario(other.to_string())),
        }
    }

    /// Load the mechanism this scenario's model runs on, if any.
    pub fn mechanism(&self) -> Option<Mechanism> {
        self.model
            .needs_mechanism()
            .then(Mechanism::bundled_h2o2)
    }

    /// Build the reactor. Mechanism-backed models borrow `mech`; the
    /// Robertson model ignores it.
    pub fn reactor<'m>(&self, mech: Option<&'m Mechanism>) -> Result<Reactor<'m>, ScenarioError> {
        match self.model {
            ModelKind::Robertson => Ok(Reactor::robertson()),
            ModelKind::AdiabaticIsobaric {
                t0_kelvin,
                pressure_pa,
            } => {
                let mech = mech.ok_or_else(|| {
                    ScenarioError::InvalidConfig("model needs a mechanism".into())
                })?;
                Ok(Reactor::adiabatic_isobaric(
                    mech,
                    &self.truth.mu0,
                    t0_kelvin,
                    pressure_pa,
                ))
            }
            ModelKind::Isothermal {
                t_fix_kelvin,
                pressure_pa,
            } => {
                let mech = mech.ok_or_else(|| {
                    ScenarioError::InvalidConfig("model needs a mechanism".into())
                })?;
                Ok(Reactor::isothermal(mech, t_fix_kelvin, pressure_pa))
            }
        }
    }

    pub fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            name: self.name.clone(),
            model: self.model,
            truth: TruthConfig {
                mu0: self.truth.mu0.iter().copied().collect(),
                s0: self.truth.s0.iter().copied().collect(),
                n_truth: self.truth.n_truth,
            },
            t_obs_grid: self.t_obs_grid.clone(),
            rank_window: self.rank_window,
            sampler: SamplerConfig {
                n_warmup: self.sampler.n_warmup,
                n_draws: self.sampler.n_draws,
                n_chains: self.sampler.n_chains,
                delta_acc: self.sampler.delta_acc,
                max_tree_depth: self.sampler.max_tree_depth,
                seed: self.sampler.seed,
            },
            support: SupportConfig {
                lo: self.support.lo,
                hi: self.support.hi,
                bins: self.support.bins,
            },
            failure_threshold: self.failure_threshold,
            eigen_perturbation: self
                .eigen_perturbation
                .as_ref()
                .map(|v| v.iter().copied().collect()),
        }
    }

    pub fn from_config(cfg: ScenarioConfig) -> Result<Scenario, ScenarioError> {
        let truth = TruthSpec::new(
            DVector::from_vec(cfg.truth.mu0),
            DVector::from_vec(cfg.truth.s0),
            cfg.truth.n_truth,
        )?;
        if cfg.t_obs_grid.is_empty() {
            return Err(ScenarioError::InvalidConfig(
                "empty observation grid".into(),
            ));
        }
        if !(cfg.rank_window[0] > 0.0 && cfg.rank_window[0] < cfg.rank_window[1]) {
            return Err(ScenarioError::InvalidConfig(
                "rank window must be positive and increasing".into(),
            ));
        }
        Ok(Scenario {
            name: cfg.name,
            model: cfg.model,
            truth,
            t_obs_grid: cfg.t_obs_grid,
            rank_window: cfg.rank_window,
            sampler: SamplerSettings {
                n_warmup: cfg.sampler.n_warmup,
                n_draws: cfg.sampler.n_draws,
                n_chains: cfg.sampler.n_chains,
                delta_acc: cfg.sampler.delta_acc,
                max_tree_depth: cfg.sampler.max_tree_depth,
                seed: cfg.sampler.seed,
            },
            support: Support {
                lo: cfg.support.lo,
                hi: cfg.support.hi,
                bins: cfg.support.bins,
            },
            failure_threshold: cfg.failure_threshold,
            eigen_perturbation: cfg.eigen_perturbation.map(DVector::from_vec),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.to_config()).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)
            .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        Scenario::from_config(cfg)
    }

    /// Resolved values as a JSON document (for `scenario show`).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("scenario serializes")
    }
}

/// Plain-data mirror of [`Scenario`] for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelKind,
    pub truth: TruthConfig,
    pub t_obs_grid: Vec<f64>,
    pub rank_window: [f64; 2],
    pub sampler: SamplerConfig,
    pub support: SupportConfig,
    pub failure_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen_perturbation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthConfig {
    pub mu0: Vec<f64>,
    pub s0: Vec<f64>,
    pub n_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub n_chains: usize,
    pub delta_acc: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

/// `count` log-spaced times from 10^lo_exp to 10^hi_exp inclusive.
fn log_grid(lo_exp: f64, hi_exp: f64, step: f64) -> Vec<f64> {
    let n = ((hi_exp - lo_exp) / step).round() as usize + 1;
    (0..n)
        .map(|i| 10f64.powf(lo_exp + step * i as f64))
        .collect()
}

/// Three-species stiff benchmark: tightly known outer species, a
/// short-lived intermediate known to one part in five.
pub fn scenario_robertson() -> Scenario {
    let mu0 = DVector::from_vec(vec![0.95, 5e-6, 0.05]);
    let s0 = DVector::from_vec(vec![0.01, 1e-6, 0.01]);
    Scenario {
        name: "robertson".into(),
        model: ModelKind::Robertson,
        truth: TruthSpec::new(mu0, s0, 1000).expect("static spec is valid"),
        t_obs_grid: log_grid(-4.0, 0.0, 0.1),
        rank_window: [1e-6, 1.0],
        sampler: SamplerSettings::default(),
        support: DEFAULT_SUPPORT,
        failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        eigen_perturbation: Some(DVector::from_vec(vec![1e-3, 1e-7, 1e-3])),
    }
}

/// Hydrogen autoignition at atmospheric pressure: a dilute
/// radical-seeded mixture igniting adiabatically from 1200 K.
pub fn scenario_h2_autoignition() -> Scenario {
    // Mass fractions in bundled-mechanism species order
    // [H2, H, O, O2, OH, H2O, HO2, H2O2, N2]; the bath gas closes the
    // sum to one.
    let mu0 = DVector::from_vec(vec![
        0.1, 1e-3, 1e-3, 0.2, 1e-3, 1e-3, 1e-3, 1e-3, 0.694,
    ]);
    let s0 = mu0.map(|v| v / 10.0);
    Scenario {
        name: "h2-autoignition".into(),
        model: ModelKind::AdiabaticIsobaric {
            t0_kelvin: 1200.0,
            pressure_pa: ATM_PA,
        },
        truth: TruthSpec::new(mu0, s0, 1000).expect("static spec is valid"),
        t_obs_grid: log_grid(-8.0, -1.0, 0.05),
        rank_window: [1e-8, 1e-1],
        sampler: SamplerSettings::default(),
        support: DEFAULT_SUPPORT,
        failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        eigen_perturbation: None,
    }
}

/// Representative partially burnt composition for the quench presets:
/// fuel, oxidizer, product, and trace radicals in a nitrogen bath.
/// These mass fractions are not a published measurement — substitute
/// sampled values (via [`load_composition`]) for quantitative work.
pub fn quench_default_composition() -> DVector<f64> {
    DVector::from_vec(vec![
        0.005,    // H2
        3e-4,     // H
        1e-4,     // O
        0.03,     // O2
        2e-3,     // OH
        0.10,     // H2O
        1e-3,     // HO2
        1e-6,     // H2O2
        0.861599, // N2 balance
    ])
}

/// Isothermal snapshot of a quenched gas sample: chemistry continues at
/// the fixed quench temperature while the rank analysis watches how
/// fast initial-composition information decays.
pub fn scenario_quench(
    t_fix_kelvin: f64,
    phi0: &DVector<f64>,
) -> Result<Scenario, ScenarioError> {
    let mech = Mechanism::bundled_h2o2();
    if phi0.len() != mech.n_species() {
        return Err(ScenarioError::InvalidConfig(format!(
            "composition has {} entries, mechanism has {} species",
            phi0.len(),
            mech.n_species()
        )));
    }
    if phi0.iter().any(|&v| v < 0.0) {
        return Err(ScenarioError::InvalidConfig(
            "composition entries must be non-negative".into(),
        ));
    }
    let total: f64 = phi0.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(ScenarioError::InvalidConfig(format!(
            "mass fractions sum to {total}, expected 1"
        )));
    }
    if !(t_fix_kelvin.is_finite() && t_fix_kelvin > 0.0) {
        return Err(ScenarioError::InvalidConfig(
            "quench temperature must be positive".into(),
        ));
    }
    let mu0 = phi0 / total;
    // The truth spread is nominal here — quench presets feed the rank
    // analysis, which perturbs around the mean rather than sampling.
    let s0 = mu0.map(|v| (v / 10.0).max(1e-10));
    let name = if (t_fix_kelvin - t_fix_kelvin.round()).abs() < 1e-9 {
        format!("quench-{:.0}", t_fix_kelvin)
    } else {
        format!("quench-{:.0}", t_fix_kelvin.floor())
    };
    Ok(Scenario {
        name,
        model: ModelKind::Isothermal {
            t_fix_kelvin,
            pressure_pa: ATM_PA,
        },
        truth: TruthSpec::new(mu0, s0, 1000)?,
        t_obs_grid: log_grid(-7.0, 0.0, 0.1),
        rank_window: [1e-7, 1.0],
        sampler: SamplerSettings::default(),
        support: DEFAULT_SUPPORT,
        failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        eigen_perturbation: None,
    })
}

/// Parse a `[composition]` table of species-name → mass-fraction pairs
/// into mechanism species order. Missing species default to zero;
/// unknown names are rejected; the result is normalized to unit sum
/// (input must already be within 1e-6 of it).
pub fn load_composition(path: &Path, mech: &Mechanism) -> Result<DVector<f64>, ScenarioError> {
    parse_composition(&std::fs::read_to_string(path)?, mech)
}

pub fn parse_composition(text: &str, mech: &Mechanism) -> Result<DVector<f64>, ScenarioError> {
    #[derive(Deserialize)]
    struct CompositionFile {
        composition: BTreeMap<String, f64>,
    }
    let file: CompositionFile =
        toml::from_str(text).map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
    let mut phi0 = DVector::zeros(mech.n_species());
    for (name, value) in &file.composition {
        let idx = mech.species_index(name).ok_or_else(|| {
            ScenarioError::InvalidConfig(format!("unknown species '{name}' in composition"))
        })?;
        if !(value.is_finite() && *value >= 0.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "species '{name}' has invalid mass fraction {value}"
            )));
        }
        phi0[idx] = *value;
    }
    let total = phi0.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(ScenarioError::InvalidConfig(format!(
            "mass fractions sum to {total}, expected 1"
        )));
    }
    Ok(phi0 / total)
}

/// The composition file shipped with the crate, used by the quench
/// presets when no override is given.
pub const QUENCH_DEFAULT_TOML: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/configs/quench-default.toml"
));
