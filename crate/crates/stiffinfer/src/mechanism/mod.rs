//! Chemical mechanism model: elements, species with NASA-7 thermo, and
//! reactions with Arrhenius / three-body / Troe-falloff rate data, parsed
//! from a Cantera-style YAML subset.

mod parse;

use nalgebra::DMatrix;
use std::collections::HashMap;
use thiserror::Error;

/// Universal gas constant, J/(kmol K).
pub const GAS_CONSTANT: f64 = 8314.462618;
/// Standard pressure for thermodynamic reference states, Pa.
pub const P_STANDARD: f64 = 101325.0;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("yaml syntax error: {0}")]
    Syntax(String),
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub symbol: String,
    /// kg/kmol
    pub atomic_mass: f64,
}

/// Two-range NASA-7 polynomial set for one species.
#[derive(Debug, Clone, PartialEq)]
pub struct Nasa7 {
    pub t_min: f64,
    pub t_mid: f64,
    pub t_max: f64,
    pub low: [f64; 7],
    pub high: [f64; 7],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    /// (element index, atom count) pairs, in mechanism element order.
    pub composition: Vec<(usize, f64)>,
    /// kg/kmol, derived from composition and element masses.
    pub molar_mass: f64,
    pub thermo: Nasa7,
    pub note: Option<String>,
}

/// Arrhenius parameters. `a` is kept in the document's unit system
/// (see [`Units`]); `ea` is converted to J/kmol at parse time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrhenius {
    pub a: f64,
    pub b: f64,
    pub ea: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Troe {
    pub a: f64,
    pub t3: f64,
    pub t1: f64,
    pub t2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    Elementary,
    /// Declared collision efficiencies as (species index, enhancement);
    /// unlisted species default to 1.
    ThreeBody { efficiencies: Vec<(usize, f64)> },
    Falloff {
        low: Arrhenius,
        troe: Troe,
        efficiencies: Vec<(usize, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub equation: String,
    /// (species index, stoichiometric coefficient), reactant side.
    pub reactants: Vec<(usize, f64)>,
    pub products: Vec<(usize, f64)>,
    pub reversible: bool,
    pub duplicate: bool,
    /// High-pressure (or only) rate constant.
    pub rate: Arrhenius,
    pub kind: RateKind,
}

impl Reaction {
    /// Sum of reactant stoichiometric coefficients (forward molecularity,
    /// not counting any third body).
    pub fn forward_order(&self) -> f64 {
        self.reactants.iter().map(|&(_, nu)| nu).sum()
    }

    /// Net change in moles, products minus reactants.
    pub fn delta_moles(&self) -> f64 {
        let p: f64 = self.products.iter().map(|&(_, nu)| nu).sum();
        p - self.forward_order()
    }

    /// Net stoichiometric coefficient of species `i`.
    pub fn net_coefficient(&self, i: usize) -> f64 {
        let r: f64 = self
            .reactants
            .iter()
            .filter(|&&(s, _)| s == i)
            .map(|&(_, nu)| nu)
            .sum();
        let p: f64 = self
            .products
            .iter()
            .filter(|&&(s, _)| s == i)
            .map(|&(_, nu)| nu)
            .sum();
        p - r
    }
}

/// Unit system declared by the document's `units` block. Only the fields
/// that affect rate constants are modeled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Units {
    /// Length unit in meters (cm -> 0.01).
    pub length_m: f64,
    /// Quantity unit in kmol (mol -> 1e-3).
    pub quantity_kmol: f64,
    /// Activation-energy unit in J/kmol (cal/mol -> 4184).
    pub activation_to_j_kmol: f64,
    pub length_name: &'static str,
    pub quantity_name: &'static str,
    pub activation_name: &'static str,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length_m: 0.01,
            quantity_kmol: 1e-3,
            activation_to_j_kmol: 4184.0,
            length_name: "cm",
            quantity_name: "mol",
            activation_name: "cal/mol",
        }
    }
}

impl Units {
    /// Factor converting one concentration unit (quantity/length^3) to
    /// kmol/m^3 reciprocal space: multiply A by this to the power
    /// (molecularity - 1) to obtain SI rate constants.
    pub fn concentration_si(&self) -> f64 {
        self.length_m.powi(3) / self.quantity_kmol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub name: String,
    pub description: Option<String>,
    pub elements: Vec<Element>,
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    pub units: Units,
    species_index: HashMap<String, usize>,
    element_index: HashMap<String, usize>,
}

impl Mechanism {
    pub fn parse(text: &str) -> Result<Mechanism, MechanismError> {
        parse::parse_document(text)
    }

    /// The hydrogen-oxygen mechanism shipped with the crate.
    pub fn bundled_h2o2() -> Mechanism {
        Mechanism::parse(include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/data/h2o2.yaml"
        )))
        .expect("bundled mechanism must parse")
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species_index.get(name).copied()
    }

    pub fn element_index(&self, symbol: &str) -> Option<usize> {
        self.element_index.get(symbol).copied()
    }

    pub fn molar_masses(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.molar_mass).collect()
    }

    /// Serialize back to the supported YAML subset. Parsing the output
    /// reproduces the model exactly (floats are printed round-trip).
    pub fn to_canonical_yaml(&self) -> String {
        parse::write_document(self)
    }
}

/// Mass-fraction element weights: entry (i, e) is the mass fraction of
/// element e within species i, so that `C^T phi` is constant along any
/// reacting trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrix {
    pub c: DMatrix<f64>,
}

impl ElementMatrix {
    pub fn n_species(&self) -> usize {
        self.c.nrows()
    }

    pub fn n_elements(&self) -> usize {
        self.c.ncols()
    }

    /// The Robertson surrogate: one pseudo-element, unit masses.
    pub fn robertson() -> ElementMatrix {
        ElementMatrix {
            c: DMatrix::from_element(3, 1, 1.0),
        }
    }
}

pub fn element_matrix(mech: &Mechanism) -> ElementMatrix {
    let mut c = DMatrix::zeros(mech.n_species(), mech.n_elements());
    for (i, sp) in mech.species.iter().enumerate() {
        for &(e, count) in &sp.composition {
            c[(i, e)] = count * mech.elements[e].atomic_mass / sp.molar_mass;
        }
    }
    ElementMatrix { c }
}

pub(crate) fn new_mechanism(
    name: String,
    description: Option<String>,
    elements: Vec<Element>,
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    units: Units,
) -> Mechanism {
    let species_index = species
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.clone(), i))
        .collect();
    let element_index = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.symbol.clone(), i))
        .collect();
    Mechanism {
        name,
        description,
        elements,
        species,
        reactions,
        units,
        species_index,
        element_index,
    }
}
