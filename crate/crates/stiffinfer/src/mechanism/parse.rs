//! Parser for the supported Cantera-YAML mechanism subset: a single
//! ideal-gas phase, NASA7 thermo, and elementary / three-body /
//! Troe-falloff reactions. Anything outside the subset is a hard error.

use super::{
    new_mechanism, Arrhenius, Element, Mechanism, MechanismError, Nasa7, RateKind, Reaction,
    Species, Troe, Units,
};
use serde_yaml::Value;
use std::collections::{HashMap, HashSet};

type Result<T> = std::result::Result<T, MechanismError>;

/// Standard atomic weights, kg/kmol.
const ATOMIC_MASSES: &[(&str, f64)] = &[
    ("H", 1.008),
    ("He", 4.002602),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("Ar", 39.95),
];

fn err(path: &str, msg: impl Into<String>) -> MechanismError {
    MechanismError::Schema {
        path: path.to_string(),
        msg: msg.into(),
    }
}

fn as_map<'a>(v: &'a Value, path: &str) -> Result<&'a serde_yaml::Mapping> {
    v.as_mapping().ok_or_else(|| err(path, "expected a mapping"))
}

fn as_seq<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_sequence().ok_or_else(|| err(path, "expected a list"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| err(path, "expected a string"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| err(path, "expected a number"))
}

fn get<'a>(m: &'a serde_yaml::Mapping, key: &str) -> Option<&'a Value> {
    m.get(Value::String(key.to_string()))
}

fn require<'a>(m: &'a serde_yaml::Mapping, key: &str, path: &str) -> Result<&'a Value> {
    get(m, key).ok_or_else(|| err(path, format!("missing required key `{key}`")))
}

pub fn parse_document(text: &str) -> Result<Mechanism> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| {
        let loc = e
            .location()
            .map(|l| format!(" at line {}, column {}", l.line(), l.column()))
            .unwrap_or_default();
        MechanismError::Syntax(format!("{e}{loc}"))
    })?;
    let root = as_map(&doc, "document")?;

    let units = parse_units(root)?;
    let description = get(root, "description")
        .and_then(|v| v.as_str())
        .map(str::to_string);

    let phases = as_seq(require(root, "phases", "document")?, "phases")?;
    if phases.len() != 1 {
        return Err(err("phases", "exactly one phase is supported"));
    }
    let phase = as_map(&phases[0], "phases[0]")?;
    let phase_name = as_str(require(phase, "name", "phases[0]")?, "phases[0].name")?.to_string();
    let thermo_model = as_str(require(phase, "thermo", "phases[0]")?, "phases[0].thermo")?;
    if thermo_model != "ideal-gas" {
        return Err(err(
            "phases[0].thermo",
            format!("unsupported phase thermo `{thermo_model}`; only ideal-gas"),
        ));
    }
    if let Some(r) = get(phase, "reactions") {
        if r.as_str() != Some("all") {
            return Err(err("phases[0].reactions", "only `all` is supported"));
        }
    }

    let custom_masses = parse_custom_elements(root)?;
    let elements = parse_phase_elements(phase, &custom_masses)?;
    let element_index: HashMap<&str, usize> = elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.symbol.as_str(), i))
        .collect();

    let phase_species: Vec<String> = as_seq(
        require(phase, "species", "phases[0]")?,
        "phases[0].species",
    )?
    .iter()
    .enumerate()
    .map(|(i, v)| as_str(v, &format!("phases[0].species[{i}]")).map(str::to_string))
    .collect::<Result<_>>()?;

    let species = parse_species(root, &phase_species, &elements, &element_index)?;
    let species_index: HashMap<&str, usize> = species
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();

    let reactions = parse_reactions(root, &species_index, &units)?;

    let mech = new_mechanism(
        phase_name,
        description,
        elements,
        species,
        reactions,
        units,
    );
    validate(&mech)?;
    Ok(mech)
}

fn parse_units(root: &serde_yaml::Mapping) -> Result<Units> {
    let mut units = Units::default();
    let Some(block) = get(root, "units") else {
        return Ok(units);
    };
    let map = as_map(block, "units")?;
    for (k, v) in map {
        let key = as_str(k, "units")?;
        let val = as_str(v, &format!("units.{key}"))?;
        match key {
            "length" => {
                units.length_m = match val {
                    "cm" => 0.01,
                    "m" => 1.0,
                    other => return Err(err("units.length", format!("unsupported `{other}`"))),
                };
                units.length_name = if val == "cm" { "cm" } else { "m" };
            }
            "quantity" => {
                units.quantity_kmol = match val {
                    "mol" => 1e-3,
                    "kmol" => 1.0,
                    other => return Err(err("units.quantity", format!("unsupported `{other}`"))),
                };
                units.quantity_name = if val == "mol" { "mol" } else { "kmol" };
            }
            "activation-energy" => {
                let (factor, name) = match val {
                    "cal/mol" => (4184.0, "cal/mol"),
                    "kcal/mol" => (4.184e6, "kcal/mol"),
                    "J/mol" => (1e3, "J/mol"),
                    "J/kmol" => (1.0, "J/kmol"),
                    other => {
                        return Err(err(
                            "units.activation-energy",
                            format!("unsupported `{other}`"),
                        ))
                    }
                };
                units.activation_to_j_kmol = factor;
                units.activation_name = name;
            }
            "time" => {
                if val != "s" {
                    return Err(err("units.time", "only seconds are supported"));
                }
            }
            other => return Err(err("units", format!("unsupported unit key `{other}`"))),
        }
    }
    Ok(units)
}

fn parse_custom_elements(root: &serde_yaml::Mapping) -> Result<HashMap<String, f64>> {
    let mut masses = HashMap::new();
    let Some(block) = get(root, "elements") else {
        return Ok(masses);
    };
    for (i, entry) in as_seq(block, "elements")?.iter().enumerate() {
        let path = format!("elements[{i}]");
        let map = as_map(entry, &path)?;
        let symbol = as_str(require(map, "symbol", &path)?, &format!("{path}.symbol"))?;
        let weight = as_f64(
            require(map, "atomic-weight", &path)?,
            &format!("{path}.atomic-weight"),
        )?;
        if weight <= 0.0 {
            return Err(err(&path, "atomic-weight must be positive"));
        }
        masses.insert(symbol.to_string(), weight);
    }
    Ok(masses)
}

fn parse_phase_elements(
    phase: &serde_yaml::Mapping,
    custom: &HashMap<String, f64>,
) -> Result<Vec<Element>> {
    let list = as_seq(
        require(phase, "elements", "phases[0]")?,
        "phases[0].elements",
    )?;
    let mut elements = Vec::with_capacity(list.len());
    for (i, v) in list.iter().enumerate() {
        let path = format!("phases[0].elements[{i}]");
        let symbol = as_str(v, &path)?;
        let mass = custom.get(symbol).copied().or_else(|| {
            ATOMIC_MASSES
                .iter()
                .find(|&&(s, _)| s == symbol)
                .map(|&(_, m)| m)
        });
        let Some(atomic_mass) = mass else {
            return Err(err(
                &path,
                format!("unknown element `{symbol}` (no built-in mass, no `elements` entry)"),
            ));
        };
        elements.push(Element {
            symbol: symbol.to_string(),
            atomic_mass,
        });
    }
    Ok(elements)
}

fn parse_species(
    root: &serde_yaml::Mapping,
    phase_species: &[String],
    elements: &[Element],
    element_index: &HashMap<&str, usize>,
) -> Result<Vec<Species>> {
    let list = as_seq(require(root, "species", "document")?, "species")?;
    let mut defined: HashMap<String, Species> = HashMap::new();
    for (i, entry) in list.iter().enumerate() {
        let path = format!("species[{i}]");
        let map = as_map(entry, &path)?;
        let name = as_str(require(map, "name", &path)?, &format!("{path}.name"))?.to_string();
        let path = format!("species[{i}] ({name})");

        for (k, _) in map {
            let key = as_str(k, &path)?;
            if !matches!(key, "name" | "composition" | "thermo" | "note" | "transport") {
                return Err(err(&path, format!("unsupported species key `{key}`")));
            }
        }

        let comp_map = as_map(
            require(map, "composition", &path)?,
            &format!("{path}.composition"),
        )?;
        let mut composition = Vec::new();
        let mut molar_mass = 0.0;
        for (k, v) in comp_map {
            let sym = as_str(k, &format!("{path}.composition"))?;
            let count = as_f64(v, &format!("{path}.composition.{sym}"))?;
            let Some(&e) = element_index.get(sym) else {
                return Err(err(
                    &format!("{path}.composition"),
                    format!("element `{sym}` not declared in the phase"),
                ));
            };
            composition.push((e, count));
            molar_mass += count * elements[e].atomic_mass;
        }
        if molar_mass <= 0.0 {
            return Err(err(&path, "species molar mass must be positive"));
        }

        let thermo = parse_nasa7(map, &path)?;
        let note = get(map, "note").and_then(|v| v.as_str()).map(str::to_string);
        defined.insert(
            name.clone(),
            Species {
                name,
                composition,
                molar_mass,
                thermo,
                note,
            },
        );
    }

    let defined_names: HashSet<&str> = defined.keys().map(String::as_str).collect();
    let listed: HashSet<&str> = phase_species.iter().map(String::as_str).collect();
    for name in &listed {
        if !defined_names.contains(name) {
            return Err(err(
                "species",
                format!("phase lists `{name}` but no definition was found"),
            ));
        }
    }
    for name in &defined_names {
        if !listed.contains(name) {
            return Err(err(
                "species",
                format!("`{name}` is defined but not listed in the phase"),
            ));
        }
    }

    Ok(phase_species
        .iter()
        .map(|n| defined.remove(n).expect("checked above"))
        .collect())
}

fn parse_nasa7(map: &serde_yaml::Mapping, path: &str) -> Result<Nasa7> {
    let tpath = format!("{path}.thermo");
    let thermo = as_map(require(map, "thermo", path)?, &tpath)?;
    let model = as_str(require(thermo, "model", &tpath)?, &format!("{tpath}.model"))?;
    if model != "NASA7" {
        return Err(err(
            &format!("{tpath}.model"),
            format!("unsupported thermo model `{model}`; only NASA7"),
        ));
    }
    let ranges = as_seq(
        require(thermo, "temperature-ranges", &tpath)?,
        &format!("{tpath}.temperature-ranges"),
    )?;
    if ranges.len() != 3 {
        return Err(err(
            &format!("{tpath}.temperature-ranges"),
            "exactly two ranges (three bounds) are supported",
        ));
    }
    let bounds: Vec<f64> = ranges
        .iter()
        .map(|v| as_f64(v, &format!("{tpath}.temperature-ranges")))
        .collect::<Result<_>>()?;
    if !(bounds[0] < bounds[1] && bounds[1] < bounds[2]) {
        return Err(err(
            &format!("{tpath}.temperature-ranges"),
            "bounds must be strictly increasing",
        ));
    }
    let data = as_seq(require(thermo, "data", &tpath)?, &format!("{tpath}.data"))?;
    if data.len() != 2 {
        return Err(err(
            &format!("{tpath}.data"),
            "expected two coefficient rows (low, high)",
        ));
    }
    let mut rows = [[0.0; 7]; 2];
    for (r, row) in data.iter().enumerate() {
        let coeffs = as_seq(row, &format!("{tpath}.data[{r}]"))?;
        if coeffs.len() != 7 {
            return Err(err(
                &format!("{tpath}.data[{r}]"),
                format!("expected 7 coefficients, found {}", coeffs.len()),
            ));
        }
        for (j, c) in coeffs.iter().enumerate() {
            rows[r][j] = as_f64(c, &format!("{tpath}.data[{r}][{j}]"))?;
        }
    }
    Ok(Nasa7 {
        t_min: bounds[0],
        t_mid: bounds[1],
        t_max: bounds[2],
        low: rows[0],
        high: rows[1],
    })
}

struct ParsedEquation {
    reactants: Vec<(usize, f64)>,
    products: Vec<(usize, f64)>,
    reversible: bool,
    falloff_marked: bool,
    third_body: bool,
}

fn parse_equation(eq: &str, species_index: &HashMap<&str, usize>, path: &str) -> Result<ParsedEquation> {
    let (lhs, rhs, reversible) = if let Some((l, r)) = eq.split_once("<=>") {
        (l, r, true)
    } else if let Some((l, r)) = eq.split_once("=>") {
        (l, r, false)
    } else if let Some((l, r)) = eq.split_once(" = ") {
        (l, r, true)
    } else {
        return Err(err(path, format!("no arrow found in equation `{eq}`")));
    };

    let mut falloff = [false, false];
    let mut third_body = [false, false];
    let mut sides: Vec<Vec<(usize, f64)>> = Vec::new();
    for (s, side) in [lhs, rhs].iter().enumerate() {
        let mut cleaned = side.to_string();
        for marker in ["(+M)", "(+ M)"] {
            if cleaned.contains(marker) {
                falloff[s] = true;
                cleaned = cleaned.replace(marker, " ");
            }
        }
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for term in cleaned.split('+') {
            let tokens: Vec<&str> = term.split_whitespace().collect();
            let (coeff, name) = match tokens.len() {
                0 => continue,
                1 => (1.0, tokens[0]),
                2 => {
                    let c: f64 = tokens[0].parse().map_err(|_| {
                        err(path, format!("bad stoichiometric coefficient `{}`", tokens[0]))
                    })?;
                    (c, tokens[1])
                }
                _ => return Err(err(path, format!("cannot parse term `{}`", term.trim()))),
            };
            if coeff < 0.0 {
                return Err(err(path, "stoichiometric coefficients must be non-negative"));
            }
            if name == "M" {
                third_body[s] = true;
                continue;
            }
            let Some(&idx) = species_index.get(name) else {
                return Err(err(path, format!("undeclared species `{name}` in equation")));
            };
            match terms.iter_mut().find(|(i, _)| *i == idx) {
                Some((_, c)) => *c += coeff,
                None => terms.push((idx, coeff)),
            }
        }
        if terms.is_empty() {
            return Err(err(path, "each side must name at least one species"));
        }
        sides.push(terms);
    }

    if falloff[0] != falloff[1] {
        return Err(err(path, "(+M) must appear on both sides or neither"));
    }
    if third_body[0] != third_body[1] {
        return Err(err(path, "`+ M` must appear on both sides or neither"));
    }

    let products = sides.pop().expect("two sides");
    let reactants = sides.pop().expect("two sides");
    Ok(ParsedEquation {
        reactants,
        products,
        reversible,
        falloff_marked: falloff[0],
        third_body: third_body[0],
    })
}

fn parse_arrhenius(v: &Value, units: &Units, path: &str) -> Result<Arrhenius> {
    let map = as_map(v, path)?;
    let a = as_f64(require(map, "A", path)?, &format!("{path}.A"))?;
    let b = as_f64(require(map, "b", path)?, &format!("{path}.b"))?;
    let ea = as_f64(require(map, "Ea", path)?, &format!("{path}.Ea"))?;
    Ok(Arrhenius {
        a,
        b,
        ea: ea * units.activation_to_j_kmol,
    })
}

fn parse_efficiencies(
    map: &serde_yaml::Mapping,
    species_index: &HashMap<&str, usize>,
    path: &str,
) -> Result<Vec<(usize, f64)>> {
    let Some(v) = get(map, "efficiencies") else {
        return Ok(Vec::new());
    };
    let emap = as_map(v, &format!("{path}.efficiencies"))?;
    let mut out = Vec::new();
    for (k, val) in emap {
        let name = as_str(k, &format!("{path}.efficiencies"))?;
        let Some(&idx) = species_index.get(name) else {
            return Err(err(
                &format!("{path}.efficiencies"),
                format!("undeclared species `{name}`"),
            ));
        };
        out.push((idx, as_f64(val, &format!("{path}.efficiencies.{name}"))?));
    }
    Ok(out)
}

fn parse_reactions(
    root: &serde_yaml::Mapping,
    species_index: &HashMap<&str, usize>,
    units: &Units,
) -> Result<Vec<Reaction>> {
    let Some(block) = get(root, "reactions") else {
        return Ok(Vec::new());
    };
    let list = as_seq(block, "reactions")?;
    let mut reactions = Vec::with_capacity(list.len());
    for (i, entry) in list.iter().enumerate() {
        let path = format!("reactions[{i}]");
        let map = as_map(entry, &path)?;
        let equation =
            as_str(require(map, "equation", &path)?, &format!("{path}.equation"))?.to_string();
        let path = format!("reactions[{i}] ({equation})");

        for (k, _) in map {
            let key = as_str(k, &path)?;
            if !matches!(
                key,
                "equation"
                    | "rate-constant"
                    | "type"
                    | "efficiencies"
                    | "low-P-rate-constant"
                    | "high-P-rate-constant"
                    | "Troe"
                    | "duplicate"
                    | "note"
            ) {
                return Err(err(&path, format!("unsupported reaction key `{key}`")));
            }
        }

        let parsed = parse_equation(&equation, species_index, &path)?;
        let rtype = get(map, "type").map(|v| as_str(v, &format!("{path}.type"))).transpose()?;
        let duplicate = get(map, "duplicate").and_then(Value::as_bool).unwrap_or(false);

        let (rate, kind) = match rtype.unwrap_or("elementary") {
            "elementary" => {
                if parsed.third_body || parsed.falloff_marked {
                    return Err(err(&path, "third-body marker in an elementary reaction"));
                }
                let rate = parse_arrhenius(
                    require(map, "rate-constant", &path)?,
                    units,
                    &format!("{path}.rate-constant"),
                )?;
                (rate, RateKind::Elementary)
            }
            "three-body" => {
                if !parsed.third_body {
                    return Err(err(&path, "three-body reaction lacks `+ M` in equation"));
                }
                let rate = parse_arrhenius(
                    require(map, "rate-constant", &path)?,
                    units,
                    &format!("{path}.rate-constant"),
                )?;
                let efficiencies = parse_efficiencies(map, species_index, &path)?;
                (rate, RateKind::ThreeBody { efficiencies })
            }
            "falloff" => {
                if !parsed.falloff_marked {
                    return Err(err(&path, "falloff reaction lacks `(+M)` in equation"));
                }
                let high = parse_arrhenius(
                    require(map, "high-P-rate-constant", &path)?,
                    units,
                    &format!("{path}.high-P-rate-constant"),
                )?;
                let low = parse_arrhenius(
                    require(map, "low-P-rate-constant", &path)?,
                    units,
                    &format!("{path}.low-P-rate-constant"),
                )?;
                let tmap = as_map(require(map, "Troe", &path)?, &format!("{path}.Troe"))?;
                let troe = Troe {
                    a: as_f64(require(tmap, "A", &path)?, &format!("{path}.Troe.A"))?,
                    t3: as_f64(require(tmap, "T3", &path)?, &format!("{path}.Troe.T3"))?,
                    t1: as_f64(require(tmap, "T1", &path)?, &format!("{path}.Troe.T1"))?,
                    t2: get(tmap, "T2")
                        .map(|v| as_f64(v, &format!("{path}.Troe.T2")))
                        .transpose()?,
                };
                let efficiencies = parse_efficiencies(map, species_index, &path)?;
                (
                    high,
                    RateKind::Falloff {
                        low,
                        troe,
                        efficiencies,
                    },
                )
            }
            other => {
                return Err(err(
                    &format!("{path}.type"),
                    format!("unsupported reaction type `{other}`"),
                ))
            }
        };

        reactions.push(Reaction {
            equation,
            reactants: parsed.reactants,
            products: parsed.products,
            reversible: parsed.reversible,
            duplicate,
            rate,
            kind,
        });
    }
    Ok(reactions)
}

fn validate(mech: &Mechanism) -> Result<()> {
    // Element balance, exact: compositions and coefficients are parsed
    // numbers, so the sums below involve only small integers.
    for r in &mech.reactions {
        for (e, el) in mech.elements.iter().enumerate() {
            let mut net = 0.0;
            for (i, sp) in mech.species.iter().enumerate() {
                let atoms: f64 = sp
                    .composition
                    .iter()
                    .filter(|&&(ee, _)| ee == e)
                    .map(|&(_, n)| n)
                    .sum();
                if atoms != 0.0 {
                    net += atoms * r.net_coefficient(i);
                }
            }
            if net.abs() > 1e-10 {
                return Err(MechanismError::Validation(format!(
                    "element {} is not conserved by reaction `{}` (net {} atoms)",
                    el.symbol, r.equation, net
                )));
            }
        }
    }

    // Undeclared duplicates.
    for (i, a) in mech.reactions.iter().enumerate() {
        for b in mech.reactions.iter().skip(i + 1) {
            let mut ra = a.reactants.clone();
            let mut rb = b.reactants.clone();
            let mut pa = a.products.clone();
            let mut pb = b.products.clone();
            for v in [&mut ra, &mut rb, &mut pa, &mut pb] {
                v.sort_by(|x, y| x.0.cmp(&y.0));
            }
            if ra == rb && pa == pb && !(a.duplicate && b.duplicate) {
                return Err(MechanismError::Validation(format!(
                    "`{}` appears twice without `duplicate: true`",
                    a.equation
                )));
            }
        }
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    // Shortest representation that round-trips, forced to float syntax:
    // a bare integer like 2.08e19 would overflow YAML's integer range.
    let s = format!("{x}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn write_document(mech: &Mechanism) -> String {
    let mut out = String::new();
    if let Some(desc) = &mech.description {
        out.push_str("description: |-\n");
        for line in desc.lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    let u = &mech.units;
    out.push_str(&format!(
        "units: {{length: {}, time: s, quantity: {}, activation-energy: {}}}\n\n",
        u.length_name, u.quantity_name, u.activation_name
    ));

    out.push_str("phases:\n");
    out.push_str(&format!("- name: {}\n", mech.name));
    out.push_str("  thermo: ideal-gas\n");
    out.push_str(&format!(
        "  elements: [{}]\n",
        mech.elements
            .iter()
            .map(|e| e.symbol.clone())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str(&format!(
        "  species: [{}]\n",
        mech.species
            .iter()
            .map(|s| s.name.clone())
            .collect::<Vec<_>>()
            .join(", ")
    ));
    out.push_str("  kinetics: gas\n\n");

    // Non-built-in element masses must be re-declared for a round trip.
    let customs: Vec<&Element> = mech
        .elements
        .iter()
        .filter(|e| {
            ATOMIC_MASSES
                .iter()
                .find(|&&(s, _)| s == e.symbol)
                .map(|&(_, m)| m != e.atomic_mass)
                .unwrap_or(true)
        })
        .collect();
    if !customs.is_empty() {
        out.push_str("elements:\n");
        for e in customs {
            out.push_str(&format!(
                "- symbol: {}\n  atomic-weight: {}\n",
                e.symbol,
                fmt_f64(e.atomic_mass)
            ));
        }
        out.push('\n');
    }

    out.push_str("species:\n");
    for sp in &mech.species {
        out.push_str(&format!("- name: {}\n", sp.name));
        let comp = sp
            .composition
            .iter()
            .map(|&(e, n)| format!("{}: {}", mech.elements[e].symbol, fmt_f64(n)))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("  composition: {{{comp}}}\n"));
        out.push_str("  thermo:\n    model: NASA7\n");
        let t = &sp.thermo;
        out.push_str(&format!(
            "    temperature-ranges: [{}, {}, {}]\n",
            fmt_f64(t.t_min),
            fmt_f64(t.t_mid),
            fmt_f64(t.t_max)
        ));
        out.push_str("    data:\n");
        for row in [&t.low, &t.high] {
            out.push_str(&format!(
                "    - [{}]\n",
                row.iter().map(|&c| fmt_f64(c)).collect::<Vec<_>>().join(", ")
            ));
        }
        if let Some(note) = &sp.note {
            out.push_str(&format!("    note: '{}'\n", note.replace('\'', "''")));
        }
    }

    out.push_str("\nreactions:\n");
    for r in &mech.reactions {
        out.push_str(&format!("- equation: {}\n", r.equation));
        let arr = |a: &Arrhenius| {
            format!(
                "{{A: {}, b: {}, Ea: {}}}",
                fmt_f64(a.a),
                fmt_f64(a.b),
                fmt_f64(a.ea / u.activation_to_j_kmol)
            )
        };
        let eff = |pairs: &[(usize, f64)]| {
            pairs
                .iter()
                .map(|&(i, x)| format!("{}: {}", mech.species[i].name, fmt_f64(x)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &r.kind {
            RateKind::Elementary => {
                out.push_str(&format!("  rate-constant: {}\n", arr(&r.rate)));
            }
            RateKind::ThreeBody { efficiencies } => {
                out.push_str("  type: three-body\n");
                out.push_str(&format!("  rate-constant: {}\n", arr(&r.rate)));
                if !efficiencies.is_empty() {
                    out.push_str(&format!("  efficiencies: {{{}}}\n", eff(efficiencies)));
                }
            }
            RateKind::Falloff {
                low,
                troe,
                efficiencies,
            } => {
                out.push_str("  type: falloff\n");
                out.push_str(&format!("  low-P-rate-constant: {}\n", arr(low)));
                out.push_str(&format!("  high-P-rate-constant: {}\n", arr(&r.rate)));
                let t2 = troe
                    .t2
                    .map(|x| format!(", T2: {}", fmt_f64(x)))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "  Troe: {{A: {}, T3: {}, T1: {}{}}}\n",
                    fmt_f64(troe.a),
                    fmt_f64(troe.t3),
                    fmt_f64(troe.t1),
                    t2
                ));
                if !efficiencies.is_empty() {
                    out.push_str(&format!("  efficiencies: {{{}}}\n", eff(efficiencies)));
                }
            }
        }
        if r.duplicate {
            out.push_str("  duplicate: true\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Mechanism;

    #[test]
    fn single_species_no_reactions() {
        let doc = "\
phases:
- name: gas
  thermo: ideal-gas
  elements: [N]
  species: [N2]
  kinetics: gas

species:
- name: N2
  composition: {N: 2}
  thermo:
    model: NASA7
    temperature-ranges: [300.0, 1000.0, 5000.0]
    data:
    - [3.298677, 1.4082404e-03, -3.963222e-06, 5.641515e-09, -2.444854e-12, -1020.8999, 3.950372]
    - [2.92664, 1.4879768e-03, -5.68476e-07, 1.0097038e-10, -6.753351e-15, -922.7977, 5.980528]
";
        let mech = Mechanism::parse(doc).unwrap();
        assert_eq!(mech.n_species(), 1);
        assert_eq!(mech.n_reactions(), 0);
    }

    #[test]
    fn broken_hydrogen_count_names_element() {
        let doc = format!(
            "{}{}",
            HEADER,
            "\
reactions:
- equation: H2 + OH => H2O
  rate-constant: {A: 1.0e+10, b: 0.0, Ea: 0.0}
"
        );
        let e = Mechanism::parse(&doc).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("element H"), "got: {msg}");
    }

    #[test]
    fn undeclared_species_is_an_error() {
        let doc = format!(
            "{}{}",
            HEADER,
            "\
reactions:
- equation: H2 + AR => H2 + AR
  rate-constant: {A: 1.0, b: 0.0, Ea: 0.0}
"
        );
        let e = Mechanism::parse(&doc).unwrap_err();
        assert!(e.to_string().contains("undeclared species `AR`"));
    }

    #[test]
    fn unsupported_reaction_type_is_an_error() {
        let doc = format!(
            "{}{}",
            HEADER,
            "\
reactions:
- equation: H2 + OH => H2O + H
  type: pressure-dependent-Arrhenius
  rate-constant: {A: 1.0, b: 0.0, Ea: 0.0}
"
        );
        let e = Mechanism::parse(&doc).unwrap_err();
        assert!(e.to_string().contains("unsupported reaction type"));
    }

    #[test]
    fn syntax_error_reports_location() {
        let e = Mechanism::parse("phases:\n  - name: [unclosed").unwrap_err();
        assert!(e.to_string().contains("line"));
    }

    #[test]
    fn custom_pseudo_element_masses() {
        let doc = "\
phases:
- name: toy
  thermo: ideal-gas
  elements: [X]
  species: [A, B, C]
  kinetics: gas

elements:
- symbol: X
  atomic-weight: 1.0

species:
- name: A
  composition: {X: 1}
  thermo: &th
    model: NASA7
    temperature-ranges: [200.0, 1000.0, 3500.0]
    data:
    - [2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    - [2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
- name: B
  composition: {X: 1}
  thermo: *th
- name: C
  composition: {X: 1}
  thermo: *th
";
        let mech = Mechanism::parse(doc).unwrap();
        assert_eq!(mech.n_species(), 3);
        assert_eq!(mech.species[0].molar_mass, 1.0);
        let em = super::super::element_matrix(&mech);
        assert_eq!(em.c, nalgebra::DMatrix::from_element(3, 1, 1.0));
    }

    const HEADER: &str = "\
phases:
- name: gas
  thermo: ideal-gas
  elements: [O, H]
  species: [H2, OH, H2O, H]
  kinetics: gas

species:
- name: H2
  composition: {H: 2}
  thermo: &th
    model: NASA7
    temperature-ranges: [200.0, 1000.0, 3500.0]
    data:
    - [2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    - [2.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
- name: OH
  composition: {O: 1, H: 1}
  thermo: *th
- name: H2O
  composition: {O: 1, H: 2}
  thermo: *th
- name: H
  composition: {H: 1}
  thermo: *th

";
}
