//! Isothermal mass-action reaction networks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::VectorField;

/// Universal gas constant in J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314462618;

/// Concentrations down to this much below zero are treated as round-off
/// and clamped when computing rates.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Integrator trial states may undershoot zero by this much before the
/// field declares them inadmissible.
const FIELD_UNDERSHOOT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrhenius {
    #[serde(rename = "A")]
    pub prefactor: f64,
    #[serde(default)]
    pub b: f64,
    /// Activation energy in J/mol.
    #[serde(rename = "Ea", default)]
    pub activation_energy: f64,
}

impl Arrhenius {
    pub fn constant(k: f64) -> Self {
        Self { prefactor: k, b: 0.0, activation_energy: 0.0 }
    }

    /// `k(T) = A T^b exp(-Ea / (R T))`.
    pub fn rate_constant(&self, temperature: f64) -> f64 {
        self.prefactor
            * temperature.powf(self.b)
            * (-self.activation_energy / (GAS_CONSTANT * temperature)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Species {
    pub name: String,
    /// Molecular weight; unity for nondimensional toy networks.
    pub mw: f64,
    /// Atoms of each element per molecule.
    #[serde(default)]
    pub composition: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionDoc {
    reactants: BTreeMap<String, u32>,
    products: BTreeMap<String, u32>,
    arrhenius: Arrhenius,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reverse_arrhenius: Option<Arrhenius>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanismDoc {
    species: Vec<Species>,
    temperature: f64,
    reactions: Vec<ReactionDoc>,
}

/// One elementary step `sum a_p A_p <=> sum b_p A_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    /// `(species index, coefficient)` on each side, by species index.
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    pub forward: Arrhenius,
    pub reverse: Option<Arrhenius>,
    forward_k: f64,
    reverse_k: f64,
}

impl Reaction {
    pub fn forward_rate_constant(&self) -> f64 {
        self.forward_k
    }

    pub fn reverse_rate_constant(&self) -> f64 {
        self.reverse_k
    }

    /// Net stoichiometric vector `b - a` over `n` species.
    pub fn net_stoichiometry(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for &(p, a) in &self.reactants {
            g[p] -= a as f64;
        }
        for &(p, b) in &self.products {
            g[p] += b as f64;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    pub temperature: f64,
    elements: Vec<String>,
}

fn syntax(e: serde_json::Error) -> Error {
    Error::MechanismSyntax { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses and validates a mechanism JSON document.
pub fn parse_mechanism(document: &str) -> Result<ReactionNetwork> {
    let value: serde_json::Value = serde_json::from_str(document).map_err(syntax)?;
    let doc: MechanismDoc = serde_json::from_value(value).map_err(|e| Error::InvalidMechanism(e.to_string()))?;
    ReactionNetwork::build(doc)
}

impl ReactionNetwork {
    fn build(doc: MechanismDoc) -> Result<Self> {
        if doc.species.is_empty() {
            return Err(Error::InvalidMechanism("no species".into()));
        }
        if !(doc.temperature.is_finite() && doc.temperature > 0.0) {
            return Err(Error::InvalidMechanism(format!("temperature must be positive, got {}", doc.temperature)));
        }
        let mut index = HashMap::new();
        for (i, s) in doc.species.iter().enumerate() {
            if index.insert(s.name.clone(), i).is_some() {
                return Err(Error::InvalidMechanism(format!("duplicate species '{}'", s.name)));
            }
            if !(s.mw.is_finite() && s.mw > 0.0) {
                return Err(Error::InvalidMechanism(format!("species '{}' has molecular weight {}", s.name, s.mw)));
            }
            if s.composition.values().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(Error::InvalidMechanism(format!("species '{}' has a negative atom count", s.name)));
            }
        }
        let elements: Vec<String> = doc
            .species
            .iter()
            .flat_map(|s| s.composition.iter().filter(|(_, c)| **c > 0.0).map(|(e, _)| e.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let mut reactions = Vec::with_capacity(doc.reactions.len());
        for (r, rd) in doc.reactions.into_iter().enumerate() {
            let resolve = |side: &BTreeMap<String, u32>| -> Result<Vec<(usize, u32)>> {
                let mut v: Vec<(usize, u32)> = side
                    .iter()
                    .filter(|(_, c)| **c > 0)
                    .map(|(name, &c)| {
                        index
                            .get(name)
                            .map(|&i| (i, c))
                            .ok_or_else(|| Error::UnknownSpecies { reaction: r, species: name.clone() })
                    })
                    .collect::<Result<_>>()?;
                v.sort_unstable();
                Ok(v)
            };
            let reactants = resolve(&rd.reactants)?;
            let products = resolve(&rd.products)?;
            if reactants.is_empty() && products.is_empty() {
                return Err(Error::InvalidMechanism(format!("reaction {r} is empty")));
            }
            for a in std::iter::once(&rd.arrhenius).chain(rd.reverse_arrhenius.as_ref()) {
                if !(a.prefactor.is_finite() && a.prefactor >= 0.0 && a.b.is_finite() && a.activation_energy.is_finite()) {
                    return Err(Error::InvalidMechanism(format!("reaction {r} has invalid Arrhenius parameters")));
                }
            }
            let reaction = Reaction {
                forward_k: rd.arrhenius.rate_constant(doc.temperature),
                reverse_k: rd.reverse_arrhenius.map_or(0.0, |a| a.rate_constant(doc.temperature)),
                reactants,
                products,
                forward: rd.arrhenius,
                reverse: rd.reverse_arrhenius,
            };
            let gamma = reaction.net_stoichiometry(doc.species.len());
            for e in &elements {
                let net: f64 = gamma
                    .iter()
                    .zip(&doc.species)
                    .map(|(g, s)| g * s.composition.get(e).copied().unwrap_or(0.0))
                    .sum();
                if net.abs() > 1e-12 {
                    return Err(Error::ElementImbalance { reaction: r, element: e.clone(), net });
                }
            }
            reactions.push(reaction);
        }
        Ok(Self { species: doc.species, reactions, temperature: doc.temperature, elements })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Element names in sorted order.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn molecular_weights(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.mw).collect()
    }

    /// `c[e][p]`: atoms of element `e` in species `p`.
    pub fn composition_matrix(&self) -> Vec<Vec<f64>> {
        self.elements
            .iter()
            .map(|e| self.species.iter().map(|s| s.composition.get(e).copied().unwrap_or(0.0)).collect())
            .collect()
    }

    /// Elemental totals `sum_p c[e][p] y_p / W_p` of a state.
    pub fn element_totals(&self, y: &[f64]) -> Vec<f64> {
        self.composition_matrix()
            .iter()
            .map(|row| row.iter().zip(y).zip(&self.species).map(|((c, v), s)| c * v / s.mw).sum())
            .collect()
    }

    /// Net stoichiometric vectors, one per reaction.
    pub fn stoichiometry(&self) -> Vec<Vec<f64>> {
        let n = self.n_species();
        self.reactions.iter().map(|r| r.net_stoichiometry(n)).collect()
    }

    pub fn field(&self) -> MechanismField {
        MechanismField { network: self.clone() }
    }
}

impl ReactionNetwork {
    /// Equilibrium sharing the element totals of `fresh`: relaxation by
    /// integration, then Newton iterations on `f(y) = 0` together with the
    /// conservation constraints.
    pub fn equilibrium(&self, fresh: &[f64]) -> Result<Vec<f64>> {
        let field = self.field();
        let target = self.element_totals(fresh);
        let mut y = super::relax(&field, fresh, 1e6, 1e-10)?;
        let n = self.n_species();
        let comp = self.composition_matrix();
        let d = comp.len();
        for _ in 0..50 {
            let f = field.rhs(&y)?;
            let totals = self.element_totals(&y);
            let mut r = DVector::zeros(n + d);
            for i in 0..n {
                r[i] = -f[i];
            }
            for e in 0..d {
                r[n + e] = target[e] - totals[e];
            }
            if r.amax() < 1e-15 {
                break;
            }
            let mut jac = DMatrix::zeros(n + d, n);
            for j in 0..n {
                let h = 1e-7 * y[j].abs().max(1e-7);
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[j] += h;
                ym[j] = (ym[j] - h).max(0.0);
                let (fp, fm) = (field.rhs(&yp)?, field.rhs(&ym)?);
                for i in 0..n {
                    jac[(i, j)] = (fp[i] - fm[i]) / (yp[j] - ym[j]);
                }
                for e in 0..d {
                    jac[(n + e, j)] = comp[e][j] / self.species[j].mw;
                }
            }
            let step = crate::linalg::least_squares(&jac, &r)?;
            for (v, s) in y.iter_mut().zip(step.iter()) {
                *v = (*v + s).max(0.0);
            }
        }
        Ok(y)
    }
}

fn power_product(side: &[(usize, u32)], c: &[f64]) -> f64 {
    side.iter().map(|&(p, a)| c[p].powi(a as i32)).product()
}

/// Net rates `k_f prod c^a - k_r prod c^b` of every reaction at
/// concentrations `c`.
pub fn rates(network: &ReactionNetwork, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != network.n_species() {
        return Err(Error::DimensionMismatch(format!(
            "{} concentrations for {} species",
            c.len(),
            network.n_species()
        )));
    }
    if let Some((species, &value)) = c.iter().enumerate().find(|(_, v)| **v < -NEGATIVE_TOLERANCE) {
        return Err(Error::NegativeConcentration { species, value });
    }
    let clamped: Vec<f64> = c.iter().map(|v| v.max(0.0)).collect();
    Ok(network
        .reactions
        .iter()
        .map(|r| r.forward_k * power_product(&r.reactants, &clamped) - r.reverse_k * power_product(&r.products, &clamped))
        .collect())
}

/// `dy_p/dt = W_p sum_s g_sp Omega_s(y / W)` for a network.
#[derive(Debug, Clone)]
pub struct MechanismField {
    pub network: ReactionNetwork,
}

impl VectorField for MechanismField {
    fn dim(&self) -> usize {
        self.network.n_species()
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let net = &self.network;
        if y.len() != net.n_species() {
            return Err(Error::DimensionMismatch(format!("state of length {} for {} species", y.len(), net.n_species())));
        }
        if let Some((species, &value)) = y.iter().enumerate().find(|(_, v)| **v < -FIELD_UNDERSHOOT) {
            return Err(Error::NegativeConcentration { species, value });
        }
        let c: Vec<f64> = y.iter().zip(&net.species).map(|(v, s)| v.max(0.0) / s.mw).collect();
        let omega = rates(net, &c)?;
        dy.fill(0.0);
        for (r, w) in net.reactions.iter().zip(&omega) {
            for &(p, a) in &r.reactants {
                dy[p] -= a as f64 * w;
            }
            for &(p, b) in &r.products {
                dy[p] += b as f64 * w;
            }
        }
        for (d, s) in dy.iter_mut().zip(&net.species) {
            *d *= s.mw;
        }
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.network.species.iter().map(|s| s.name.clone()).collect()
    }
}
