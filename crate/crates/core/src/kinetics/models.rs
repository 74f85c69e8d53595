//! Built-in analytic models.

use crate::error::{Error, Result};

use super::mechanism::{parse_mechanism, ReactionNetwork};
use super::VectorField;

/// Two-variable model with slow manifold `y2 = y1 / (1 + y1)`; `gamma > 1`
/// sets the time-scale separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DavisSkodje {
    pub gamma: f64,
}

impl DavisSkodje {
    pub fn slow_curve(y1: f64) -> f64 {
        y1 / (1.0 + y1)
    }

    pub fn slow_curve_slope(y1: f64) -> f64 {
        1.0 / (1.0 + y1).powi(2)
    }
}

impl VectorField for DavisSkodje {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (y1, y2) = (y[0], y[1]);
        let g = self.gamma;
        dy[0] = -y1;
        dy[1] = -g * y2 + ((g - 1.0) * y1 + g * y1 * y1) / (1.0 + y1).powi(2);
        Ok(())
    }

    fn slow_manifold_residual(&self, y: &[f64]) -> Option<f64> {
        Some((y[1] - Self::slow_curve(y[0])).abs())
    }
}

/// `y' = (-a y1, -b y2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear2d {
    pub a: f64,
    pub b: f64,
}

impl Linear2d {
    pub fn stiffness_ratio(&self) -> f64 {
        self.a.abs().max(self.b.abs()) / self.a.abs().min(self.b.abs())
    }
}

impl VectorField for Linear2d {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -self.a * y[0];
        dy[1] = -self.b * y[1];
        Ok(())
    }

    fn slow_manifold_residual(&self, y: &[f64]) -> Option<f64> {
        // the fast coordinate decays first
        Some(if self.a > self.b { y[0].abs() } else { y[1].abs() })
    }
}

/// Four species, two elements, three reversible steps. The rate constants
/// satisfy `K3 = K1 K2`, so the equilibrium is a detailed-balance state.
pub const TOY_H2_MECHANISM: &str = r#"{
  "species": [
    {"name": "H2", "mw": 1, "composition": {"H": 2}},
    {"name": "O2", "mw": 1, "composition": {"O": 2}},
    {"name": "OH", "mw": 1, "composition": {"H": 1, "O": 1}},
    {"name": "H2O", "mw": 1, "composition": {"H": 2, "O": 1}}
  ],
  "temperature": 1000,
  "reactions": [
    {"reactants": {"H2": 1, "O2": 1}, "products": {"OH": 2},
     "arrhenius": {"A": 2.0, "b": 0, "Ea": 0},
     "reverse_arrhenius": {"A": 0.2, "b": 0, "Ea": 0}},
    {"reactants": {"H2": 1, "OH": 2}, "products": {"H2O": 2},
     "arrhenius": {"A": 5.0, "b": 0, "Ea": 0},
     "reverse_arrhenius": {"A": 0.05, "b": 0, "Ea": 0}},
    {"reactants": {"H2": 2, "O2": 1}, "products": {"H2O": 2},
     "arrhenius": {"A": 1.0, "b": 0, "Ea": 0},
     "reverse_arrhenius": {"A": 0.001, "b": 0, "Ea": 0}}
  ]
}"#;

/// Stoichiometric fresh mixture of the toy network.
pub const TOY_H2_FRESH: [f64; 4] = [2.0, 1.0, 0.0, 0.0];

pub fn toy_h2_network() -> ReactionNetwork {
    parse_mechanism(TOY_H2_MECHANISM).expect("built-in mechanism is valid")
}

fn parse_args(name: &str) -> Result<(&str, Vec<f64>)> {
    let Some(open) = name.find('(') else {
        return Ok((name, Vec::new()));
    };
    let inner = name[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::param(format!("unbalanced parentheses in model '{name}'")))?;
    let args = inner
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::param(format!("bad model argument '{s}' in '{name}'"))))
        .collect::<Result<_>>()?;
    Ok((&name[..open], args))
}

/// Resolves `davis-skodje(gamma)`, `linear-2d(a, b)` or `toy-h2-skeleton`.
/// Arguments default to `gamma = 10` and `(a, b) = (1, 10)`.
pub fn builtin_model(name: &str) -> Result<Box<dyn VectorField>> {
    let (base, args) = parse_args(name.trim())?;
    let arity = |n: usize| -> Result<()> {
        if args.is_empty() || args.len() == n {
            Ok(())
        } else {
            Err(Error::param(format!("model '{base}' takes {n} argument(s), got {}", args.len())))
        }
    };
    match base {
        "davis-skodje" => {
            arity(1)?;
            let gamma = args.first().copied().unwrap_or(10.0);
            if !(gamma > 1.0) {
                return Err(Error::param(format!("davis-skodje needs gamma > 1, got {gamma}")));
            }
            Ok(Box::new(DavisSkodje { gamma }))
        }
        "linear-2d" => {
            arity(2)?;
            let (a, b) = if args.is_empty() { (1.0, 10.0) } else { (args[0], args[1]) };
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::param("linear-2d rates must be positive"));
            }
            Ok(Box::new(Linear2d { a, b }))
        }
        "toy-h2-skeleton" => {
            arity(0)?;
            Ok(Box::new(toy_h2_network().field()))
        }
        other => Err(Error::Unknown { kind: "model", name: other.into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::integrate;

    #[test]
    fn davis_skodje_velocity_tangent_to_slow_curve() {
        let f = DavisSkodje { gamma: 10.0 };
        for y1 in [0.0, 0.3, 1.0, 2.5, 4.0] {
            let v = f.rhs(&[y1, DavisSkodje::slow_curve(y1)]).unwrap();
            assert!((v[1] - DavisSkodje::slow_curve_slope(y1) * v[0]).abs() < 1e-10, "y1 {y1}");
        }
        assert_eq!(f.rhs(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn davis_skodje_relaxes_onto_slow_curve() {
        let f = builtin_model("davis-skodje(10)").unwrap();
        let traj = integrate(f.as_ref(), &[2.0, 2.0], (0.0, 1.0), 1e-8, 1e-10).unwrap();
        assert!(f.slow_manifold_residual(traj.last_state()).unwrap() < 1e-3);
    }

    #[test]
    fn linear_model_stiffness() {
        assert_eq!(Linear2d { a: 1.0, b: 10.0 }.stiffness_ratio(), 10.0);
        assert!(builtin_model("linear-2d(1, 10)").is_ok());
        assert!(builtin_model("linear-2d(1)").is_err());
    }

    #[test]
    fn unknown_model_rejected() {
        assert!(matches!(builtin_model("brusselator"), Err(Error::Unknown { .. })));
        assert!(builtin_model("davis-skodje(0.5)").is_err());
    }

    #[test]
    fn toy_network_equilibrium_is_stationary() {
        let net = toy_h2_network();
        assert_eq!(net.elements(), &["H".to_string(), "O".to_string()]);
        let f = net.field();
        let eq = net.equilibrium(&TOY_H2_FRESH).unwrap();
        let v = f.rhs(&eq).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12), "{v:?}");
        // detailed balance of the first two steps
        let k1 = eq[2] * eq[2] / (eq[0] * eq[1]);
        let k2 = eq[3] * eq[3] / (eq[0] * eq[2] * eq[2]);
        assert!((k1 - 10.0).abs() < 1e-8 * 10.0);
        assert!((k2 - 100.0).abs() < 1e-8 * 100.0);
        assert_eq!(net.element_totals(&TOY_H2_FRESH), vec![4.0, 2.0]);
    }
}
