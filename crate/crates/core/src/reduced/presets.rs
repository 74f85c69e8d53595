//! The twelve lifting/restriction combinations studied for the hydrogen
//! mechanism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{GhConfig, KrigingConfig, LpConfig, RbfConfig, SchemeConfig};

use super::Formulation;

pub const PRESET_COUNT: u8 = 12;

/// LP level counts are fixed per preset; a target error this small never
/// stops a fit early.
const LP_ERR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodPreset {
    pub id: u8,
    pub lifting: SchemeConfig,
    pub restriction: SchemeConfig,
    pub formulation: Formulation,
}

fn rbf50() -> SchemeConfig {
    SchemeConfig::Rbf(RbfConfig { p: 3, nn: Some(50) })
}

fn lp(max_level: usize, nn: Option<usize>) -> SchemeConfig {
    SchemeConfig::Lp(LpConfig { sigma0: 0.5, max_level, err: LP_ERR, nn })
}

fn kriging(theta: f64, nn: Option<usize>) -> SchemeConfig {
    SchemeConfig::Kriging(KrigingConfig { order: 2, theta, nn })
}

fn gh(nn: usize, err: f64) -> SchemeConfig {
    SchemeConfig::Gh(GhConfig { eps0: None, delta: 0.05, err, max_steps: 12, nn: Some(nn) })
}

pub fn method_preset(id: u8) -> Result<MethodPreset> {
    use Formulation::*;
    let nys = SchemeConfig::Nystrom;
    let (lifting, restriction, formulation) = match id {
        1 => (rbf50(), rbf50(), ChainRule),
        2 => (rbf50(), nys, ChainRule),
        3 => (lp(20, Some(80)), lp(7, Some(80)), ChainRule),
        4 => (lp(20, None), nys, ChainRule),
        5 => (gh(15, 5e-4), nys, ChainRule),
        6 => (kriging(1e-3, Some(8)), nys, ChainRule),
        7 => (gh(10, 1e-3), nys, ChainRule),
        8 => (kriging(1e-3, Some(8)), nys, Projection),
        9 => (kriging(13.0, None), nys, Projection),
        10 => (lp(20, Some(80)), lp(3, Some(80)), ChainRule),
        11 => (lp(20, Some(80)), lp(9, Some(80)), ChainRule),
        12 => (lp(20, Some(80)), lp(12, Some(80)), ChainRule),
        _ => return Err(Error::Unknown { kind: "method preset", name: id.to_string() }),
    };
    Ok(MethodPreset { id, lifting, restriction, formulation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_combinations() {
        let p4 = method_preset(4).unwrap();
        assert_eq!(p4.lifting, SchemeConfig::Lp(LpConfig { sigma0: 0.5, max_level: 20, err: LP_ERR, nn: None }));
        assert_eq!(p4.restriction, SchemeConfig::Nystrom);
        assert_eq!(p4.formulation, Formulation::ChainRule);

        let p7 = method_preset(7).unwrap();
        assert!(matches!(p7.lifting, SchemeConfig::Gh(GhConfig { nn: Some(10), err, .. }) if err == 1e-3));

        let p9 = method_preset(9).unwrap();
        assert_eq!(p9.lifting, SchemeConfig::Kriging(KrigingConfig { order: 2, theta: 13.0, nn: None }));
        assert_eq!(p9.formulation, Formulation::Projection);

        let p2 = method_preset(2).unwrap();
        assert_eq!(p2.lifting, SchemeConfig::Rbf(RbfConfig { p: 3, nn: Some(50) }));
        assert_eq!(p2.restriction, SchemeConfig::Nystrom);
    }

    #[test]
    fn restriction_levels_of_lp_family() {
        for (id, level) in [(3, 7), (10, 3), (11, 9), (12, 12)] {
            match method_preset(id).unwrap().restriction {
                SchemeConfig::Lp(c) => assert_eq!(c.max_level, level),
                other => panic!("preset {id}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_ids() {
        assert!(method_preset(0).is_err());
        assert!(method_preset(13).is_err());
        for id in 1..=PRESET_COUNT {
            assert!(method_preset(id).is_ok());
        }
    }
}
