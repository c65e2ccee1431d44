//! Reference two-measure systems used throughout the tests and the CLI.

use crate::error::{MopError, Result};
use crate::measures::{DensitySpec, Measure, Piece};
use crate::mop_engine::MopSystem;
use serde::{Deserialize, Serialize};

/// A system definition file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemSpec {
    /// two measures with disjoint hulls, Δ1 < Δ2
    Angelesco { mu1: Measure, mu2: Measure },
    /// μ1 and τ with Δ_τ < Δ1; μ2 = τ̂ μ1
    Nikishin { mu1: Measure, tau: Measure },
    /// any perfect pair
    General { mu1: Measure, mu2: Measure },
}

impl SystemSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SystemSpec = serde_json::from_str(s).map_err(|e| MopError::InvalidInput(e.to_string()))?;
        let (a, b) = spec.measures();
        a.validate()?;
        b.validate()?;
        Ok(spec)
    }

    /// (μ1, μ2)
    pub fn measures(&self) -> (Measure, Measure) {
        match self {
            SystemSpec::Angelesco { mu1, mu2 } | SystemSpec::General { mu1, mu2 } => (mu1.clone(), mu2.clone()),
            SystemSpec::Nikishin { mu1, tau } => (mu1.clone(), nikishin_partner(mu1, tau)),
        }
    }

    pub fn build(&self, prec: u32) -> Result<MopSystem> {
        let (a, b) = self.measures();
        MopSystem::with_precision(a, b, prec)
    }
}

/// μ1 = U[-2,-1], μ2 = U[1,2].
pub fn ang_u_measures() -> (Measure, Measure) {
    (Measure::uniform(-2.0, -1.0), Measure::uniform(1.0, 2.0))
}

/// μ1 = U[2,3], τ = U[0,1], μ2 = τ̂ μ1.
pub fn nik_u_measures() -> (Measure, Measure, Measure) {
    let mu1 = Measure::uniform(2.0, 3.0);
    let tau = Measure::uniform(0.0, 1.0);
    let mu2 = nikishin_partner(&mu1, &tau);
    (mu1, tau, mu2)
}

/// The measure τ̂ dμ1.
pub fn nikishin_partner(mu1: &Measure, tau: &Measure) -> Measure {
    Measure {
        atoms: mu1.atoms.iter().map(|&(x, m)| (x, m * tau.integrate(|t| 1.0 / (x - t)))).collect(),
        pieces: mu1
            .pieces
            .iter()
            .map(|p| Piece {
                a: p.a,
                b: p.b,
                density: DensitySpec::MarkovWeighted { base: Box::new(p.density.clone()), weight_measure: Box::new(tau.clone()) },
            })
            .collect(),
        quad_order: mu1.quad_order,
    }
}

pub fn ang_u() -> MopSystem {
    let (a, b) = ang_u_measures();
    MopSystem::new(a, b).expect("valid system")
}

pub fn nik_u() -> MopSystem {
    let (a, _, b) = nik_u_measures();
    MopSystem::new(a, b).expect("valid system")
}
