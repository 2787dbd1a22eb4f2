//! Benchmark systems: linear decay with a random rate and the transformed
//! Kraichnan-Orszag three-mode system with 1, 2 or 3 random inputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{legendre_eval, MultiIndexSet, QuadratureRule};
use crate::error::{Error, Result};
use crate::system::{QuadraticSystem, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KoVariant {
    /// `y1 = 1, y2 = 0.1 ξ, y3 = 0`
    OneD,
    /// `y1 = 1, y2 = 0.1 ξ1, y3 = ξ2`
    TwoD,
    /// `y_m = ξ_m`
    ThreeD,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProblemSpec {
    /// `du/dt = -κ u`, `κ = ξ ~ U(-1, 1)`, `u(0) = u0`.
    LinearDecay { u0: f64 },
    KraichnanOrszag(KoVariant),
}

impl ProblemSpec {
    pub fn dimension(&self) -> usize {
        match self {
            ProblemSpec::LinearDecay { .. } => 1,
            ProblemSpec::KraichnanOrszag(KoVariant::OneD) => 1,
            ProblemSpec::KraichnanOrszag(KoVariant::TwoD) => 2,
            ProblemSpec::KraichnanOrszag(KoVariant::ThreeD) => 3,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            ProblemSpec::LinearDecay { .. } => 1,
            ProblemSpec::KraichnanOrszag(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::LinearDecay { .. } => "ode",
            ProblemSpec::KraichnanOrszag(KoVariant::OneD) => "ko1d",
            ProblemSpec::KraichnanOrszag(KoVariant::TwoD) => "ko2d",
            ProblemSpec::KraichnanOrszag(KoVariant::ThreeD) => "ko3d",
        }
    }

    /// Quadratic structure without coefficient vectors.
    pub fn structure(&self) -> QuadraticSystem {
        match self {
            ProblemSpec::LinearDecay { .. } => {
                QuadraticSystem::new(1, 1).with_bilinear(0, Var::Param(0), Var::State(0), -1.0)
            }
            // dy3/dt = -y1² + y2², which conserves y1² + y2² + y3²
            ProblemSpec::KraichnanOrszag(_) => QuadraticSystem::new(3, 0)
                .with_bilinear(0, Var::State(0), Var::State(2), 1.0)
                .with_bilinear(1, Var::State(1), Var::State(2), -1.0)
                .with_bilinear(2, Var::State(0), Var::State(0), -1.0)
                .with_bilinear(2, Var::State(1), Var::State(1), 1.0),
        }
    }

    /// Parameter values at a point of the random hypercube.
    pub fn params_at(&self, xi: &[f64]) -> Vec<f64> {
        match self {
            ProblemSpec::LinearDecay { .. } => vec![xi[0]],
            ProblemSpec::KraichnanOrszag(_) => Vec::new(),
        }
    }

    /// Initial state at a point of the random hypercube.
    pub fn initial_condition(&self, xi: &[f64]) -> Vec<f64> {
        match self {
            ProblemSpec::LinearDecay { u0 } => vec![*u0],
            ProblemSpec::KraichnanOrszag(KoVariant::OneD) => vec![1.0, 0.1 * xi[0], 0.0],
            ProblemSpec::KraichnanOrszag(KoVariant::TwoD) => vec![1.0, 0.1 * xi[0], xi[1]],
            ProblemSpec::KraichnanOrszag(KoVariant::ThreeD) => vec![xi[0], xi[1], xi[2]],
        }
    }

    /// Builds the system on the root element `[-1, 1]^d`, projecting parameters
    /// and initial conditions onto `set` by quadrature.
    pub fn build(&self, set: &MultiIndexSet) -> Result<QuadraticSystem> {
        if set.dim() != self.dimension() {
            return Err(Error::UnsupportedProblem(format!(
                "{} needs a {}-dimensional basis, got {}",
                self.name(),
                self.dimension(),
                set.dim()
            )));
        }
        if let ProblemSpec::LinearDecay { u0 } = self {
            if !u0.is_finite() {
                return Err(Error::UnsupportedProblem(format!("u0 = {u0}")));
            }
        }
        let rule = QuadratureRule::gauss_legendre(set.order() + 2, set.dim())?;
        let mut sys = self.structure();
        sys.param_coefficients = project(set, &rule, sys.n_params(), |xi| self.params_at(xi));
        sys.initial_coefficients = project(set, &rule, sys.n_states(), |xi| self.initial_condition(xi));
        Ok(sys)
    }
}

fn project<F: Fn(&[f64]) -> Vec<f64>>(set: &MultiIndexSet, rule: &QuadratureRule, count: usize, f: F) -> Vec<Vec<f64>> {
    (0..count)
        .map(|c| {
            set.indices()
                .iter()
                .map(|idx| {
                    let v = rule.integrate(|xi| f(xi)[c] * legendre_eval(idx, xi));
                    // quadrature noise on modes the expression does not touch
                    if v.abs() < 1e-15 { 0.0 } else { v }
                })
                .collect()
        })
        .collect()
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(ProblemSpec::LinearDecay { u0: 1.0 }),
            "ko1d" => Ok(ProblemSpec::KraichnanOrszag(KoVariant::OneD)),
            "ko2d" => Ok(ProblemSpec::KraichnanOrszag(KoVariant::TwoD)),
            "ko3d" => Ok(ProblemSpec::KraichnanOrszag(KoVariant::ThreeD)),
            other => Err(Error::UnsupportedProblem(format!(
                "unknown problem {other:?} (expected ode, ko1d, ko2d or ko3d)"
            ))),
        }
    }
}

/// Exact mean and variance of `u(t) = u0 exp(-ξ t)` with `ξ ~ U(-1, 1)`.
pub fn exact_linear_stats(u0: f64, t: f64) -> (f64, f64) {
    let u2 = u0 * u0;
    if t == 0.0 {
        return (u0, 0.0);
    }
    if t < 1e-3 {
        // sinh(t)/t and sinh(2t)/(2t) - (cosh(2t) - 1)/(2t²) as even series
        let t2 = t * t;
        let mean = 1.0 + t2 * (1.0 / 6.0 + t2 * (1.0 / 120.0 + t2 * (1.0 / 5040.0 + t2 * (1.0 / 362_880.0 + t2 / 39_916_800.0))));
        let var = t2
            * (1.0 / 3.0
                + t2 * (4.0 / 45.0 + t2 * (1.0 / 105.0 + t2 * (8.0 / 14_175.0 + t2 * (2.0 / 93_555.0 + t2 * 8.0 / 14_189_175.0)))));
        return (u0 * mean, u2 * var);
    }
    let mean = u0 / (2.0 * t) * (t.exp() - (-t).exp());
    let (e2, em2) = ((2.0 * t).exp(), (-2.0 * t).exp());
    let var = u2 / (4.0 * t) * (e2 - em2) - u2 / (4.0 * t * t) * (e2 + em2 - 2.0);
    (mean, var)
}
