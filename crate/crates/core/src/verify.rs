//! Executable checks of the energy identities and tensor structure.
//!
//! The rate identity is checked against a second, dense assembly of the
//! unresolved residual `Γ = (I - P) R(û)` that only uses `tensor.get`, so the
//! sparse contraction code is never compared with itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{MultiIndexSet, QuadratureRule, TripleProductTensor};
use crate::error::Result;
use crate::problems::{KoVariant, ProblemSpec};
use crate::system::{energy_rate, GalerkinBasis, GalerkinState, ModeRange, QuadraticSystem, RateModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub max_abs: f64,
    pub max_rel: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub trials: usize,
}

impl CheckReport {
    fn new(name: String, max_abs: f64, max_rel: f64, tolerance: f64, trials: usize) -> Self {
        Self { name, max_abs, max_rel, tolerance, passed: max_rel <= tolerance, trials }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} trials={} max_abs={:.3e} max_rel={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.trials,
            self.max_abs,
            self.max_rel,
            self.tolerance
        )
    }
}

fn ko_system(dim: usize) -> QuadraticSystem {
    let variant = match dim {
        1 => KoVariant::OneD,
        2 => KoVariant::TwoD,
        _ => KoVariant::ThreeD,
    };
    ProblemSpec::KraichnanOrszag(variant).structure()
}

fn random_state(rng: &mut ChaCha8Rng, n_modes: usize, support: usize) -> GalerkinState {
    let mut s = GalerkinState::zeros(0.0, 3, n_modes);
    for m in 0..3 {
        for c in &mut s.variable_mut(m)[..support] {
            *c = rng.gen_range(-1.0..1.0);
        }
    }
    s
}

/// `Γ` for K-O, assembled mode by mode from the triple products.
fn dense_gamma(set: &MultiIndexSet, tensor: &TripleProductTensor, y: &[Vec<f64>]) -> [Vec<f64>; 3] {
    let nr = set.n_resolved();
    let n = set.len();
    let mut g: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n - nr]);
    for k in nr..n {
        let (mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0);
        for i in 0..nr {
            for j in 0..nr {
                let e = tensor.get(i, j, k);
                if e == 0.0 {
                    continue;
                }
                g1 += e * y[0][i] * y[2][j];
                g2 -= e * y[1][i] * y[2][j];
                g3 += e * (y[1][i] * y[1][j] - y[0][i] * y[0][j]);
            }
        }
        g[0][k - nr] = g1;
        g[1][k - nr] = g2;
        g[2][k - nr] = g3;
    }
    g
}

/// Compares the reduced K-O energy rate with `-2 t ‖Γ‖²` on random
/// `F`-supported states in `dim` random dimensions.
pub fn check_rate_identity_dim(dim: usize, p_r: usize, p_f: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    let basis = GalerkinBasis::new(dim, p_r, p_f)?;
    let sys = ko_system(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let state = random_state(&mut rng, basis.n_modes(), basis.n_resolved());
        let t = rng.gen_range(0.0..10.0);
        let lhs = energy_rate(&sys, &state, t, RateModel::Reduced, ModeRange::Resolved, &basis)?;
        let gamma = dense_gamma(&basis.set, &basis.tensor, &state.to_variables());
        let norm2: f64 = gamma.iter().flatten().map(|v| v * v).sum();
        let rhs = -2.0 * t * norm2;
        let abs = (lhs - rhs).abs();
        max_abs = max_abs.max(abs);
        if abs > 0.0 {
            max_rel = max_rel.max(abs / rhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(CheckReport::new(format!("rate_identity(d={dim},p_r={p_r},p_f={p_f})"), max_abs, max_rel, 1e-11, trials))
}

/// One-dimensional rate identity check.
pub fn check_rate_identity(p_r: usize, p_f: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    check_rate_identity_dim(1, p_r, p_f, trials, seed)
}

/// Full K-O Galerkin energy rate over `F ∪ G` on random states, normalized by
/// `2‖R‖‖y‖`.
pub fn check_conservation(p_f: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    let basis = GalerkinBasis::new(1, p_f, p_f)?;
    let sys = ko_system(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let state = random_state(&mut rng, basis.n_modes(), basis.n_modes());
        let rate = energy_rate(&sys, &state, 0.0, RateModel::Full, ModeRange::All, &basis)?;
        let r = crate::system::galerkin_full_rhs(&sys, &state, &basis)?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = 2.0 * norm(r.values()) * norm(state.values());
        max_abs = max_abs.max(rate.abs());
        if scale > 0.0 {
            max_rel = max_rel.max(rate.abs() / scale);
        }
    }
    Ok(CheckReport::new(format!("conservation(p_f={p_f})"), max_abs, max_rel, 1e-11, trials))
}

/// Structural identities of the triple-product tensor: permutation symmetry,
/// `e_ij0 = δ_ij`, odd-sum zeros in every dimension, and `e_112 = 2√5/5` in
/// one dimension.
pub fn check_tensor(p_f: usize, dim: usize) -> Result<CheckReport> {
    let set = MultiIndexSet::new(dim, p_f, p_f)?;
    let rule = QuadratureRule::exact_for(3 * p_f, dim)?;
    let tensor = TripleProductTensor::build(&set, &rule)?;
    let n = set.len();
    let mut max_abs = 0.0f64;
    let mut track = |v: f64| max_abs = max_abs.max(v.abs());
    for i in 0..n {
        for j in 0..n {
            track(tensor.get(i, j, 0) - if i == j { 1.0 } else { 0.0 });
            for k in 0..n {
                let e = tensor.get(i, j, k);
                track(e - tensor.get(j, k, i));
                track(e - tensor.get(k, i, j));
                let (a, b, c) = (set.get(i).degrees(), set.get(j).degrees(), set.get(k).degrees());
                if (0..dim).any(|d| (a[d] + b[d] + c[d]) % 2 == 1) {
                    track(e);
                }
            }
        }
    }
    if dim == 1 && p_f >= 2 {
        track(tensor.get(1, 1, 2) - 2.0 * 5f64.sqrt() / 5.0);
    }
    Ok(CheckReport::new(format!("tensor(d={dim},p_f={p_f})"), max_abs, max_abs, 1e-12, 1))
}

/// The standard battery run by the `verify` subcommand.
pub fn run_battery(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = vec![check_tensor(7, 1)?, check_tensor(4, 2)?, check_tensor(3, 3)?];
    for (p_r, p_f) in [(1, 2), (3, 7), (5, 11)] {
        out.push(check_rate_identity(p_r, p_f, trials, seed)?);
    }
    out.push(check_rate_identity_dim(2, 2, 5, trials, seed)?);
    out.push(check_conservation(7, trials, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn analytic_state_matches_hand_value() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let c = 0.1 / 3f64.sqrt();
        let vars = vec![vec![1.0, 0.0, 0.0], vec![0.0, c, 0.0], vec![0.0; 3]];
        let gamma = dense_gamma(&basis.set, &basis.tensor, &vars);
        let norm2: f64 = gamma.iter().flatten().map(|v| v * v).sum();
        assert_relative_eq!(-2.0 * norm2, -1.777_777_777_777_8e-5, max_relative = 1e-10);
        let state = GalerkinState::from_variables(0.0, 3, &vars).unwrap();
        let rate = energy_rate(&ko_system(1), &state, 1.0, RateModel::Reduced, ModeRange::Resolved, &basis).unwrap();
        assert_relative_eq!(rate, -2.0 * norm2, max_relative = 1e-12);
        let at_zero = energy_rate(&ko_system(1), &state, 0.0, RateModel::Reduced, ModeRange::Resolved, &basis).unwrap();
        assert_eq!(at_zero, 0.0);
    }

    #[test]
    fn checks_pass() {
        assert!(check_rate_identity(3, 7, 20, 1).unwrap().passed);
        assert!(check_rate_identity_dim(3, 2, 4, 5, 1).unwrap().passed);
        assert!(check_conservation(7, 20, 1).unwrap().passed);
        let t = check_tensor(5, 1).unwrap();
        assert!(t.passed, "{t}");
    }

    #[test]
    fn reports_are_deterministic() {
        assert_eq!(check_rate_identity(2, 4, 10, 9).unwrap(), check_rate_identity(2, 4, 10, 9).unwrap());
        assert!(check_rate_identity(2, 4, 3, 9).unwrap().to_string().starts_with("PASS rate_identity"));
    }
}
