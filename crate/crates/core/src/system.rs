//! Quadratic stochastic ODEs and their Galerkin right-hand sides.
//!
//! A system is written over the extended vector `Z = (params ⊕ states)`:
//!
//! ```text
//! dy_m/dt = c_m + Σ_a L_{m,a} Z_a + Σ_{a,b} Q_{m,a,b} Z_a Z_b
//! ```
//!
//! Parameters are fixed random fields; states evolve. All coefficient vectors
//! live on the element-local orthonormal basis over `F ∪ G`, and every product
//! is projected through the triple-product tensor.
//!
//! Coefficients of real solutions in a real Legendre basis are real, so the
//! real parts and conjugates that appear in complex formulations of the energy
//! rate are identities here.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{MultiIndexSet, TripleProductTensor};
use crate::error::{Error, Result};

/// Operand of the extended vector `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    Param(usize),
    State(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub equation: usize,
    pub operand: Var,
    pub coefficient: f64,
}

/// `coefficient · Z_left · Z_right` in equation `equation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub equation: usize,
    pub left: Var,
    pub right: Var,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSystem {
    n_states: usize,
    n_params: usize,
    constant: Vec<f64>,
    linear: Vec<LinearTerm>,
    bilinear: Vec<BilinearTerm>,
    /// One coefficient vector per parameter over `F ∪ G`.
    pub param_coefficients: Vec<Vec<f64>>,
    /// One coefficient vector per state over `F ∪ G`.
    pub initial_coefficients: Vec<Vec<f64>>,
}

impl QuadraticSystem {
    pub fn new(n_states: usize, n_params: usize) -> Self {
        Self {
            n_states,
            n_params,
            constant: vec![0.0; n_states],
            linear: Vec::new(),
            bilinear: Vec::new(),
            param_coefficients: Vec::new(),
            initial_coefficients: Vec::new(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn with_constant(mut self, equation: usize, value: f64) -> Self {
        self.constant[equation] += value;
        self
    }

    pub fn with_linear(mut self, equation: usize, operand: Var, coefficient: f64) -> Self {
        self.linear.push(LinearTerm { equation, operand, coefficient });
        self
    }

    pub fn with_bilinear(mut self, equation: usize, left: Var, right: Var, coefficient: f64) -> Self {
        self.bilinear.push(BilinearTerm { equation, left, right, coefficient });
        self
    }

    pub fn constant(&self) -> &[f64] {
        &self.constant
    }

    pub fn linear_terms(&self) -> &[LinearTerm] {
        &self.linear
    }

    pub fn bilinear_terms(&self) -> &[BilinearTerm] {
        &self.bilinear
    }

    fn flat_index(&self, v: Var) -> usize {
        match v {
            Var::Param(p) => p,
            Var::State(s) => self.n_params + s,
        }
    }

    /// Symmetrized `Q_{m,a,b}` with `a`, `b` indexing the extended vector.
    pub fn bilinear_coefficient(&self, equation: usize, a: usize, b: usize) -> f64 {
        self.bilinear
            .iter()
            .filter(|t| t.equation == equation)
            .map(|t| {
                let (l, r) = (self.flat_index(t.left), self.flat_index(t.right));
                let mut q = 0.0;
                if (l, r) == (a, b) {
                    q += 0.5 * t.coefficient;
                }
                if (r, l) == (a, b) {
                    q += 0.5 * t.coefficient;
                }
                q
            })
            .sum()
    }

    /// Pointwise right-hand side for deterministic parameter and state values.
    pub fn eval_pointwise(&self, params: &[f64], y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.constant);
        let z = |v: Var| match v {
            Var::Param(p) => params[p],
            Var::State(s) => y[s],
        };
        for t in &self.linear {
            out[t.equation] += t.coefficient * z(t.operand);
        }
        for t in &self.bilinear {
            out[t.equation] += t.coefficient * z(t.left) * z(t.right);
        }
    }

    /// Checks coefficient vectors against a basis of `n_modes` functions.
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.param_coefficients.len() != self.n_params {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter vectors for {} parameters",
                self.param_coefficients.len(),
                self.n_params
            )));
        }
        for v in self.param_coefficients.iter().chain(&self.initial_coefficients) {
            if v.len() != n_modes {
                return Err(Error::ShapeMismatch(format!(
                    "coefficient vector of length {} for a basis of {n_modes}",
                    v.len()
                )));
            }
        }
        let in_range = |v: Var| match v {
            Var::Param(p) => p < self.n_params,
            Var::State(s) => s < self.n_states,
        };
        let ok = self.linear.iter().all(|t| t.equation < self.n_states && in_range(t.operand))
            && self
                .bilinear
                .iter()
                .all(|t| t.equation < self.n_states && in_range(t.left) && in_range(t.right));
        if !ok {
            return Err(Error::ShapeMismatch("term references an undefined variable".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self, n_modes: usize) -> Result<GalerkinState> {
        if self.initial_coefficients.len() != self.n_states {
            return Err(Error::ShapeMismatch("missing initial coefficients".into()));
        }
        GalerkinState::from_variables(0.0, n_modes, &self.initial_coefficients)
    }
}

/// Coefficients of every state variable over `F ∪ G` at time `t`, stored
/// variable-major in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    n_modes: usize,
    values: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(t: f64, n_states: usize, n_modes: usize) -> Self {
        Self { t, n_modes, values: vec![0.0; n_states * n_modes] }
    }

    pub fn from_flat(t: f64, n_modes: usize, values: Vec<f64>) -> Result<Self> {
        if n_modes == 0 || !values.len().is_multiple_of(n_modes) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not split into vectors of {n_modes}",
                values.len()
            )));
        }
        Ok(Self { t, n_modes, values })
    }

    pub fn from_variables(t: f64, n_modes: usize, vars: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(vars.len() * n_modes);
        for v in vars {
            if v.len() != n_modes {
                return Err(Error::ShapeMismatch(format!(
                    "state vector of length {} for a basis of {n_modes}",
                    v.len()
                )));
            }
            values.extend_from_slice(v);
        }
        Ok(Self { t, n_modes, values })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_states(&self) -> usize {
        self.values.len() / self.n_modes
    }

    pub fn variable(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_modes..(m + 1) * self.n_modes]
    }

    pub fn variable_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.values[m * self.n_modes..(m + 1) * self.n_modes]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_variables(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_modes).map(<[f64]>::to_vec).collect()
    }

    /// Copy with every unresolved (`G`) coefficient set to zero.
    pub fn restricted(&self, n_resolved: usize) -> Self {
        let mut out = self.clone();
        for chunk in out.values.chunks_mut(self.n_modes) {
            chunk[n_resolved..].fill(0.0);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Output-sliced views of the triple-product tensor used by the t-model
/// memory term.
///
/// The memory term needs `w = (I - P) R(û)` (products projected onto `G`)
/// followed by `P [B(w, z)]` with `w` supported on `G`. Both contractions are
/// precomputed per basis as sparse slices, so the four-index sum over
/// `i, j ∈ G, s, t` collapses into two passes over nonzero entries.
#[derive(Debug, Clone)]
pub struct ContractedMemoryTensor {
    n_modes: usize,
    n_resolved: usize,
    // For k ∈ F: entries (i ∈ G, j, e_ijk).
    from_unresolved: Vec<Vec<(u32, u32, f64)>>,
}

impl ContractedMemoryTensor {
    pub fn new(set: &MultiIndexSet, tensor: &TripleProductTensor) -> Result<Self> {
        if set.len() != tensor.len() {
            return Err(Error::ShapeMismatch(format!(
                "index set of {} modes with a tensor over {}",
                set.len(),
                tensor.len()
            )));
        }
        let n_resolved = set.n_resolved();
        let from_unresolved = (0..n_resolved)
            .map(|k| {
                tensor
                    .row(k)
                    .iter()
                    .copied()
                    .filter(|&(i, _, _)| i as usize >= n_resolved)
                    .collect()
            })
            .collect();
        Ok(Self { n_modes: set.len(), n_resolved, from_unresolved })
    }

    pub fn n_resolved(&self) -> usize {
        self.n_resolved
    }

    /// `out_k += scale · Σ_{i∈G, j} e_ijk w_i z_j` for `k ∈ F`.
    pub fn accumulate(&self, w: &[f64], z: &[f64], scale: f64, out: &mut [f64]) {
        for (k, row) in self.from_unresolved.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j, v) in row {
                acc += v * w[i as usize] * z[j as usize];
            }
            out[k] += scale * acc;
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }
}

/// Basis data shared by every element: the index set, the tensor, and the
/// memory contraction.
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    pub set: Arc<MultiIndexSet>,
    pub tensor: Arc<TripleProductTensor>,
    pub memory: Arc<ContractedMemoryTensor>,
}

impl GalerkinBasis {
    pub fn new(dim: usize, resolved_order: usize, order: usize) -> Result<Self> {
        let set = Arc::new(MultiIndexSet::new(dim, order, resolved_order)?);
        let tensor = TripleProductTensor::shared(dim, order)?;
        let memory = Arc::new(ContractedMemoryTensor::new(&set, &tensor)?);
        Ok(Self { set, tensor, memory })
    }

    pub fn n_modes(&self) -> usize {
        self.set.len()
    }

    pub fn n_resolved(&self) -> usize {
        self.set.n_resolved()
    }
}

/// Which right-hand side an energy rate is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// Full Galerkin system over `F ∪ G`.
    Full,
    /// t-model over `F`.
    Reduced,
}

/// Index range of an energy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeRange {
    Resolved,
    All,
}

/// Which part of the reduced right-hand side feeds a refinement indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    /// Markovian plus memory contributions.
    Total,
    /// Memory contribution only: the energy exchanged with the unresolved modes.
    Memory,
}

fn operand<'a>(sys: &'a QuadraticSystem, y: &'a [f64], n: usize, v: Var) -> &'a [f64] {
    match v {
        Var::Param(p) => &sys.param_coefficients[p],
        Var::State(s) => &y[s * n..(s + 1) * n],
    }
}

fn check_shape(sys: &QuadraticSystem, basis: &GalerkinBasis, len: usize) -> Result<()> {
    let n = basis.n_modes();
    if len != sys.n_states() * n {
        return Err(Error::ShapeMismatch(format!(
            "state of {len} values for {} variables over {n} modes",
            sys.n_states()
        )));
    }
    if sys.param_coefficients.len() != sys.n_params() || sys.param_coefficients.iter().any(|p| p.len() != n) {
        return Err(Error::ShapeMismatch("parameter coefficients do not match the basis".into()));
    }
    Ok(())
}

/// Raw full Galerkin right-hand side on flat storage, no shape checks.
pub(crate) fn full_rhs_into(sys: &QuadraticSystem, basis: &GalerkinBasis, y: &[f64], out: &mut [f64]) {
    let n = basis.n_modes();
    out.fill(0.0);
    for (m, &c) in sys.constant.iter().enumerate() {
        out[m * n] += c;
    }
    for t in &sys.linear {
        let z = operand(sys, y, n, t.operand);
        for (o, v) in out[t.equation * n..(t.equation + 1) * n].iter_mut().zip(z) {
            *o += t.coefficient * v;
        }
    }
    for t in &sys.bilinear {
        let (a, b) = (operand(sys, y, n, t.left), operand(sys, y, n, t.right));
        let seg = &mut out[t.equation * n..(t.equation + 1) * n];
        basis.tensor.accumulate_product(a, b, t.coefficient, seg, 0..n);
    }
}

/// Raw t-model right-hand side. `y` must be supported on `F`. Returns the
/// Markovian part and the memory part (already multiplied by `t`), both over
/// `F ∪ G` with zero `G` entries.
pub(crate) fn t_model_parts(
    sys: &QuadraticSystem,
    basis: &GalerkinBasis,
    y: &[f64],
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = basis.n_modes();
    let nr = basis.n_resolved();
    let mut r = vec![0.0; y.len()];
    full_rhs_into(sys, basis, y, &mut r);
    // w = (I - P) R, R restricted to F is the Markovian term
    let mut w = r.clone();
    for (rc, wc) in r.chunks_mut(n).zip(w.chunks_mut(n)) {
        rc[nr..].fill(0.0);
        wc[..nr].fill(0.0);
    }
    let mut memory = vec![0.0; y.len()];
    if t != 0.0 && nr < n {
        let delta = |v: Var| match v {
            Var::State(s) => Some(&w[s * n..(s + 1) * n]),
            Var::Param(_) => None,
        };
        // Linear terms map G to G, so only bilinear terms feed back into F.
        for term in &sys.bilinear {
            let seg = &mut memory[term.equation * n..(term.equation + 1) * n];
            if let Some(dw) = delta(term.left) {
                basis.memory.accumulate(dw, operand(sys, y, n, term.right), term.coefficient, seg);
            }
            if let Some(dw) = delta(term.right) {
                basis.memory.accumulate(dw, operand(sys, y, n, term.left), term.coefficient, seg);
            }
        }
        for v in memory.iter_mut() {
            *v *= t;
        }
    }
    (r, memory)
}

fn unresolved_support(state: &GalerkinState, nr: usize) -> Option<(usize, usize)> {
    (0..state.n_states()).find_map(|m| {
        state.variable(m)[nr..]
            .iter()
            .position(|&v| v != 0.0)
            .map(|pos| (m, nr + pos))
    })
}

/// Galerkin projection of the system right-hand side onto every mode of `F ∪ G`.
pub fn galerkin_full_rhs(sys: &QuadraticSystem, state: &GalerkinState, basis: &GalerkinBasis) -> Result<GalerkinState> {
    check_shape(sys, basis, state.values().len())?;
    let mut out = GalerkinState::zeros(state.t, sys.n_states(), basis.n_modes());
    full_rhs_into(sys, basis, state.values(), out.values_mut());
    Ok(out)
}

/// t-model right-hand side for an `F`-supported state:
///
/// ```text
/// dû/dt = P R(û) + t · P [ J_R(û) (I - P) R(û) ]
/// ```
///
/// The result is zero on `G`.
pub fn t_model_rhs(sys: &QuadraticSystem, state: &GalerkinState, t: f64, basis: &GalerkinBasis) -> Result<GalerkinState> {
    check_shape(sys, basis, state.values().len())?;
    if let Some((variable, mode)) = unresolved_support(state, basis.n_resolved()) {
        return Err(Error::UnresolvedSupport { variable, mode });
    }
    let (mut markov, memory) = t_model_parts(sys, basis, state.values(), t);
    for (a, b) in markov.iter_mut().zip(&memory) {
        *a += b;
    }
    GalerkinState::from_flat(state.t, basis.n_modes(), markov)
}

/// Sum of squared coefficients over `range` and all variables.
pub fn energy(state: &GalerkinState, range: ModeRange, n_resolved: usize) -> f64 {
    let upper = match range {
        ModeRange::Resolved => n_resolved,
        ModeRange::All => state.n_modes(),
    };
    (0..state.n_states())
        .map(|m| state.variable(m)[..upper].iter().map(|v| v * v).sum::<f64>())
        .sum()
}

fn inner(a: &[f64], b: &[f64], n: usize, upper: usize) -> f64 {
    a.chunks(n)
        .zip(b.chunks(n))
        .map(|(x, y)| x[..upper].iter().zip(&y[..upper]).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// `dÊ/dt = 2 Σ_k Σ_m R_{m,k} û_{m,k}` over `range`, with `R` the chosen
/// right-hand side. For `RateModel::Reduced` the state is restricted to `F`
/// first.
pub fn energy_rate(
    sys: &QuadraticSystem,
    state: &GalerkinState,
    t: f64,
    model: RateModel,
    range: ModeRange,
    basis: &GalerkinBasis,
) -> Result<f64> {
    let n = basis.n_modes();
    let nr = basis.n_resolved();
    let upper = match range {
        ModeRange::Resolved => nr,
        ModeRange::All => n,
    };
    match model {
        RateModel::Full => {
            let r = galerkin_full_rhs(sys, state, basis)?;
            Ok(2.0 * inner(r.values(), state.values(), n, upper))
        }
        RateModel::Reduced => {
            let reduced = state.restricted(nr);
            let r = t_model_rhs(sys, &reduced, t, basis)?;
            Ok(2.0 * inner(r.values(), reduced.values(), n, upper))
        }
    }
}

/// Rate of change of the resolved reduced energy `Ê′`, restricted to the part
/// selected by `kind`. The state is restricted to `F` first.
pub fn reduced_energy_rate(
    sys: &QuadraticSystem,
    state: &GalerkinState,
    t: f64,
    kind: RateKind,
    basis: &GalerkinBasis,
) -> Result<f64> {
    check_shape(sys, basis, state.values().len())?;
    let nr = basis.n_resolved();
    let reduced = state.restricted(nr);
    let r = selected_rhs(sys, &reduced, t, kind, basis);
    Ok(2.0 * inner(&r, reduced.values(), basis.n_modes(), nr))
}

fn selected_rhs(sys: &QuadraticSystem, reduced: &GalerkinState, t: f64, kind: RateKind, basis: &GalerkinBasis) -> Vec<f64> {
    let (mut markov, memory) = t_model_parts(sys, basis, reduced.values(), t);
    match kind {
        RateKind::Memory => memory,
        RateKind::Total => {
            for (a, b) in markov.iter_mut().zip(&memory) {
                *a += b;
            }
            markov
        }
    }
}

/// Refinement indicators of one element: `dÊ′/dt` and the directional
/// contributions `s_i = |d|û′_{p_r e_i}|²/dt|`, from a single t-model evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicators {
    pub energy_rate: f64,
    pub directional: Vec<f64>,
}

pub fn indicators(
    sys: &QuadraticSystem,
    state: &GalerkinState,
    t: f64,
    kind: RateKind,
    basis: &GalerkinBasis,
) -> Result<Indicators> {
    check_shape(sys, basis, state.values().len())?;
    let n = basis.n_modes();
    let nr = basis.n_resolved();
    let reduced = state.restricted(nr);
    let r = selected_rhs(sys, &reduced, t, kind, basis);
    let energy_rate = 2.0 * inner(&r, reduced.values(), n, nr);
    let directional = (0..basis.set.dim())
        .map(|dim| axis_rate(&r, reduced.values(), n, basis, dim))
        .collect();
    Ok(Indicators { energy_rate, directional })
}

fn axis_rate(r: &[f64], y: &[f64], n: usize, basis: &GalerkinBasis, dim: usize) -> f64 {
    match basis.set.axis_index(dim, basis.set.resolved_order()) {
        Some(k) if k < basis.n_resolved() => {
            let s: f64 = r.chunks(n).zip(y.chunks(n)).map(|(rc, yc)| rc[k] * yc[k]).sum();
            (2.0 * s).abs()
        }
        _ => 0.0,
    }
}

/// `s_i` for dimension `dim` (zero-based).
pub fn directional_indicator(
    sys: &QuadraticSystem,
    state: &GalerkinState,
    t: f64,
    dim: usize,
    kind: RateKind,
    basis: &GalerkinBasis,
) -> Result<f64> {
    if dim >= basis.set.dim() {
        return Err(Error::InvalidArgument(format!("dimension {dim} out of range")));
    }
    check_shape(sys, basis, state.values().len())?;
    let reduced = state.restricted(basis.n_resolved());
    let r = selected_rhs(sys, &reduced, t, kind, basis);
    Ok(axis_rate(&r, reduced.values(), basis.n_modes(), basis, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn decay(basis: &GalerkinBasis) -> QuadraticSystem {
        let n = basis.n_modes();
        let mut kappa = vec![0.0; n];
        kappa[1] = 1.0 / 3f64.sqrt();
        let mut sys = QuadraticSystem::new(1, 1).with_bilinear(0, Var::Param(0), Var::State(0), -1.0);
        sys.param_coefficients = vec![kappa];
        sys
    }

    fn ko() -> QuadraticSystem {
        QuadraticSystem::new(3, 0)
            .with_bilinear(0, Var::State(0), Var::State(2), 1.0)
            .with_bilinear(1, Var::State(1), Var::State(2), -1.0)
            .with_bilinear(2, Var::State(0), Var::State(0), -1.0)
            .with_bilinear(2, Var::State(1), Var::State(1), 1.0)
    }

    fn ko_ic(n: usize) -> GalerkinState {
        let mut s = GalerkinState::zeros(0.0, 3, n);
        s.variable_mut(0)[0] = 1.0;
        s.variable_mut(1)[1] = 0.1 / 3f64.sqrt();
        s
    }

    #[test]
    fn decay_full_rhs() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let sys = decay(&basis);
        let state = GalerkinState::from_flat(0.0, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let r = galerkin_full_rhs(&sys, &state, &basis).unwrap();
        assert_relative_eq!(r.values()[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.values()[1], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.values()[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn ko_full_rhs_at_initial_condition() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let r = galerkin_full_rhs(&ko(), &ko_ic(3), &basis).unwrap();
        let c2 = 0.01 / 3.0;
        assert!(r.variable(0).iter().chain(r.variable(1)).all(|v| v.abs() < 1e-16));
        assert_relative_eq!(r.variable(2)[0], -1.0 + c2, epsilon = 1e-15);
        assert_relative_eq!(r.variable(2)[1], 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.variable(2)[2], c2 * 2.0 * 5f64.sqrt() / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_state_gives_projected_constant() {
        let basis = GalerkinBasis::new(2, 1, 3).unwrap();
        let sys = ko().with_constant(1, 0.75);
        let r = galerkin_full_rhs(&sys, &GalerkinState::zeros(0.0, 3, basis.n_modes()), &basis).unwrap();
        let mut expected = vec![0.0; 3 * basis.n_modes()];
        expected[basis.n_modes()] = 0.75;
        assert_eq!(r.values(), &expected[..]);
    }

    #[test]
    fn t_model_at_zero_time_is_markovian() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let state = ko_ic(3);
        let r = t_model_rhs(&ko(), &state, 0.0, &basis).unwrap();
        let full = galerkin_full_rhs(&ko(), &state, &basis).unwrap().restricted(2);
        assert_eq!(r, full);
    }

    #[test]
    fn t_model_decay_memory() {
        let basis = GalerkinBasis::new(1, 0, 1).unwrap();
        let sys = decay(&basis);
        let state = GalerkinState::from_flat(0.0, 2, vec![1.0, 0.0]).unwrap();
        let r = t_model_rhs(&sys, &state, 2.0, &basis).unwrap();
        assert_relative_eq!(r.values()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.values()[1], 0.0);
    }

    #[test]
    fn t_model_ko_analytic_state() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let c = 0.1 / 3f64.sqrt();
        for t in [0.0, 0.7, 3.0] {
            let r = t_model_rhs(&ko(), &ko_ic(3), t, &basis).unwrap();
            // y2 picks up memory through -y2·(I - P)(y2²)
            assert!(r.variable(0).iter().all(|v| v.abs() < 1e-16));
            assert_eq!(r.variable(1)[0], 0.0);
            assert_relative_eq!(r.variable(1)[1], -t * c.powi(3) * 0.8, max_relative = 1e-13, epsilon = 1e-20);
            assert_relative_eq!(r.variable(2)[0], -1.0 + c * c, epsilon = 1e-15);
            assert!(r.variable(2)[1].abs() < 1e-16);
        }
    }

    #[test]
    fn t_model_rejects_unresolved_support() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let mut state = ko_ic(3);
        state.variable_mut(2)[2] = 1e-3;
        assert!(matches!(
            t_model_rhs(&ko(), &state, 1.0, &basis),
            Err(Error::UnresolvedSupport { variable: 2, mode: 2 })
        ));
    }

    #[test]
    fn energies() {
        let s = GalerkinState::zeros(0.0, 2, 4);
        assert_eq!(energy(&s, ModeRange::All, 2), 0.0);
        let s = GalerkinState::from_flat(0.0, 3, vec![1.0, 0.5, 7.0]).unwrap();
        assert_eq!(energy(&s, ModeRange::Resolved, 2), 1.25);
        assert_relative_eq!(energy(&ko_ic(8), ModeRange::All, 4), 1.0 + 0.01 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn reduced_rate_analytic() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let state = ko_ic(3);
        let rate = energy_rate(&ko(), &state, 0.0, RateModel::Reduced, ModeRange::Resolved, &basis).unwrap();
        assert_eq!(rate, 0.0);
        let rate = energy_rate(&ko(), &state, 1.0, RateModel::Reduced, ModeRange::Resolved, &basis).unwrap();
        let c = 0.1 / 3f64.sqrt();
        let e112 = 2.0 * 5f64.sqrt() / 5.0;
        assert_relative_eq!(rate, -2.0 * c.powi(4) * e112 * e112, max_relative = 1e-12);
        assert_relative_eq!(rate, -1.777_777_777_777_78e-5, max_relative = 1e-10);
        let memory = reduced_energy_rate(&ko(), &state, 1.0, RateKind::Memory, &basis).unwrap();
        assert_relative_eq!(memory, rate, max_relative = 1e-12);
    }

    #[test]
    fn full_ko_conserves_energy() {
        let basis = GalerkinBasis::new(2, 2, 4).unwrap();
        let n = basis.n_modes();
        let values: Vec<f64> = (0..3 * n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let state = GalerkinState::from_flat(0.3, n, values).unwrap();
        let rate = energy_rate(&ko(), &state, 0.3, RateModel::Full, ModeRange::All, &basis).unwrap();
        assert!(rate.abs() < 1e-12, "{rate}");
    }

    #[test]
    fn directional_indicators() {
        let basis = GalerkinBasis::new(1, 1, 2).unwrap();
        let sys = decay(&basis);
        let state = GalerkinState::from_flat(0.0, 3, vec![1.0, -0.5, 0.0]).unwrap();
        let s = directional_indicator(&sys, &state, 0.0, 0, RateKind::Total, &basis).unwrap();
        assert_relative_eq!(s, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let zero = GalerkinState::zeros(0.0, 1, 3);
        assert_eq!(directional_indicator(&sys, &zero, 1.0, 0, RateKind::Total, &basis).unwrap(), 0.0);
    }

    #[test]
    fn directional_indicator_vanishes_without_dependence() {
        // state depends on ξ1 only; s_2 must vanish
        let basis = GalerkinBasis::new(2, 2, 4).unwrap();
        let n = basis.n_modes();
        let mut state = GalerkinState::zeros(0.0, 3, n);
        for (pos, idx) in basis.set.indices().iter().enumerate() {
            if idx.degrees()[1] == 0 && pos < basis.n_resolved() {
                state.variable_mut(0)[pos] = 0.3 + pos as f64 * 0.1;
                state.variable_mut(1)[pos] = 0.2 - pos as f64 * 0.05;
                state.variable_mut(2)[pos] = -0.4 + pos as f64 * 0.02;
            }
        }
        for kind in [RateKind::Total, RateKind::Memory] {
            let ind = indicators(&ko(), &state, 1.5, kind, &basis).unwrap();
            assert_eq!(ind.directional[1], 0.0);
            assert!(ind.directional[0] > 0.0);
        }
    }

    #[test]
    fn t_model_equals_full_without_unresolved_modes() {
        let basis = GalerkinBasis::new(2, 3, 3).unwrap();
        let n = basis.n_modes();
        let values: Vec<f64> = (0..3 * n).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
        let state = GalerkinState::from_flat(0.0, n, values).unwrap();
        for t in [0.0, 1.0, 9.0] {
            let a = t_model_rhs(&ko(), &state, t, &basis).unwrap();
            let b = galerkin_full_rhs(&ko(), &state, &basis).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn symmetrized_bilinear_coefficients() {
        let sys = ko();
        assert_eq!(sys.bilinear_coefficient(0, 0, 2), 0.5);
        assert_eq!(sys.bilinear_coefficient(0, 2, 0), 0.5);
        assert_eq!(sys.bilinear_coefficient(2, 0, 0), -1.0);
        assert_eq!(sys.bilinear_coefficient(1, 0, 0), 0.0);
    }
}
