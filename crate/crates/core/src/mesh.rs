//! Multi-element decomposition of the random hypercube.
//!
//! Every element carries its own local gPC expansion on `[-1, 1]^d` through
//! the affine map of its bounds. Splitting re-expands the parent polynomial
//! exactly on each child, so global moments are preserved by refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{legendre_table, MultiIndexSet, QuadratureRule};
use crate::error::{Error, Result};
use crate::solver::{IndicatorMode, MemoryTime, RefinementConfig};
use crate::system::{indicators, GalerkinBasis, GalerkinState, QuadraticSystem};

#[derive(Debug, Clone)]
pub struct Element {
    pub id: u64,
    /// Per-dimension half-open intervals `[a, b)` inside `[-1, 1]`.
    pub bounds: Vec<[f64; 2]>,
    pub probability: f64,
    /// System with parameter coefficients on this element's local basis.
    pub system: QuadraticSystem,
    pub state: GalerkinState,
    /// Co-evolved t-model state, present in dual-evolution mode.
    pub reduced: Option<GalerkinState>,
    pub birth_time: f64,
}

pub fn probability_of(bounds: &[[f64; 2]]) -> f64 {
    bounds.iter().map(|[a, b]| (b - a) / 2.0).product()
}

impl Element {
    pub fn root(id: u64, dim: usize, system: QuadraticSystem, state: GalerkinState) -> Self {
        Self {
            id,
            bounds: vec![[-1.0, 1.0]; dim],
            probability: 1.0,
            system,
            state,
            reduced: None,
            birth_time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Smallest interval width over all dimensions.
    pub fn min_width(&self) -> f64 {
        self.bounds.iter().map(|[a, b]| b - a).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Half {
    Lower,
    Upper,
}

// T[k][j] = ∫ Φ_k(x) Φ_j((x ± 1)/2) dx/2, exactly zero for k > j.
fn transfer_matrix(order: usize, half: Half, rule: &QuadratureRule) -> Vec<Vec<f64>> {
    let shift = match half {
        Half::Lower => -1.0,
        Half::Upper => 1.0,
    };
    let q = order + 1;
    let mut t = vec![vec![0.0; q]; q];
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let child = legendre_table(order, x);
        let parent = legendre_table(order, (x + shift) / 2.0);
        for k in 0..q {
            for j in k..q {
                t[k][j] += w * child[k] * parent[j];
            }
        }
    }
    t
}

/// Dense re-expansion operator from a parent basis to one child basis.
struct Reprojection {
    n: usize,
    matrix: Vec<f64>,
}

impl Reprojection {
    fn new(set: &MultiIndexSet, halves: &[Option<Half>], rule: &QuadratureRule) -> Self {
        let p = set.order();
        let lower = transfer_matrix(p, Half::Lower, rule);
        let upper = transfer_matrix(p, Half::Upper, rule);
        let n = set.len();
        let mut matrix = vec![0.0; n * n];
        for (k, ki) in set.indices().iter().enumerate() {
            for (j, ji) in set.indices().iter().enumerate() {
                let mut v = 1.0;
                for (d, half) in halves.iter().enumerate() {
                    let (a, b) = (ki.degrees()[d], ji.degrees()[d]);
                    v *= match half {
                        None => {
                            if a == b {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Some(Half::Lower) => lower[a][b],
                        Some(Half::Upper) => upper[a][b],
                    };
                    if v == 0.0 {
                        break;
                    }
                }
                matrix[k * n + j] = v;
            }
        }
        Self { n, matrix }
    }

    fn apply(&self, c: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks(self.n)
            .map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_state(&self, s: &GalerkinState) -> GalerkinState {
        let values: Vec<f64> = s.values().chunks(self.n).flat_map(|v| self.apply(v)).collect();
        GalerkinState::from_flat(s.t, self.n, values).expect("same shape")
    }
}

/// Splits `elem` in half along every dimension in `dims`, producing
/// `2^|dims|` children with exactly re-expanded coefficients.
///
/// `rule` must have at least `p_f + 1` points per dimension.
pub fn split_element(
    elem: &Element,
    dims: &[usize],
    set: &MultiIndexSet,
    rule: &QuadratureRule,
    next_id: &mut u64,
) -> Result<Vec<Element>> {
    if dims.is_empty() {
        return Err(Error::EmptySplit);
    }
    if dims.iter().any(|&d| d >= elem.dim()) {
        return Err(Error::InvalidArgument(format!("split dimensions {dims:?} out of range")));
    }
    if rule.points_per_dim() < set.order() + 1 {
        return Err(Error::InsufficientQuadrature { points: rule.points_per_dim(), required: set.order() + 1 });
    }
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    let mut children = Vec::with_capacity(1 << dims.len());
    for combo in 0..(1usize << dims.len()) {
        let mut halves = vec![None; elem.dim()];
        let mut bounds = elem.bounds.clone();
        for (bit, &d) in dims.iter().enumerate() {
            let [a, b] = elem.bounds[d];
            let mid = 0.5 * (a + b);
            if combo >> bit & 1 == 0 {
                halves[d] = Some(Half::Lower);
                bounds[d] = [a, mid];
            } else {
                halves[d] = Some(Half::Upper);
                bounds[d] = [mid, b];
            }
        }
        let op = Reprojection::new(set, &halves, rule);
        let mut system = elem.system.clone();
        system.param_coefficients = system.param_coefficients.iter().map(|p| op.apply(p)).collect();
        let id = *next_id;
        *next_id += 1;
        children.push(Element {
            id,
            probability: probability_of(&bounds),
            bounds,
            system,
            state: op.apply_state(&elem.state),
            reduced: elem.reduced.as_ref().map(|r| op.apply_state(r)),
            birth_time: elem.state.t,
        });
    }
    Ok(children)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEvent {
    pub time: f64,
    pub parent: u64,
    pub dims: Vec<usize>,
    pub children: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub elements: Vec<Element>,
    pub log: Vec<RefinementEvent>,
    next_id: u64,
}

impl Mesh {
    /// One element covering the whole hypercube.
    pub fn single(root: Element) -> Self {
        let next_id = root.id + 1;
        Self { dim: root.dim(), elements: vec![root], log: Vec::new(), next_id }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.elements.iter().map(|e| e.probability).sum()
    }

    /// Replaces the element at `pos` by its children and logs the event.
    pub fn split(&mut self, pos: usize, dims: &[usize], set: &MultiIndexSet, rule: &QuadratureRule) -> Result<Vec<u64>> {
        let children = split_element(&self.elements[pos], dims, set, rule, &mut self.next_id)?;
        let ids: Vec<u64> = children.iter().map(|c| c.id).collect();
        let mut sorted = dims.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let parent = self.elements.splice(pos..=pos, children).next().expect("element exists");
        self.log.push(RefinementEvent { time: parent.state.t, parent: parent.id, dims: sorted, children: ids.clone() });
        Ok(ids)
    }

    pub fn snapshot(&self, time: f64) -> MeshSnapshot {
        MeshSnapshot {
            time,
            dimension: self.dim,
            elements: self
                .elements
                .iter()
                .map(|e| ElementSnapshot {
                    id: e.id,
                    bounds: e.bounds.clone(),
                    probability: e.probability,
                    coefficients: e.state.to_variables(),
                })
                .collect(),
            log: self.log.clone(),
        }
    }
}

/// `Σ_k Pr_k · (mode-0 coefficient)` for `order = 1`, `Σ_k Pr_k · Σ_i c_i²`
/// for `order = 2`.
pub fn global_moment(mesh: &Mesh, variable: usize, order: u8) -> Result<f64> {
    match order {
        1 => Ok(mesh.elements.iter().map(|e| e.probability * e.state.variable(variable)[0]).sum()),
        2 => Ok(mesh
            .elements
            .iter()
            .map(|e| e.probability * e.state.variable(variable).iter().map(|c| c * c).sum::<f64>())
            .sum()),
        other => Err(Error::InvalidArgument(format!("moment order {other} is not supported"))),
    }
}

/// Global mean and variance of one state variable.
pub fn mean_and_variance(mesh: &Mesh, variable: usize) -> (f64, f64) {
    let mean = global_moment(mesh, variable, 1).expect("order 1");
    let second = global_moment(mesh, variable, 2).expect("order 2");
    (mean, second - mean * mean)
}

/// One split performed by [`refine_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRecord {
    pub parent: u64,
    pub weighted_rate: f64,
    pub directional: Vec<f64>,
    pub dims: Vec<usize>,
    pub children: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineReport {
    pub splits: Vec<SplitRecord>,
    /// Elements that met `TOL1` with every directional indicator zero.
    pub degenerate: Vec<u64>,
}

enum Decision {
    Keep,
    Degenerate,
    Split { weighted_rate: f64, directional: Vec<f64>, dims: Vec<usize> },
}

/// Applies the refinement rule to every element at time `t`: elements with
/// `|dÊ′/dt| · Pr(B_k) >= TOL1` are split along the dimensions whose
/// directional indicator reaches `TOL2 · max_j s_j`.
pub fn refine_step(
    mesh: &mut Mesh,
    t: f64,
    config: &RefinementConfig,
    basis: &GalerkinBasis,
    rule: &QuadratureRule,
) -> Result<RefineReport> {
    let decisions: Vec<Decision> = mesh
        .elements
        .par_iter()
        .map(|e| decide(e, t, config, basis))
        .collect::<Result<_>>()?;
    let mut report = RefineReport::default();
    // walk backwards so positions stay valid while splicing
    for (pos, decision) in decisions.into_iter().enumerate().rev() {
        match decision {
            Decision::Keep => {}
            Decision::Degenerate => report.degenerate.push(mesh.elements[pos].id),
            Decision::Split { weighted_rate, directional, dims } => {
                let parent = mesh.elements[pos].id;
                let children = mesh.split(pos, &dims, &basis.set, rule)?;
                report.splits.push(SplitRecord { parent, weighted_rate, directional, dims, children });
            }
        }
    }
    report.splits.reverse();
    report.degenerate.reverse();
    // restore log order to mesh order within this step
    let added = report.splits.len();
    let start = mesh.log.len() - added;
    mesh.log[start..].reverse();
    Ok(report)
}

fn decide(e: &Element, t: f64, config: &RefinementConfig, basis: &GalerkinBasis) -> Result<Decision> {
    let state = match config.indicator_mode {
        IndicatorMode::FullState => &e.state,
        IndicatorMode::DualEvolution => e.reduced.as_ref().unwrap_or(&e.state),
    };
    let tm = match config.memory_time {
        MemoryTime::Global => t,
        MemoryTime::ElementLocal => t - e.birth_time,
    };
    let ind = indicators(&e.system, state, tm, config.rate_kind, basis)?;
    let weighted_rate = ind.energy_rate.abs() * e.probability;
    if !(weighted_rate >= config.tol1) {
        return Ok(Decision::Keep);
    }
    let max = ind.directional.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Ok(Decision::Degenerate);
    }
    let dims = ind
        .directional
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= config.tol2 * max)
        .map(|(i, _)| i)
        .collect();
    Ok(Decision::Split { weighted_rate, directional: ind.directional, dims })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSnapshot {
    pub id: u64,
    pub bounds: Vec<[f64; 2]>,
    pub probability: f64,
    pub coefficients: Vec<Vec<f64>>,
}

/// Serializable view of a mesh: element bounds, probabilities, per-variable
/// coefficients and the refinement log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub time: f64,
    pub dimension: usize,
    pub elements: Vec<ElementSnapshot>,
    pub log: Vec<RefinementEvent>,
}

impl MeshSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `true` when the element bounds are mirror images of each other about
    /// zero in dimension `dim`, with every other dimension unchanged.
    pub fn is_mirror_symmetric(&self, dim: usize) -> bool {
        let key = |b: &[[f64; 2]]| -> Vec<u64> { b.iter().flat_map(|[a, c]| [a.to_bits(), c.to_bits()]).collect() };
        let mut fwd: Vec<Vec<u64>> = self.elements.iter().map(|e| key(&e.bounds)).collect();
        let mut mirrored: Vec<Vec<u64>> = self
            .elements
            .iter()
            .map(|e| {
                let mut b = e.bounds.clone();
                let [a, c] = b[dim];
                // -0.0 and 0.0 must compare equal
                b[dim] = [-c + 0.0, -a + 0.0];
                key(&b)
            })
            .collect();
        fwd.sort();
        mirrored.sort();
        fwd == mirrored
    }
}
