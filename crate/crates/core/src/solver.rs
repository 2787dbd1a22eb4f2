//! Time integration of all element systems with interleaved refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::QuadratureRule;
use crate::error::{Error, Result};
use crate::mesh::{mean_and_variance, refine_step, Element, Mesh, MeshSnapshot};
use crate::problems::ProblemSpec;
use crate::system::{full_rhs_into, t_model_parts, GalerkinBasis, RateKind};

/// How the reduced energy rate of an element is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorMode {
    /// Evaluate the t-model on the `F`-restriction of the full state.
    FullState,
    /// Co-evolve a separate t-model state per element.
    DualEvolution,
}

/// Which clock multiplies the t-model memory term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryTime {
    Global,
    /// Time since the element was created.
    ElementLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub resolved_order: usize,
    pub full_order: usize,
    pub tol1: f64,
    pub tol2: f64,
    pub dt: f64,
    pub t_end: f64,
    pub indicator_mode: IndicatorMode,
    pub rate_kind: RateKind,
    pub memory_time: MemoryTime,
    /// Refinement is checked every `refine_stride` steps.
    pub refine_stride: usize,
    /// Moments are recorded every `sample_every` time units.
    pub sample_every: f64,
    pub max_elements: usize,
    pub refine: bool,
}

impl RefinementConfig {
    pub fn new(resolved_order: usize, full_order: usize, tol1: f64, dt: f64, t_end: f64) -> Self {
        Self {
            resolved_order,
            full_order,
            tol1,
            tol2: 0.1,
            dt,
            t_end,
            indicator_mode: IndicatorMode::FullState,
            rate_kind: RateKind::Memory,
            memory_time: MemoryTime::Global,
            refine_stride: 1,
            sample_every: 0.1,
            max_elements: 10_000,
            refine: true,
        }
    }

    /// Single-element run of order `p` with refinement disabled.
    pub fn global(order: usize, dt: f64, t_end: f64) -> Self {
        Self { refine: false, tol1: f64::INFINITY, ..Self::new(order, order, f64::INFINITY, dt, t_end) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.refine && !(0 < self.resolved_order && self.resolved_order < self.full_order) {
            return bad(format!(
                "refinement needs 0 < p_r < p_f, got p_r = {}, p_f = {}",
                self.resolved_order, self.full_order
            ));
        }
        if self.resolved_order > self.full_order {
            return bad(format!("p_r = {} exceeds p_f = {}", self.resolved_order, self.full_order));
        }
        if !(self.tol1 > 0.0) {
            return bad(format!("tol1 must be positive, got {}", self.tol1));
        }
        if !(self.tol2 > 0.0 && self.tol2 <= 1.0) {
            return bad(format!("tol2 must lie in (0, 1], got {}", self.tol2));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.refine_stride == 0 {
            return bad("refine_stride must be at least 1".into());
        }
        if !(self.sample_every > 0.0) {
            return bad(format!("sample_every must be positive, got {}", self.sample_every));
        }
        if self.max_elements == 0 {
            return bad("max_elements must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonFiniteState;

/// Scratch space for in-place classical RK4.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; len]), tmp: vec![0.0; len] }
    }

    /// Advances `y` from `t` to `t + dt` in place.
    pub fn step<F>(&mut self, mut rhs: F, y: &mut [f64], t: f64, dt: f64) -> std::result::Result<(), NonFiniteState>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let len = y.len();
        if self.tmp.len() != len {
            *self = Self::new(len);
        }
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        rhs(t, y, k1);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, tmp, k2);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, tmp, k3);
        for i in 0..len {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, tmp, k4);
        for i in 0..len {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NonFiniteState)
        }
    }
}

/// One classical RK4 step of `dy/dt = rhs(t, y)`.
pub fn rk4_step<F>(rhs: F, y: &[f64], t: f64, dt: f64) -> std::result::Result<Vec<f64>, NonFiniteState>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut out = y.to_vec();
    Rk4::new(y.len()).step(rhs, &mut out, t, dt)?;
    Ok(out)
}

/// Moment time series of one run plus the final mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `mean[m][s]` for state variable `m` at sample `s`.
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub n_elements: Vec<usize>,
    /// `Σ_k Pr_k · ‖u_k‖²` over all modes and variables at each sample.
    pub energy: Vec<f64>,
    pub mesh: MeshSnapshot,
    pub degenerate_triggers: usize,
}

impl Trajectory {
    pub fn n_variables(&self) -> usize {
        self.mean.len()
    }

    pub fn final_elements(&self) -> usize {
        *self.n_elements.last().unwrap_or(&0)
    }

    /// CSV with columns `t, mean_1..mean_n, var_1..var_n, n_elements`.
    pub fn to_csv(&self) -> String {
        let n = self.n_variables();
        let mut out = String::from("t");
        for m in 1..=n {
            out.push_str(&format!(",mean_{m}"));
        }
        for m in 1..=n {
            out.push_str(&format!(",var_{m}"));
        }
        out.push_str(",n_elements\n");
        for (s, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:?}"));
            for m in 0..n {
                out.push_str(&format!(",{:?}", self.mean[m][s]));
            }
            for m in 0..n {
                out.push_str(&format!(",{:?}", self.variance[m][s]));
            }
            out.push_str(&format!(",{}\n", self.n_elements[s]));
        }
        out
    }

    /// Maximum over samples of `|v - reference(t)| / |reference(t)|` for the
    /// variance of variable `m`, skipping samples where the reference is zero.
    pub fn max_relative_variance_error<F: Fn(f64) -> f64>(&self, m: usize, reference: F) -> f64 {
        max_relative(&self.times, &self.variance[m], reference)
    }

    pub fn max_relative_mean_error<F: Fn(f64) -> f64>(&self, m: usize, reference: F) -> f64 {
        max_relative(&self.times, &self.mean[m], reference)
    }

    /// Linear interpolation of variable `m`'s variance at `t`.
    pub fn variance_at(&self, m: usize, t: f64) -> f64 {
        interpolate(&self.times, &self.variance[m], t)
    }

    pub fn mean_at(&self, m: usize, t: f64) -> f64 {
        interpolate(&self.times, &self.mean[m], t)
    }
}

fn max_relative<F: Fn(f64) -> f64>(times: &[f64], values: &[f64], reference: F) -> f64 {
    times
        .iter()
        .zip(values)
        .filter_map(|(&t, &v)| {
            let r = reference(t);
            (r != 0.0).then(|| ((v - r) / r).abs())
        })
        .fold(0.0, f64::max)
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.iter().position(|&s| s >= t) {
        Some(0) => values[0],
        Some(i) => {
            let (t0, t1) = (times[i - 1], times[i]);
            let w = (t - t0) / (t1 - t0);
            values[i - 1] * (1.0 - w) + values[i] * w
        }
        None => *values.last().expect("non-empty trajectory"),
    }
}

struct Recorder {
    traj: Trajectory,
}

impl Recorder {
    fn new(n_vars: usize, dim: usize) -> Self {
        Self {
            traj: Trajectory {
                times: Vec::new(),
                mean: vec![Vec::new(); n_vars],
                variance: vec![Vec::new(); n_vars],
                n_elements: Vec::new(),
                energy: Vec::new(),
                mesh: MeshSnapshot { time: 0.0, dimension: dim, elements: Vec::new(), log: Vec::new() },
                degenerate_triggers: 0,
            },
        }
    }

    fn record(&mut self, t: f64, mesh: &Mesh) {
        let tr = &mut self.traj;
        tr.times.push(t);
        for m in 0..tr.mean.len() {
            let (mean, var) = mean_and_variance(mesh, m);
            tr.mean[m].push(mean);
            tr.variance[m].push(var);
        }
        tr.n_elements.push(mesh.len());
        tr.energy.push(
            mesh.elements
                .iter()
                .map(|e| e.probability * e.state.values().iter().map(|v| v * v).sum::<f64>())
                .sum(),
        );
    }
}

fn advance(e: &mut Element, basis: &GalerkinBasis, config: &RefinementConfig, t: f64, ws: &mut Rk4) -> Result<()> {
    let dt = config.dt;
    let sys = &e.system;
    let fail = Error::IntegrationFailure { element: e.id, time: t + dt };
    ws.step(|_, y, out| full_rhs_into(sys, basis, y, out), e.state.values_mut(), t, dt)
        .map_err(|_| fail)?;
    e.state.t = t + dt;
    if let Some(reduced) = e.reduced.as_mut() {
        let offset = match config.memory_time {
            MemoryTime::Global => 0.0,
            MemoryTime::ElementLocal => e.birth_time,
        };
        ws.step(
            |tau, y, out| {
                let (markov, memory) = t_model_parts(sys, basis, y, tau - offset);
                for ((o, a), b) in out.iter_mut().zip(&markov).zip(&memory) {
                    *o = a + b;
                }
            },
            reduced.values_mut(),
            t,
            dt,
        )
        .map_err(|_| Error::IntegrationFailure { element: e.id, time: t + dt })?;
        reduced.t = t + dt;
    }
    Ok(())
}

/// Integrates `problem` with multi-element refinement driven by the t-model.
pub fn run_adaptive(problem: &ProblemSpec, config: &RefinementConfig) -> Result<Trajectory> {
    config.validate()?;
    let dim = problem.dimension();
    let basis = GalerkinBasis::new(dim, config.resolved_order, config.full_order)?;
    let rule = QuadratureRule::gauss_legendre(config.full_order + 1, 1)?;
    let sys = problem.build(&basis.set)?;
    let n = basis.n_modes();
    let state = sys.initial_state(n)?;
    let mut root = Element::root(0, dim, sys, state);
    if config.indicator_mode == IndicatorMode::DualEvolution && config.refine {
        root.reduced = Some(root.state.restricted(basis.n_resolved()));
    }
    let mut mesh = Mesh::single(root);

    let steps = (config.t_end / config.dt).round() as usize;
    let sample_stride = ((config.sample_every / config.dt).round() as usize).max(1);
    let mut rec = Recorder::new(problem.n_states(), dim);
    rec.record(0.0, &mesh);

    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * config.dt;
        let t = step as f64 * config.dt;
        mesh.elements
            .par_iter_mut()
            .try_for_each_init(|| Rk4::new(0), |ws, e| advance(e, &basis, config, t_prev, ws))?;
        // advance() stamps t_prev + dt; keep the exact grid time instead
        for e in &mut mesh.elements {
            e.state.t = t;
            if let Some(r) = e.reduced.as_mut() {
                r.t = t;
            }
        }
        if config.refine && step % config.refine_stride == 0 {
            let report = refine_step(&mut mesh, t, config, &basis, &rule)?;
            rec.traj.degenerate_triggers += report.degenerate.len();
            if mesh.len() > config.max_elements {
                return Err(Error::RefinementRunaway { elements: mesh.len(), limit: config.max_elements, time: t });
            }
        }
        if step % sample_stride == 0 || step == steps {
            rec.record(t, &mesh);
        }
    }
    let t_final = steps as f64 * config.dt;
    rec.traj.mesh = mesh.snapshot(t_final);
    Ok(rec.traj)
}

/// Single-element gPC run of order `order` without refinement.
pub fn run_global_gpc(problem: &ProblemSpec, order: usize, t_end: f64, dt: f64) -> Result<Trajectory> {
    run_adaptive(problem, &RefinementConfig::global(order, dt, t_end))
}
