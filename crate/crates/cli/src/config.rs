//! TOML run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mzr_core::{IndicatorMode, MemoryTime, ProblemSpec, RateKind, RefinementConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Adaptive,
    Global,
    Mc,
    Verify,
    Table,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("{message}")]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

/// Fully resolved configuration. Every field has a value, so serializing and
/// reparsing yields an identical config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub mode: Mode,
    pub p_r: usize,
    pub p_f: usize,
    pub tol1: f64,
    pub tol2: f64,
    pub dt: f64,
    pub t_end: f64,
    pub indicator_mode: IndicatorMode,
    pub rate_kind: RateKind,
    pub memory_time: MemoryTime,
    pub refine_stride: usize,
    pub sample_every: f64,
    pub max_elements: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub mc_samples: usize,
    pub verify_trials: usize,
    /// `(p_r, p_f)` pairs swept in table mode.
    pub table_orders: Vec<[usize; 2]>,
    pub table_tol1: Vec<f64>,
    /// Reference run for table mode on K-O problems.
    pub reference_p_r: usize,
    pub reference_p_f: usize,
    pub reference_tol1: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<String>,
    mode: Option<Mode>,
    p_r: Option<usize>,
    p_f: Option<usize>,
    tol1: Option<f64>,
    tol2: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    indicator_mode: Option<IndicatorMode>,
    rate_kind: Option<RateKind>,
    memory_time: Option<MemoryTime>,
    refine_stride: Option<usize>,
    sample_every: Option<f64>,
    max_elements: Option<usize>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    mc_samples: Option<usize>,
    verify_trials: Option<usize>,
    table_orders: Option<Vec<[usize; 2]>>,
    table_tol1: Option<Vec<f64>>,
    reference_p_r: Option<usize>,
    reference_p_f: Option<usize>,
    reference_tol1: Option<f64>,
}

fn line_of(doc: &str, key: &str) -> Option<usize> {
    doc.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn line_of_offset(doc: &str, offset: usize) -> usize {
    doc[..offset.min(doc.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Defaults for `problem`, which must be a known problem name.
    pub fn defaults(problem: &str) -> Result<Self, ConfigError> {
        let spec: ProblemSpec = problem.parse().map_err(|e: mzr_core::Error| ConfigError {
            key: Some("problem".into()),
            line: None,
            message: format!("problem: {e}"),
        })?;
        let (dt, t_end) = match spec {
            ProblemSpec::LinearDecay { .. } => (1e-2, 10.0),
            ProblemSpec::KraichnanOrszag(_) => (
                1e-3,
                match spec.dimension() {
                    1 => 30.0,
                    2 => 10.0,
                    _ => 6.0,
                },
            ),
        };
        Ok(Self {
            problem: problem.to_string(),
            mode: Mode::Adaptive,
            p_r: 3,
            p_f: 7,
            tol1: 1e-2,
            tol2: 0.1,
            dt,
            t_end,
            indicator_mode: IndicatorMode::FullState,
            rate_kind: RateKind::Memory,
            memory_time: MemoryTime::Global,
            refine_stride: 1,
            sample_every: 0.1,
            max_elements: 10_000,
            out_dir: PathBuf::from("out"),
            seed: 2024,
            mc_samples: 100_000,
            verify_trials: 100,
            table_orders: vec![[3, 7], [2, 5]],
            table_tol1: vec![1e-1, 1e-2, 1e-3],
            reference_p_r: 5,
            reference_p_f: 11,
            reference_tol1: 1e-9,
        })
    }

    pub fn spec(&self) -> ProblemSpec {
        self.problem.parse().expect("validated problem name")
    }

    pub fn refinement(&self) -> RefinementConfig {
        let mut r = RefinementConfig::new(self.p_r, self.p_f, self.tol1, self.dt, self.t_end);
        r.tol2 = self.tol2;
        r.indicator_mode = self.indicator_mode;
        r.rate_kind = self.rate_kind;
        r.memory_time = self.memory_time;
        r.refine_stride = self.refine_stride;
        r.sample_every = self.sample_every;
        r.max_elements = self.max_elements;
        if self.mode == Mode::Global {
            r.refine = false;
            r.tol1 = f64::INFINITY;
            r.resolved_order = self.p_f;
        }
        r
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn check(&self) -> Result<(), (&'static str, String)> {
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err((key, format!("{key} must be positive and finite, got {v}")))
            }
        };
        positive("tol1", self.tol1)?;
        positive("dt", self.dt)?;
        positive("sample_every", self.sample_every)?;
        positive("reference_tol1", self.reference_tol1)?;
        if !(self.tol2 > 0.0 && self.tol2 <= 1.0) {
            return Err(("tol2", format!("tol2 must lie in (0, 1], got {}", self.tol2)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(("t_end", format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.mode == Mode::Adaptive && !(0 < self.p_r && self.p_r < self.p_f) {
            return Err(("p_r", format!("adaptive runs need 0 < p_r < p_f, got p_r = {}, p_f = {}", self.p_r, self.p_f)));
        }
        if self.refine_stride == 0 {
            return Err(("refine_stride", "refine_stride must be at least 1".into()));
        }
        if self.max_elements == 0 {
            return Err(("max_elements", "max_elements must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(("mc_samples", "mc_samples must be at least 1".into()));
        }
        if self.verify_trials == 0 {
            return Err(("verify_trials", "verify_trials must be at least 1".into()));
        }
        if let Some(bad) = self.table_orders.iter().find(|[r, f]| !(0 < *r && r < f)) {
            return Err(("table_orders", format!("table_orders entries need 0 < p_r < p_f, got {bad:?}")));
        }
        if let Some(bad) = self.table_tol1.iter().find(|t| !(**t > 0.0)) {
            return Err(("table_tol1", format!("table_tol1 entries must be positive, got {bad}")));
        }
        if !(0 < self.reference_p_r && self.reference_p_r < self.reference_p_f) {
            return Err(("reference_p_r", "reference orders need 0 < reference_p_r < reference_p_f".into()));
        }
        Ok(())
    }
}

/// Parses a TOML document. Omitted keys take the defaults of the named
/// problem; unknown keys, type mismatches and constraint violations are
/// errors naming the key and its line.
pub fn parse_config(doc: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(doc).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(doc, s.start));
        ConfigError { key: None, line, message: e.message().trim().to_string() + &line.map(|l| format!(" (line {l})")).unwrap_or_default() }
    })?;
    let problem = raw.problem.ok_or_else(|| ConfigError {
        key: Some("problem".into()),
        line: None,
        message: "missing required key `problem`".into(),
    })?;
    let mut c = RunConfig::defaults(&problem).map_err(|mut e| {
        e.line = line_of(doc, "problem");
        e.message += &e.line.map(|l| format!(" (line {l})")).unwrap_or_default();
        e
    })?;
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = raw.$f { c.$f = v; })* };
    }
    set!(
        mode, p_r, p_f, tol1, tol2, dt, t_end, indicator_mode, rate_kind, memory_time, refine_stride, sample_every,
        max_elements, out_dir, seed, mc_samples, verify_trials, table_orders, table_tol1, reference_p_r, reference_p_f,
        reference_tol1
    );
    c.check().map_err(|(key, message)| {
        let line = line_of(doc, key);
        ConfigError {
            key: Some(key.to_string()),
            line,
            message: message + &line.map(|l| format!(" (line {l})")).unwrap_or_default(),
        }
    })?;
    Ok(c)
}
