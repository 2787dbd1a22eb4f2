//! Monte Carlo reference statistics.
//!
//! Sample `i` draws its random inputs from a ChaCha8 stream seeded with
//! `seed` and positioned on stream `i`, so results do not depend on how
//! samples are distributed over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::solver::Rk4;

const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub dt: f64,
    /// Output times, sorted ascending; each is rounded to the nearest step.
    pub times: Vec<f64>,
}

impl McConfig {
    /// Samples on a uniform grid `0, every, 2·every, …, t_end`.
    pub fn uniform(samples: usize, seed: u64, dt: f64, t_end: f64, every: f64) -> Self {
        let n = (t_end / every).round() as usize;
        Self { samples, seed, dt, times: (0..=n).map(|i| i as f64 * every).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidConfig("sample times must be finite and non-negative".into()));
        }
        if self.times.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("sample times must be sorted".into()));
        }
        Ok(())
    }
}

/// Running central moments up to fourth order, mergeable in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.merge(&Moments { n: 1.0, mean: x, ..Default::default() });
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d_n = d / n;
        let m2 = self.m2 + o.m2 + d * d_n * na * nb;
        let m3 = self.m3 + o.m3 + d * d_n * d_n * na * nb * (na - nb) + 3.0 * d_n * (na * o.m2 - nb * self.m2);
        let m4 = self.m4
            + o.m4
            + d * d_n * d_n * d_n * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n * d_n * (na * na * o.m2 + nb * nb * self.m2)
            + 4.0 * d_n * (na * o.m3 - nb * self.m3);
        *self = Moments { n, mean: self.mean + d_n * nb, m2, m3, m4 };
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            self.m2 / (self.n - 1.0)
        }
    }

    pub fn stderr_mean(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Standard error of the unbiased variance estimator, from the sample
    /// fourth central moment.
    pub fn stderr_variance(&self) -> f64 {
        let n = self.n;
        if n < 2.0 {
            return 0.0;
        }
        let s2 = self.variance();
        let mu4 = self.m4 / n;
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Per-variable time series: `mean[m][s]` etc.
#[derive(Debug, Clone, PartialEq)]
pub struct McStats {
    pub times: Vec<f64>,
    pub samples: usize,
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub stderr_mean: Vec<Vec<f64>>,
    pub stderr_variance: Vec<Vec<f64>>,
}

impl McStats {
    /// CSV with columns `t, mean_m, var_m, stderr_m` for each variable, where
    /// `stderr_m` is the standard error of `var_m`.
    pub fn to_csv(&self) -> String {
        let n = self.mean.len();
        let mut out = String::from("t");
        for m in 1..=n {
            out.push_str(&format!(",mean_{m},var_{m},stderr_{m}"));
        }
        out.push('\n');
        for (s, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:?}"));
            for m in 0..n {
                out.push_str(&format!(
                    ",{:?},{:?},{:?}",
                    self.mean[m][s], self.variance[m][s], self.stderr_variance[m][s]
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-9)
    }
}

/// Uniform draw on `[-1, 1]^dim` for sample `index`.
pub fn sample_point(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn simulate(spec: &ProblemSpec, cfg: &McConfig, steps: &[usize], index: u64, acc: &mut [Moments], ws: &mut Rk4) -> Result<()> {
    let xi = sample_point(cfg.seed, index, spec.dimension());
    let params = spec.params_at(&xi);
    let mut y = spec.initial_condition(&xi);
    let sys = spec.structure();
    let n = y.len();
    let mut step = 0;
    for (s, &target) in steps.iter().enumerate() {
        while step < target {
            let t = step as f64 * cfg.dt;
            ws.step(|_, y, out| sys.eval_pointwise(&params, y, out), &mut y, t, cfg.dt)
                .map_err(|_| Error::SampleFailure { sample: index, xi: xi.clone(), time: t + cfg.dt })?;
            step += 1;
        }
        for (m, v) in y.iter().enumerate() {
            acc[s * n + m].push(*v);
        }
    }
    Ok(())
}

/// Sample mean, unbiased variance and standard errors of every state variable
/// at the configured times.
pub fn mc_stats(spec: &ProblemSpec, cfg: &McConfig) -> Result<McStats> {
    cfg.validate()?;
    let n = spec.n_states();
    let steps: Vec<usize> = cfg.times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    let slots = steps.len() * n;
    let chunks: Vec<Vec<Moments>> = (0..cfg.samples.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(
            || Rk4::new(n),
            |ws, c| {
                let mut acc = vec![Moments::default(); slots];
                let end = ((c + 1) * CHUNK).min(cfg.samples);
                for i in c * CHUNK..end {
                    simulate(spec, cfg, &steps, i as u64, &mut acc, ws)?;
                }
                Ok(acc)
            },
        )
        .collect::<Result<_>>()?;
    let mut total = vec![Moments::default(); slots];
    for chunk in &chunks {
        for (a, b) in total.iter_mut().zip(chunk) {
            a.merge(b);
        }
    }
    let series = |f: &dyn Fn(&Moments) -> f64| -> Vec<Vec<f64>> {
        (0..n).map(|m| (0..steps.len()).map(|s| f(&total[s * n + m])).collect()).collect()
    };
    Ok(McStats {
        times: steps.iter().map(|&k| k as f64 * cfg.dt).collect(),
        samples: cfg.samples,
        mean: series(&|a| a.mean),
        variance: series(&|a| a.variance()),
        stderr_mean: series(&|a| a.stderr_mean()),
        stderr_variance: series(&|a| a.stderr_variance()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_match_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64 / 7.0).sin() + 0.3).collect();
        let mut a = Moments::default();
        let mut b = Moments::default();
        for (i, x) in xs.iter().enumerate() {
            if i < 333 { a.push(*x) } else { b.push(*x) }
        }
        a.merge(&b);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let c = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        assert_relative_eq!(a.mean, mean, max_relative = 1e-13);
        assert_relative_eq!(a.variance(), c(2) / (n - 1.0), max_relative = 1e-12);
        assert_relative_eq!(a.m3, c(3), max_relative = 1e-9, epsilon = 1e-12);
        assert_relative_eq!(a.m4, c(4), max_relative = 1e-12);
    }

    #[test]
    fn samples_are_uniform_and_reproducible() {
        let a = sample_point(7, 3, 2);
        assert_eq!(a, sample_point(7, 3, 2));
        assert_ne!(a, sample_point(7, 4, 2));
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn ko_constant_component_has_zero_variance() {
        let cfg = McConfig { samples: 100, seed: 1, dt: 1e-2, times: vec![0.0, 0.5] };
        let stats = mc_stats(&"ko1d".parse().unwrap(), &cfg).unwrap();
        assert_eq!(stats.variance[0][0], 0.0);
        assert_eq!(stats.mean[0][0], 1.0);
        assert!(stats.variance[1][0] > 0.0);
    }

    #[test]
    fn deterministic_and_csv() {
        let cfg = McConfig::uniform(700, 42, 1e-2, 1.0, 0.5);
        let spec = ProblemSpec::LinearDecay { u0: 1.0 };
        let a = mc_stats(&spec, &cfg).unwrap();
        let b = mc_stats(&spec, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_csv().lines().next().unwrap(), "t,mean_1,var_1,stderr_1");
        assert!(mc_stats(&spec, &McConfig { samples: 0, ..cfg }).is_err());
    }
}
