//! Monte Carlo estimates of the payoff earned by stopping rules on exact
//! bridge paths, and of the running-maximum constants `c1 = E[e^{S1}]`,
//! `c2 = E[S1 e^{S1}]` with `S1 = max_{[0,1]} |W|`.
//!
//! Path `i` draws from stream `i` of the master seed (see [`PathSeed`]), and
//! payoffs are reduced in path order, so estimates are bitwise reproducible
//! whatever the thread count.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{bridge_step, BridgeSpec, PathSeed};
use crate::solver::Boundary;

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_STEPS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupConstants {
    pub c1: McEstimate,
    pub c2: McEstimate,
}

/// A rule deciding, at each monitoring time, whether to stop.
#[derive(Debug, Clone, Copy)]
pub enum StoppingRule<'a> {
    /// Stop at the first monitoring time with `X ≥ b(t)`.
    Boundary(&'a Boundary),
    StopNow,
    /// Wait for the pin, collecting `e^α`.
    NeverStop,
    /// Stop at the first monitoring time with `X ≥ c`.
    FixedThreshold(f64),
}

impl StoppingRule<'_> {
    pub fn name(&self) -> String {
        match self {
            StoppingRule::Boundary(_) => "boundary".into(),
            StoppingRule::StopNow => "stop_now".into(),
            StoppingRule::NeverStop => "never_stop".into(),
            StoppingRule::FixedThreshold(c) => format!("fixed_threshold({c})"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Monitoring steps on `[t0, T]` for rules that do not carry their own grid.
    pub steps: usize,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: DEFAULT_PATHS,
            seed: 0,
            steps: DEFAULT_STEPS,
            antithetic: false,
        }
    }
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            ..Self::default()
        }
    }
}

/// JSON report `{rule, t0, x0, n_paths, seed, mean, std_error}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rule: String,
    pub t0: f64,
    pub x0: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
}

impl McReport {
    pub fn new(rule: &StoppingRule<'_>, t0: f64, x0: f64, est: &McEstimate) -> Self {
        Self {
            rule: rule.name(),
            t0,
            x0,
            n_paths: est.n_paths,
            seed: est.seed,
            mean: est.mean,
            std_error: est.std_error,
        }
    }
}

/// Neumaier-compensated sum in iteration order.
fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn summarize(samples: &[f64], n_paths: usize, seed: u64) -> McEstimate {
    let k = samples.len() as f64;
    let mean = compensated_sum(samples.iter().copied()) / k;
    let std_error = if samples.len() > 1 {
        let ss = compensated_sum(samples.iter().map(|v| (v - mean) * (v - mean)));
        (ss / (k - 1.0) / k).sqrt()
    } else {
        0.0
    };
    McEstimate {
        mean,
        std_error,
        n_paths,
        seed,
    }
}

/// Monitoring times: `t0` followed by the nodes strictly after it.
fn monitoring_times(spec: &BridgeSpec, rule: &StoppingRule<'_>, t0: f64, steps: usize) -> Vec<f64> {
    match rule {
        StoppingRule::Boundary(b) => std::iter::once(t0)
            .chain(b.grid().nodes().filter(|&t| t > t0))
            .collect(),
        _ => {
            let h = (spec.pin_time() - t0) / steps as f64;
            (0..=steps)
                .map(|i| if i == steps { spec.pin_time() } else { t0 + i as f64 * h })
                .collect()
        }
    }
}

fn should_stop(spec: &BridgeSpec, rule: &StoppingRule<'_>, t: f64, x: f64) -> bool {
    match rule {
        StoppingRule::Boundary(b) => x >= b.interpolate_unchecked(t),
        StoppingRule::StopNow => true,
        StoppingRule::NeverStop => t >= spec.pin_time(),
        StoppingRule::FixedThreshold(c) => x >= *c || t >= spec.pin_time(),
    }
}

/// Payoff of one path; `sign` flips every normal draw for the antithetic twin.
fn path_payoff(
    spec: &BridgeSpec,
    rule: &StoppingRule<'_>,
    times: &[f64],
    x0: f64,
    seed: PathSeed,
    sign: f64,
) -> f64 {
    let mut rng = seed.rng();
    let mut x = x0;
    if should_stop(spec, rule, times[0], x) {
        return x.exp();
    }
    for w in times.windows(2) {
        let z: f64 = StandardNormal.sample(&mut rng);
        x = bridge_step(spec, w[0], x, w[1], sign * z);
        if should_stop(spec, rule, w[1], x) {
            return x.exp();
        }
    }
    // the last time is the pin, where every rule stops
    x.exp()
}

/// Estimate `E[e^{X_τ}]` for the rule started from `(t0, x0)`.
pub fn estimate(
    spec: &BridgeSpec,
    rule: &StoppingRule<'_>,
    t0: f64,
    x0: f64,
    config: &McConfig,
) -> Result<McEstimate> {
    if config.n_paths == 0 {
        return Err(domain("need at least one path"));
    }
    if !(t0 >= 0.0 && t0 < spec.pin_time()) {
        return Err(domain(format!("t0 = {t0} must lie in [0, {})", spec.pin_time())));
    }
    if let StoppingRule::Boundary(b) = rule {
        if b.spec() != spec {
            return Err(domain("boundary belongs to a different bridge"));
        }
        if t0 < b.grid().start() {
            return Err(domain(format!("t0 = {t0} precedes the boundary grid")));
        }
    }
    if config.steps == 0 {
        return Err(domain("need at least one monitoring step"));
    }
    let times = monitoring_times(spec, rule, t0, config.steps);
    let samples: Vec<f64> = if config.antithetic {
        let pairs = config.n_paths.div_ceil(2);
        (0..pairs as u64)
            .into_par_iter()
            .map(|i| {
                let seed = PathSeed::new(config.seed, i);
                let a = path_payoff(spec, rule, &times, x0, seed, 1.0);
                let b = path_payoff(spec, rule, &times, x0, seed, -1.0);
                0.5 * (a + b)
            })
            .collect()
    } else {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map(|i| path_payoff(spec, rule, &times, x0, PathSeed::new(config.seed, i), 1.0))
            .collect()
    };
    Ok(summarize(&samples, config.n_paths, config.seed))
}

/// Payoff of the boundary-hitting rule.
pub fn estimate_rule_value(
    spec: &BridgeSpec,
    b: &Boundary,
    t0: f64,
    x0: f64,
    config: &McConfig,
) -> Result<McEstimate> {
    estimate(spec, &StoppingRule::Boundary(b), t0, x0, config)
}

/// Payoff of one of the non-boundary rules.
pub fn estimate_suboptimal(
    spec: &BridgeSpec,
    rule: StoppingRule<'_>,
    t0: f64,
    x0: f64,
    config: &McConfig,
) -> Result<McEstimate> {
    estimate(spec, &rule, t0, x0, config)
}

/// `c1` and `c2` from `n_paths` random walks with `steps` increments on `[0, 1]`.
/// The discrete maximum underestimates `S1`, so both are biased low.
pub fn estimate_sup_constants(n_paths: usize, steps: usize, seed: u64) -> Result<SupConstants> {
    if n_paths == 0 || steps == 0 {
        return Err(domain("need at least one path and one step"));
    }
    let scale = (1.0 / steps as f64).sqrt();
    let (e1, e2): (Vec<f64>, Vec<f64>) = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathSeed::new(seed, i).rng();
            let mut w = 0.0f64;
            let mut sup = 0.0f64;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += scale * z;
                sup = sup.max(w.abs());
            }
            let e = sup.exp();
            (e, sup * e)
        })
        .unzip();
    Ok(SupConstants {
        c1: summarize(&e1, n_paths, seed),
        c2: summarize(&e2, n_paths, seed),
    })
}
