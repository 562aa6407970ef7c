//! Brownian bridge dynamics pinned at `(T, α)`: drift, Gaussian transition
//! law, exact path sampling and the generator applied to the payoff `e^x`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::io::fmt_f64;

/// Pinning time and pinning point of the bridge. The payoff is always `e^x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pin_time: f64,
    pin_point: f64,
}

impl Default for BridgeSpec {
    fn default() -> Self {
        Self {
            pin_time: 1.0,
            pin_point: 0.0,
        }
    }
}

impl BridgeSpec {
    pub fn new(pin_time: f64, pin_point: f64) -> Result<Self> {
        if !(pin_time > 0.0 && pin_time.is_finite()) {
            return Err(domain(format!("pin time must be positive, got {pin_time}")));
        }
        if !pin_point.is_finite() {
            return Err(domain(format!("pin point must be finite, got {pin_point}")));
        }
        Ok(Self {
            pin_time,
            pin_point,
        })
    }

    pub fn pin_time(&self) -> f64 {
        self.pin_time
    }

    pub fn pin_point(&self) -> f64 {
        self.pin_point
    }

    /// Time to the pin, `T - t`.
    #[inline]
    pub fn remaining(&self, t: f64) -> f64 {
        self.pin_time - t
    }

    /// Upper edge of the region `x < α + (T - t)/2` where stopping is never optimal.
    #[inline]
    pub fn q_line(&self, t: f64) -> f64 {
        self.pin_point + 0.5 * (self.pin_time - t)
    }

    fn check_before_pin(&self, t: f64) -> Result<()> {
        if t < self.pin_time {
            Ok(())
        } else {
            Err(domain(format!(
                "t = {t} must be strictly before the pin time {}",
                self.pin_time
            )))
        }
    }
}

/// Equispaced partition `start = t_0 < ... < t_n = end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidGrid("need at least one step".into()));
        }
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::InvalidGrid(format!(
                "need start < end, got [{start}, {end}]"
            )));
        }
        Ok(Self {
            start,
            end,
            n_steps,
        })
    }

    /// Grid on `[start, spec.T]` whose step is `mesh` (rounded to the nearest
    /// whole number of steps).
    pub fn with_mesh(spec: &BridgeSpec, start: f64, mesh: f64) -> Result<Self> {
        if !(mesh > 0.0 && mesh.is_finite()) {
            return Err(Error::InvalidGrid(format!("mesh must be positive, got {mesh}")));
        }
        if !(start >= 0.0 && start < spec.pin_time()) {
            return Err(Error::InvalidGrid(format!(
                "start {start} must lie in [0, {})",
                spec.pin_time()
            )));
        }
        let steps = ((spec.pin_time() - start) / mesh).round().max(1.0) as usize;
        Self::new(start, spec.pin_time(), steps)
    }

    /// Grid spanning `[0, T]` for the given spec.
    pub fn for_spec(spec: &BridgeSpec, n_steps: usize) -> Result<Self> {
        Self::new(0.0, spec.pin_time(), n_steps)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mesh(&self) -> f64 {
        (self.end - self.start) / self.n_steps as f64
    }

    /// Node `t_j`; the last node is `end` exactly.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j >= self.n_steps {
            self.end
        } else {
            self.start + j as f64 * self.mesh()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |j| self.node(j))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Reproducibility token: path `stream` of the master `seed`.
///
/// Each (seed, stream) pair maps to an independent ChaCha8 stream, so paths can
/// be generated in any order or in parallel with identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSeed {
    pub master: u64,
    pub stream: u64,
}

impl PathSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

/// One sampled trajectory on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub seed: PathSeed,
}

impl Path {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.nodes()
    }

    /// CSV with header `t,x`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x")?;
        for (t, x) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(t), fmt_f64(*x))?;
        }
        Ok(())
    }
}

pub fn drift(spec: &BridgeSpec, t: f64, x: f64) -> Result<f64> {
    spec.check_before_pin(t)?;
    Ok(-(x - spec.pin_point) / spec.remaining(t))
}

/// Mean of `X_{t+s}` given `X_t = x`.
#[inline]
pub fn conditional_mean(spec: &BridgeSpec, t: f64, x: f64, s: f64) -> f64 {
    let alpha = spec.pin_point;
    alpha + (x - alpha) * (spec.remaining(t) - s) / spec.remaining(t)
}

/// Variance of `X_{t+s}` given `X_t`.
#[inline]
pub fn conditional_variance(spec: &BridgeSpec, t: f64, s: f64) -> f64 {
    s * (spec.remaining(t) - s) / spec.remaining(t)
}

pub(crate) fn check_lookahead(spec: &BridgeSpec, t: f64, s: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(domain(format!("t = {t} must be non-negative")));
    }
    if !(s > 0.0) {
        return Err(domain(format!("look-ahead s = {s} must be positive")));
    }
    if !(t + s < spec.pin_time) {
        return Err(domain(format!(
            "t + s = {} must be strictly before the pin time {}",
            t + s,
            spec.pin_time
        )));
    }
    Ok(())
}

/// Density of `X_{t+s}` at `y` given `X_t = x`.
pub fn transition_density(spec: &BridgeSpec, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
    check_lookahead(spec, t, s)?;
    let mean = conditional_mean(spec, t, x, s);
    let var = conditional_variance(spec, t, s);
    let z = y - mean;
    Ok((-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
}

/// Advance the bridge from `(t, x)` to `t_next` with a standard normal draw.
/// Reaching the pin returns `α` exactly.
#[inline]
pub fn bridge_step(spec: &BridgeSpec, t: f64, x: f64, t_next: f64, z: f64) -> f64 {
    if t_next >= spec.pin_time {
        return spec.pin_point;
    }
    let s = t_next - t;
    conditional_mean(spec, t, x, s) + conditional_variance(spec, t, s).sqrt() * z
}

/// Exact sample of the bridge started at `(t0, x0)` on `grid`.
pub fn simulate_path(
    spec: &BridgeSpec,
    t0: f64,
    x0: f64,
    grid: &TimeGrid,
    seed: PathSeed,
) -> Result<Path> {
    validate_path_grid(spec, t0, grid)?;
    let mut rng = seed.rng();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = x0;
    values.push(x);
    for j in 1..=grid.n_steps() {
        let z: f64 = StandardNormal.sample(&mut rng);
        x = bridge_step(spec, grid.node(j - 1), x, grid.node(j), z);
        values.push(x);
    }
    Ok(Path {
        grid: *grid,
        values,
        seed,
    })
}

pub(crate) fn validate_path_grid(spec: &BridgeSpec, t0: f64, grid: &TimeGrid) -> Result<()> {
    if grid.start() != t0 {
        return Err(Error::InvalidGrid(format!(
            "grid starts at {} but the path starts at {t0}",
            grid.start()
        )));
    }
    if grid.end() != spec.pin_time() {
        return Err(Error::InvalidGrid(format!(
            "grid ends at {} but the pin time is {}",
            grid.end(),
            spec.pin_time()
        )));
    }
    Ok(())
}

/// Generator of the bridge applied to `e^x`: `e^x (1/2 - (x - α)/(T - t))`.
pub fn generator_gain(spec: &BridgeSpec, t: f64, x: f64) -> Result<f64> {
    spec.check_before_pin(t)?;
    // (q_line - x)/(T - t) == 1/2 - (x - α)/(T - t), with the sign tied exactly to Q
    Ok(x.exp() * (spec.q_line(t) - x) / spec.remaining(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn standard() -> BridgeSpec {
        BridgeSpec::default()
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift(&standard(), 0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(drift(&standard(), 0.5, 1.0).unwrap(), -2.0);
        let spec = BridgeSpec::new(2.0, 0.3).unwrap();
        assert_eq!(drift(&spec, 1.0, 0.3).unwrap(), 0.0);
        assert!(drift(&standard(), 1.0, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(BridgeSpec::new(0.0, 0.0).is_err());
        assert!(BridgeSpec::new(-1.0, 0.0).is_err());
        assert!(BridgeSpec::new(1.0, f64::NAN).is_err());
        assert_eq!(BridgeSpec::default(), BridgeSpec::new(1.0, 0.0).unwrap());
    }

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[3], 1.0);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());

        let g = TimeGrid::with_mesh(&standard(), 0.0, 1e-3).unwrap();
        assert_eq!(g.n_steps(), 1000);
        assert_eq!(g.node(1000), 1.0);
    }

    #[test]
    fn density_at_mean() {
        let p = transition_density(&standard(), 0.0, 0.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(p, 1.0 / (2.0 * std::f64::consts::PI * 0.25).sqrt(), epsilon = 1e-15);
        assert!(transition_density(&standard(), 0.5, 0.0, 0.5, 0.0).is_err());
        assert!(transition_density(&standard(), 0.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn generator_gain_examples() {
        let spec = standard();
        assert_eq!(generator_gain(&spec, 0.0, 0.5).unwrap(), 0.0);
        assert_relative_eq!(generator_gain(&spec, 0.0, 0.0).unwrap(), 0.5);
        let g = generator_gain(&spec, 0.5, 0.5).unwrap();
        assert_relative_eq!(g, 0.5f64.exp() * (0.5 - 1.0));
        assert!(g < 0.0);
        assert!(generator_gain(&spec, 1.0, 0.0).is_err());
    }

    #[test]
    fn paths_are_pinned_and_reproducible() {
        let spec = BridgeSpec::new(2.0, 0.7).unwrap();
        let grid = TimeGrid::new(0.5, 2.0, 97).unwrap();
        let a = simulate_path(&spec, 0.5, -1.0, &grid, PathSeed::new(9, 3)).unwrap();
        let b = simulate_path(&spec, 0.5, -1.0, &grid, PathSeed::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), 98);
        assert_eq!(*a.values.last().unwrap(), 0.7);
        assert_eq!(a.values[0], -1.0);
        let c = simulate_path(&spec, 0.5, -1.0, &grid, PathSeed::new(9, 4)).unwrap();
        assert_ne!(a.values, c.values);
        assert!(simulate_path(&spec, 0.0, 0.0, &grid, PathSeed::new(0, 0)).is_err());
    }

    #[test]
    fn path_csv_format() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let path = simulate_path(&standard(), 0.0, 0.25, &grid, PathSeed::new(1, 0)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0.0000000000000000e0,2.5000000000000000e-1");
        let parsed: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, path.values[1]);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    proptest! {
        #[test]
        fn q_sign_matches_generator(t in 0.0f64..0.999, x in -3.0f64..3.0, big_t in 0.5f64..12.0, alpha in -1.0f64..1.0) {
            let spec = BridgeSpec::new(big_t, alpha).unwrap();
            let t = t * big_t;
            let gain = generator_gain(&spec, t, x).unwrap();
            prop_assert_eq!(gain > 0.0, x < spec.q_line(t));
        }
    }
}
