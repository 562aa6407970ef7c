//! Value function from the early-exercise representation
//!
//! ```text
//! v(t, x) = e^α + ∫_0^{T-t} I(t, x, s, b(t + s)) ds
//! ```
//!
//! evaluated with the same midpoint rule as the boundary solver, plus the
//! finite-difference probes used to check smooth fit and the free-boundary PDE.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::io::fmt_f64;
use crate::kernel::inner_integral_unchecked;
use crate::model::BridgeSpec;
use crate::solver::Boundary;

pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Continuation,
    Stopping,
}

fn check_spec(spec: &BridgeSpec, b: &Boundary) -> Result<()> {
    if spec != b.spec() {
        return Err(domain(format!(
            "boundary was computed for {:?}, not {:?}",
            b.spec(),
            spec
        )));
    }
    Ok(())
}

/// `v(t, x)`; at the pin time this is the payoff `e^x`.
///
/// The look-ahead integral over `[0, T - t]` is split into the smallest number
/// of equal panels no wider than the boundary mesh, so on grid nodes it is the
/// same sum the solver uses.
pub fn value_at(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64) -> Result<f64> {
    check_spec(spec, b)?;
    let grid = b.grid();
    if !(t >= grid.start() && t <= spec.pin_time()) {
        return Err(domain(format!(
            "t = {t} outside [{}, {}]",
            grid.start(),
            spec.pin_time()
        )));
    }
    if !x.is_finite() {
        return Err(domain(format!("x = {x} must be finite")));
    }
    if t == spec.pin_time() {
        return Ok(x.exp());
    }
    Ok(value_unchecked(spec, b, t, x))
}

pub(crate) fn value_unchecked(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64) -> f64 {
    let horizon = spec.remaining(t);
    let panels = ((horizon / b.grid().mesh()) * (1.0 - 1e-12)).ceil().max(1.0);
    let h = horizon / panels;
    let mut sum = 0.0;
    for m in 0..panels as usize {
        let s = (m as f64 + 0.5) * h;
        let c = b.interpolate_unchecked(t + s);
        sum += inner_integral_unchecked(spec, t, x, s, c);
    }
    spec.pin_point().exp() + h * sum
}

pub fn classify(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64) -> Result<Region> {
    check_spec(spec, b)?;
    if t >= spec.pin_time() {
        return Ok(Region::Stopping);
    }
    if x < b.interpolate(t)? {
        Ok(Region::Continuation)
    } else {
        Ok(Region::Stopping)
    }
}

/// Central difference `(v(t, x + δ) - v(t, x - δ)) / 2δ`.
pub fn spatial_derivative(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64, delta: f64) -> Result<f64> {
    check_fd(spec, t, delta)?;
    let up = value_at(spec, b, t, x + delta)?;
    let down = value_at(spec, b, t, x - delta)?;
    Ok((up - down) / (2.0 * delta))
}

/// Second difference approaching `x` from the left:
/// `(v(x) - 2 v(x - δ) + v(x - 2δ)) / δ²`.
pub fn left_second_derivative(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64, delta: f64) -> Result<f64> {
    check_fd(spec, t, delta)?;
    let v0 = value_at(spec, b, t, x)?;
    let v1 = value_at(spec, b, t, x - delta)?;
    let v2 = value_at(spec, b, t, x - 2.0 * delta)?;
    Ok((v0 - 2.0 * v1 + v2) / (delta * delta))
}

fn check_fd(spec: &BridgeSpec, t: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return Err(domain(format!("finite-difference step must be positive, got {delta}")));
    }
    if !(t < spec.pin_time()) {
        return Err(domain(format!("t = {t} must be before the pin time")));
    }
    Ok(())
}

/// `∂_t f + ½ ∂_xx f - ((x - α)/(T - t)) ∂_x f` by central differences with
/// steps `dt` in time and `dx` in space.
pub fn parabolic_operator<F>(spec: &BridgeSpec, f: F, t: f64, x: f64, dt: f64, dx: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let centre = f(t, x)?;
    let ft = (f(t + dt, x)? - f(t - dt, x)?) / (2.0 * dt);
    let up = f(t, x + dx)?;
    let down = f(t, x - dx)?;
    let fx = (up - down) / (2.0 * dx);
    let fxx = (up - 2.0 * centre + down) / (dx * dx);
    Ok(ft + 0.5 * fxx - (x - spec.pin_point()) / spec.remaining(t) * fx)
}

/// Residual of the free-boundary PDE at a point of the continuation region at
/// least `5δ` below the boundary. The time step is the boundary mesh.
pub fn pde_residual(spec: &BridgeSpec, b: &Boundary, t: f64, x: f64, delta: f64) -> Result<f64> {
    check_fd(spec, t, delta)?;
    let dt = b.grid().mesh();
    if !(t - dt >= b.grid().start() && t + dt < spec.pin_time()) {
        return Err(domain(format!("t = {t} too close to the ends of the grid")));
    }
    for tt in [t - dt, t, t + dt] {
        if x + 5.0 * delta > b.interpolate(tt)? {
            return Err(domain(format!(
                "({tt}, {x}) is within 5δ of the boundary or above it"
            )));
        }
    }
    parabolic_operator(spec, |tt, xx| value_at(spec, b, tt, xx), t, x, dt, delta)
}

/// `v` on a rectangular `(t, x)` grid. Row `i` holds `v(t_i, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub boundary: Boundary,
}

pub fn value_surface(spec: &BridgeSpec, b: &Boundary, t_grid: &[f64], x_grid: &[f64]) -> Result<ValueSurface> {
    check_spec(spec, b)?;
    for &t in t_grid {
        if !(t >= b.grid().start() && t <= spec.pin_time()) {
            return Err(domain(format!("surface time {t} outside the boundary grid")));
        }
    }
    if let Some(x) = x_grid.iter().find(|x| !x.is_finite()) {
        return Err(domain(format!("surface abscissa {x} is not finite")));
    }
    let values = t_grid
        .par_iter()
        .map(|&t| {
            x_grid
                .iter()
                .map(|&x| {
                    if t == spec.pin_time() {
                        x.exp()
                    } else {
                        value_unchecked(spec, b, t, x)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ValueSurface {
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        values,
        boundary: b.clone(),
    })
}

/// `n + 1` equispaced points from `a` to `b`, hitting `b` exactly.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / n as f64;
    (0..=n).map(|i| if i == n { b } else { a + i as f64 * step }).collect()
}

impl ValueSurface {
    /// Long format: header `t,x,v`, one row per grid point.
    pub fn write_long_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x,v")?;
        for (t, row) in self.t_grid.iter().zip(&self.values) {
            for (x, v) in self.x_grid.iter().zip(row) {
                writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(*x), fmt_f64(*v))?;
            }
        }
        Ok(())
    }

    /// Gridded format: header `t,<x_0>,<x_1>,...`, then one row per `t`.
    pub fn write_grid_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::from("t");
        for x in &self.x_grid {
            header.push(',');
            header.push_str(&fmt_f64(*x));
        }
        writeln!(out, "{header}")?;
        for (t, row) in self.t_grid.iter().zip(&self.values) {
            let mut line = fmt_f64(*t);
            for v in row {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generator_gain, TimeGrid};
    use crate::solver::picard_solve;
    use approx::assert_relative_eq;

    fn solved(n: usize) -> (BridgeSpec, Boundary) {
        let spec = BridgeSpec::default();
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let (b, _) = picard_solve(&spec, &grid, 1e-9, 2_000).unwrap();
        (spec, b)
    }

    #[test]
    fn terminal_slice_is_the_payoff() {
        let (spec, b) = solved(100);
        for x in [-1.0, -0.5, 0.0, 0.7] {
            assert_eq!(value_at(&spec, &b, 1.0, x).unwrap(), f64::exp(x));
        }
    }

    #[test]
    fn equals_payoff_on_the_boundary_nodes() {
        let (spec, b) = solved(100);
        for j in [0, 10, 50, 90, 99] {
            let t = b.grid().node(j);
            let bt = b.value(j);
            assert_relative_eq!(value_at(&spec, &b, t, bt).unwrap(), bt.exp(), max_relative = 1e-8);
        }
    }

    #[test]
    fn collapses_to_payoff_deep_in_stopping_region() {
        let (spec, b) = solved(400);
        for t in [0.0, 0.25, 0.5, 0.8] {
            let x = b.interpolate(t).unwrap() + 1.0;
            let v = value_at(&spec, &b, t, x).unwrap();
            assert!((v / x.exp() - 1.0).abs() < 5e-3, "t = {t}: {v} vs {}", x.exp());
        }
    }

    #[test]
    fn jump_at_the_pin() {
        let (spec, b) = solved(100);
        let before = value_at(&spec, &b, 0.99, -0.5).unwrap();
        assert!(before >= 0.95, "{before}");
        assert_relative_eq!(value_at(&spec, &b, 1.0, -0.5).unwrap(), (-0.5f64).exp());
    }

    #[test]
    fn classification() {
        let (spec, b) = solved(100);
        assert_eq!(classify(&spec, &b, 0.3, spec.q_line(0.3) - 0.01).unwrap(), Region::Continuation);
        assert_eq!(classify(&spec, &b, 1.0, -5.0).unwrap(), Region::Stopping);
        let above = b.interpolate(0.5).unwrap() + 0.1;
        assert_eq!(classify(&spec, &b, 0.5, above).unwrap(), Region::Stopping);
    }

    #[test]
    fn operator_on_payoff_matches_generator() {
        let spec = BridgeSpec::new(1.0, 0.2).unwrap();
        let payoff = |_t: f64, x: f64| Ok(x.exp());
        for (t, x) in [(0.1, 1.5), (0.5, 0.9), (0.7, -0.3)] {
            let r = parabolic_operator(&spec, payoff, t, x, 1e-3, 1e-3).unwrap();
            assert_relative_eq!(r, generator_gain(&spec, t, x).unwrap(), max_relative = 1e-5);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let (spec, b) = solved(50);
        assert!(value_at(&spec, &b, 1.1, 0.0).is_err());
        assert!(value_at(&BridgeSpec::new(2.0, 0.0).unwrap(), &b, 0.5, 0.0).is_err());
        assert!(spatial_derivative(&spec, &b, 0.5, 0.0, 0.0).is_err());
        assert!(spatial_derivative(&spec, &b, 1.0, 0.0, 1e-3).is_err());
        let bt = b.interpolate(0.5).unwrap();
        assert!(pde_residual(&spec, &b, 0.5, bt - 1e-3, 1e-3).is_err());
    }

    #[test]
    fn surface_exports() {
        let (spec, b) = solved(20);
        let s = value_surface(&spec, &b, &[0.0, 0.5, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.values[2], vec![(-1.0f64).exp(), 1.0, 1.0f64.exp()]);
        let mut long = Vec::new();
        s.write_long_csv(&mut long).unwrap();
        let long = String::from_utf8(long).unwrap();
        assert_eq!(long.lines().count(), 10);
        assert!(long.starts_with("t,x,v\n"));
        let mut grid = Vec::new();
        s.write_grid_csv(&mut grid).unwrap();
        let grid = String::from_utf8(grid).unwrap();
        let header = grid.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 4);
        assert_eq!(grid.lines().count(), 4);
    }

    #[test]
    fn linspace_hits_both_ends() {
        let v = linspace(-1.0, 1.0, 200);
        assert_eq!(v.len(), 201);
        assert_eq!(v[0], -1.0);
        assert_eq!(v[200], 1.0);
        assert_eq!(v[100], 0.0);
    }
}
