//! Optimal stopping boundary on an equispaced grid.
//!
//! The boundary solves
//!
//! ```text
//! e^{b(t)} = e^α + ∫_0^{T-t} I(t, b(t), s, b(t + s)) ds
//! ```
//!
//! with `I` from [`crate::kernel`]. The time integral uses the midpoint rule
//! `s_m = (m + 1/2) h`, so the kernel is never evaluated at the pin. Two
//! solvers are provided: Picard iteration on the whole grid (no root finding)
//! and backward marching with a scalar root solve per node.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::io::fmt_f64;
use crate::kernel::inner_integral_unchecked;
use crate::model::{BridgeSpec, TimeGrid};

pub const DEFAULT_MAX_ITER: usize = 200;

/// Boundary values `b(t_j)` on a grid ending at the pin time.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    spec: BridgeSpec,
    grid: TimeGrid,
    values: Vec<f64>,
}

/// Summary of how far a boundary is from the structural properties the true
/// boundary has: pinned at `α`, non-increasing, above the Q-line, bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryDiagnostics {
    /// `b(T) - α`.
    pub terminal_offset: f64,
    /// Largest `b(t_{j+1}) - b(t_j)` (positive means an increase).
    pub max_increase: f64,
    /// Smallest `b(t_j) - (α + (T - t_j)/2)`.
    pub min_gap_above_q: f64,
    pub max_value: f64,
    pub all_finite: bool,
}

impl BoundaryDiagnostics {
    /// True when every structural property holds within the given slacks.
    pub fn holds(&self, mono_slack: f64, q_slack: f64, cap: f64) -> bool {
        self.all_finite
            && self.terminal_offset == 0.0
            && self.max_increase <= mono_slack
            && self.min_gap_above_q >= -q_slack
            && self.max_value <= cap
    }
}

/// Allowed upward wiggle between neighbouring nodes for a grid with mesh `h`.
pub fn monotonicity_slack(h: f64) -> f64 {
    (10.0 * h * h).max(1e-9)
}

impl Boundary {
    pub fn new(spec: BridgeSpec, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.end() != spec.pin_time() {
            return Err(Error::InvalidGrid(format!(
                "boundary grid must end at the pin time {}, ends at {}",
                spec.pin_time(),
                grid.end()
            )));
        }
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { spec, grid, values })
    }

    /// Constant boundary `b ≡ α`, the Picard starting point.
    pub fn flat(spec: BridgeSpec, grid: TimeGrid) -> Result<Self> {
        let values = vec![spec.pin_point(); grid.len()];
        Self::new(spec, grid, values)
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    /// Piecewise-linear interpolation; exact at nodes.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        if !self.grid.contains(t) {
            return Err(domain(format!(
                "t = {t} outside the boundary grid [{}, {}]",
                self.grid.start(),
                self.grid.end()
            )));
        }
        Ok(self.interpolate_unchecked(t))
    }

    #[inline]
    pub(crate) fn interpolate_unchecked(&self, t: f64) -> f64 {
        let n = self.grid.n_steps();
        let pos = (t - self.grid.start()) / self.grid.mesh();
        let j = (pos.floor().max(0.0) as usize).min(n - 1);
        let w = (pos - j as f64).clamp(0.0, 1.0);
        if w == 0.0 {
            return self.values[j];
        }
        if w == 1.0 {
            return self.values[j + 1];
        }
        (1.0 - w) * self.values[j] + w * self.values[j + 1]
    }

    pub fn diagnostics(&self) -> BoundaryDiagnostics {
        let alpha = self.spec.pin_point();
        let max_increase = self
            .values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let min_gap_above_q = self
            .grid
            .nodes()
            .zip(&self.values)
            .map(|(t, b)| b - self.spec.q_line(t))
            .fold(f64::INFINITY, f64::min);
        BoundaryDiagnostics {
            terminal_offset: self.values[self.grid.n_steps()] - alpha,
            max_increase,
            min_gap_above_q,
            max_value: self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            all_finite: self.values.iter().all(|v| v.is_finite()),
        }
    }

    /// CSV with header `t,b`, one row per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,b")?;
        for (t, b) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(t), fmt_f64(*b))?;
        }
        Ok(())
    }

    /// Reads a boundary written by [`Boundary::write_csv`]. The nodes must be
    /// equispaced and end at the pin time of `spec`.
    pub fn read_csv<R: BufRead>(spec: BridgeSpec, input: R) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == "t,b" => {}
            other => {
                return Err(domain(format!(
                    "expected header `t,b`, found {:?}",
                    other.unwrap_or_default()
                )))
            }
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |p: Option<&str>| -> Result<f64> {
                p.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| domain(format!("malformed boundary row `{line}`")))
            };
            times.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        if times.len() < 2 {
            return Err(domain("boundary file needs at least two rows"));
        }
        let grid = TimeGrid::new(times[0], *times.last().unwrap(), times.len() - 1)?;
        let h = grid.mesh();
        for (j, t) in times.iter().enumerate() {
            if (t - grid.node(j)).abs() > 1e-9 * h.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "boundary nodes are not equispaced at row {j} (t = {t})"
                )));
            }
        }
        Self::new(spec, grid, values)
    }
}

/// Sup-norm distance between two boundaries on the same grid.
pub fn compare_boundaries(a: &Boundary, b: &Boundary) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// `h Σ_m I(t_j, x, s_m, c_m)` where `c_m` is the boundary at the midpoint
/// `t_j + s_m`. `head` overrides the node value at `j` when forming `c_0`,
/// which the backward solver needs while `b(t_j)` is still unknown.
fn midpoint_sum(boundary: &Boundary, j: usize, x: f64, head: Option<f64>) -> f64 {
    let grid = &boundary.grid;
    let spec = &boundary.spec;
    let n = grid.n_steps();
    let h = grid.mesh();
    let t = grid.node(j);
    let b = &boundary.values;
    let mut sum = 0.0;
    for m in 0..n - j {
        let s = (m as f64 + 0.5) * h;
        let left = if m == 0 { head.unwrap_or(b[j]) } else { b[j + m] };
        // linear interpolation at an exact midpoint
        let c = 0.5 * (left + b[j + m + 1]);
        sum += inner_integral_unchecked(spec, t, x, s, c);
    }
    h * sum
}

/// Residual of the discrete integral equation at node `j`, scaled by `e^{-α}`:
/// `e^{b_j - α} - 1 - e^{-α} h Σ_m I(...)`.
pub fn equation_residual(boundary: &Boundary, j: usize) -> f64 {
    let alpha = boundary.spec.pin_point();
    let b = boundary.values[j];
    if j == boundary.grid.n_steps() {
        return (b - alpha).exp_m1();
    }
    (b - alpha).exp_m1() - (-alpha).exp() * midpoint_sum(boundary, j, b, None)
}

/// Largest absolute residual over all nodes.
pub fn max_equation_residual(boundary: &Boundary) -> f64 {
    (0..boundary.grid.len())
        .into_par_iter()
        .map(|j| equation_residual(boundary, j).abs())
        .reduce(|| 0.0, f64::max)
}

/// One Picard update `b_next(t_j) = log(e^α + h Σ_m I(t_j, b(t_j), s_m, b(t_j + s_m)))`.
pub fn picard_step(current: &Boundary) -> Boundary {
    let alpha = current.spec.pin_point();
    let n = current.grid.n_steps();
    let scale = (-alpha).exp();
    let values: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|j| {
            if j == n {
                alpha
            } else {
                let sum = midpoint_sum(current, j, current.values[j], None);
                alpha + (scale * sum).ln_1p()
            }
        })
        .collect();
    Boundary {
        spec: current.spec,
        grid: current.grid,
        values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub errors: Vec<f64>,
    pub mesh: f64,
    pub tolerance: f64,
    pub wall_time: Duration,
}

#[derive(Serialize, Deserialize)]
struct SolveReportJson {
    mesh: f64,
    tolerance: f64,
    iterations: usize,
    errors: Vec<f64>,
    wall_time_ms: f64,
}

impl SolveReport {
    /// `{mesh, tolerance, iterations, errors[], wall_time_ms}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SolveReportJson {
            mesh: self.mesh,
            tolerance: self.tolerance,
            iterations: self.iterations,
            errors: self.errors.clone(),
            wall_time_ms: self.wall_time.as_secs_f64() * 1e3,
        })
        .expect("plain data serializes")
    }

    /// True if `e_k` never increases from the second iterate on.
    pub fn errors_non_increasing(&self) -> bool {
        self.errors.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[1] <= w[0])
    }
}

/// Iterate [`picard_step`] from `b ≡ α` until the sup-norm change drops below `tolerance`.
pub fn picard_solve(
    spec: &BridgeSpec,
    grid: &TimeGrid,
    tolerance: f64,
    max_iter: usize,
) -> Result<(Boundary, SolveReport)> {
    if !(tolerance > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tolerance}")));
    }
    if max_iter == 0 {
        return Err(domain("max_iter must be at least 1"));
    }
    let clock = Instant::now();
    let mut current = Boundary::flat(*spec, *grid)?;
    let mut errors = Vec::new();
    for _ in 0..max_iter {
        let next = picard_step(&current);
        let err = compare_boundaries(&next, &current)?;
        errors.push(err);
        current = next;
        if !err.is_finite() {
            break;
        }
        if err < tolerance {
            let report = SolveReport {
                iterations: errors.len(),
                errors,
                mesh: grid.mesh(),
                tolerance,
                wall_time: clock.elapsed(),
            };
            return Ok((current, report));
        }
    }
    Err(Error::NonConvergence {
        iterations: errors.len(),
        last: *errors.last().unwrap_or(&f64::NAN),
        errors,
    })
}

const ROOT_XTOL: f64 = 1e-10;
const ROOT_MAX_EVALS: usize = 200;
const BRACKET_EXPANSIONS: usize = 60;

/// March backward from `b(T) = α`, solving the scalar equation at each node
/// with bisection safeguarding secant steps.
pub fn backward_solve(spec: &BridgeSpec, grid: &TimeGrid) -> Result<Boundary> {
    let mut boundary = Boundary::flat(*spec, *grid)?;
    let alpha = spec.pin_point();
    let scale = (-alpha).exp();
    for j in (0..grid.n_steps()).rev() {
        let t = grid.node(j);
        let f = |b: f64| (b - alpha).exp_m1() - scale * midpoint_sum(&boundary, j, b, Some(b));
        let root = solve_bracketed(f, spec.q_line(t), alpha + 5.0, t)?;
        boundary.values[j] = root;
    }
    Ok(boundary)
}

fn solve_bracketed<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, t: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    let mut expansions = 0;
    while !(f_lo <= 0.0 && f_hi >= 0.0) {
        if expansions == BRACKET_EXPANSIONS || !f_lo.is_finite() || !f_hi.is_finite() {
            return Err(Error::Bracket { t, lo, hi, f_lo, f_hi });
        }
        let width = hi - lo;
        if f_hi < 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi += 2.0 * width;
            f_hi = f(hi);
        } else {
            hi = lo;
            f_hi = f_lo;
            lo -= 2.0 * width;
            f_lo = f(lo);
        }
        expansions += 1;
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }

    // Dekker's scheme with Brent's safeguards: secant through the last two
    // iterates when it stays well inside the bracket and is shrinking fast
    // enough, bisection otherwise.
    let (mut a, mut fa) = (lo, f_lo);
    let (mut b, mut fb) = (hi, f_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..ROOT_MAX_EVALS {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * ROOT_XTOL;
        let half = 0.5 * (c - b);
        if half.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let ratio = fb / fa;
            let mut p = ratio * (a - b);
            let mut q = 1.0 - ratio;
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * half * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(half) };
        fb = f(b);
    }
    Err(Error::Bracket {
        t,
        lo: b.min(c),
        hi: b.max(c),
        f_lo: fb.min(fc),
        f_hi: fb.max(fc),
    })
}
