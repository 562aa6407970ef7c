//! Least-squares fit of `b(t) ≈ α + A (1 - exp(B √(T - t)))` to a computed boundary.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::solver::Boundary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "T")]
    pub pin_time: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub rmse: f64,
}

pub fn ansatz(a: f64, b: f64, pin_time: f64, t: f64) -> Result<f64> {
    if t > pin_time {
        return Err(domain(format!("t = {t} is past the pin time {pin_time}")));
    }
    Ok(ansatz_unchecked(a, b, pin_time, t))
}

#[inline]
fn ansatz_unchecked(a: f64, b: f64, pin_time: f64, t: f64) -> f64 {
    // -expm1 keeps full precision close to the pin
    -a * (b * (pin_time - t).sqrt()).exp_m1()
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 5_000,
            x_tol: 1e-12,
            f_tol: 1e-30,
        }
    }
}

/// Nelder–Mead minimisation in two dimensions. Returns the best vertex and its value.
pub fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: F,
    start: [f64; 2],
    step: [f64; 2],
    opts: SimplexOptions,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    let mut evals = 3;
    let lerp = |a: [f64; 2], b: [f64; 2], w: f64| [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];

    while evals < opts.max_evals {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let size = simplex[1..]
            .iter()
            .map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if size < opts.x_tol || (values[2] - values[0]).abs() <= opts.f_tol {
            break;
        }

        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        evals += 1;
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            evals += 1;
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let (contracted, fc) = if fr < values[2] {
                let p = lerp(centroid, reflected, 0.5);
                (p, f(p))
            } else {
                let p = lerp(centroid, simplex[2], 0.5);
                (p, f(p))
            };
            evals += 1;
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = lerp(simplex[0], simplex[k], 0.5);
                    values[k] = f(simplex[k]);
                }
                evals += 2;
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    (simplex[best], values[best])
}

const A_STARTS: [f64; 4] = [-5.0, -3.5, -2.0, -0.5];
const B_STARTS: [f64; 4] = [0.1, 0.4, 0.7, 1.0];

/// Fit `A`, `B` to the boundary nodes (offset by `α`) by unweighted least
/// squares, from a grid of simplex starting points.
pub fn fit_ansatz(boundary: &Boundary) -> Result<FitResult> {
    let pin_time = boundary.spec().pin_time();
    let alpha = boundary.spec().pin_point();
    let samples: Vec<(f64, f64)> = boundary
        .grid()
        .nodes()
        .zip(boundary.values())
        .map(|(t, b)| (t, b - alpha))
        .collect();
    if samples.is_empty() {
        return Err(Error::Fit("empty boundary".into()));
    }
    let sse = |p: [f64; 2]| -> f64 {
        samples
            .iter()
            .map(|&(t, y)| {
                let r = y - ansatz_unchecked(p[0], p[1], pin_time, t);
                r * r
            })
            .sum()
    };
    let mut best: Option<([f64; 2], f64)> = None;
    for a0 in A_STARTS {
        for b0 in B_STARTS {
            let (p, v) = nelder_mead(sse, [a0, b0], [0.45, 0.09], SimplexOptions::default());
            if v.is_finite() && p.iter().all(|c| c.is_finite()) && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((p, v));
            }
        }
    }
    let (p, v) = best.ok_or_else(|| Error::Fit("every simplex start diverged".into()))?;
    Ok(FitResult {
        pin_time,
        a: p[0],
        b: p[1],
        rmse: (v / samples.len() as f64).sqrt(),
    })
}
