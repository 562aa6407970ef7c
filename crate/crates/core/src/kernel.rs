//! Closed form of the truncated exponential moment
//!
//! ```text
//! I(t, x, s, c) = ∫_c^∞ e^y ((y - α)/(T - t - s) - 1/2) p(t, x, t + s, y) dy
//! ```
//!
//! where `p` is the bridge transition density. Writing `L = T - t - s`, the
//! product `e^y p` is a Gaussian in `y` with mean `β + ᾱ` and variance `ᾱ`
//! scaled by `e^{β + ᾱ/2}`, which gives
//!
//! ```text
//! I = e^γ [ √ζ φ(ξ) + (η - 1/2)(1 - Φ(ξ)) ]
//! γ = α + (2(x - α) + s) L / (2(T - t))
//! η = (x - α + s) / (T - t)
//! ζ = s / (L (T - t))
//! ξ = ((c - α)/L - η) / √ζ
//! ```
//!
//! Note the square roots on ζ: `√ζ = √ᾱ / L` is the standard deviation of
//! `(y - α)/L`. Using ζ itself in either place does not reproduce the
//! integral; `inner_integral_oracle` checks this by direct quadrature.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::model::{check_lookahead, conditional_mean, conditional_variance, BridgeSpec};
use crate::quadrature::{self, Tolerance};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;

// Above this ξ the upper tail is evaluated as φ(ξ) times the Mills ratio.
const TAIL_SWITCH: f64 = 5.0;

/// Arguments of the kernel: conditioning value `x` at time `t`, look-ahead `s`
/// and lower integration limit `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelInputs {
    pub t: f64,
    pub x: f64,
    pub s: f64,
    pub c: f64,
}

impl KernelInputs {
    pub fn new(t: f64, x: f64, s: f64, c: f64) -> Self {
        Self { t, x, s, c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
    pub eta: f64,
    pub zeta: f64,
    pub xi: f64,
}

/// Standard normal CDF via `erfc`, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `1 - Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Mills ratio `(1 - Φ(z)) / φ(z)` by its continued fraction; valid for `z >= TAIL_SWITCH`.
fn mills_ratio(z: f64) -> f64 {
    let mut r = 0.0;
    for k in (1..=40).rev() {
        r = k as f64 / (z + r);
    }
    1.0 / (z + r)
}

fn validate(spec: &BridgeSpec, input: &KernelInputs) -> Result<()> {
    check_lookahead(spec, input.t, input.s)?;
    if !(input.x.is_finite() && !input.c.is_nan()) {
        return Err(Error::Domain(format!(
            "kernel needs finite x and non-NaN c, got x = {}, c = {}",
            input.x, input.c
        )));
    }
    Ok(())
}

pub fn kernel_params(spec: &BridgeSpec, input: &KernelInputs) -> Result<KernelParams> {
    validate(spec, input)?;
    Ok(params_unchecked(spec, input))
}

#[inline]
fn params_unchecked(spec: &BridgeSpec, input: &KernelInputs) -> KernelParams {
    let alpha = spec.pin_point();
    let rem = spec.remaining(input.t);
    let left = rem - input.s;
    let dx = input.x - alpha;
    let eta = (dx + input.s) / rem;
    let zeta = input.s / (left * rem);
    KernelParams {
        gamma: alpha + (2.0 * dx + input.s) * left / (2.0 * rem),
        eta,
        zeta,
        xi: ((input.c - alpha) / left - eta) / zeta.sqrt(),
    }
}

/// Evaluate `e^γ [√ζ φ(ξ) + (η - 1/2)(1 - Φ(ξ))]`.
pub fn closed_form(p: &KernelParams) -> f64 {
    let root = p.zeta.sqrt();
    let drift = p.eta - 0.5;
    if p.xi < TAIL_SWITCH {
        p.gamma.exp() * (root * std_normal_pdf(p.xi) + drift * std_normal_sf(p.xi))
    } else {
        // e^γ φ(ξ) folded into one exponent so neither factor over/underflows alone
        let scale = (p.gamma - 0.5 * p.xi * p.xi).exp() * INV_SQRT_2PI;
        scale * (root + drift * mills_ratio(p.xi))
    }
}

pub fn inner_integral(spec: &BridgeSpec, input: &KernelInputs) -> Result<f64> {
    validate(spec, input)?;
    Ok(closed_form(&params_unchecked(spec, input)))
}

/// Hot-path variant for callers that have already validated the time arguments.
#[inline]
pub(crate) fn inner_integral_unchecked(spec: &BridgeSpec, t: f64, x: f64, s: f64, c: f64) -> f64 {
    closed_form(&params_unchecked(spec, &KernelInputs { t, x, s, c }))
}

/// Direct adaptive quadrature of the kernel integrand; independent of the
/// closed form above.
pub fn inner_integral_oracle(spec: &BridgeSpec, input: &KernelInputs) -> Result<f64> {
    validate(spec, input)?;
    let KernelInputs { t, x, s, c } = *input;
    let alpha = spec.pin_point();
    let left = spec.remaining(t) - s;
    let mean = conditional_mean(spec, t, x, s);
    let var = conditional_variance(spec, t, s);
    let sd = var.sqrt();
    let norm = (2.0 * std::f64::consts::PI * var).sqrt();
    let integrand = |y: f64| {
        let z = y - mean;
        (y - 0.5 * z * z / var).exp() / norm * ((y - alpha) / left - 0.5)
    };

    // e^y shifts the mass up by var <= sd * sqrt(T)/2; 14 sd on either side
    // leaves tails far below the absolute tolerance.
    let lower = c.max(mean - 14.0 * sd);
    let upper = mean + var + 14.0 * sd;
    if lower >= upper {
        return Ok(0.0);
    }
    // Several starting panels so a narrow peak is always sampled.
    let panels = 16;
    let width = (upper - lower) / panels as f64;
    let tol = Tolerance::default();
    let mut total = 0.0;
    for k in 0..panels {
        let a = lower + k as f64 * width;
        let b = if k + 1 == panels { upper } else { a + width };
        total += quadrature::integrate(integrand, a, b, tol)?.value;
    }
    Ok(total)
}
