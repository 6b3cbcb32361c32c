//! Logarithmic throughput curve and its inversions.
//!
//! Throughput after `t` GPU-seconds is `f(t) = ln(1 + αt)` TFLOP per
//! GPU-second. The compute delivered by a horizon `T` is the integral
//!
//! ```text
//! F(T; α) = ((1 + αT)·ln(1 + αT) − αT) / α
//! ```
//!
//! Two inversions are provided: GPU-time from compute at fixed α
//! ([`solve_gpu_time`]) and α from compute and GPU-time ([`calibrate_alpha`]).
//!
//! α is carried as `log10(α)` and never exponentiated on its own: device
//! exponents run past 10^100, so every formula is written in terms of
//! `w = ln(αT)`. Above [`ASYMPTOTIC_SWITCH`] the closed forms are replaced by
//! their large-argument expansions, which agree to well below 1e-12 there.

use crate::error::{Error, Result};
use crate::units::{ComputeLoad, GpuTime, ThroughputParam};

/// Value of `w = ln(αt)` above which the asymptotic forms are used.
pub const ASYMPTOTIC_SWITCH: f64 = 40.0;

/// Below this `αT` the integral is evaluated from its Taylor series to avoid
/// cancellation in `(1 + x)·ln(1 + x) − x`.
const SERIES_SWITCH: f64 = 1e-2;

/// Bounds and tolerances shared by the two inversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub log10_alpha_min: f64,
    pub log10_alpha_max: f64,
    /// Cap on Newton/bisection steps; the doubling search that brackets the
    /// GPU-time root is not counted.
    pub max_iterations: usize,
    /// Relative tolerance on the compute residual when solving for GPU-time.
    pub rel_tol: f64,
    /// Absolute tolerance on `log10(α)` when calibrating.
    pub log10_alpha_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            log10_alpha_min: -12.0,
            log10_alpha_max: 200.0,
            max_iterations: 200,
            rel_tol: 1e-10,
            log10_alpha_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn check(&self, param: ThroughputParam) -> Result<()> {
        let l = param.log10_alpha();
        if l < self.log10_alpha_min || l > self.log10_alpha_max {
            return Err(Error::domain(format!(
                "log10(alpha) = {l} outside [{}, {}]",
                self.log10_alpha_min, self.log10_alpha_max
            )));
        }
        Ok(())
    }
}

/// `αt`, taking the most accurate route that does not overflow.
fn scaled(ln_alpha: f64, log10_alpha: f64, t: f64) -> f64 {
    let alpha = 10f64.powf(log10_alpha);
    if alpha.is_finite() && alpha > 0.0 {
        alpha * t
    } else {
        (ln_alpha + t.ln()).exp()
    }
}

/// Instantaneous throughput `ln(1 + αt)` in TFLOP per GPU-second.
pub fn throughput_at(param: ThroughputParam, t: GpuTime) -> f64 {
    let t = t.seconds();
    if t == 0.0 {
        return 0.0;
    }
    let w = param.ln_alpha() + t.ln();
    if w > ASYMPTOTIC_SWITCH {
        w
    } else {
        scaled(param.ln_alpha(), param.log10_alpha(), t).ln_1p()
    }
}

/// `F(T)/T = ((1 + x)·ln(1 + x) − x)/x` for `x = αT`.
fn mean_throughput(x: f64) -> f64 {
    if x < SERIES_SWITCH {
        // Σ_{k≥2} (−1)^k x^(k−1) / (k(k−1))
        let mut sum = 0.0;
        let mut power = 1.0;
        for k in 2..=12u32 {
            power *= x;
            let term = power / f64::from(k * (k - 1));
            sum += if k % 2 == 0 { term } else { -term };
        }
        sum
    } else {
        (1.0 + x) * x.ln_1p() / x - 1.0
    }
}

/// Closed-form integral. Loses precision once `ln(αT)` is large; see
/// [`cumulative_compute`] for the dispatching version.
pub fn cumulative_compute_exact(param: ThroughputParam, horizon: GpuTime) -> f64 {
    let t = horizon.seconds();
    if t == 0.0 {
        return 0.0;
    }
    t * mean_throughput(scaled(param.ln_alpha(), param.log10_alpha(), t))
}

/// Large-`αT` expansion `T·(ln(αT) − 1) + ln(αT)/α`.
pub fn cumulative_compute_asymptotic(param: ThroughputParam, horizon: GpuTime) -> f64 {
    let t = horizon.seconds();
    if t == 0.0 {
        return 0.0;
    }
    let w = param.ln_alpha() + t.ln();
    t * (w - 1.0) + w * 10f64.powf(-param.log10_alpha())
}

fn cumulative_tflop(param: ThroughputParam, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let horizon = GpuTime::from_seconds(t).expect("solver iterates stay non-negative");
    if param.ln_alpha() + t.ln() > ASYMPTOTIC_SWITCH {
        cumulative_compute_asymptotic(param, horizon)
    } else {
        cumulative_compute_exact(param, horizon)
    }
}

/// Compute delivered over `horizon` GPU-seconds: `∫₀ᵀ ln(1 + αt) dt`.
pub fn cumulative_compute(param: ThroughputParam, horizon: GpuTime) -> ComputeLoad {
    let tflop = cumulative_tflop(param, horizon.seconds());
    ComputeLoad::from_tflop(tflop).expect("integral of a non-negative curve")
}

/// GPU-time needed to deliver `load` at throughput parameter `param`.
///
/// Brackets the root by doubling from one GPU-second, then runs Newton's
/// method (the derivative of the integral is the throughput itself) with a
/// bisection fallback whenever a step leaves the bracket.
pub fn solve_gpu_time(
    load: ComputeLoad,
    param: ThroughputParam,
    config: &SolverConfig,
) -> Result<GpuTime> {
    config.check(param)?;
    let target = load.tflop();
    if target == 0.0 {
        return Ok(GpuTime::ZERO);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    while cumulative_tflop(param, hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Convergence { iterations: 0, last: lo });
        }
    }

    let mut t = hi;
    for _ in 0..config.max_iterations {
        let residual = cumulative_tflop(param, t) - target;
        if residual.abs() <= config.rel_tol * target {
            return GpuTime::from_seconds(t);
        }
        if residual > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            // bracket exhausted at double precision
            return GpuTime::from_seconds(0.5 * (lo + hi));
        }
        let slope = throughput_at(param, GpuTime::from_seconds(t)?);
        let newton = t - residual / slope;
        t = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Convergence {
        iterations: config.max_iterations,
        last: t,
    })
}

/// Exponent `log10(α)` for which `horizon` GPU-seconds deliver exactly `load`.
///
/// The integral is strictly increasing in α, so plain bisection over the
/// configured exponent range always converges.
pub fn calibrate_alpha(
    load: ComputeLoad,
    horizon: GpuTime,
    config: &SolverConfig,
) -> Result<ThroughputParam> {
    let target = load.tflop();
    let t = horizon.seconds();
    if target <= 0.0 || t <= 0.0 {
        return Err(Error::domain(format!(
            "calibration needs positive compute and GPU-time, got {target} TFLOP over {t} GPU-s"
        )));
    }
    let at = |l: f64| -> Result<f64> { Ok(cumulative_tflop(ThroughputParam::from_log10(l)?, t)) };

    let (mut lo, mut hi) = (config.log10_alpha_min, config.log10_alpha_max);
    let range_error = |direction| Error::AlphaRange {
        lo: config.log10_alpha_min,
        hi: config.log10_alpha_max,
        implied_tflops_per_gpu: target / t,
        direction,
    };
    if at(lo)? > target {
        return Err(range_error("low"));
    }
    if at(hi)? < target {
        return Err(range_error("high"));
    }

    for _ in 0..config.max_iterations {
        let mid = 0.5 * (lo + hi);
        if at(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= config.log10_alpha_tol {
            return ThroughputParam::from_log10(0.5 * (lo + hi));
        }
    }
    Err(Error::Convergence {
        iterations: config.max_iterations,
        last: 0.5 * (lo + hi),
    })
}
