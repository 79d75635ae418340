//! Scalar special functions and a bracketing root finder.
//!
//! Everything here is a pure function on `f64`.

use crate::error::{Error, Result};

/// `log2(e)`, the factor converting nats to bits.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Stopping rule for iterative scalar methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub max_iterations: usize,
}

impl Tolerance {
    pub fn new(absolute: f64, relative: f64, max_iterations: usize) -> Result<Self> {
        if !(absolute >= 0.0) {
            return Err(Error::domain("absolute", absolute, "must be >= 0"));
        }
        if !(relative >= 0.0) {
            return Err(Error::domain("relative", relative, "must be >= 0"));
        }
        if absolute == 0.0 && relative == 0.0 {
            return Err(Error::Precondition(
                "tolerance needs a positive absolute or relative component".into(),
            ));
        }
        if max_iterations == 0 {
            return Err(Error::Precondition("max_iterations must be positive".into()));
        }
        Ok(Self {
            absolute,
            relative,
            max_iterations,
        })
    }

    /// Width below which an interval around `x` counts as converged.
    pub fn width_at(&self, x: f64) -> f64 {
        self.absolute + self.relative * x.abs()
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            absolute: 0.0,
            relative: 1e-14,
            max_iterations: 500,
        }
    }
}

/// Standard normal upper-tail probability `Q(x) = P(Z > x)`.
///
/// Evaluated as `erfc(x / sqrt 2) / 2`, which keeps full relative accuracy in
/// the far upper tail where `1 - Φ(x)` would cancel. Saturates to 0 and 1.
pub fn gaussian_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverse of [`gaussian_q`]: the `x` with `Q(x) = eps`.
///
/// A rational quantile approximation seeds Newton iterations on `Q`; if Newton
/// misbehaves the function falls back to bisection.
pub fn gaussian_q_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("eps", eps, "must lie in (0, 1)"));
    }
    if eps == 0.5 {
        return Ok(0.0);
    }
    // 1 - eps is exact here, and the upper tail keeps full relative accuracy.
    if eps > 0.5 {
        return gaussian_q_inv(1.0 - eps).map(|x| -x);
    }

    let target_err = 1e-13 * eps;
    let mut x = -normal_quantile_seed(eps);
    for _ in 0..50 {
        let residual = gaussian_q(x) - eps;
        if residual.abs() <= target_err {
            return Ok(x);
        }
        let density = gaussian_pdf(x);
        if density == 0.0 {
            break;
        }
        // dQ/dx = -pdf
        let step = residual / density;
        let next = x + step;
        if !next.is_finite() {
            break;
        }
        if next == x {
            return Ok(x);
        }
        x = next;
    }
    q_inv_bisect(eps)
}

fn q_inv_bisect(eps: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            return Ok(mid);
        }
        // Q is decreasing
        if gaussian_q(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Acklam's rational approximation of the lower-tail normal quantile,
/// relative error about 1e-9; only used as a Newton seed.
fn normal_quantile_seed(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Bisection root finder for a function that is monotone on `[lo, hi]`.
///
/// Returns as soon as `f` evaluates to exactly zero or the bracket is narrower
/// than `tol.width_at(x)`.
pub fn find_root_monotone<F>(mut f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo <= hi) {
        return Err(Error::Precondition(format!(
            "root bracket [{lo}, {hi}] is empty"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange {
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    for _ in 0..tol.max_iterations {
        let mid = lo + 0.5 * (hi - lo);
        if hi - lo <= tol.width_at(mid) || mid == lo || mid == hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        what: "bisection",
        iterations: tol.max_iterations,
    })
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
