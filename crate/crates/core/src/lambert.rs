//! Principal branch `W0` of the Lambert W function.
//!
//! Direct evaluation uses Halley's iteration on `w e^w - x`. For arguments
//! whose logarithm is known (the latent-site proposal needs `W0(tau2 *
//! exp(m))` with `m` in the thousands for large counts) [`lambert_w0_of_log`]
//! iterates on `w + ln w - ln x` instead, so `x` itself is never formed.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_ITER: usize = 64;

/// `W0(x)` for `x >= -1/e`.
pub fn lambert_w0<F: Scalar>(x: F) -> Result<F> {
    let branch = -(-F::one()).exp();
    if x.is_nan() || x < branch {
        // Allow one ulp of slack for arguments computed as `-exp(-1)`.
        if x.is_finite() && branch - x <= F::epsilon() * branch.abs() {
            return Ok(-F::one());
        }
        return Err(Error::LambertDomain(x.to_f64_lossy()));
    }
    if x == F::zero() {
        return Ok(F::zero());
    }
    if x == F::infinity() {
        return Ok(F::infinity());
    }
    if x > F::c(3.0) {
        return Ok(w0_large(x.ln()));
    }
    let mut w = initial_guess(x, branch);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + F::one();
        if wp1 == F::zero() {
            break;
        }
        let denom = ew * wp1 - (w + F::c(2.0)) * f / (F::c(2.0) * wp1);
        let step = f / denom;
        w = w - step;
        if !(step.abs() > F::solver_tol() * (F::one() + w.abs())) {
            break;
        }
    }
    Ok(w.max(-F::one()))
}

/// `W0(exp(log_x))` for any real `log_x`, without forming `exp(log_x)` when it
/// would overflow.
pub fn lambert_w0_of_log<F: Scalar>(log_x: F) -> F {
    if log_x > F::one() {
        w0_large(log_x)
    } else {
        // exp(log_x) <= e: no overflow; underflow to 0 correctly yields W0 = 0.
        lambert_w0(log_x.exp()).unwrap_or(F::zero())
    }
}

/// Solves `w + ln w = log_x` for `log_x > 1` (so `w > 1`).
fn w0_large<F: Scalar>(log_x: F) -> F {
    let mut w = if log_x > F::c(3.0) {
        let l2 = log_x.ln();
        log_x - l2 + l2 / log_x
    } else {
        // log_x in (1, 3]: w in (1, ~2.5); a linear start keeps Halley monotone.
        F::one() + (log_x - F::one()) * F::c(0.6)
    };
    for _ in 0..MAX_ITER {
        let g = w + w.ln() - log_x;
        let g1 = F::one() + F::one() / w;
        let g2 = -F::one() / (w * w);
        let step = F::c(2.0) * g * g1 / (F::c(2.0) * g1 * g1 - g * g2);
        w = w - step;
        if !(step.abs() > F::solver_tol() * w.abs()) {
            break;
        }
    }
    w
}

fn initial_guess<F: Scalar>(x: F, branch: F) -> F {
    if x < F::c(-0.25) {
        // Series about the branch point in p = sqrt(2 (e x + 1)).
        let p = (F::c(2.0) * (x / branch.abs() + F::one())).max(F::zero()).sqrt();
        -F::one() + p - p * p / F::c(3.0) + F::c(11.0 / 72.0) * p * p * p
    } else {
        // Pade-type approximant accurate on [-0.25, 3].
        x * (F::one() + F::c(4.0 / 3.0) * x) / (F::one() + F::c(7.0 / 3.0) * x + F::c(5.0 / 6.0) * x * x)
    }
}
