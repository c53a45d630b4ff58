//! Bounded one-dimensional maximization.

use crate::scalar::Scalar;

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Stops once the bracket is narrower than `tol`; returns the best point seen.
pub fn golden_max<F: Scalar>(mut f: impl FnMut(F) -> F, mut lo: F, mut hi: F, tol: F) -> (F, F) {
    let inv_phi = (F::c(5.0).sqrt() - F::one()) / F::c(2.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if !(hi - lo > tol) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid scan followed by golden-section refinement around the best node.
pub fn grid_then_golden<F: Scalar>(
    mut f: impl FnMut(F) -> F,
    grid: impl IntoIterator<Item = F>,
    step: F,
    bounds: (F, F),
    tol: F,
) -> (F, F) {
    let mut best = (F::nan(), F::neg_infinity());
    for x in grid {
        let fx = f(x);
        if fx > best.1 || best.0.is_nan() {
            best = (x, fx);
        }
    }
    let lo = (best.0 - step).max(bounds.0);
    let hi = (best.0 + step).min(bounds.1);
    let refined = golden_max(&mut f, lo, hi, tol);
    if refined.1 >= best.1 {
        refined
    } else {
        best
    }
}
