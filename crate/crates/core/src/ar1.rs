//! Closed-form algebra for the stationary AR(1) correlation matrix
//! `B[j][k] = r^|j-k|`.
//!
//! `B^-1 = M / (1 - r^2)` where `M` is tridiagonal with unit corners,
//! `1 + r^2` on the interior diagonal and `-r` off the diagonal. Every
//! quadratic form the estimators need reduces to five sums of the input
//! vector, so a trajectory of any length is summarized by [`ArSuffStats`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Sums of `W[t] = Z[t] - shift` that determine every AR(1) quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArSuffStats<F> {
    /// Series length `T`.
    pub len: usize,
    /// `sum_{t=1..T} W[t]`
    pub sum: F,
    /// `sum_{s=2..T-1} W[s]`
    pub inner_sum: F,
    /// `sum_{t=1..T} W[t]^2`
    pub sum_sq: F,
    /// `sum_{s=2..T-1} W[s]^2`
    pub inner_sum_sq: F,
    /// `sum_{t=1..T-1} W[t] W[t+1]`
    pub lag_cross: F,
}

/// The four reductions `W' B^-1 W`, `W' B^-1 1`, `1' B^-1 1` and `log det B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArQuadForms<F> {
    pub wbw: F,
    pub wb1: F,
    pub oneb1: F,
    pub logdet_b: F,
}

impl<F: Scalar> ArSuffStats<F> {
    pub fn from_slice(z: &[F], shift: F) -> Result<Self> {
        let len = z.len();
        if len < 2 {
            return Err(Error::TooShort { min: 2, got: len });
        }
        let mut sum = F::zero();
        let mut sum_sq = F::zero();
        let mut lag_cross = F::zero();
        let mut prev = z[0] - shift;
        sum = sum + prev;
        sum_sq = sum_sq + prev * prev;
        for &zt in &z[1..] {
            let w = zt - shift;
            sum = sum + w;
            sum_sq = sum_sq + w * w;
            lag_cross = lag_cross + prev * w;
            prev = w;
        }
        let first = z[0] - shift;
        let last = z[len - 1] - shift;
        Ok(Self {
            len,
            sum,
            inner_sum: sum - first - last,
            sum_sq,
            inner_sum_sq: sum_sq - first * first - last * last,
            lag_cross,
        })
    }

    /// Componentwise average of several summaries of equal length.
    pub fn mean_of<'a, I>(stats: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        F: 'a,
    {
        let mut iter = stats.into_iter();
        let first = *iter.next().ok_or(Error::Empty("sufficient statistics"))?;
        let mut acc = first;
        let mut n = 1usize;
        for s in iter {
            if s.len != first.len {
                return Err(Error::LengthMismatch(s.len, first.len));
            }
            acc.sum = acc.sum + s.sum;
            acc.inner_sum = acc.inner_sum + s.inner_sum;
            acc.sum_sq = acc.sum_sq + s.sum_sq;
            acc.inner_sum_sq = acc.inner_sum_sq + s.inner_sum_sq;
            acc.lag_cross = acc.lag_cross + s.lag_cross;
            n += 1;
        }
        let k = F::from_usize_lossy(n);
        acc.sum = acc.sum / k;
        acc.inner_sum = acc.inner_sum / k;
        acc.sum_sq = acc.sum_sq / k;
        acc.inner_sum_sq = acc.inner_sum_sq / k;
        acc.lag_cross = acc.lag_cross / k;
        Ok(acc)
    }

    fn t(&self) -> F {
        F::from_usize_lossy(self.len)
    }

    /// `W' M W = r^2 Q2 - 2 r C + Q1`.
    pub(crate) fn quad_poly(&self, r: F) -> [F; 3] {
        let two = F::c(2.0);
        [
            r * r * self.inner_sum_sq - two * r * self.lag_cross + self.sum_sq,
            two * r * self.inner_sum_sq - two * self.lag_cross,
            two * self.inner_sum_sq,
        ]
    }

    /// `1' M W = (1 - r)(S1 - r S2)`.
    pub(crate) fn cross_poly(&self, r: F) -> [F; 3] {
        let two = F::c(2.0);
        [
            (F::one() - r) * (self.sum - r * self.inner_sum),
            two * r * self.inner_sum - (self.sum + self.inner_sum),
            two * self.inner_sum,
        ]
    }

    /// `1' M 1 = (1 - r)(T - r (T - 2))`.
    pub(crate) fn ones_poly(&self, r: F) -> [F; 3] {
        let two = F::c(2.0);
        let t = self.t();
        [
            (F::one() - r) * (t - r * (t - two)),
            two * r * (t - two) - two * (t - F::one()),
            two * (t - two),
        ]
    }

    pub fn quad_forms(&self, r: F) -> Result<ArQuadForms<F>> {
        if !(r.abs() < F::one()) {
            return Err(Error::InvalidParams(format!("|r| = {} must be below 1", r.abs())));
        }
        let u = F::one() - r * r;
        let t = self.t();
        Ok(ArQuadForms {
            wbw: self.quad_poly(r)[0] / u,
            wb1: (self.sum - r * self.inner_sum) / (F::one() + r),
            oneb1: (r * r * (t - F::c(2.0)) - F::c(2.0) * r * (t - F::one()) + t) / u,
            logdet_b: (t - F::one()) * u.ln(),
        })
    }
}

/// Value, gradient and Hessian of `log pi(Z | theta)` in the coordinates
/// `(theta1, theta2, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoglikDerivs<F> {
    pub value: F,
    pub grad: [F; 3],
    pub hess: [[F; 3]; 3],
}

/// Complete-data log-likelihood of the stationary AR(1) evaluated from
/// unshifted sufficient statistics. Because the log-likelihood is linear in the
/// statistics, passing an average of statistics yields the averaged
/// log-likelihood.
pub fn loglik_from_stats<F: Scalar>(stats: &ArSuffStats<F>, params: &ModelParams<F>) -> F {
    let (theta1, theta2, r) = (params.theta1(), params.theta2(), params.r());
    let two = F::c(2.0);
    let t = stats.t();
    let u = F::one() - r * r;
    let f = stats.quad_poly(r)[0] - two * theta1 * stats.cross_poly(r)[0]
        + theta1 * theta1 * stats.ones_poly(r)[0];
    -t / two * (two * F::PI() * theta2).ln() - (t - F::one()) / two * u.ln() - f / (two * theta2 * u)
}

/// Analytic value, score and Hessian of the complete-data log-likelihood.
pub fn loglik_derivs<F: Scalar>(stats: &ArSuffStats<F>, params: &ModelParams<F>) -> LoglikDerivs<F> {
    let (th1, th2, r) = (params.theta1(), params.theta2(), params.r());
    let one = F::one();
    let two = F::c(2.0);
    let t = stats.t();

    let [a, a_r, a_rr] = stats.quad_poly(r);
    let [bv, bv_r, bv_rr] = stats.cross_poly(r);
    let [cv, cv_r, cv_rr] = stats.ones_poly(r);

    // f(theta1, r) = W' M W with W = Z - theta1.
    let f = a - two * th1 * bv + th1 * th1 * cv;
    let f_1 = -two * bv + two * th1 * cv;
    let f_11 = two * cv;
    let f_r = a_r - two * th1 * bv_r + th1 * th1 * cv_r;
    let f_1r = -two * bv_r + two * th1 * cv_r;
    let f_rr = a_rr - two * th1 * bv_rr + th1 * th1 * cv_rr;

    // g = f / u with u = 1 - r^2.
    let u = one - r * r;
    let u_r = -two * r;
    let u_rr = -two;
    let u2 = u * u;
    let g = f / u;
    let g_1 = f_1 / u;
    let g_11 = f_11 / u;
    let g_r = f_r / u - f * u_r / u2;
    let g_1r = f_1r / u - f_1 * u_r / u2;
    let g_rr = f_rr / u - two * f_r * u_r / u2 - f * u_rr / u2 + two * f * u_r * u_r / (u2 * u);

    let l_r = (t - one) * r / u;
    let l_rr = (t - one) * (one + r * r) / u2;

    let value = -t / two * (two * F::PI() * th2).ln() - (t - one) / two * u.ln() - g / (two * th2);
    let th2_sq = th2 * th2;
    let grad = [-g_1 / (two * th2), -t / (two * th2) + g / (two * th2_sq), l_r - g_r / (two * th2)];
    let h11 = -g_11 / (two * th2);
    let h12 = g_1 / (two * th2_sq);
    let h13 = -g_1r / (two * th2);
    let h22 = t / (two * th2_sq) - g / (th2_sq * th2);
    let h23 = g_r / (two * th2_sq);
    let h33 = l_rr - g_rr / (two * th2);
    LoglikDerivs {
        value,
        grad,
        hess: [[h11, h12, h13], [h12, h22, h23], [h13, h23, h33]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complete_data_loglik, LatentTrajectory};

    fn stats(z: &[f64]) -> ArSuffStats<f64> {
        ArSuffStats::from_slice(z, 0.0).unwrap()
    }

    #[test]
    fn identity_case() {
        let z = [0.3, -1.2, 2.0, 0.7];
        let s = stats(&z);
        let q = s.quad_forms(0.0).unwrap();
        assert!((q.wbw - s.sum_sq).abs() < 1e-14);
        assert!((q.wb1 - s.sum).abs() < 1e-14);
        assert!((q.oneb1 - 4.0).abs() < 1e-14);
        assert_eq!(q.logdet_b, 0.0);
    }

    #[test]
    fn rejects_unit_root() {
        assert!(stats(&[1.0, 2.0]).quad_forms(1.0).is_err());
        assert!(stats(&[1.0, 2.0]).quad_forms(-1.0).is_err());
    }

    #[test]
    fn stats_loglik_matches_sequential() {
        let z = [1.9, 2.4, 1.7, 2.2, 2.05, 1.3];
        let p = ModelParams::new(2.0, 0.22, -0.5).unwrap();
        let seq = complete_data_loglik(&LatentTrajectory::new(z.to_vec()).unwrap(), &p);
        assert!((loglik_from_stats(&stats(&z), &p) - seq).abs() < 1e-12);
        assert!((loglik_derivs(&stats(&z), &p).value - seq).abs() < 1e-12);
    }

    #[test]
    fn averaged_stats_average_the_loglik() {
        let za = [1.0, 2.0, 0.5];
        let zb = [0.2, 1.1, 1.9];
        let p = ModelParams::new(1.0, 0.8, -1.3).unwrap();
        let mean = ArSuffStats::mean_of([stats(&za), stats(&zb)].iter()).unwrap();
        let expected = 0.5 * (loglik_from_stats(&stats(&za), &p) + loglik_from_stats(&stats(&zb), &p));
        assert!((loglik_from_stats(&mean, &p) - expected).abs() < 1e-13);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let z = [1.9, 2.4, 1.7, 2.2, 2.05, 1.3, 2.8];
        let s = stats(&z);
        let base = [1.8, 0.3, -0.7];
        let p = ModelParams::from_array(base).unwrap();
        let d = loglik_derivs(&s, &p);
        let h = 1e-5;
        for i in 0..3 {
            let mut up = base;
            let mut dn = base;
            up[i] += h;
            dn[i] -= h;
            let pu = ModelParams::from_array(up).unwrap();
            let pd = ModelParams::from_array(dn).unwrap();
            let fd = (loglik_from_stats(&s, &pu) - loglik_from_stats(&s, &pd)) / (2.0 * h);
            assert!((fd - d.grad[i]).abs() < 1e-6, "grad {i}: {fd} vs {}", d.grad[i]);
            let gu = loglik_derivs(&s, &pu).grad;
            let gd = loglik_derivs(&s, &pd).grad;
            for j in 0..3 {
                let fd2 = (gu[j] - gd[j]) / (2.0 * h);
                assert!((fd2 - d.hess[i][j]).abs() < 1e-5 * (1.0 + fd2.abs()), "hess {i}{j}");
            }
        }
    }
}
