//! Floating-point abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

/// Real scalar type: `f32` or `f64`.
///
/// Besides the arithmetic supplied by [`num_traits::Float`], the trait carries
/// the handful of random variates the samplers need, so generic code never has
/// to spell out `rand_distr` bounds.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    fn c(x: f64) -> Self;

    fn from_usize_lossy(n: usize) -> Self {
        Self::c(n as f64)
    }

    fn from_count(n: u64) -> Self {
        Self::c(n as f64)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal variate.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform variate on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma variate with shape `k` and scale `s`. Returns `None` for invalid arguments.
    fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Option<Self>;

    /// Poisson count with mean `lambda`; `lambda == 0` yields 0.
    fn poisson<R: Rng + ?Sized>(lambda: Self, rng: &mut R) -> Option<u64>;

    /// Machine epsilon scaled tolerance used for iterative solvers.
    fn solver_tol() -> Self {
        Self::epsilon() * Self::c(8.0)
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn c(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Option<Self> {
                Gamma::new(shape, scale).ok().map(|g| g.sample(rng))
            }

            fn poisson<R: Rng + ?Sized>(lambda: Self, rng: &mut R) -> Option<u64> {
                if lambda == 0.0 {
                    return Some(0);
                }
                let draw: $t = Poisson::new(lambda).ok()?.sample(rng);
                Some(draw as u64)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp<F: Scalar>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Stabilized `log(sum(exp(x)))`.
pub fn log_sum_exp<F: Scalar>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return max;
    }
    let s = xs.iter().fold(F::zero(), |acc, &x| acc + (x - max).exp());
    max + s.ln()
}
