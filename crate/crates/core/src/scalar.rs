//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real field the solvers are generic over: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts an index or count into `T`.
#[inline]
pub fn from_usize<T: Real>(x: usize) -> T {
    T::from_usize(x).expect("count representable in scalar type")
}

#[inline]
pub(crate) fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Nonnegative extended real: a finite value or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Extended<T> {
    pub fn zero() -> Self {
        Extended::Finite(T::zero())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    /// Finite value, or `T::infinity()` for `+∞`.
    pub fn to_real(self) -> T {
        match self {
            Extended::Finite(v) => v,
            Extended::Infinite => T::infinity(),
        }
    }

    pub fn sqrt(self) -> Self {
        match self {
            Extended::Finite(v) => Extended::Finite(v.sqrt()),
            Extended::Infinite => Extended::Infinite,
        }
    }

    /// Multiplication by a nonnegative scalar; `0·∞ = 0`.
    pub fn scale(self, c: T) -> Self {
        match self {
            Extended::Finite(v) => Extended::Finite(v * c),
            Extended::Infinite if c == T::zero() => Extended::Finite(T::zero()),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

impl<T: Real> std::ops::Add for Extended<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::Infinite,
        }
    }
}

impl<T: Real> Sum for Extended<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Extended::zero(), |acc, x| acc + x)
    }
}

impl<T: Real> PartialOrd for Extended<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Some(Ordering::Less),
            (Extended::Infinite, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_arithmetic() {
        let a = Extended::Finite(2.0_f64);
        assert_eq!(a + Extended::Finite(1.0), Extended::Finite(3.0));
        assert_eq!(a + Extended::Infinite, Extended::Infinite);
        assert_eq!(Extended::<f64>::Infinite.scale(0.0), Extended::Finite(0.0));
        assert!(a < Extended::Infinite);
        assert_eq!(Extended::Finite(4.0_f64).sqrt(), Extended::Finite(2.0));
    }
}
