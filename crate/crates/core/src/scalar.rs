//! Numeric abstraction shared by every module.
//!
//! Aggregation, quality indexes, Tanimoto/Jaccard and arrangement costs only
//! need field arithmetic and an order, so they run over [`Scalar`], which
//! covers `f32`, `f64` and exact [`Rational`] numbers. Entropy and cosine
//! need logarithms and square roots and are restricted to [`Real`].

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Exact rational scalar used by tests and by callers who want exact indexes.
pub type Rational = Ratio<i64>;

pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Parses a plain decimal literal. Returns `None` for anything that is
    /// not a finite number representable in `Self`.
    fn parse_decimal(text: &str) -> Option<Self>;

    /// Slack below which a cost improvement is treated as rounding noise.
    /// Zero for exact types.
    fn tolerance() -> Self;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar type")
    }

    fn from_index(i: usize) -> Self {
        Self::from_usize(i).expect("index representable in scalar type")
    }

    /// Total order over finite values. Incomparable pairs (NaN) compare equal,
    /// which never happens for values admitted by ingest.
    fn cmp_total(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    fn abs_value(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

/// Scalars with transcendental functions.
pub trait Real: Scalar + Float {}

impl<T: Scalar + Float> Real for T {}

macro_rules! impl_float_scalar {
    ($f:ty, $tol:expr) => {
        impl Scalar for $f {
            fn parse_decimal(text: &str) -> Option<Self> {
                let value: $f = text.trim().parse().ok()?;
                value.is_finite().then_some(value)
            }

            fn tolerance() -> Self {
                $tol
            }
        }
    };
}

impl_float_scalar!(f32, 1e-5);
impl_float_scalar!(f64, 1e-12);

impl Scalar for Rational {
    fn parse_decimal(text: &str) -> Option<Self> {
        let text = text.trim();
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let mut numer: i64 = 0;
        for b in int_part.bytes().chain(frac_part.bytes()) {
            numer = numer.checked_mul(10)?.checked_add(i64::from(b - b'0'))?;
        }
        let denom = 10i64.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
        let value = Ratio::new(numer, denom);
        Some(if negative { -value } else { value })
    }

    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
}
