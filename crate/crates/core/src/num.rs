//! Fill arithmetic.
//!
//! The engine is generic over the numeric type used for cup fills. The
//! default is exact arbitrary-precision rationals ([`Rat`]), which is what
//! every invariant check and acceptance test uses: the invariants are
//! inequalities with equality cases, and drift would produce false
//! violations. A floating-point mode ([`F64`]) exists for long Monte-Carlo
//! sweeps where exactness is not asserted.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

/// Exact rational fill value (arbitrary-precision numerator/denominator).
pub type Rat = BigRational;

/// Build an exact rational from an integer pair. Panics if `den == 0`.
pub fn rat(num: i64, den: i64) -> Rat {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Numeric type a game can run on.
///
/// Implementations must behave like a totally ordered field restricted to
/// the operations below. `is_exact()` reports whether comparisons are free
/// of rounding; invariant-acceptance checks refuse inexact modes.
pub trait FillValue:
    Clone
    + Ord
    + Eq
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Zero
    + One
    + Send
    + Sync
    + 'static
{
    fn from_int(n: i64) -> Self;
    /// `n / d` exactly (or as close as the representation allows).
    fn from_ratio(n: i64, d: i64) -> Self;
    fn from_rat(r: &Rat) -> Self;
    /// Exact division by a positive count (used for means and even splits).
    fn div_nat(self, n: usize) -> Self;
    fn to_f64(&self) -> f64;
    fn is_exact() -> bool;
    /// Parse either `a/b` or a decimal/integer literal.
    fn parse(s: &str) -> Option<Self>;
    fn is_negative(&self) -> bool {
        *self < Self::zero()
    }
    /// Exact integer keys over a common denominator, ordered like the
    /// values. Representations without a useful common grid return `None`
    /// and sorting falls back to direct comparison. Comparison of big
    /// rationals divides, so hot sorting paths use these keys instead.
    fn int_sort_keys(_values: &[Self]) -> Option<Vec<BigInt>> {
        None
    }
}

/// Indices of `values` sorted by value descending, ties by index
/// ascending: the canonical rank order.
pub fn sort_desc_indices<N: FillValue>(values: &[N]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..values.len()).collect();
    match N::int_sort_keys(values) {
        Some(keys) => ids.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(a.cmp(&b))),
        None => ids.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b))),
    }
    ids
}

impl FillValue for Rat {
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        rat(n, d)
    }
    fn from_rat(r: &Rat) -> Self {
        r.clone()
    }
    fn div_nat(self, n: usize) -> Self {
        assert!(n > 0, "division by zero count");
        self / BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        self.numer().to_f64().unwrap_or(f64::NAN) / self.denom().to_f64().unwrap_or(f64::NAN)
    }
    fn is_exact() -> bool {
        true
    }
    fn parse(s: &str) -> Option<Self> {
        parse_rat(s)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn int_sort_keys(values: &[Self]) -> Option<Vec<BigInt>> {
        use num::Integer;
        if values.len() < 8 {
            return None;
        }
        let mut l = BigInt::one();
        for v in values {
            let d = v.denom();
            // Denominators repeat heavily within a state; gcd only when
            // the accumulated grid does not already cover this one.
            if d.is_one() || d == &l || (&l % d).is_zero() {
                continue;
            }
            l = l.lcm(d);
            // Heterogeneous denominators can make the common grid explode;
            // bail out to direct comparison.
            if l.bits() > 4096 {
                return None;
            }
        }
        Some(values
            .iter()
            .map(|v| {
                if v.denom() == &l {
                    v.numer().clone()
                } else {
                    v.numer() * (&l / v.denom())
                }
            })
            .collect())
    }
}

/// Parse `a`, `a/b`, or a plain decimal like `0.25` into an exact rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).ok()?;
        let d = BigInt::from_str(d.trim()).ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int = BigInt::from_str(int).ok()?;
        let digits = frac.len() as u32;
        let frac_num = BigInt::from_str(frac).ok()?;
        let den = BigInt::from(10u32).pow(digits);
        let mag = int.magnitude() * &den.magnitude().clone() + frac_num.magnitude();
        let num = BigInt::from_biguint(
            if neg {
                num::bigint::Sign::Minus
            } else {
                num::bigint::Sign::Plus
            },
            mag,
        );
        return Some(BigRational::new(num, den));
    }
    let n = BigInt::from_str(s).ok()?;
    Some(BigRational::from_integer(n))
}

/// Total-ordered wrapper around `f64` for the floating fast mode.
///
/// Construction rejects non-finite values, so `Ord` via `total_cmp` is a
/// genuine total order on the values that can occur in a game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F64(f64);

impl F64 {
    pub fn new(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite fill value");
        F64(v)
    }
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Eq for F64 {}
impl PartialOrd for F64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for F64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
impl fmt::Display for F64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl Add for F64 {
    type Output = F64;
    fn add(self, rhs: Self) -> Self {
        F64::new(self.0 + rhs.0)
    }
}
impl Sub for F64 {
    type Output = F64;
    fn sub(self, rhs: Self) -> Self {
        F64::new(self.0 - rhs.0)
    }
}
impl Mul for F64 {
    type Output = F64;
    fn mul(self, rhs: Self) -> Self {
        F64::new(self.0 * rhs.0)
    }
}
impl Neg for F64 {
    type Output = F64;
    fn neg(self) -> Self {
        F64(-self.0)
    }
}
impl AddAssign for F64 {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}
impl SubAssign for F64 {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}
impl Zero for F64 {
    fn zero() -> Self {
        F64(0.0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}
impl One for F64 {
    fn one() -> Self {
        F64(1.0)
    }
}

impl FillValue for F64 {
    fn from_int(n: i64) -> Self {
        F64::new(n as f64)
    }
    fn from_ratio(n: i64, d: i64) -> Self {
        F64::new(n as f64 / d as f64)
    }
    fn from_rat(r: &Rat) -> Self {
        F64::new(FillValue::to_f64(r))
    }
    fn div_nat(self, n: usize) -> Self {
        F64::new(self.0 / n as f64)
    }
    fn to_f64(&self) -> f64 {
        self.0
    }
    fn is_exact() -> bool {
        false
    }
    fn parse(s: &str) -> Option<Self> {
        if let Some(r) = parse_rat(s) {
            return Some(F64::new(FillValue::to_f64(&r)));
        }
        s.trim().parse::<f64>().ok().map(F64::new)
    }
}

/// Sum of an iterator of fill values.
pub fn sum<N: FillValue>(it: impl IntoIterator<Item = N>) -> N {
    let mut acc = N::zero();
    for v in it {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_roundtrip() {
        let r = rat(-3, 6);
        assert_eq!(r, rat(-1, 2));
        assert_eq!(r.to_string(), "-1/2");
        assert_eq!(parse_rat("-1/2"), Some(r));
        assert_eq!(parse_rat("7"), Some(rat(7, 1)));
        assert_eq!(parse_rat("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rat("-1.5"), Some(rat(-3, 2)));
        assert_eq!(parse_rat("1/0"), None);
    }

    #[test]
    fn exact_mean() {
        let vals = vec![rat(1, 2), rat(-1, 2)];
        let m = sum(vals).div_nat(2);
        assert_eq!(m, rat(0, 1));
    }

    #[test]
    fn float_mode_is_marked_inexact() {
        assert!(!<F64 as FillValue>::is_exact());
        assert!(<Rat as FillValue>::is_exact());
        assert_eq!(F64::from_ratio(1, 2).get(), 0.5);
    }
}
