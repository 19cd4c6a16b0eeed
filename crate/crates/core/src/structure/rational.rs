use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use std::cmp::Ordering;

/// Exact rational used for branching values and slopes.
pub type Rational = BigRational;

pub(crate) fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[cfg(test)]
pub(crate) fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact value of a finite float.
pub(crate) fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn q_to_f64(q: &Rational) -> f64 {
    match (q.numer().to_f64(), q.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Huge operands: compare bit lengths.
            let shift = q.denom().bits() as i64 - 60;
            let n = (q.numer() >> shift.max(0) as usize).to_f64().unwrap_or(f64::NAN);
            let d = (q.denom() >> shift.max(0) as usize).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

pub fn q_to_string(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Compares `r` with `2^-i` without materializing `2^i` when it is huge.
pub(crate) fn cmp_pow2_neg(r: &Rational, i: u64) -> Ordering {
    if !r.is_positive() {
        return Ordering::Less;
    }
    let (p, q) = (r.numer(), r.denom());
    let (bp, bq) = (p.bits(), q.bits());
    // p·2^i has bp+i bits (up to one less in value), q has bq bits.
    if bp + i > bq + 1 {
        return Ordering::Greater;
    }
    if bp + i + 1 < bq {
        return Ordering::Less;
    }
    (p << i as usize).cmp(q)
}
