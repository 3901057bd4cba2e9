//! Floating-point scalar abstraction: f32 or f64.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type the whole crate is generic over.
///
/// Everything numeric (expression evaluation, integration, root finding,
/// eigenvalues) works for any implementor; `f64` is the default used by the
/// concrete aliases at the crate root.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Shorthand conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Format with the semantics of C's `printf("%.17g", x)`: 17 significant
/// digits, fixed or scientific notation chosen by exponent, trailing zeros
/// stripped. Used for byte-stable CSV output.
pub fn fmt_g17<T: Scalar>(x: T) -> String {
    let v = x.to_f64().unwrap_or(f64::NAN);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // 17 significant digits in scientific form, correctly rounded by std.
    let sci = format!("{:.16e}", v);
    let (mant, exp) = sci.split_once('e').expect("LowerExp format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 17);
    let sign = if neg { "-" } else { "" };
    let body = if (-4..17).contains(&exp) {
        if exp >= 0 {
            let split = (exp + 1) as usize;
            let int_part = &digits[..split];
            let frac = digits[split..].trim_end_matches('0');
            if frac.is_empty() {
                int_part.to_string()
            } else {
                format!("{int_part}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            let frac = format!("{zeros}{digits}");
            let frac = frac.trim_end_matches('0');
            format!("0.{frac}")
        }
    } else {
        let head = &digits[..1];
        let tail = digits[1..].trim_end_matches('0');
        let mant = if tail.is_empty() {
            head.to_string()
        } else {
            format!("{head}.{tail}")
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{esign}{:02}", exp.abs())
    };
    format!("{sign}{body}")
}

/// Max-norm of a slice.
pub fn max_norm<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Max-norm distance between two equal-length slices.
pub fn max_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn of_converts_literals() {
        assert_eq!(<f64 as Scalar>::of(1.5), 1.5);
        assert_eq!(<f32 as Scalar>::of(0.25), 0.25f32);
        assert!(<f64 as Scalar>::of(f64::INFINITY).is_infinite());
    }

    #[test]
    fn norms() {
        assert_eq!(max_norm(&[1.0, -3.0, 2.0]), 3.0);
        assert_eq!(max_dist(&[1.0, 2.0], &[0.5, 4.0]), 2.0);
    }

    #[test]
    fn g17_matches_printf() {
        // Reference strings from printf("%.17g", x).
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(-0.0), "-0");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(100.0), "100");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.0 / 3.0), "0.33333333333333331");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_g17(-2.5e-7), "-2.4999999999999999e-07");
        assert_eq!(fmt_g17(123456.789), "123456.789");
        assert_eq!(fmt_g17((-5.0f64).exp()), "0.006737946999085467");
        assert_eq!(fmt_g17(std::f64::consts::PI), "3.1415926535897931");
    }

    #[test]
    fn g17_round_trips() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 2.0f64.sqrt(), 6.02e23, -1e-300] {
            let s = fmt_g17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
