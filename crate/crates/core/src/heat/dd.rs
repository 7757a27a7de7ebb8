//! Double-double arithmetic (about 32 significant digits), enough to sum the
//! Legendre series of the sphere kernel where the terms cancel heavily.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Natural log, accurate to double precision even when hi alone is rounded.
    pub fn ln(self) -> f64 {
        self.hi.ln() + self.lo / self.hi
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self - Dd::from_f64(b).mul_f64(q1);
        let q2 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// e^x for an f64 argument: scaling to |x/2^m| < 1/16, Taylor series, then squaring.
    pub fn exp(x: f64) -> Dd {
        if x == 0.0 {
            return Dd::ONE;
        }
        let m = (x.abs().log2().ceil() + 4.0).max(0.0) as i32;
        let r = Dd::from_f64(x * 2f64.powi(-m));
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for k in 1..=22 {
            term = (term * r).div_f64(k as f64);
            sum = sum + term;
        }
        for _ in 0..m {
            sum = sum * sum;
        }
        sum
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_has_a_nonzero_tail() {
        let t = Dd::ONE.div_f64(3.0);
        assert!(t.lo != 0.0);
        let back = t.mul_f64(3.0) - Dd::ONE;
        assert!(back.to_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_is_multiplicative() {
        let a = Dd::exp(-0.37);
        let b = Dd::exp(0.37);
        assert!(((a * b) - Dd::ONE).to_f64().abs() < 1e-30);
        let e = Dd::exp(1.0);
        // e to 32 digits: 2.7182818284590452353602874713527
        let want = Dd { hi: std::f64::consts::E, lo: 1.445_646_891_729_250_2e-16 };
        assert!((e - want).to_f64().abs() < 1e-30);
    }

    #[test]
    fn exp_handles_large_negative_arguments() {
        let v = Dd::exp(-50.0);
        assert!((v.to_f64() / (-50f64).exp() - 1.0).abs() < 1e-14);
    }
}
