//! Double-double arithmetic: an unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`,
//! giving about 32 significant digits. Only what the reference forward passes
//! need is provided.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale_pow2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn recip(self) -> Self {
        Dd::ONE / self
    }

    pub fn relu(self) -> Self {
        if self.hi > 0.0 {
            self
        } else {
            Dd::ZERO
        }
    }

    /// `e^x` by `x = k ln 2 + r`, then `e^{r/2^10} − 1` from a Taylor series
    /// and ten squarings carried as `s ↦ s(2 + s)` on the `− 1` part.
    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::new(k)).scale_pow2(-10);
        let mut term = r;
        let mut s = r;
        for n in 2..=24 {
            term = term * r / Dd::new(n as f64);
            s += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        let two = Dd::new(2.0);
        for _ in 0..10 {
            s = s * (two + s);
        }
        (Dd::ONE + s).scale_pow2(k as i32)
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
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

impl AddAssign for Dd {
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
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

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// `Σ a_i b_i` accumulated in double-double.
pub fn dot_dd(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).fold(Dd::ZERO, |acc, (x, y)| acc + *x * *y)
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` with the point,
/// the step and the functional all carried in double-double, so the only
/// error left is the `O(h²)` truncation term.
pub fn finite_diff_extended<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[Dd]) -> Dd,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut x: Vec<Dd> = point.iter().map(|&v| Dd::new(v)).collect();
    let step = Dd::new(h);
    (0..point.len())
        .map(|i| {
            x[i] = Dd::new(point[i]) + step;
            let plus = f(&x);
            x[i] = Dd::new(point[i]) - step;
            let minus = f(&x);
            x[i] = Dd::new(point[i]);
            ((plus - minus) / (step + step)).to_f64()
        })
        .collect()
}
