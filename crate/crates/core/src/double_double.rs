//! Double-double scalar (about 32 significant digits) for finite-difference
//! gradient checks, where `f64` rounding in `f(θ+ε) - f(θ-ε)` swamps
//! gradients below roughly 1e-8.
//!
//! Arithmetic, `sqrt`, `exp` and `ln` (and everything built from them) are
//! double-double accurate. Trigonometric functions are evaluated on the
//! rounded `f64` value and are only `f64` accurate; nothing in the model
//! uses them. Algorithms follow the classic QD library (Hida, Li, Bailey).

use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};
use std::sync::OnceLock;

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ParseFloatError, ToPrimitive, Zero};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const LN_2: DoubleDouble = DoubleDouble::new(0.6931471805599453, 2.3190468138462996e-17);
const LN_10: DoubleDouble = DoubleDouble::new(2.302585092994046, -2.1707562233822494e-16);
const EXP_SQUARINGS: i32 = 9;
const EXP_TERMS: usize = 11;

#[inline]
fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let s = a + b;
    DoubleDouble::new(s, b - (s - a))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    if cfg!(target_feature = "fma") {
        (p, a.mul_add(b, -p))
    } else {
        // Dekker splitting; exact barring overflow above ~1e300.
        let split = |x: f64| {
            let t = 134217729.0 * x;
            let hi = t - (t - x);
            (hi, x - hi)
        };
        let (ah, al) = split(a);
        let (bh, bl) = split(b);
        (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
    }
}

fn inverse_factorials() -> &'static [DoubleDouble; EXP_TERMS] {
    static TABLE: OnceLock<[DoubleDouble; EXP_TERMS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [DoubleDouble::ONE; EXP_TERMS];
        let mut fact = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            fact *= (k + 1) as f64;
            *slot = DoubleDouble::ONE / DoubleDouble::exact(fact);
        }
        out
    })
}

impl DoubleDouble {
    pub const ZERO: Self = Self::new(0.0, 0.0);
    pub const ONE: Self = Self::new(1.0, 0.0);

    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    const fn exact(v: f64) -> Self {
        Self::new(v, 0.0)
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn from_i128(v: i128) -> Self {
        let hi = v as f64;
        let lo = (v - hi as i128) as f64;
        quick_two_sum(hi, lo)
    }

    fn lossy(self) -> f64 {
        self.hi + self.lo
    }

    fn via_f64(self, f: impl Fn(f64) -> f64) -> Self {
        Self::exact(f(self.lossy()))
    }

    fn half() -> Self {
        Self::exact(0.5)
    }

    /// Exact scaling by a power of two.
    fn ldexp(self, e: i32) -> Self {
        let e1 = e / 2;
        let f1 = 2f64.powi(e1);
        let f2 = 2f64.powi(e - e1);
        Self::new(self.hi * f1 * f2, self.lo * f1 * f2)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.lossy(), f)
    }
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self::exact(v)
    }
}

impl From<DoubleDouble> for f64 {
    fn from(v: DoubleDouble) -> Self {
        v.lossy()
    }
}

impl Neg for DoubleDouble {
    type Output = Self;

    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.hi, -self.lo)
    }
}

impl Add for DoubleDouble {
    type Output = Self;

    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        if !s.is_finite() {
            return Self::new(s, 0.0);
        }
        let (t, f) = two_sum(self.lo, rhs.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;

    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + -rhs
    }
}

impl Mul for DoubleDouble {
    type Output = Self;

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        if !p.is_finite() {
            return Self::new(p, 0.0);
        }
        quick_two_sum(p, e + (self.hi * rhs.lo + self.lo * rhs.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;

    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() {
            return Self::new(q1, 0.0);
        }
        let r = self - rhs * Self::exact(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::exact(q2);
        let q3 = r.hi / rhs.hi;
        quick_two_sum(q1, q2) + Self::exact(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;

    fn rem(self, rhs: Self) -> Self {
        self - Float::trunc(self / rhs) * rhs
    }
}

macro_rules! assign_op {
    ($atr:ident, $af:ident, $tr:ident, $f:ident) => {
        impl $atr for DoubleDouble {
            #[inline]
            fn $af(&mut self, rhs: Self) {
                *self = $tr::$f(*self, rhs);
            }
        }
    };
}

assign_op!(AddAssign, add_assign, Add, add);
assign_op!(SubAssign, sub_assign, Sub, sub);
assign_op!(MulAssign, mul_assign, Mul, mul);
assign_op!(DivAssign, div_assign, Div, div);
assign_op!(RemAssign, rem_assign, Rem, rem);

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::ZERO
    }

    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::ONE
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = ParseFloatError;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::exact)
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        self.to_i128().and_then(|v| i64::try_from(v).ok())
    }

    fn to_u64(&self) -> Option<u64> {
        self.to_i128().and_then(|v| u64::try_from(v).ok())
    }

    fn to_i128(&self) -> Option<i128> {
        let t = Float::trunc(*self);
        let hi = t.hi.to_i128()?;
        let lo = t.lo.to_i128()?;
        hi.checked_add(lo)
    }

    fn to_f64(&self) -> Option<f64> {
        Some(self.lossy())
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        Some(Self::from_i128(n as i128))
    }

    fn from_u64(n: u64) -> Option<Self> {
        Some(Self::from_i128(n as i128))
    }

    fn from_f64(n: f64) -> Option<Self> {
        Some(Self::exact(n))
    }
}

impl NumCast for DoubleDouble {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::exact)
    }
}

impl Float for DoubleDouble {
    fn nan() -> Self {
        Self::new(f64::NAN, f64::NAN)
    }

    fn infinity() -> Self {
        Self::new(f64::INFINITY, 0.0)
    }

    fn neg_infinity() -> Self {
        Self::new(f64::NEG_INFINITY, 0.0)
    }

    fn neg_zero() -> Self {
        Self::new(-0.0, 0.0)
    }

    fn min_value() -> Self {
        -Self::max_value()
    }

    fn min_positive_value() -> Self {
        Self::new(f64::MIN_POSITIVE, 0.0)
    }

    fn epsilon() -> Self {
        Self::new(f64::EPSILON * f64::EPSILON, 0.0)
    }

    fn max_value() -> Self {
        Self::new(f64::MAX, f64::MAX * f64::EPSILON / 2.0)
    }

    fn is_nan(self) -> bool {
        self.hi.is_nan() || self.lo.is_nan()
    }

    fn is_infinite(self) -> bool {
        self.hi.is_infinite()
    }

    fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn is_normal(self) -> bool {
        self.hi.is_normal()
    }

    fn classify(self) -> FpCategory {
        self.hi.classify()
    }

    fn floor(self) -> Self {
        let hi = self.hi.floor();
        if hi == self.hi {
            quick_two_sum(hi, self.lo.floor())
        } else {
            Self::exact(hi)
        }
    }

    fn ceil(self) -> Self {
        -Float::floor(-self)
    }

    fn round(self) -> Self {
        let f = Float::floor(self);
        let diff = self - f;
        let half = Self::half();
        match diff.partial_cmp(&half) {
            Some(Ordering::Less) => f,
            Some(Ordering::Greater) => f + Self::one(),
            _ if self.hi >= 0.0 => f + Self::one(),
            _ => f,
        }
    }

    fn trunc(self) -> Self {
        if self.hi >= 0.0 {
            Float::floor(self)
        } else {
            Float::ceil(self)
        }
    }

    fn fract(self) -> Self {
        self - Float::trunc(self)
    }

    fn abs(self) -> Self {
        if self.hi.is_sign_negative() {
            -self
        } else {
            self
        }
    }

    fn signum(self) -> Self {
        if self.is_nan() {
            Self::nan()
        } else {
            Self::exact(self.hi.signum())
        }
    }

    fn is_sign_positive(self) -> bool {
        self.hi.is_sign_positive()
    }

    fn is_sign_negative(self) -> bool {
        self.hi.is_sign_negative()
    }

    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }

    fn recip(self) -> Self {
        Self::ONE / self
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { Float::recip(self) } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    fn powf(self, n: Self) -> Self {
        if n.is_zero() {
            return Self::one();
        }
        if self.is_zero() {
            return if n.hi() > 0.0 { Self::zero() } else { Self::infinity() };
        }
        Float::exp(n * Float::ln(self))
    }

    fn sqrt(self) -> Self {
        if self.hi < 0.0 {
            return Self::nan();
        }
        if self.hi == 0.0 || self.is_infinite() {
            return self;
        }
        // One Newton correction of the f64 root.
        let y = self.hi.sqrt();
        let (p, e) = two_prod(y, y);
        let r = self - Self::new(p, e);
        quick_two_sum(y, r.hi / (2.0 * y))
    }

    fn exp(self) -> Self {
        if self.hi > 709.8 {
            return Self::infinity();
        }
        if self.hi < -745.2 {
            return Self::ZERO;
        }
        if self.is_nan() {
            return self;
        }
        // exp(x) = 2^m (1 + s)^(2^k) with |r| <= ln2 / 2^(k+1), where s
        // approximates expm1(r) by a truncated Taylor series.
        let m = (self.hi / LN_2.hi).round();
        let r = (self - LN_2 * Self::exact(m)).ldexp(-EXP_SQUARINGS);
        let inv = inverse_factorials();
        let mut s = inv[EXP_TERMS - 1];
        for c in inv[..EXP_TERMS - 1].iter().rev() {
            s = *c + s * r;
        }
        s = s * r;
        for _ in 0..EXP_SQUARINGS {
            s = s.ldexp(1) + s * s;
        }
        (s + Self::ONE).ldexp(m as i32)
    }

    fn exp2(self) -> Self {
        Float::exp(self * LN_2)
    }

    fn ln(self) -> Self {
        if self.hi < 0.0 || self.is_nan() {
            return Self::nan();
        }
        if self.hi == 0.0 {
            return Self::neg_infinity();
        }
        if self.is_infinite() {
            return self;
        }
        // Newton on exp(y) = x from the f64 logarithm.
        let y = Self::exact(self.hi.ln());
        y + self * Float::exp(-y) - Self::ONE
    }

    fn log(self, base: Self) -> Self {
        Float::ln(self) / Float::ln(base)
    }

    fn log2(self) -> Self {
        Float::ln(self) / LN_2
    }

    fn log10(self) -> Self {
        Float::ln(self) / LN_10
    }

    fn max(self, other: Self) -> Self {
        if self.is_nan() || other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if self.is_nan() || other < self {
            other
        } else {
            self
        }
    }

    fn abs_sub(self, other: Self) -> Self {
        Float::max(self - other, Self::zero())
    }

    fn cbrt(self) -> Self {
        if self.is_zero() || !self.is_finite() {
            return self;
        }
        // One Newton step on y^3 = x doubles the f64 starting accuracy.
        let y = Self::exact(self.lossy().cbrt());
        y - (y * y * y - self) / (Self::exact(3.0) * y * y)
    }

    fn hypot(self, other: Self) -> Self {
        Float::sqrt(self * self + other * other)
    }

    fn sin(self) -> Self {
        self.via_f64(f64::sin)
    }

    fn cos(self) -> Self {
        self.via_f64(f64::cos)
    }

    fn tan(self) -> Self {
        self.via_f64(f64::tan)
    }

    fn asin(self) -> Self {
        self.via_f64(f64::asin)
    }

    fn acos(self) -> Self {
        self.via_f64(f64::acos)
    }

    fn atan(self) -> Self {
        self.via_f64(f64::atan)
    }

    fn atan2(self, other: Self) -> Self {
        Self::exact(self.lossy().atan2(other.lossy()))
    }

    fn sin_cos(self) -> (Self, Self) {
        (Float::sin(self), Float::cos(self))
    }

    fn exp_m1(self) -> Self {
        Float::exp(self) - Self::one()
    }

    fn ln_1p(self) -> Self {
        Float::ln(self + Self::one())
    }

    fn sinh(self) -> Self {
        let e = Float::exp(self);
        (e - Float::recip(e)) * Self::half()
    }

    fn cosh(self) -> Self {
        let e = Float::exp(self);
        (e + Float::recip(e)) * Self::half()
    }

    fn tanh(self) -> Self {
        if self.hi.abs() > 40.0 {
            return Self::exact(self.hi.signum());
        }
        let e = Float::exp(self + self);
        (e - Self::one()) / (e + Self::one())
    }

    fn asinh(self) -> Self {
        let a = Float::abs(self);
        let r = Float::ln(a + Float::sqrt(a * a + Self::one()));
        if self.hi < 0.0 {
            -r
        } else {
            r
        }
    }

    fn acosh(self) -> Self {
        Float::ln(self + Float::sqrt(self * self - Self::one()))
    }

    fn atanh(self) -> Self {
        Float::ln((Self::one() + self) / (Self::one() - self)) * Self::half()
    }

    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
}
