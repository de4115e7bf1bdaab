//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Training runs in `f32`; tests run the same code paths in `f64`, and
//! finite-difference gradient checks in double-double ([`DoubleDouble`]). Dense
//! products are routed through [`Scalar::gemm`] so each concrete type can use
//! an optimised kernel.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use crate::double_double::DoubleDouble;

/// Floating point element type: `f32`, `f64` or [`DoubleDouble`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Short type name, e.g. `f32`.
    const NAME: &'static str;

    /// `c = alpha * op(a) * op(b) + beta * c` on strided row-major views.
    ///
    /// `a` is `m x k`, `b` is `k x n` and `c` is `m x n` after the strides are
    /// applied; transposition is expressed purely through the strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    /// Convert from `f64`, panicking only for types that cannot represent it.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("value representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Left-to-right sum.
#[inline]
pub fn sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * strides.0 + (cols as isize - 1) * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $name:expr, $kernel:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

impl Scalar for DoubleDouble {
    const NAME: &'static str = "double_double";

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    ) {
        check_extent(a.len(), m, k, a_strides);
        check_extent(b.len(), k, n, b_strides);
        check_extent(c.len(), m, n, c_strides);
        let at = |s: (isize, isize), r: usize, col: usize| (r as isize * s.0 + col as isize * s.1) as usize;
        for i in 0..m {
            for j in 0..n {
                let mut acc = <Self as num_traits::Zero>::zero();
                for p in 0..k {
                    acc += a[at(a_strides, i, p)] * b[at(b_strides, p, j)];
                }
                let o = &mut c[at(c_strides, i, j)];
                *o = if beta == <Self as num_traits::Zero>::zero() { alpha * acc } else { alpha * acc + beta * *o };
            }
        }
    }
}
