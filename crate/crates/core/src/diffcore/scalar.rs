use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point element type of the engine.
///
/// `f32` is the training precision; `f64` exists so gradients can be checked
/// against finite differences without rounding noise swamping the signal.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float conversion")
    }

    /// Sine used by the activation primitives.
    fn act_sin(self) -> Self {
        self.sin()
    }

    /// Cosine used by the activation primitives.
    fn act_cos(self) -> Self {
        self.cos()
    }

    /// `c = alpha * a * b + beta * c` on strided row-major storage.
    ///
    /// # Safety
    /// Every index reached through the given extents and strides must lie
    /// inside the backing slices. [`gemm`] checks this before calling.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline(always)]
    fn act_sin(self) -> f32 {
        fast_sin_f32(self)
    }

    #[inline(always)]
    fn act_cos(self) -> f32 {
        fast_cos_f32(self)
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

// Three-part split of π for Cody-Waite reduction; k·PI_A is exact for |k| < 2^16.
const PI_A: f32 = 3.140625;
const PI_B: f32 = 9.675_025_939_941_406e-4;
const PI_C: f32 = 1.509_957_990_978_376_4e-7;
const ROUND_MAGIC: f32 = 12_582_912.0;

/// `sin(y)` for `|y| ≤ π/2`, Taylor series through y¹¹.
#[inline(always)]
fn sin_poly(y: f32) -> f32 {
    let y2 = y * y;
    let p = -2.505_210_8e-8_f32;
    let p = p * y2 + 2.755_731_9e-6;
    let p = p * y2 - 1.984_127e-4;
    let p = p * y2 + 8.333_333e-3;
    let p = p * y2 - 1.666_666_7e-1;
    y + y * y2 * p
}

#[inline(always)]
fn reduce(x: f32, k: f32) -> f32 {
    ((x - k * PI_A) - k * PI_B) - k * PI_C
}

#[inline(always)]
fn parity_sign(k: f32) -> f32 {
    let half = (k * 0.5 + ROUND_MAGIC) - ROUND_MAGIC;
    1.0 - 2.0 * (k - 2.0 * half).abs()
}

/// Branch-free sine that vectorizes; absolute error below 3e-7 for
/// `|x| < 1e4`, beyond which activations never reach.
#[inline(always)]
pub(crate) fn fast_sin_f32(x: f32) -> f32 {
    let k = (x * std::f32::consts::FRAC_1_PI + ROUND_MAGIC) - ROUND_MAGIC;
    parity_sign(k) * sin_poly(reduce(x, k))
}

#[inline(always)]
pub(crate) fn fast_cos_f32(x: f32) -> f32 {
    // cos(x) = -(-1)^k sin(x - (k + 1/2)π)
    let k = (x * std::f32::consts::FRAC_1_PI - 0.5 + ROUND_MAGIC) - ROUND_MAGIC;
    let y = reduce(x, k) - 0.5 * PI_A - 0.5 * PI_B - 0.5 * PI_C;
    -parity_sign(k) * sin_poly(y)
}

/// Computes `c (m×n) = op(a) · op(b) + beta·c` where `op` optionally
/// transposes. `a` is stored `m×k` (or `k×m` when `trans_a`), `b` is stored
/// `k×n` (or `n×k` when `trans_b`), all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above; strides describe dense m×k, k×n, m×n views.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let av = if ta { a[p * m + i] } else { a[i * k + p] };
                    let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                    s += av * bv;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn fast_trig_accuracy() {
        let mut worst: f64 = 0.0;
        for i in -400_000..=400_000 {
            let x = i as f32 * 2.5e-4 * 7.0;
            let xs = x as f64;
            worst = worst.max((fast_sin_f32(x) as f64 - xs.sin()).abs());
            worst = worst.max((fast_cos_f32(x) as f64 - xs.cos()).abs());
        }
        assert!(worst < 3e-7, "max abs error {worst}");
        assert_eq!(fast_sin_f32(0.0), 0.0);
        assert!((fast_cos_f32(0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gemm_matches_naive_for_all_transpose_combinations() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.71).cos()).collect();
        for ta in [false, true] {
            for tb in [false, true] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, &a, ta, &b, tb, 0.0, &mut c);
                let want = naive(m, k, n, &a, ta, &b, tb);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
