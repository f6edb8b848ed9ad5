//! Double-double arithmetic (about 32 significant digits) for real and complex
//! scalars, plus a dense complex matrix type built on it.
//!
//! Propagators of highly decoupled sequences differ from a system-identity
//! factorization by far less than double-precision round-off, so products of
//! step propagators are accumulated here and only the final distance is
//! reduced to `f64`.

use crate::linalg::CMatrix;
use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline(always)]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[inline(always)]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[cfg(target_feature = "fma")]
#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[cfg(not(target_feature = "fma"))]
#[inline(always)]
fn split(a: f64) -> (f64, f64) {
    const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[cfg(not(target_feature = "fma"))]
#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    pub const PI: Dd = Dd {
        hi: std::f64::consts::PI,
        lo: 1.224_646_799_147_353_2e-16,
    };
    pub const TAU: Dd = Dd {
        hi: std::f64::consts::TAU,
        lo: 2.449_293_598_294_706_4e-16,
    };
    pub const FRAC_PI_2: Dd = Dd {
        hi: std::f64::consts::FRAC_PI_2,
        lo: 6.123_233_995_736_766e-17,
    };

    #[inline(always)]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline(always)]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Exact product of two doubles.
    #[inline(always)]
    pub fn prod_f64(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline(always)]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    /// Multiplication by a power of two (exact).
    #[inline(always)]
    pub fn scale(self, s: f64) -> Dd {
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let r = self - Dd::prod_f64(x, x);
        let (hi, lo) = quick_two_sum(x, r.hi / (2.0 * x));
        Dd { hi, lo }
    }

    /// Cosine and sine to double-double accuracy.
    pub fn cos_sin(self) -> (Dd, Dd) {
        // Reduce to [-pi, pi], then halve until the Taylor series converges fast.
        let k = (self.hi / Dd::TAU.hi).round();
        let mut x = self - Dd::TAU.mul_f64(k);
        let mut halvings = 0;
        while x.hi.abs() > 1.0 / 64.0 {
            x = x.scale(0.5);
            halvings += 1;
        }
        let x2 = x * x;
        // sin x = x (1 - x^2/3! + x^4/5! - ...), cos x = 1 - x^2/2! + ...
        let mut s = Dd::ONE;
        let mut c = Dd::ONE;
        let mut term_s = Dd::ONE;
        let mut term_c = Dd::ONE;
        for n in 1..=12 {
            let n = n as f64;
            term_s = (term_s * x2).div(Dd::from_f64(-(2.0 * n) * (2.0 * n + 1.0)));
            term_c = (term_c * x2).div(Dd::from_f64(-(2.0 * n - 1.0) * (2.0 * n)));
            s = s + term_s;
            c = c + term_c;
        }
        let mut s = s * x;
        for _ in 0..halvings {
            let s2 = (s * c).scale(2.0);
            let c2 = (c * c) - (s * s);
            s = s2;
            c = c2;
        }
        if halvings > 0 {
            let r = (c * c + s * s).sqrt();
            c = c.div(r);
            s = s.div(r);
        }
        (c, s)
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline(always)]
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline(always)]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline(always)]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline(always)]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

/// Complex double-double.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cdd {
    pub re: Dd,
    pub im: Dd,
}

impl Cdd {
    pub const ZERO: Cdd = Cdd {
        re: Dd::ZERO,
        im: Dd::ZERO,
    };
    pub const ONE: Cdd = Cdd {
        re: Dd::ONE,
        im: Dd::ZERO,
    };

    pub fn from_c64(z: Complex64) -> Cdd {
        Cdd {
            re: Dd::from_f64(z.re),
            im: Dd::from_f64(z.im),
        }
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn conj(self) -> Cdd {
        Cdd {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm_sqr(self) -> Dd {
        self.re * self.re + self.im * self.im
    }

    /// `exp(-i theta)`, with unit modulus to double-double accuracy.
    pub fn expi_neg(theta: Dd) -> Cdd {
        let (c, s) = theta.cos_sin();
        Cdd { re: c, im: -s }
    }
}

impl Add for Cdd {
    type Output = Cdd;
    #[inline(always)]
    fn add(self, b: Cdd) -> Cdd {
        Cdd {
            re: self.re + b.re,
            im: self.im + b.im,
        }
    }
}

impl Sub for Cdd {
    type Output = Cdd;
    #[inline(always)]
    fn sub(self, b: Cdd) -> Cdd {
        Cdd {
            re: self.re - b.re,
            im: self.im - b.im,
        }
    }
}

impl Neg for Cdd {
    type Output = Cdd;
    #[inline(always)]
    fn neg(self) -> Cdd {
        Cdd {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Mul for Cdd {
    type Output = Cdd;
    #[inline(always)]
    fn mul(self, b: Cdd) -> Cdd {
        Cdd {
            re: self.re * b.re - self.im * b.im,
            im: self.re * b.im + self.im * b.re,
        }
    }
}

/// Error-free accumulator for sums of products `sum_k a_k * b_k`.
///
/// High parts are summed with `two_sum`; every rounding error and all
/// cross terms go into a single `f64` tail, which is accurate to about
/// `2^-104` relative to `sum |a_k b_k|`.
#[derive(Clone, Copy, Default)]
struct DotAcc {
    s: f64,
    t: f64,
}

impl DotAcc {
    #[inline(always)]
    fn add_prod(&mut self, a: Dd, b: Dd) {
        let (p, e) = two_prod(a.hi, b.hi);
        let (s, e2) = two_sum(self.s, p);
        self.s = s;
        self.t += e + e2 + (a.hi * b.lo + a.lo * b.hi);
    }

    #[inline(always)]
    fn sub_prod(&mut self, a: Dd, b: Dd) {
        self.add_prod(-a, b);
    }

    #[inline(always)]
    fn finish(self) -> Dd {
        let (hi, lo) = quick_two_sum(self.s, self.t);
        // quick_two_sum needs |s| >= |t|; fall back to the careful sum otherwise.
        if self.s.abs() >= self.t.abs() {
            Dd { hi, lo }
        } else {
            let (hi, lo) = two_sum(self.s, self.t);
            Dd { hi, lo }
        }
    }
}

/// Dense square complex matrix in double-double, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DdMatrix {
    n: usize,
    data: Vec<Cdd>,
}

impl DdMatrix {
    pub fn zeros(n: usize) -> DdMatrix {
        DdMatrix {
            n,
            data: vec![Cdd::ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> DdMatrix {
        let mut m = DdMatrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Cdd::ONE;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> Cdd {
        self.data[i * self.n + j]
    }

    #[inline(always)]
    pub fn set(&mut self, i: usize, j: usize, z: Cdd) {
        self.data[i * self.n + j] = z;
    }

    pub fn from_cmatrix(m: &CMatrix) -> DdMatrix {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        let n = m.nrows();
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, Cdd::from_c64(m[(i, j)]));
            }
        }
        out
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j).to_c64())
    }

    pub fn adjoint(&self) -> DdMatrix {
        let n = self.n;
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Matrix product `self * b`.
    pub fn matmul(&self, b: &DdMatrix) -> DdMatrix {
        assert_eq!(self.n, b.n, "dimension mismatch");
        let n = self.n;
        let bt = b.transpose();
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            for j in 0..n {
                let col = &bt.data[j * n..(j + 1) * n];
                let mut re = DotAcc::default();
                let mut im = DotAcc::default();
                for (a, c) in row.iter().zip(col.iter()) {
                    re.add_prod(a.re, c.re);
                    re.sub_prod(a.im, c.im);
                    im.add_prod(a.re, c.im);
                    im.add_prod(a.im, c.re);
                }
                out.data[i * n + j] = Cdd {
                    re: re.finish(),
                    im: im.finish(),
                };
            }
        }
        out
    }

    /// `self^† * b` without forming the adjoint.
    pub fn adjoint_matmul(&self, b: &DdMatrix) -> DdMatrix {
        self.adjoint().matmul(b)
    }

    fn transpose(&self) -> DdMatrix {
        let n = self.n;
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn scale_real(&self, s: Dd) -> DdMatrix {
        DdMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .map(|z| Cdd {
                    re: z.re * s,
                    im: z.im * s,
                })
                .collect(),
        }
    }

    pub fn sub(&self, b: &DdMatrix) -> DdMatrix {
        DdMatrix {
            n: self.n,
            data: self.data.iter().zip(&b.data).map(|(x, y)| *x - *y).collect(),
        }
    }

    pub fn add(&self, b: &DdMatrix) -> DdMatrix {
        DdMatrix {
            n: self.n,
            data: self.data.iter().zip(&b.data).map(|(x, y)| *x + *y).collect(),
        }
    }

    /// Square block `(r, c)` of size `m` (block rows/cols counted in units of `m`).
    pub fn block(&self, r: usize, c: usize, m: usize) -> DdMatrix {
        let mut out = DdMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.set(i, j, self.get(r * m + i, c * m + j));
            }
        }
        out
    }

    /// Largest entrywise modulus (as `f64`).
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|z| z.to_c64().norm())
            .fold(0.0, f64::max)
    }

    /// Newton-Schulz polish toward the nearest unitary: `X <- X (3I - X^†X) / 2`.
    ///
    /// Converges quadratically when `X` is already unitary to working `f64`
    /// accuracy; two steps reach double-double round-off.
    pub fn polish_unitary(&self, steps: usize) -> DdMatrix {
        let n = self.n;
        let mut x = self.clone();
        for _ in 0..steps {
            let xtx = x.adjoint_matmul(&x);
            let mut corr = DdMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    let three = if i == j { Dd::from_f64(3.0) } else { Dd::ZERO };
                    let z = xtx.get(i, j);
                    corr.set(
                        i,
                        j,
                        Cdd {
                            re: (three - z.re).scale(0.5),
                            im: (-z.im).scale(0.5),
                        },
                    );
                }
            }
            x = x.matmul(&corr);
        }
        x
    }

    /// Deviation from unitarity, `max |X^†X - I|` entrywise, as `f64`.
    pub fn unitarity_defect(&self) -> f64 {
        let xtx = self.adjoint_matmul(self);
        xtx.sub(&DdMatrix::identity(self.n)).max_abs()
    }

    /// Conjugation `Q A Q` by the system Pauli operator `Q = sigma^q (x) I_B`,
    /// where `q` is the frame code (bit 0 = x, bit 1 = z). Exact.
    pub fn pauli_conjugate(&self, q: u8) -> DdMatrix {
        if q == 0 {
            return self.clone();
        }
        let n = self.n;
        let m = n / 2;
        let flip = q & 1 != 0;
        let sign = q & 2 != 0;
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            let (bi, ii) = (i / m, i % m);
            for j in 0..n {
                let (bj, jj) = (j / m, j % m);
                let (si, sj) = if flip { (1 - bi, 1 - bj) } else { (bi, bj) };
                let mut z = self.get(si * m + ii, sj * m + jj);
                if sign && bi != bj {
                    z = -z;
                }
                out.set(i, j, z);
            }
        }
        out
    }

    /// Left-multiplication by `G (x) I_B` for a 2x2 `G` whose entries are exact
    /// in double precision.
    pub fn system_left_mul(&self, g: &[[Complex64; 2]; 2]) -> DdMatrix {
        let n = self.n;
        let m = n / 2;
        let g = [
            [Cdd::from_c64(g[0][0]), Cdd::from_c64(g[0][1])],
            [Cdd::from_c64(g[1][0]), Cdd::from_c64(g[1][1])],
        ];
        let mut out = DdMatrix::zeros(n);
        for a in 0..2 {
            for i in 0..m {
                for j in 0..n {
                    let z = g[a][0] * self.get(i, j) + g[a][1] * self.get(m + i, j);
                    out.set(a * m + i, j, z);
                }
            }
        }
        out
    }

    /// Right-multiplication by `G (x) I_B`.
    pub fn system_right_mul(&self, g: &[[Complex64; 2]; 2]) -> DdMatrix {
        let n = self.n;
        let m = n / 2;
        let g = [
            [Cdd::from_c64(g[0][0]), Cdd::from_c64(g[0][1])],
            [Cdd::from_c64(g[1][0]), Cdd::from_c64(g[1][1])],
        ];
        let mut out = DdMatrix::zeros(n);
        for i in 0..n {
            for b in 0..2 {
                for j in 0..m {
                    let z = self.get(i, j) * g[0][b] + self.get(i, m + j) * g[1][b];
                    out.set(i, b * m + j, z);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_and_product_carry_extra_bits() {
        let a = Dd::from_f64(1.0) + Dd::from_f64(1e-20);
        assert_eq!(a.hi, 1.0);
        assert!((a.lo - 1e-20).abs() < 1e-36);
        let p = Dd::prod_f64(1.0 + f64::EPSILON, 1.0 - f64::EPSILON);
        // (1+e)(1-e) = 1 - e^2 exactly.
        assert_eq!(p.hi, 1.0);
        assert_eq!(p.lo, -f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn division_and_sqrt_round_trip() {
        let x = Dd::from_f64(2.0);
        let r = x.sqrt();
        let back = r * r - x;
        assert!(back.to_f64().abs() < 1e-30);
        let q = Dd::ONE.div(Dd::from_f64(3.0));
        assert!((q * Dd::from_f64(3.0) - Dd::ONE).to_f64().abs() < 1e-31);
    }

    #[test]
    fn cos_sin_unit_modulus_and_values() {
        for &t in &[0.0, 1e-12, 0.3, 1.0, 2.5, -7.0, 100.0] {
            let (c, s) = Dd::from_f64(t).cos_sin();
            let m = c * c + s * s - Dd::ONE;
            assert!(m.to_f64().abs() < 1e-30, "t={t} modulus defect {}", m.to_f64());
            assert!((c.to_f64() - t.cos()).abs() < 1e-15);
            assert!((s.to_f64() - t.sin()).abs() < 1e-15);
        }
        // sin(pi) in double-double is ~1e-32, not ~1e-16.
        let (_, s) = Dd::PI.cos_sin();
        assert!(s.to_f64().abs() < 1e-30);
    }

    #[test]
    fn small_angle_sine_keeps_relative_accuracy() {
        let t = Dd::from_f64(1e-9);
        let (c, s) = t.cos_sin();
        // sin t = t - t^3/6 ; the cubic term is 1.7e-28 relative to t.
        let expect = Dd::from_f64(1e-9) - Dd::from_f64(1e-27).div(Dd::from_f64(6.0));
        assert!((s - expect).to_f64().abs() < 1e-40);
        let expect_c = Dd::ONE - Dd::from_f64(1e-18).scale(0.5);
        assert!((c - expect_c).to_f64().abs() < 1e-32);
    }

    #[test]
    fn pauli_conjugation_matches_explicit_products() {
        use crate::linalg::{kron, pauli, Pauli};
        let n = 4;
        let a = CMatrix::from_fn(n, n, |i, j| Complex64::new(i as f64 + 0.5, j as f64 - 1.0));
        let ad = DdMatrix::from_cmatrix(&a);
        for (code, p) in [(1u8, Pauli::X), (2, Pauli::Z), (3, Pauli::Y)] {
            let q = kron(&pauli(p), &CMatrix::identity(2, 2));
            let expect = &q * &a * &q;
            let got = ad.pauli_conjugate(code).to_cmatrix();
            assert!((expect - got).norm() < 1e-14);
        }
    }
}
