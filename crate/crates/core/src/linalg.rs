//! Dense linear-algebra kernels shared by the Fock-space and phase-space code.
//!
//! Nothing here knows about physics. The matrix exponential is a Padé(13)
//! scaling-and-squaring scheme (Higham 2005), the symmetric eigensolver is
//! nalgebra's, and the Hermite-function evaluator carries a running exponent
//! so that it stays finite far outside the classically allowed region.

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

/// Scalar types the generic kernels accept (`f64` and `Complex64`).
pub trait Scalar: LinalgScalar + ScalarOperand + Send + Sync + std::fmt::Debug {
    fn modulus(self) -> f64;
    fn from_real(v: f64) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(v: f64) -> Self {
        v
    }
}

impl Scalar for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(v: f64) -> Self {
        C64::new(v, 0.0)
    }
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Maximum absolute column sum.
pub fn norm_1<T: Scalar>(a: &Array2<T>) -> f64 {
    a.columns().into_iter().map(|c| c.iter().map(|v| v.modulus()).sum::<f64>()).fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs<T: Scalar>(a: &Array2<T>) -> f64 {
    a.iter().map(|v| v.modulus()).fold(0.0, f64::max)
}

/// Matrix exponential by Padé(13) scaling and squaring.
pub fn expm<T: Scalar>(a: &Array2<T>) -> Array2<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm: matrix must be square");
    if n == 0 {
        return a.clone();
    }
    let norm = norm_1(a);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = T::from_real(0.5f64.powi(squarings));
    let a = a.mapv(|v| v * scale);

    let b = |k: usize| T::from_real(PADE13[k]);
    let eye = Array2::<T>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_poly = a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &eye * b(1);
    let u = a.dot(&u_poly);
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &eye * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(q, p);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    r
}

/// Solve `a · x = b` for `x` by Gaussian elimination with partial pivoting.
///
/// Panics if `a` is numerically singular; callers only pass well-conditioned
/// Padé denominators.
pub fn solve<T: Scalar>(a: Array2<T>, b: Array2<T>) -> Array2<T> {
    let n = a.nrows();
    let m = b.ncols();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    // row-major working copies
    let mut lu: Vec<T> = a.iter().copied().collect();
    let mut rhs: Vec<T> = b.iter().copied().collect();

    for k in 0..n {
        let (piv, best) =
            (k..n).map(|i| (i, lu[i * n + k].modulus())).fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert!(best > 0.0, "solve: singular matrix");
        if piv != k {
            for j in 0..n {
                lu.swap(k * n + j, piv * n + j);
            }
            for j in 0..m {
                rhs.swap(k * m + j, piv * m + j);
            }
        }
        let pivot = lu[k * n + k];
        let (top, bottom) = lu.split_at_mut((k + 1) * n);
        let row_k = &top[k * n..];
        let (rtop, rbottom) = rhs.split_at_mut((k + 1) * m);
        let rhs_k = &rtop[k * m..];
        for (i, row) in bottom.chunks_mut(n).enumerate() {
            let factor = row[k] / pivot;
            if factor.modulus() == 0.0 {
                continue;
            }
            for j in k..n {
                row[j] = row[j] - factor * row_k[j];
            }
            let rrow = &mut rbottom[i * m..(i + 1) * m];
            for j in 0..m {
                rrow[j] = rrow[j] - factor * rhs_k[j];
            }
        }
    }
    // back substitution
    for k in (0..n).rev() {
        let pivot = lu[k * n + k];
        for j in 0..m {
            rhs[k * m + j] = rhs[k * m + j] / pivot;
        }
        let (top, bottom) = rhs.split_at_mut(k * m);
        let xk = &bottom[..m];
        for i in 0..k {
            let f = lu[i * n + k];
            if f.modulus() == 0.0 {
                continue;
            }
            let row = &mut top[i * m..(i + 1) * m];
            for j in 0..m {
                row[j] = row[j] - f * xk[j];
            }
        }
    }
    Array2::from_shape_vec((n, m), rhs).expect("shape")
}

/// Eigen-decomposition of a real symmetric matrix: ascending eigenvalues and
/// the matching orthonormal eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `f(A)` for real symmetric `A` through its spectral decomposition.
pub fn symmetric_function<F>(a: &Array2<f64>, f: F) -> Array2<f64>
where
    F: Fn(f64) -> f64,
{
    let (vals, vecs) = symmetric_eigen(a);
    let scaled = &vecs * &vals.mapv(f);
    scaled.dot(&vecs.t())
}

/// Same as [`symmetric_function`] but for complex-valued `f` (e.g. `exp(-iHt)`).
pub fn symmetric_function_complex<F>(a: &Array2<f64>, f: F) -> Array2<C64>
where
    F: Fn(f64) -> C64,
{
    let (vals, vecs) = symmetric_eigen(a);
    let vc = vecs.mapv(C64::from);
    let scaled = &vc * &vals.mapv(f);
    scaled.dot(&vc.t())
}

const LN_RESCALE: f64 = 345.38776394910684; // ln(1e150)

/// Running evaluator of the normalized Hermite functions
/// `h_n(y) = (2^n n! √π)^{-1/2} H_n(y) e^{-y²/2}` at a fixed point `y`.
///
/// The pair `(prev, cur)` carries a common factor `exp(log_scale)` so that the
/// recurrence neither underflows for large `|y|` nor overflows for large `n`.
struct HermiteWalk {
    y: f64,
    n: usize,
    prev: f64,
    cur: f64,
    log_scale: f64,
    factor: f64,
}

impl HermiteWalk {
    fn new(y: f64) -> Self {
        let log_scale = -0.5 * y * y;
        HermiteWalk { y, n: 0, prev: 0.0, cur: std::f64::consts::PI.powf(-0.25), log_scale, factor: log_scale.exp() }
    }

    /// Value of `h_n(y)` for the current `n`.
    #[inline]
    fn value(&self) -> f64 {
        self.cur * self.factor
    }

    #[inline]
    fn advance(&mut self) {
        let n = self.n as f64;
        let next = (2.0 / (n + 1.0)).sqrt() * self.y * self.cur - (n / (n + 1.0)).sqrt() * self.prev;
        self.prev = self.cur;
        self.cur = next;
        self.n += 1;
        if self.cur.abs() > 1e150 {
            self.cur *= 1e-150;
            self.prev *= 1e-150;
            self.log_scale += LN_RESCALE;
            self.factor = self.log_scale.exp();
        }
    }
}

/// Table of `h_n(y)` for `n < count`, evaluated at one point.
pub fn hermite_functions(y: f64, count: usize) -> Vec<f64> {
    let mut walk = HermiteWalk::new(y);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        if k > 0 {
            walk.advance();
        }
        out.push(walk.value());
    }
    out
}

/// Evaluate `Σ_n c_n √s h_n(s x)` at each `x`, i.e. a Fock-space amplitude
/// vector rendered as a wavefunction in an oscillator frame of inverse width `s`.
pub fn hermite_synthesis(coeffs: &[C64], scale: f64, xs: &[f64]) -> Vec<C64> {
    let norm = scale.sqrt();
    xs.iter()
        .map(|&x| {
            let mut walk = HermiteWalk::new(scale * x);
            let mut acc = C64::new(0.0, 0.0);
            for (n, c) in coeffs.iter().enumerate() {
                if n > 0 {
                    walk.advance();
                }
                acc += c * walk.value();
            }
            acc * norm
        })
        .collect()
}

/// Project sampled wavefunction values onto the first `count` oscillator
/// eigenfunctions of inverse width `s` (trapezoid rule with spacing `dx`).
pub fn hermite_projection(psi: &[C64], xs: &[f64], dx: f64, scale: f64, count: usize) -> Vec<C64> {
    let norm = scale.sqrt() * dx;
    let mut out = vec![C64::new(0.0, 0.0); count];
    for (&x, &v) in xs.iter().zip(psi) {
        if v.norm_sqr() == 0.0 {
            continue;
        }
        let mut walk = HermiteWalk::new(scale * x);
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                walk.advance();
            }
            *slot += v * walk.value();
        }
    }
    for c in &mut out {
        *c *= norm;
    }
    out
}

/// Chirp-z transform: `X_k = Σ_j x_j exp(i (w0 + k dw) j)` for `k < m`,
/// computed with Bluestein's convolution in `O((n + m) log(n + m))`.
pub fn chirp_z(input: &[C64], w0: f64, dw: f64, m: usize, planner: &mut FftPlanner<f64>) -> Vec<C64> {
    let n = input.len();
    if n == 0 || m == 0 {
        return vec![C64::new(0.0, 0.0); m];
    }
    let len = (n + m - 1).next_power_of_two();
    let chirp = |k: i64| {
        // reduce k² before multiplying to keep the phase argument small
        let k2 = (k as i128 * k as i128) as f64;
        C64::from_polar(1.0, 0.5 * dw * k2)
    };
    let mut a = vec![C64::new(0.0, 0.0); len];
    for (j, &x) in input.iter().enumerate() {
        a[j] = x * C64::from_polar(1.0, w0 * j as f64) * chirp(j as i64);
    }
    let mut b = vec![C64::new(0.0, 0.0); len];
    for (l, v) in b.iter_mut().enumerate().take(m) {
        *v = chirp(l as i64).conj();
    }
    for l in 1..n {
        b[len - l] = chirp(l as i64).conj();
    }
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let inv_len = 1.0 / len as f64;
    (0..m).map(|k| a[k] * inv_len * chirp(k as i64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn expm_of_rotation_generator() {
        let t = 0.7_f64;
        let a = array![[0.0, -t], [t, 0.0]];
        let e = expm(&a);
        assert!((e[[0, 0]] - t.cos()).abs() < 1e-14);
        assert!((e[[1, 0]] - t.sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_large_norm_uses_squaring() {
        // exp(diag) with entries well past the Padé radius
        let a = Array2::from_diag(&array![-30.0, 12.0, 0.5]);
        let e = expm(&a);
        for (i, v) in [-30.0f64, 12.0, 0.5].iter().enumerate() {
            let rel = (e[[i, i]] - v.exp()).abs() / v.exp();
            assert!(rel < 1e-12, "entry {i}: rel err {rel}");
        }
    }

    #[test]
    fn expm_complex_phase() {
        let a = Array2::from_diag(&array![C64::new(0.0, 2.5), C64::new(0.0, -40.0)]);
        let e = expm(&a);
        assert!((e[[0, 0]] - C64::from_polar(1.0, 2.5)).norm() < 1e-12);
        assert!((e[[1, 1]] - C64::from_polar(1.0, -40.0)).norm() < 1e-11);
    }

    #[test]
    fn solve_matches_known_system() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = array![[1.0], [-2.0], [0.5]];
        let b = a.dot(&x);
        let got = solve(a, b);
        assert!((&got - &x).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn hermite_functions_are_orthonormal_on_fine_grid() {
        let dx = 0.01;
        let xs: Vec<f64> = (-1500..=1500).map(|j| j as f64 * dx).collect();
        let table: Vec<Vec<f64>> = xs.iter().map(|&x| hermite_functions(x, 12)).collect();
        for m in 0..12 {
            for n in 0..12 {
                let s: f64 = table.iter().map(|row| row[m] * row[n]).sum::<f64>() * dx;
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "<{m}|{n}> = {s}");
            }
        }
    }

    #[test]
    fn hermite_walk_survives_far_tails() {
        // h_0(40) underflows a naive evaluation; high n peaks far out
        let v = hermite_functions(40.0, 900);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!(v[899].abs() > 1e-3);
    }

    #[test]
    fn chirp_z_matches_direct_sum() {
        let x: Vec<C64> = (0..37).map(|j| C64::new((j as f64 * 0.3).sin(), (j as f64).cos() * 0.1)).collect();
        let (w0, dw, m) = (-0.4, 0.013, 50);
        let mut planner = FftPlanner::new();
        let got = chirp_z(&x, w0, dw, m, &mut planner);
        assert_eq!(got.len(), m);
        for (k, g) in got.iter().enumerate() {
            let want: C64 =
                x.iter().enumerate().map(|(j, v)| v * C64::from_polar(1.0, (w0 + k as f64 * dw) * j as f64)).sum();
            assert!((g - want).norm() < 1e-12, "k={k}");
        }
    }
}
