//! Small dense complex matrix helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

pub fn zeros(m: usize) -> CMat {
    CMat::zeros(m, m)
}

pub fn diag(entries: &[f64]) -> CMat {
    let m = entries.len();
    let mut out = zeros(m);
    for (i, &d) in entries.iter().enumerate() {
        out[(i, i)] = c(d);
    }
    out
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(m, n, |i, j| c(rows[i][j]))
}

/// Largest singular value.
pub fn norm2(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    s
}

pub fn min_singular_value(a: &CMat) -> f64 {
    a.singular_values().min()
}

pub fn hermitian_deviation(a: &CMat) -> f64 {
    norm2(&(a - a.adjoint()))
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn projector_deviation(t: &CMat) -> f64 {
    hermitian_deviation(t).max(norm2(&(t * t - t)))
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(a);
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Numerical rank: singular values above `tol * max(1, ||a||)`.
pub fn rank(a: &CMat, tol: f64) -> usize {
    let s = singular_values(a);
    let scale = s.last().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&v| v > tol * scale).count()
}

/// dim(Ker a ∩ Ker b) = m - rank([a; b]).
pub fn kernel_intersection_dim(a: &CMat, b: &CMat, tol: f64) -> usize {
    let m = a.ncols();
    let mut stacked = CMat::zeros(2 * a.nrows(), m);
    stacked.rows_mut(0, a.nrows()).copy_from(a);
    stacked.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    m - rank(&stacked, tol)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().lu().try_inverse()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `sin(a x) / a`, analytic through `a = 0`.
pub fn sinc_scaled(a: Complex64, x: f64) -> Complex64 {
    let z = a * x;
    if z.norm() < 1e-3 {
        let z2 = z * z;
        c(x) * (c(1.0) - z2 / 6.0 * (c(1.0) - z2 / 20.0 * (c(1.0) - z2 / 42.0)))
    } else {
        (z).sin() / a
    }
}

/// Principal square root with `arg` in `[-pi/2, pi/2)`.
pub fn sqrt_branch(lambda: Complex64) -> Complex64 {
    let r = lambda.sqrt();
    if r.re == 0.0 && r.im > 0.0 {
        -r
    } else {
        r
    }
}

/// Minimizes a unimodal `f` on `[a, b]` by golden-section search until the
/// bracket is shorter than `tol`. Returns the best point and its value.
pub fn golden_section_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
