#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slq_core::linalg::{diag, identity, zeros};
use slq_core::problem::hermitian_from_parts;
use slq_core::{CMat, ProblemSpec, Sigma};

/// `Q diag(1,..,1,0,..,0) Q^H` with `Q` unitary from the QR of a random complex matrix.
pub fn random_projector(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let q = a.qr().q();
    let d = diag(&(0..m).map(|i| if i < rank { 1.0 } else { 0.0 }).collect::<Vec<_>>());
    let p = &q * d * q.adjoint();
    (&p + p.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> CMat {
    let a = CMat::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + a.adjoint()) * Complex64::new(0.5 * scale, 0.0)
}

/// `m = 2`, `T1 = diag(1, 0)`, `T2 = I`, Hermitian trigonometric sigma of degree 1
/// and `H2 = T2 diag(0.3, 0) T2`.
pub fn trig_spec() -> ProblemSpec {
    let t1 = diag(&[1.0, 0.0]);
    let t2 = identity(2);
    let c0 = hermitian_from_parts(&[&[0.3, 0.1], &[0.1, -0.2]], &[&[0.0, 0.1], &[-0.1, 0.0]]);
    let c1 = diag(&[0.4, 0.2]);
    let s1 = hermitian_from_parts(&[&[0.0, 0.0], &[0.0, 0.1]], &[&[0.0, 0.15], &[-0.15, 0.0]]);
    let sigma = Sigma::Trig { cos: vec![c0, c1], sin: vec![zeros(2), s1] };
    let h2 = &t2 * diag(&[0.3, 0.0]) * &t2;
    ProblemSpec::new(t1, t2, h2, sigma)
}

/// Scalar Neumann-type problem with `sigma = 1`.
pub fn constant_spec() -> ProblemSpec {
    ProblemSpec::new(diag(&[1.0]), diag(&[1.0]), diag(&[0.0]), Sigma::Constant(diag(&[1.0])))
}

pub fn model_spec(t1: &[f64], t2: &[f64]) -> ProblemSpec {
    ProblemSpec::model(&diag(t1), &diag(t2))
}

/// Adaptive Simpson quadrature of a complex integrand, started from 32 panels
/// so periodic integrands cannot fool the first error estimate.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    fn step(
        f: &dyn Fn(f64) -> Complex64,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let panels = 32;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + h * i as f64, a + h * (i + 1) as f64);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (fa + fm * 4.0 + fb) * (h / 6.0);
            step(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}
