//! Closed-form quantities of the zero-potential problem `L(0, T1, T2, 0)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Result, SlqError};
use crate::linalg::{self, c, golden_section_min, identity, min_singular_value, sinc_scaled, sqrt_branch, CMat};
use crate::problem::{index_set_with_p_perp, SpectralIndex};
use crate::spectral::{SpectralDataSet, DEFAULT_CLUSTER_TOL};

const ROOT_SAMPLES: usize = 2048;
const ROOT_ACCEPT: f64 = 1e-8;
const ROOT_MERGE: f64 = 1e-7;
/// Two shifts `r_k` closer than this belong to the same class.
pub const CLASS_TOL: f64 = 1e-9;
pub const DEFAULT_RESIDUE_NODES: usize = 64;

/// `P = T2 T1 + T2perp T1perp`, `Q = T2perp T1 - T2 T1perp`.
fn pq(t1: &CMat, t2: &CMat) -> (CMat, CMat) {
    let m = t1.nrows();
    let t1p = identity(m) - t1;
    let t2p = identity(m) - t2;
    (t2 * t1 + &t2p * &t1p, &t2p * t1 - t2 * &t1p)
}

/// `W0(rho) = P sin(rho pi) + Q cos(rho pi)`.
pub fn w0_matrix(rho: Complex64, t1: &CMat, t2: &CMat) -> CMat {
    let (p, q) = pq(t1, t2);
    let z = rho * PI;
    p * z.sin() + q * z.cos()
}

/// `U0(rho) = P cos(rho pi) - Q sin(rho pi)`.
pub fn u0_matrix(rho: Complex64, t1: &CMat, t2: &CMat) -> CMat {
    let (p, q) = pq(t1, t2);
    let z = rho * PI;
    p * z.cos() - q * z.sin()
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Number of zeros of `det W0` inside the circle `|rho - center| = radius`.
fn winding_number(t1: &CMat, t2: &CMat, center: f64, radius: f64) -> i64 {
    let nodes = 256;
    let mut total = 0.0;
    let det_at = |j: usize| {
        let th = 2.0 * PI * j as f64 / nodes as f64;
        let rho = c(center) + Complex64::from_polar(radius, th);
        w0_matrix(rho, t1, t2).determinant()
    };
    let first = det_at(0);
    let mut prev = first;
    for j in 1..=nodes {
        let cur = if j == nodes { first } else { det_at(j) };
        total += (cur / prev).arg();
        prev = cur;
    }
    (total / (2.0 * PI)).round() as i64
}

/// Zeros of `det W0` on `[0, 1)` with multiplicity, sorted.
pub fn compute_rk(t1: &CMat, t2: &CMat) -> Result<Vec<f64>> {
    let m = t1.nrows();
    let smin = |rho: f64| min_singular_value(&w0_matrix(c(rho), t1, t2));
    let h = 1.0 / ROOT_SAMPLES as f64;
    let f: Vec<f64> = (0..ROOT_SAMPLES).map(|i| smin(i as f64 * h)).collect();
    let mut candidates: Vec<f64> = Vec::new();
    for i in 0..ROOT_SAMPLES {
        let prev = f[(i + ROOT_SAMPLES - 1) % ROOT_SAMPLES];
        let next = f[(i + 1) % ROOT_SAMPLES];
        if f[i] <= prev && f[i] <= next {
            let x0 = i as f64 * h;
            let (x, v) = golden_section_min(smin, x0 - h, x0 + h, 1e-14);
            if v < ROOT_ACCEPT {
                let mut r = x.rem_euclid(1.0);
                if r > 1.0 - CLASS_TOL {
                    r = 0.0;
                }
                if candidates.iter().all(|&q| circular_distance(q, r) > ROOT_MERGE) {
                    candidates.push(r);
                }
            }
        }
    }
    let mut roots = Vec::with_capacity(m);
    for (i, &r) in candidates.iter().enumerate() {
        let nearest = candidates
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &q)| circular_distance(q, r))
            .fold(1.0, f64::min);
        let mult = winding_number(t1, t2, r, (0.25 * nearest).min(0.1));
        for _ in 0..mult.max(0) {
            roots.push(r);
        }
    }
    if roots.len() != m {
        return Err(SlqError::RootCountMismatch { found: roots.len(), expected: m });
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(roots)
}

/// Shifts `r_k`, their classes `J_k` and residue projectors `A_k`.
#[derive(Clone, Debug)]
pub struct ModelConstants {
    /// `r_1 <= ... <= r_m` in `[0, 1)`.
    pub rk: Vec<f64>,
    /// Partition of the branches `1..=m` by equal shift.
    pub classes: Vec<Vec<usize>>,
    /// First branch of every class.
    pub cal_j: Vec<usize>,
    /// One projector per class.
    pub ak: Vec<CMat>,
    /// dim(Ker T1 ∩ Ker T2).
    pub p_perp: usize,
}

impl ModelConstants {
    /// Class number of branch `k` (1-based branch).
    pub fn class_of(&self, k: usize) -> usize {
        self.classes.iter().position(|cl| cl.contains(&k)).expect("branch out of range")
    }

    pub fn projector_for_branch(&self, k: usize) -> &CMat {
        &self.ak[self.class_of(k)]
    }

    pub fn r(&self, k: usize) -> f64 {
        self.rk[k - 1]
    }

    /// Smallest circular distance between distinct shifts, 1 if all coincide.
    pub fn gap(&self) -> f64 {
        let reps: Vec<f64> = self.cal_j.iter().map(|&k| self.r(k)).collect();
        let mut g: f64 = 1.0;
        for i in 0..reps.len() {
            for j in i + 1..reps.len() {
                g = g.min(circular_distance(reps[i], reps[j]));
            }
        }
        g
    }
}

fn classes_of(rk: &[f64]) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, &r) in rk.iter().enumerate() {
        match classes.iter_mut().find(|cl| circular_distance(rk[cl[0] - 1], r) <= CLASS_TOL) {
            Some(cl) => cl.push(i + 1),
            None => classes.push(vec![i + 1]),
        }
    }
    classes
}

/// `A = (1/2i) ∮ W0^{-1} U0 drho` on circles around each distinct shift.
pub fn compute_ak(t1: &CMat, t2: &CMat, rk: &[f64], classes: &[Vec<usize>], nodes: usize) -> Result<Vec<CMat>> {
    let reps: Vec<f64> = classes.iter().map(|cl| rk[cl[0] - 1]).collect();
    reps.iter()
        .enumerate()
        .map(|(i, &r)| {
            let gap = reps
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| circular_distance(q, r))
                .fold(1.0, f64::min);
            let radius = (0.25 * gap).min(0.1);
            residue_projector(t1, t2, r, radius, nodes)
                .or_else(|_| residue_projector(t1, t2, r, 0.9 * radius, nodes))
        })
        .collect()
}

fn residue_projector(t1: &CMat, t2: &CMat, center: f64, radius: f64, nodes: usize) -> Result<CMat> {
    let m = t1.nrows();
    let mut acc = linalg::zeros(m);
    for j in 0..nodes {
        let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / nodes as f64);
        let rho = c(center) + e * radius;
        let w = w0_matrix(rho, t1, t2);
        if min_singular_value(&w) < 1e-12 {
            return Err(SlqError::SingularContour { center });
        }
        let lu = w.lu();
        let sol = lu.solve(&u0_matrix(rho, t1, t2)).ok_or(SlqError::SingularContour { center })?;
        acc += sol * e;
    }
    Ok(acc * c(PI * radius / nodes as f64))
}

pub fn model_constants(t1: &CMat, t2: &CMat) -> Result<ModelConstants> {
    let rk = compute_rk(t1, t2)?;
    let classes = classes_of(&rk);
    let ak = compute_ak(t1, t2, &rk, &classes, DEFAULT_RESIDUE_NODES)?;
    Ok(ModelConstants {
        cal_j: classes.iter().map(|cl| cl[0]).collect(),
        classes,
        ak,
        rk,
        p_perp: linalg::kernel_intersection_dim(t1, t2, 1e-10),
    })
}

/// `cos(rho x) T1 + sin(rho x)/rho T1perp`.
pub fn model_phi(x: f64, lambda: Complex64, t1: &CMat) -> CMat {
    let rho = sqrt_branch(lambda);
    let t1p = identity(t1.nrows()) - t1;
    t1 * (rho * x).cos() + t1p * sinc_scaled(rho, x)
}

/// x-derivative of [`model_phi`].
pub fn model_phi_q(x: f64, lambda: Complex64, t1: &CMat) -> CMat {
    let rho = sqrt_branch(lambda);
    let t1p = identity(t1.nrows()) - t1;
    t1 * (-lambda * sinc_scaled(rho, x)) + t1p * (rho * x).cos()
}

/// Model weight for shift `rho` and projector `a`.
pub fn model_alpha(rho: f64, a: &CMat, t1: &CMat) -> CMat {
    if rho == 0.0 {
        return t1 * a * t1 * c(1.0 / PI);
    }
    let t = t1 + (identity(t1.nrows()) - t1) * c(rho);
    &t * a * &t * c(2.0 / PI)
}

/// Spectral data of the model problem over the index set up to level `n_max`.
pub fn model_spectral_data(t1: &CMat, consts: &ModelConstants, n_max: usize) -> SpectralDataSet {
    let m = t1.nrows();
    let records = index_set_with_p_perp(m, consts.p_perp, n_max)
        .into_iter()
        .map(|ix| {
            let rho = ix.n as f64 + consts.r(ix.k);
            (ix, rho * rho, model_alpha(rho, consts.projector_for_branch(ix.k), t1))
        })
        .collect();
    SpectralDataSet::from_records(m, 0.0, records, DEFAULT_CLUSTER_TOL)
}

/// Model eigenvalue `(n + r_k)^2` of one index.
pub fn model_lambda(consts: &ModelConstants, ix: SpectralIndex) -> f64 {
    let rho = ix.n as f64 + consts.r(ix.k);
    rho * rho
}

/// Weyl matrix of the model problem in closed form.
pub fn model_weyl(lambda: Complex64, t1: &CMat, t2: &CMat) -> Result<CMat> {
    let m = t1.nrows();
    let t1p = identity(m) - t1;
    let t2p = identity(m) - t2;
    let rho = sqrt_branch(lambda);
    let (co, si) = ((rho * PI).cos(), sinc_scaled(rho, PI));
    let phi = t1 * co + &t1p * si;
    let phi_q = t1 * (-lambda * si) + &t1p * co;
    let zeta = t1 * si - &t1p * co;
    let zeta_q = t1 * co + &t1p * (lambda * si);
    let delta = t2 * phi_q - &t2p * phi;
    let v2 = t2 * zeta_q - &t2p * zeta;
    let smin = min_singular_value(&delta);
    if smin < 1e-12 {
        return Err(SlqError::AtEigenvalue { lambda: format!("{lambda}"), smin });
    }
    Ok(-delta.lu().solve(&v2).expect("nonsingular"))
}

fn gauss_legendre_24() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| linalg::gauss_legendre(24))
}

/// Scalar blocks `(c, s)` of the model kernel:
/// `c = ∫ cos(rho t) cos(theta t) dt`, `s = ∫ sin(rho t)/rho sin(theta t)/theta dt` over `[0, x]`.
pub fn model_d_coeffs(x: f64, lambda: Complex64, mu: Complex64) -> (Complex64, Complex64) {
    let rho = sqrt_branch(lambda);
    let theta = sqrt_branch(mu);
    let cc = (sinc_scaled(rho - theta, x) + sinc_scaled(rho + theta, x)) * 0.5;
    let ss = if rho.norm().min(theta.norm()) >= 0.5 {
        (sinc_scaled(rho - theta, x) - sinc_scaled(rho + theta, x)) * 0.5 / (rho * theta)
    } else if (lambda - mu).norm() >= 1.0 {
        let (sl, cl) = (sinc_scaled(rho, x), (rho * x).cos());
        let (sm, cm) = (sinc_scaled(theta, x), (theta * x).cos());
        (sl * cm - cl * sm) / (lambda - mu)
    } else {
        let (nodes, weights) = gauss_legendre_24();
        let half = 0.5 * x;
        nodes
            .iter()
            .zip(weights)
            .map(|(&u, &w)| {
                let t = half * (u + 1.0);
                sinc_scaled(rho, t) * sinc_scaled(theta, t) * (w * half)
            })
            .sum()
    };
    (cc, ss)
}

/// `D(x, lambda, mu) = ∫_0^x phi(t, lambda) phi(t, mu) dt` for the model solution.
pub fn model_d(x: f64, lambda: Complex64, mu: Complex64, t1: &CMat) -> CMat {
    let (cc, ss) = model_d_coeffs(x, lambda, mu);
    t1 * cc + (identity(t1.nrows()) - t1) * ss
}

fn sinc_real(a: f64, x: f64) -> f64 {
    let z = a * x;
    if z.abs() < 1e-3 {
        let z2 = z * z;
        x * (1.0 - z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0)))
    } else {
        z.sin() / a
    }
}

/// [`model_d_coeffs`] for nonnegative real square roots `rho`, `theta`.
pub fn model_d_coeffs_real(x: f64, rho: f64, theta: f64) -> (f64, f64) {
    let cc = 0.5 * (sinc_real(rho - theta, x) + sinc_real(rho + theta, x));
    let (lambda, mu) = (rho * rho, theta * theta);
    let ss = if rho.min(theta) >= 0.5 {
        0.5 * (sinc_real(rho - theta, x) - sinc_real(rho + theta, x)) / (rho * theta)
    } else if (lambda - mu).abs() >= 1.0 {
        let (sl, cl) = (sinc_real(rho, x), (rho * x).cos());
        let (sm, cm) = (sinc_real(theta, x), (theta * x).cos());
        (sl * cm - cl * sm) / (lambda - mu)
    } else {
        let (nodes, weights) = gauss_legendre_24();
        let half = 0.5 * x;
        nodes
            .iter()
            .zip(weights)
            .map(|(&u, &w)| {
                let t = half * (u + 1.0);
                sinc_real(rho, t) * sinc_real(theta, t) * w * half
            })
            .sum()
    };
    (cc, ss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, from_real_rows, max_abs_diff, zeros};

    #[test]
    fn w0_u0_examples() {
        let rho = c(0.37);
        let s = (0.37 * PI).sin();
        let co = (0.37 * PI).cos();
        let i2 = identity(2);
        assert!(max_abs_diff(&w0_matrix(rho, &i2, &i2), &(identity(2) * c(s))) < 1e-15);
        assert!(max_abs_diff(&u0_matrix(rho, &i2, &i2), &(identity(2) * c(co))) < 1e-15);
        let t1 = diag(&[1.0, 0.0]);
        assert!(max_abs_diff(&w0_matrix(rho, &t1, &i2), &diag(&[s, -co])) < 1e-15);
        assert!(max_abs_diff(&u0_matrix(rho, &t1, &i2), &diag(&[co, s])) < 1e-15);
        let t2 = from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let t1p = identity(2) - &t1;
        let t2p = identity(2) - &t2;
        let w = w0_matrix(c(0.0), &t1, &t2);
        assert!(max_abs_diff(&w, &(&t2p * &t1 - &t2 * &t1p)) < 1e-15);
    }

    #[test]
    fn rk_examples() {
        let i2 = identity(2);
        assert_eq!(compute_rk(&i2, &i2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_rk(&zeros(1), &zeros(1)).unwrap(), vec![0.0]);
        let r = compute_rk(&diag(&[1.0, 0.0]), &i2).unwrap();
        assert!(r[0].abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn ak_examples() {
        let i2 = identity(2);
        let k = model_constants(&i2, &i2).unwrap();
        assert_eq!(k.classes, vec![vec![1, 2]]);
        assert!(max_abs_diff(&k.ak[0], &i2) < 1e-12);
        let k = model_constants(&diag(&[1.0, 0.0]), &i2).unwrap();
        assert_eq!(k.cal_j, vec![1, 2]);
        assert!(max_abs_diff(&k.ak[0], &diag(&[1.0, 0.0])) < 1e-12);
        assert!(max_abs_diff(&k.ak[1], &diag(&[0.0, 1.0])) < 1e-12);
        assert!((k.gap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn model_phi_examples() {
        let t1 = diag(&[1.0, 0.0]);
        assert!(max_abs_diff(&model_phi(0.0, c(3.0), &t1), &t1) < 1e-15);
        assert!(max_abs_diff(&model_phi(1.3, c(0.0), &t1), &diag(&[1.0, 1.3])) < 1e-15);
        let p = model_phi(PI / 2.0, c(4.0), &identity(1));
        assert!((p[(0, 0)].re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_model_data() {
        let one = identity(1);
        let k = model_constants(&one, &one).unwrap();
        let d = model_spectral_data(&one, &k, 3);
        assert_eq!(d.entries.len(), 4);
        assert!((d.entries[0].alpha[(0, 0)].re - 1.0 / PI).abs() < 1e-12);
        assert!((d.entries[2].alpha[(0, 0)].re - 2.0 / PI).abs() < 1e-12);

        let z = zeros(1);
        let k = model_constants(&z, &z).unwrap();
        let d = model_spectral_data(&z, &k, 3);
        assert_eq!(d.entries.len(), 3);
        assert!((d.entries[2].alpha[(0, 0)].re - 18.0 / PI).abs() < 1e-10);
    }

    #[test]
    fn mixed_model_data() {
        let t1 = diag(&[1.0, 0.0]);
        let k = model_constants(&t1, &identity(2)).unwrap();
        let d = model_spectral_data(&t1, &k, 2);
        let e = d.get(SpectralIndex::new(2, 2)).unwrap();
        assert!((e.lambda - 6.25).abs() < 1e-9);
        assert!(max_abs_diff(&e.alpha, &diag(&[0.0, 2.0 / PI * 6.25])) < 1e-9);
        let e = d.get(SpectralIndex::new(1, 1)).unwrap();
        assert!(max_abs_diff(&e.alpha, &diag(&[2.0 / PI, 0.0])) < 1e-12);
    }

    #[test]
    fn model_weyl_scalar() {
        let one = identity(1);
        let lam = Complex64::new(2.3, 0.4);
        let rho = sqrt_branch(lam);
        let neumann = (rho * PI).cos() / (rho * (rho * PI).sin());
        assert!((model_weyl(lam, &one, &one).unwrap()[(0, 0)] - neumann).norm() < 1e-12);
        let z = zeros(1);
        let dirichlet = rho * (rho * PI).cos() / (rho * PI).sin();
        assert!((model_weyl(lam, &z, &z).unwrap()[(0, 0)] - dirichlet).norm() < 1e-12);
    }

    #[test]
    fn kernel_examples() {
        let one = identity(1);
        assert!(model_d(PI, c(1.0), c(0.0), &one)[(0, 0)].norm() < 1e-15);
        let d = model_d(PI, c(9.0), c(9.0), &one)[(0, 0)];
        assert!((d.re - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn real_kernel_matches_complex() {
        for &(x, r, t) in &[(1.0, 0.0, 0.0), (2.0, 0.3, 0.9), (3.0, 5.0, 5.0 + 1e-9), (0.7, 0.2, 4.0)] {
            let (a, b) = model_d_coeffs(x, c(r * r), c(t * t));
            let (ar, br) = model_d_coeffs_real(x, r, t);
            assert!((a.re - ar).abs() < 1e-14 && (b.re - br).abs() < 1e-14);
        }
    }
}
