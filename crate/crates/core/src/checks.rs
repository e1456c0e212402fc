//! Finite-scale checks of spectral data (weight structure, asymptotics,
//! completeness) and comparison of reconstructions up to the gauge freedom.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Result, SlqError};
use crate::linalg::{self, c, hermitian_deviation, hermitian_eigen, identity, max_abs_diff, norm2, CMat};
use crate::model::ModelConstants;
use crate::problem::{Sigma, SpectralIndex};
use crate::spectral::SpectralDataSet;

#[derive(Clone, Debug)]
pub struct CheckOptions {
    /// Relative Hermiticity tolerance.
    pub hermitian_tol: f64,
    /// Smallest admissible eigenvalue of a weight, relative to its norm.
    pub psd_tol: f64,
    /// Relative threshold below which eigenvalues of a weight count as zero.
    pub rank_tol: f64,
    /// Relative tolerance for weights of equal eigenvalues to agree.
    pub equal_tol: f64,
    pub cluster_tol: f64,
    /// Largest admissible `|kappa|` on the tail levels.
    pub kappa_tol: f64,
    /// Largest admissible `||K||` on the tail levels.
    pub remainder_tol: f64,
    /// Smallest admissible normalized Gram eigenvalue.
    pub gram_tol: f64,
    /// Smallest admissible principal cosine against the model family.
    pub alignment_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            hermitian_tol: 1e-8,
            psd_tol: 1e-10,
            rank_tol: 1e-6,
            equal_tol: 1e-6,
            cluster_tol: crate::spectral::DEFAULT_CLUSTER_TOL,
            kappa_tol: 0.05,
            remainder_tol: 0.25,
            gram_tol: 0.1,
            alignment_tol: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightVerdict {
    pub n: usize,
    pub k: usize,
    pub hermitian: bool,
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub rank: usize,
    pub multiplicity: usize,
    pub rank_matches: bool,
    pub group_consistent: bool,
}

impl WeightVerdict {
    pub fn pass(&self) -> bool {
        self.hermitian && self.psd && self.rank_matches && self.group_consistent
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionIReport {
    pub entries: Vec<WeightVerdict>,
    pub pass: bool,
}

/// Weights Hermitian, positive semidefinite, of rank equal to the multiplicity,
/// and equal for equal eigenvalues.
pub fn check_condition_i(data: &SpectralDataSet, opts: &CheckOptions) -> ConditionIReport {
    let groups = data.groups(opts.cluster_tol);
    let mut entries = Vec::with_capacity(data.entries.len());
    for &(start, end) in &groups {
        let first = &data.entries[start].alpha;
        for e in &data.entries[start..end] {
            let scale = norm2(&e.alpha).max(1.0);
            let (vals, _) = hermitian_eigen(&e.alpha);
            let min_eigenvalue = vals.first().copied().unwrap_or(0.0);
            let top = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
            let rank = vals.iter().filter(|&&v| v > opts.rank_tol * top).count();
            entries.push(WeightVerdict {
                n: e.index.n,
                k: e.index.k,
                hermitian: hermitian_deviation(&e.alpha) <= opts.hermitian_tol * scale,
                psd: min_eigenvalue >= -opts.psd_tol * scale,
                min_eigenvalue,
                rank,
                multiplicity: end - start,
                rank_matches: rank == end - start,
                group_consistent: max_abs_diff(&e.alpha, first) <= opts.equal_tol * scale,
            });
        }
    }
    let pass = entries.iter().all(WeightVerdict::pass);
    ConditionIReport { entries, pass }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsReport {
    /// `(n, k, kappa_nk)` with `kappa = rho - n - r_k`, levels `n >= 1`.
    pub kappa: Vec<(usize, usize, f64)>,
    /// `(n, class representative, ||K_nk||)`.
    pub remainder: Vec<(usize, usize, f64)>,
    /// First level counted as tail.
    pub tail_from: usize,
    pub tail_kappa_max: f64,
    pub tail_remainder_max: f64,
    pub kappa_l2: f64,
    pub remainder_l2: f64,
    pub pass: bool,
}

/// `kappa_nk` and `K_nk` from `sum_{s in J_k} alpha'_ns = (2/pi) S (A_k + K_nk) S`,
/// `S = T1 + n T1perp`. The tail is the upper half of the available levels.
pub fn check_asymptotics(data: &SpectralDataSet, t1: &CMat, consts: &ModelConstants, opts: &CheckOptions) -> AsymptoticsReport {
    let m = data.m;
    let t1p = identity(m) - t1;
    let top = data.max_level();
    let tail_from = (top / 2).max(1);
    let mut kappa = Vec::new();
    let mut remainder = Vec::new();
    for e in data.by_index() {
        if e.index.n == 0 {
            continue;
        }
        let rho = (e.lambda - data.shift).max(0.0).sqrt();
        kappa.push((e.index.n, e.index.k, rho - e.index.n as f64 - consts.r(e.index.k)));
    }
    for n in 1..=top {
        let s_inv = t1 + &t1p * c(1.0 / n as f64);
        for (class, members) in consts.classes.iter().enumerate() {
            let mut sum = linalg::zeros(m);
            let mut found = false;
            for &k in members {
                if let Some(e) = data.get(SpectralIndex::new(n, k)) {
                    sum += &e.alpha_prime;
                    found = true;
                }
            }
            if found {
                let kk = &s_inv * sum * &s_inv * c(PI / 2.0) - &consts.ak[class];
                remainder.push((n, consts.cal_j[class], norm2(&kk)));
            }
        }
    }
    let tail_kappa_max = kappa.iter().filter(|t| t.0 >= tail_from).map(|t| t.2.abs()).fold(0.0, f64::max);
    let tail_remainder_max = remainder.iter().filter(|t| t.0 >= tail_from).map(|t| t.2).fold(0.0, f64::max);
    AsymptoticsReport {
        kappa_l2: kappa.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt(),
        remainder_l2: remainder.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt(),
        pass: tail_kappa_max <= opts.kappa_tol && tail_remainder_max <= opts.remainder_tol,
        kappa,
        remainder,
        tail_from,
        tail_kappa_max,
        tail_remainder_max,
    }
}

/// Finite family built from the weights, used as evidence for completeness.
#[derive(Clone, Debug, Serialize)]
pub struct CompletenessProxy {
    /// Number of eigenvalue groups used.
    pub groups: usize,
    /// Number of functions in the family.
    pub family_size: usize,
    /// Size of the model family over the same levels.
    pub model_family_size: usize,
    /// Smallest eigenvalue of the normalized Gram matrix of the family.
    pub gram_min: f64,
    /// Smallest principal cosine between the family's span and the model span.
    pub alignment: f64,
    pub pass: bool,
    pub note: &'static str,
}

/// Vector functions `(cos(rho x) T1 + sin(rho x) T1perp) e` (or `(T1 + x T1perp) e`
/// at `rho = 0`) for an orthonormal basis `e` of `Ran (pi/2) T^{-1} alpha T^{-1}`.
fn y_family(data: &SpectralDataSet, t1: &CMat, n_cut: usize, opts: &CheckOptions) -> Vec<(f64, Vec<num_complex::Complex64>)> {
    let m = data.m;
    let t1p = identity(m) - t1;
    let mut out = Vec::new();
    for (start, _) in data.groups(opts.cluster_tol) {
        let e = &data.entries[start];
        if e.index.n > n_cut {
            continue;
        }
        let rho = e.lambda.max(0.0).sqrt();
        let t_inv = if rho == 0.0 { identity(m) } else { t1 + &t1p * c(1.0 / rho) };
        let b = &t_inv * &e.alpha * &t_inv * c(PI / 2.0);
        let (vals, vecs) = hermitian_eigen(&b);
        let top = vals.last().copied().unwrap_or(0.0).abs();
        for (i, &v) in vals.iter().enumerate() {
            if v > opts.rank_tol * top.max(1e-300) {
                out.push((rho, vecs.column(i).iter().copied().collect()));
            }
        }
    }
    out
}

fn sample_family(
    family: &[(f64, Vec<num_complex::Complex64>)],
    t1: &CMat,
    x: &[f64],
) -> Vec<Vec<num_complex::Complex64>> {
    let m = t1.nrows();
    let t1p = identity(m) - t1;
    family
        .iter()
        .map(|(rho, e)| {
            let ev = CMat::from_column_slice(m, 1, e);
            let mut samples = Vec::with_capacity(x.len() * m);
            for &t in x {
                let phi = if *rho == 0.0 {
                    t1 + &t1p * c(t)
                } else {
                    t1 * c((rho * t).cos()) + &t1p * c((rho * t).sin())
                };
                samples.extend((phi * &ev).iter().copied());
            }
            samples
        })
        .collect()
}

/// Composite Gauss-Legendre nodes and weights on `[0, pi]`.
fn quadrature(panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = linalg::gauss_legendre(16);
    let h = PI / panels as f64;
    let mut x = Vec::with_capacity(panels * 16);
    let mut w = Vec::with_capacity(panels * 16);
    for p in 0..panels {
        for (u, wt) in gx.iter().zip(&gw) {
            x.push(h * (p as f64 + 0.5 * (u + 1.0)));
            w.push(0.5 * h * wt);
        }
    }
    (x, w)
}

fn gram(a: &[Vec<num_complex::Complex64>], b: &[Vec<num_complex::Complex64>], w: &[f64], m: usize) -> CMat {
    CMat::from_fn(a.len(), b.len(), |i, j| {
        let mut acc = c(0.0);
        for (q, &wq) in w.iter().enumerate() {
            for r in 0..m {
                acc += a[i][q * m + r].conj() * b[j][q * m + r] * wq;
            }
        }
        acc
    })
}

/// Orthonormal coordinates of a family's span from its Gram matrix.
fn span_basis(g: &CMat, tol: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(g);
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > tol * top).collect();
    CMat::from_fn(g.nrows(), keep.len(), |r, k| vecs[(r, keep[k])] / vals[keep[k]].sqrt())
}

/// Normalized Gram minimum of the data family over levels `<= n_cut`, and its
/// smallest principal cosine against the model family on the same levels.
pub fn completeness_proxy(
    data: &SpectralDataSet,
    model: &SpectralDataSet,
    t1: &CMat,
    n_cut: usize,
    panels: usize,
    opts: &CheckOptions,
) -> CompletenessProxy {
    let m = data.m;
    let (x, w) = quadrature(panels.max(4));
    let fam = y_family(data, t1, n_cut, opts);
    let model_fam = y_family(model, t1, n_cut, opts);
    let ys = sample_family(&fam, t1, &x);
    let ym = sample_family(&model_fam, t1, &x);
    let g = gram(&ys, &ys, &w, m);
    let d: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].re.max(1e-300).sqrt()).collect();
    let gn = CMat::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]));
    let gram_min = hermitian_eigen(&gn).0.first().copied().unwrap_or(0.0);

    let gm = gram(&ym, &ym, &w, m);
    let qd = span_basis(&g, 1e-12);
    let qm = span_basis(&gm, 1e-12);
    let cross = qd.adjoint() * gram(&ys, &ym, &w, m) * &qm;
    let cos = linalg::singular_values(&cross);
    let alignment = if qd.ncols() < qm.ncols() || cos.is_empty() { 0.0 } else { cos[cos.len() - qm.ncols().min(cos.len())] };
    CompletenessProxy {
        groups: data.groups(opts.cluster_tol).len(),
        family_size: fam.len(),
        model_family_size: model_fam.len(),
        gram_min,
        alignment,
        pass: gram_min > opts.gram_tol && alignment > opts.alignment_tol,
        note: "finite-section heuristic; does not certify completeness",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugeDistance {
    /// Estimated gauge matrix `T1perp mean(sigma_a - sigma_b) T1perp`.
    #[serde(skip)]
    pub h1d: CMat,
    /// `||sigma_a - sigma_b - H1d||_{L2}`.
    pub sigma_l2: f64,
    /// `||H2a - H2b + T2 H1d T2||`.
    pub h2: f64,
    pub raw_sigma_l2: f64,
    pub raw_h2: f64,
}

fn grid_of(s: &Sigma) -> Option<&[f64]> {
    match s {
        Sigma::Grid { x, .. } => Some(x),
        _ => None,
    }
}

/// Distance between `(sigma_a, H2a)` and `(sigma_b, H2b)` after removing the
/// best constant gauge. Closed-form potentials are sampled on the other side's
/// grid; two grids must coincide.
pub fn compare_modulo_gauge(
    sigma_a: &Sigma,
    h2a: &CMat,
    sigma_b: &Sigma,
    h2b: &CMat,
    t1: &CMat,
    t2: &CMat,
) -> Result<GaugeDistance> {
    let x: Vec<f64> = match (grid_of(sigma_a), grid_of(sigma_b)) {
        (Some(a), Some(b)) => {
            if a.len() != b.len() || a.iter().zip(b).any(|(p, q)| (p - q).abs() > 1e-12) {
                return Err(SlqError::GridMismatch(format!("{} vs {} nodes", a.len(), b.len())));
            }
            a.to_vec()
        }
        (Some(a), None) | (None, Some(a)) => a.to_vec(),
        (None, None) => crate::problem::uniform_grid(501),
    };
    let m = t1.nrows();
    let diffs: Vec<CMat> = x.iter().map(|&t| sigma_a.eval(t) - sigma_b.eval(t)).collect();
    let mut mean = linalg::zeros(m);
    for i in 1..x.len() {
        mean += (&diffs[i] + &diffs[i - 1]) * c(0.5 * (x[i] - x[i - 1]));
    }
    mean /= c(x[x.len() - 1] - x[0]);
    let t1p = identity(m) - t1;
    let h1d = linalg::hermitian_part(&(&t1p * mean * &t1p));
    let l2 = |shift: &CMat| {
        let mut acc = 0.0;
        for i in 1..x.len() {
            let a = linalg::frobenius(&(&diffs[i] - shift)).powi(2);
            let b = linalg::frobenius(&(&diffs[i - 1] - shift)).powi(2);
            acc += 0.5 * (a + b) * (x[i] - x[i - 1]);
        }
        acc.sqrt()
    };
    Ok(GaugeDistance {
        sigma_l2: l2(&h1d),
        h2: norm2(&(h2a - h2b + t2 * &h1d * t2)),
        raw_sigma_l2: l2(&linalg::zeros(m)),
        raw_h2: norm2(&(h2a - h2b)),
        h1d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;
    use crate::model::{model_constants, model_spectral_data};
    use crate::problem::{apply_gauge, GaugeTransform, ProblemSpec};

    fn neumann_model(n: usize) -> (SpectralDataSet, ModelConstants) {
        let one = identity(1);
        let k = model_constants(&one, &one).unwrap();
        (model_spectral_data(&one, &k, n), k)
    }

    #[test]
    fn model_data_passes_everything() {
        let (d, k) = neumann_model(20);
        let opts = CheckOptions::default();
        assert!(check_condition_i(&d, &opts).pass);
        let a = check_asymptotics(&d, &identity(1), &k, &opts);
        assert!(a.pass && a.kappa_l2 < 1e-12 && a.remainder_l2 < 1e-12);
        let p = completeness_proxy(&d, &d, &identity(1), 20, 32, &opts);
        assert!((p.gram_min - 1.0).abs() < 1e-10, "{}", p.gram_min);
        assert!((p.alignment - 1.0).abs() < 1e-8);
    }

    #[test]
    fn negated_weight_is_flagged() {
        let (mut d, _) = neumann_model(5);
        d.entries[3].alpha = -d.entries[3].alpha.clone();
        let r = check_condition_i(&d, &CheckOptions::default());
        assert!(!r.pass);
        let bad: Vec<_> = r.entries.iter().filter(|v| !v.psd).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].n, 3);
    }

    #[test]
    fn rank_deficient_double_weight_is_flagged() {
        let i2 = identity(2);
        let k = model_constants(&i2, &i2).unwrap();
        let mut d = model_spectral_data(&i2, &k, 3);
        for e in d.entries.iter_mut().filter(|e| e.index.n == 2) {
            e.alpha = diag(&[2.0 / PI, 0.0]);
        }
        let r = check_condition_i(&d, &CheckOptions::default());
        assert!(r.entries.iter().any(|v| v.n == 2 && !v.rank_matches));
    }

    #[test]
    fn constant_shift_of_roots_fails_tail() {
        let (d, k) = neumann_model(20);
        let shifted = SpectralDataSet::from_records(
            1,
            0.0,
            d.entries
                .iter()
                .map(|e| {
                    let rho = e.lambda.sqrt() + if e.index.n > 0 { 0.1 } else { 0.0 };
                    (e.index, rho * rho, e.alpha.clone())
                })
                .collect(),
            1e-8,
        );
        assert!(!check_asymptotics(&shifted, &identity(1), &k, &CheckOptions::default()).pass);
    }

    #[test]
    fn deleted_level_lowers_alignment() {
        let (d, _) = neumann_model(20);
        let mut cut = d.clone();
        cut.entries.retain(|e| e.index.n != 7);
        let p = completeness_proxy(&cut, &d, &identity(1), 20, 32, &CheckOptions::default());
        assert!(!p.pass);
        assert!(p.alignment < 1e-8);
    }

    #[test]
    fn gauge_pair_has_zero_distance() {
        let t1 = diag(&[1.0, 0.0]);
        let t2 = identity(2);
        let spec = ProblemSpec::new(
            t1.clone(),
            t2.clone(),
            diag(&[0.3, 0.0]),
            Sigma::sample_uniform(101, |x| diag(&[x.sin(), 0.5 * x.cos()])),
        );
        let g = apply_gauge(&spec, &GaugeTransform { h1d: diag(&[0.0, 0.7]) }).unwrap();
        let r = compare_modulo_gauge(&g.sigma, &g.h2, &spec.sigma, &spec.h2, &t1, &t2).unwrap();
        assert!(r.sigma_l2 < 1e-12 && r.h2 < 1e-12);
        assert!(r.raw_sigma_l2 > 1.0);
        let back = compare_modulo_gauge(&spec.sigma, &spec.h2, &g.sigma, &g.h2, &t1, &t2).unwrap();
        assert!((back.sigma_l2 - r.sigma_l2).abs() < 1e-14);
    }

    #[test]
    fn different_grids_are_rejected() {
        let a = Sigma::sample_uniform(11, |_| diag(&[0.0]));
        let b = Sigma::sample_uniform(12, |_| diag(&[0.0]));
        let z = diag(&[0.0]);
        let one = identity(1);
        assert!(matches!(
            compare_modulo_gauge(&a, &z, &b, &z, &one, &one).unwrap_err(),
            SlqError::GridMismatch(_)
        ));
    }
}
