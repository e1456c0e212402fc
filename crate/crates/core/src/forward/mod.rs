//! Forward problem: fundamental solutions, characteristic matrix, eigenvalues,
//! Weyl matrix and weight matrices.

mod ode;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

pub use ode::Propagator;

use crate::error::{Result, SlqError};
use crate::linalg::{self, c, golden_section_min, norm2, singular_values, CMat};
use crate::model::{model_constants, ModelConstants};
use crate::problem::{ProblemSpec, SpectralIndex, ValidatedProblem};
use crate::spectral::SpectralDataSet;

#[derive(Clone, Debug)]
pub struct ForwardOptions {
    /// Tolerance of the integrator for refinement and residues.
    pub ode_tol: f64,
    /// Looser integrator tolerance used while scanning for eigenvalues.
    pub scan_tol: f64,
    /// Singular values of the normalized characteristic matrix below
    /// `rank_tol * max(1, ||.||)` count as zero.
    pub rank_tol: f64,
    /// Root refinement tolerance in `sqrt(lambda)`.
    pub root_tol: f64,
    pub cluster_tol: f64,
    /// Initial node count of the residue contour.
    pub contour_points: usize,
    /// Scan step in `sqrt(lambda)`.
    pub scan_step: f64,
    /// How far below zero to look for eigenvalues, as `sqrt(-lambda)`.
    /// Defaults to `1 + 2 (||sigma||_inf + ||H2||)`.
    pub tau_max: Option<f64>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            ode_tol: 1e-10,
            scan_tol: 1e-7,
            rank_tol: 1e-6,
            root_tol: 1e-11,
            cluster_tol: crate::spectral::DEFAULT_CLUSTER_TOL,
            contour_points: 32,
            scan_step: 0.01,
            tau_max: None,
        }
    }
}

/// `phi`, `zeta` and their quasi-derivatives sampled on a grid.
#[derive(Clone, Debug)]
pub struct FundamentalPair {
    pub x: Vec<f64>,
    pub phi: Vec<CMat>,
    pub phi_q: Vec<CMat>,
    pub zeta: Vec<CMat>,
    pub zeta_q: Vec<CMat>,
}

#[derive(Clone, Debug)]
pub struct EigenRecord {
    pub index: SpectralIndex,
    pub lambda: f64,
    pub multiplicity: usize,
    pub alpha: CMat,
}

fn initial_state(spec: &ProblemSpec, with_zeta: bool) -> Vec<Complex64> {
    let m = spec.m;
    let cols = if with_zeta { 2 * m } else { m };
    let t1p = spec.t1_perp();
    let mut y = vec![c(0.0); 2 * m * cols];
    for i in 0..m {
        for j in 0..m {
            y[i * cols + j] = spec.t1[(i, j)];
            y[m * cols + i * cols + j] = t1p[(i, j)];
            if with_zeta {
                y[i * cols + m + j] = -t1p[(i, j)];
                y[m * cols + i * cols + m + j] = spec.t1[(i, j)];
            }
        }
    }
    y
}

/// Splits a flat state into `[Y, Y1]` blocks of `m x m` matrices, column block `b`.
fn block(state: &[Complex64], m: usize, cols: usize, part: usize, b: usize) -> CMat {
    let off = part * m * cols;
    CMat::from_fn(m, m, |i, j| state[off + i * cols + b * m + j])
}

pub fn integrate_fundamental(spec: &ProblemSpec, lambda: Complex64, grid: &[f64], tol: f64) -> Result<FundamentalPair> {
    let m = spec.m;
    let states = Propagator::new(&spec.sigma, lambda, 2 * m, tol).run(&initial_state(spec, true), grid)?;
    let pick = |part, b| states.iter().map(|s| block(s, m, 2 * m, part, b)).collect();
    Ok(FundamentalPair {
        x: grid.to_vec(),
        phi: pick(0, 0),
        phi_q: pick(1, 0),
        zeta: pick(0, 1),
        zeta_q: pick(1, 1),
    })
}

/// `(phi(pi), phi^[1](pi))`, and the same for `zeta` when requested.
fn endpoint(spec: &ProblemSpec, lambda: Complex64, with_zeta: bool, tol: f64) -> Result<(CMat, CMat, Option<(CMat, CMat)>)> {
    let m = spec.m;
    let cols = if with_zeta { 2 * m } else { m };
    let s = Propagator::new(&spec.sigma, lambda, cols, tol)
        .run(&initial_state(spec, with_zeta), &[PI])?
        .pop()
        .expect("one output");
    let zeta = with_zeta.then(|| (block(&s, m, cols, 0, 1), block(&s, m, cols, 1, 1)));
    Ok((block(&s, m, cols, 0, 0), block(&s, m, cols, 1, 0), zeta))
}

/// `V2(Y) = T2 (Y1 - H2 Y) - T2perp Y` at `x = pi`.
fn right_form(spec: &ProblemSpec, y: &CMat, y1: &CMat) -> CMat {
    &spec.t2 * (y1 - &spec.h2 * y) - spec.t2_perp() * y
}

pub fn characteristic_matrix(spec: &ProblemSpec, lambda: Complex64, tol: f64) -> Result<CMat> {
    let (phi, phi_q, _) = endpoint(spec, lambda, false, tol)?;
    Ok(right_form(spec, &phi, &phi_q))
}

/// `(T2 / r + T2perp) Delta (T1 + r T1perp)` with `r = max(1, |rho|)`, which
/// stays of order one along the real axis.
pub fn normalized_characteristic(spec: &ProblemSpec, lambda: Complex64, tol: f64) -> Result<CMat> {
    let delta = characteristic_matrix(spec, lambda, tol)?;
    Ok(normalize(spec, lambda, &delta))
}

fn normalize(spec: &ProblemSpec, lambda: Complex64, delta: &CMat) -> CMat {
    let r = lambda.norm().sqrt().max(1.0);
    let left = &spec.t2 * c(1.0 / r) + spec.t2_perp();
    let right = &spec.t1 + spec.t1_perp() * c(r);
    left * delta * right
}

/// Smallest singular value relative to the largest one (or to 1).
fn relative_smin(a: &CMat) -> f64 {
    let s = singular_values(a);
    s[0] / s[s.len() - 1].max(1.0)
}

fn weyl_parts(spec: &ProblemSpec, lambda: Complex64, tol: f64) -> Result<(CMat, CMat)> {
    let (phi, phi_q, zeta) = endpoint(spec, lambda, true, tol)?;
    let (z, zq) = zeta.expect("zeta requested");
    Ok((right_form(spec, &phi, &phi_q), right_form(spec, &z, &zq)))
}

/// `M(lambda) = -Delta(lambda)^{-1} V2(zeta)`.
pub fn weyl_matrix(spec: &ProblemSpec, lambda: Complex64, opts: &ForwardOptions) -> Result<CMat> {
    let (delta, v2) = weyl_parts(spec, lambda, opts.ode_tol)?;
    let smin = relative_smin(&normalize(spec, lambda, &delta));
    if smin < opts.rank_tol {
        return Err(SlqError::AtEigenvalue { lambda: format!("{lambda}"), smin });
    }
    Ok(-delta.lu().solve(&v2).expect("nonsingular"))
}

fn lambda_of(t: f64) -> f64 {
    t * t.abs()
}

fn default_tau_max(spec: &ProblemSpec) -> f64 {
    1.0 + 2.0 * (spec.sigma.sup_norm() + norm2(&spec.h2))
}

/// Roots of the normalized characteristic matrix with `t` in `[lo, hi)`,
/// `lambda = sign(t) t^2`, as `(lambda, multiplicity)`.
fn scan_roots(spec: &ProblemSpec, lo: f64, hi: f64, step: f64, opts: &ForwardOptions) -> Result<Vec<(f64, usize)>> {
    let count = ((hi - lo) / step).ceil() as usize + 3;
    let ts: Vec<f64> = (0..count).map(|i| lo - step + i as f64 * step).collect();
    let f: Vec<f64> = ts
        .par_iter()
        .map(|&t| Ok(relative_smin(&normalized_characteristic(spec, c(lambda_of(t)), opts.scan_tol)?)))
        .collect::<Result<_>>()?;
    let brackets: Vec<(f64, f64)> = (1..count - 1)
        .filter(|&i| f[i] < f[i - 1] && f[i] <= f[i + 1])
        .map(|i| (ts[i - 1], ts[i + 1]))
        .collect();
    let refined: Vec<Option<(f64, usize)>> = brackets
        .par_iter()
        .map(|&(a, b)| {
            let mut failure = None;
            let (t, _) = golden_section_min(
                |t| match normalized_characteristic(spec, c(lambda_of(t)), opts.ode_tol) {
                    Ok(d) => relative_smin(&d),
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                },
                a,
                b,
                opts.root_tol,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let d = normalized_characteristic(spec, c(lambda_of(t)), opts.ode_tol)?;
            let s = singular_values(&d);
            let scale = s[s.len() - 1].max(1.0);
            let mult = s.iter().filter(|&&v| v < opts.rank_tol * scale).count();
            Ok((mult > 0 && t >= lo && t < hi).then_some((lambda_of(t), mult)))
        })
        .collect::<Result<_>>()?;
    let mut roots: Vec<(f64, usize)> = Vec::new();
    for (lam, mult) in refined.into_iter().flatten() {
        match roots.iter_mut().find(|(l, _)| (l - lam).abs() <= opts.cluster_tol * (1.0 + lam.abs())) {
            Some(r) => r.1 = r.1.max(mult),
            None => roots.push((lam, mult)),
        }
    }
    roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(roots)
}

/// Eigenvalues grouped by level window, levels `0..=n_max + 1`.
struct Located {
    levels: Vec<Vec<(f64, usize)>>,
    top: f64,
}

fn locate(problem: &ValidatedProblem, consts: &ModelConstants, n_max: usize, opts: &ForwardOptions) -> Result<Located> {
    let spec = &problem.spec;
    let m = spec.m;
    let r_min = consts.rk[0];
    let r_max = consts.rk[m - 1];
    let tau = opts.tau_max.unwrap_or_else(|| default_tau_max(spec));
    // window n is [bounds[n], bounds[n + 1])
    let mut bounds = vec![-tau];
    bounds.extend((0..=n_max + 1).map(|n| n as f64 + 0.5 * (r_max + 1.0 + r_min)));
    let top = bounds[n_max + 2];
    let all = scan_roots(spec, -tau, top, opts.scan_step, opts)?;
    let expected = |n: usize| if n == 0 { m - problem.p_perp } else { m };
    let in_window = |roots: &[(f64, usize)], n: usize| -> Vec<(f64, usize)> {
        roots
            .iter()
            .copied()
            .filter(|&(l, _)| {
                let t = l.signum() * l.abs().sqrt();
                t >= bounds[n] && t < bounds[n + 1]
            })
            .collect()
    };
    let total = |w: &[(f64, usize)]| w.iter().map(|r| r.1).sum::<usize>();
    let mut levels = Vec::with_capacity(n_max + 2);
    for n in 0..=n_max + 1 {
        let mut window = in_window(&all, n);
        let mut step = opts.scan_step;
        while total(&window) != expected(n) && step > opts.scan_step / 150.0 {
            step /= 10.0;
            window = scan_roots(spec, bounds[n], bounds[n + 1], step, opts)?;
        }
        if total(&window) != expected(n) && n <= n_max {
            return Err(SlqError::SlotMismatch {
                level: n,
                found: total(&window),
                expected: expected(n),
                lo: bounds[n],
                hi: bounds[n + 1],
            });
        }
        levels.push(window);
    }
    Ok(Located { levels, top })
}

/// Eigenvalues with `sqrt(lambda)` below level `n_max + 1`, indexed `(n, k)`;
/// weights are left at zero.
pub fn find_eigenvalues(problem: &ValidatedProblem, n_max: usize, opts: &ForwardOptions) -> Result<Vec<EigenRecord>> {
    let consts = model_constants(&problem.t1, &problem.t2)?;
    let located = locate(problem, &consts, n_max, opts)?;
    Ok(records_from(problem, &located, n_max))
}

fn records_from(problem: &ValidatedProblem, located: &Located, n_max: usize) -> Vec<EigenRecord> {
    let m = problem.m;
    let mut out = Vec::new();
    for (n, window) in located.levels.iter().enumerate().take(n_max + 1) {
        let first_k = if n == 0 { problem.p_perp + 1 } else { 1 };
        let mut k = first_k;
        for &(lambda, mult) in window {
            for _ in 0..mult {
                out.push(EigenRecord { index: SpectralIndex::new(n, k), lambda, multiplicity: mult, alpha: linalg::zeros(m) });
                k += 1;
            }
        }
    }
    out
}

/// Residue estimate with its diagnostics.
#[derive(Clone, Debug)]
pub struct WeightEstimate {
    /// Hermitian part of the contour integral.
    pub alpha: CMat,
    /// Norm of the discarded anti-Hermitian part.
    pub anti_hermitian: f64,
    pub nodes: usize,
}

/// `Res M` at `lambda0` by the trapezoid rule on `|lambda - lambda0| = min(gap/2, 1)`,
/// doubling the node count until two estimates agree.
pub fn weight_matrix(spec: &ProblemSpec, lambda0: f64, gap: f64, opts: &ForwardOptions) -> Result<WeightEstimate> {
    let radius = (0.5 * gap).min(1.0);
    let offset = 0.1;
    let node_sum = |nodes: usize, js: Vec<usize>| -> Result<CMat> {
        let terms: Vec<CMat> = js
            .into_par_iter()
            .map(|j| {
                let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / nodes as f64 + offset);
                let lambda = c(lambda0) + e * radius;
                let (delta, v2) = weyl_parts(spec, lambda, opts.ode_tol)?;
                if relative_smin(&normalize(spec, lambda, &delta)) < opts.rank_tol {
                    return Err(SlqError::ContourThroughEigenvalue { lambda: lambda0 });
                }
                Ok(-delta.lu().solve(&v2).expect("nonsingular") * e)
            })
            .collect::<Result<_>>()?;
        Ok(terms.into_iter().fold(linalg::zeros(spec.m), |a, b| a + b))
    };
    let mut nodes = opts.contour_points.max(4);
    let mut sum = node_sum(nodes, (0..nodes).collect())?;
    let mut estimate = &sum * c(radius / nodes as f64);
    let mut change = f64::INFINITY;
    for _ in 0..3 {
        sum += node_sum(2 * nodes, (0..nodes).map(|j| 2 * j + 1).collect())?;
        nodes *= 2;
        let next = &sum * c(radius / nodes as f64);
        change = norm2(&(&next - &estimate));
        estimate = next;
        if change <= 1e-9 * norm2(&estimate).max(1.0) {
            let alpha = linalg::hermitian_part(&estimate);
            return Ok(WeightEstimate { anti_hermitian: norm2(&(&estimate - &alpha)), alpha, nodes });
        }
    }
    Err(SlqError::NoConvergence { lambda: lambda0, change })
}

/// Eigenvalues and weight matrices up to level `n_max`.
pub fn extract_spectral_data(problem: &ValidatedProblem, n_max: usize, opts: &ForwardOptions) -> Result<SpectralDataSet> {
    extract_with_diagnostics(problem, n_max, opts).map(|(d, _)| d)
}

/// [`extract_spectral_data`] together with the largest anti-Hermitian residual
/// of the weight estimates.
pub fn extract_with_diagnostics(
    problem: &ValidatedProblem,
    n_max: usize,
    opts: &ForwardOptions,
) -> Result<(SpectralDataSet, f64)> {
    let consts = model_constants(&problem.t1, &problem.t2)?;
    let located = locate(problem, &consts, n_max, opts)?;
    let mut distinct: Vec<f64> = located.levels.iter().flatten().map(|r| r.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let top_lambda = located.top * located.top;
    let records = records_from(problem, &located, n_max);
    let wanted: Vec<f64> = located.levels.iter().take(n_max + 1).flatten().map(|r| r.0).collect();
    let weights: Vec<WeightEstimate> = wanted
        .iter()
        .map(|&lam| {
            let i = distinct.iter().position(|&l| l == lam).expect("located eigenvalue");
            let below = if i > 0 { lam - distinct[i - 1] } else { f64::INFINITY };
            let above = distinct.get(i + 1).map_or(top_lambda - lam, |&l| l - lam);
            weight_matrix(&problem.spec, lam, below.min(above), opts)
        })
        .collect::<Result<_>>()?;
    let anti = weights.iter().map(|w| w.anti_hermitian).fold(0.0, f64::max);
    let triples = records
        .into_iter()
        .map(|r| {
            let w = &weights[wanted.iter().position(|&l| l == r.lambda).unwrap()];
            (r.index, r.lambda, w.alpha.clone())
        })
        .collect();
    Ok((SpectralDataSet::from_records(problem.m, 0.0, triples, opts.cluster_tol), anti))
}
