//! Reconstruction of `(sigma, H2)` from spectral data through the truncated
//! main equation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SlqError};
use crate::linalg::{self, c, hermitian_part, identity, norm2, CMat};
use crate::model::{model_constants, model_d_coeffs_real, model_spectral_data, model_weyl, ModelConstants};
use crate::problem::{uniform_grid, Sigma, SigmaFn, SpectralIndex};
use crate::spectral::{default_shift, shift_spectrum, unshift_reconstruction, SpectralDataSet, DEFAULT_CLUSTER_TOL};

#[derive(Clone, Debug)]
pub struct InverseOptions {
    pub grid_nodes: usize,
    /// Eigenvalue shift; chosen by [`default_shift`] when absent.
    pub shift: Option<f64>,
    /// Forces the size of the first group instead of searching for it.
    pub n0: Option<usize>,
    pub cond_limit: f64,
    pub cluster_tol: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions { grid_nodes: 501, shift: None, n0: None, cond_limit: 1e12, cluster_tol: DEFAULT_CLUSTER_TOL }
    }
}

/// Data for levels `n <= n_cut`, model values above.
pub fn hybrid_data(data: &SpectralDataSet, model: &SpectralDataSet, n_cut: usize, cluster_tol: f64) -> Result<SpectralDataSet> {
    if data.m != model.m {
        return Err(SlqError::IndexSetMismatch(format!("dimension {} vs {}", data.m, model.m)));
    }
    let model_ix = model.indices();
    if let Some(e) = data.entries.iter().find(|e| e.index.n <= n_cut && !model_ix.contains(&e.index)) {
        return Err(SlqError::IndexSetMismatch(format!("data index {:?} is not in the model index set", e.index)));
    }
    let present = data.max_level().min(n_cut);
    let mut records = Vec::with_capacity(model.entries.len());
    for me in model.by_index() {
        let ix = me.index;
        if ix.n <= present {
            let de = data
                .get(ix)
                .ok_or_else(|| SlqError::IndexSetMismatch(format!("data lacks index ({}, {})", ix.n, ix.k)))?;
            records.push((ix, de.lambda, de.alpha.clone()));
        } else {
            records.push((ix, me.lambda, me.alpha.clone()));
        }
    }
    Ok(SpectralDataSet::from_records(data.m, data.shift, records, cluster_tol))
}

/// One square root `rho_lsj` together with the data attached to it.
#[derive(Clone, Debug)]
pub struct GroupMember {
    pub index: SpectralIndex,
    /// 0 for the given data, 1 for the model.
    pub j: u8,
    pub rho: f64,
    pub lambda: f64,
    pub alpha_prime: CMat,
    /// `T1 + rho T1perp`, or `I` when `rho = 0`.
    pub tn: CMat,
    pub tn_inv: CMat,
}

impl GroupMember {
    fn sign(&self) -> f64 {
        if self.j == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// `(-1)^j T^{-1} alpha' T^{-1}`.
    pub fn weighted_alpha(&self) -> CMat {
        &self.tn_inv * &self.alpha_prime * &self.tn_inv * c(self.sign())
    }
}

#[derive(Clone, Debug)]
pub struct EigenGrouping {
    pub n0: usize,
    pub groups: Vec<Vec<GroupMember>>,
    pub t1: CMat,
}

impl EigenGrouping {
    pub fn members(&self) -> impl Iterator<Item = &GroupMember> {
        self.groups.iter().flatten()
    }

    pub fn member_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.groups.iter().map(|g| xi(g)).collect()
    }

    /// `(sum xi_n^2)^(1/2)`.
    pub fn big_xi(&self) -> f64 {
        self.xi().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of `alpha_hat` over all groups.
    pub fn alpha_hat_total(&self) -> CMat {
        let m = self.t1.nrows();
        self.groups.iter().map(|g| alpha_hat(g, m)).fold(linalg::zeros(m), |a, b| a + b)
    }
}

/// `sum (-1)^j T^{-1} alpha' T^{-1}` over a group.
pub fn alpha_hat(group: &[GroupMember], m: usize) -> CMat {
    group.iter().map(GroupMember::weighted_alpha).fold(linalg::zeros(m), |a, b| a + b)
}

/// `sum |rho - theta| + ||alpha_hat||` over pairs of a group.
pub fn xi(group: &[GroupMember]) -> f64 {
    let m = group.first().map_or(0, |g| g.tn.nrows());
    let mut spread = 0.0;
    for a in group {
        for b in group {
            spread += (a.rho - b.rho).abs();
        }
    }
    spread + norm2(&alpha_hat(group, m))
}

/// Norm of a function on a group: the largest value norm or difference quotient.
pub fn group_function_norm(group: &[GroupMember], values: &[CMat]) -> f64 {
    let mut out = values.iter().map(norm2).fold(0.0, f64::max);
    for (a, fa) in group.iter().zip(values) {
        for (b, fb) in group.iter().zip(values) {
            if a.rho != b.rho {
                out = out.max(norm2(&(fa - fb)) / (a.rho - b.rho).abs());
            }
        }
    }
    out
}

fn normalizer(t1: &CMat, rho: f64) -> (CMat, CMat) {
    let m = t1.nrows();
    if rho == 0.0 {
        return (identity(m), identity(m));
    }
    let t1p = identity(m) - t1;
    (t1 + &t1p * c(rho), t1 + t1p * c(1.0 / rho))
}

/// Splits the square roots of `hybrid` (j = 0) and `model` (j = 1) into the
/// first group (levels `<= n0`) and one group per later level and shift class,
/// with the smallest `n0` that keeps the groups disjoint.
pub fn group_eigenvalues(
    hybrid: &SpectralDataSet,
    model: &SpectralDataSet,
    t1: &CMat,
    consts: &ModelConstants,
    n0_override: Option<usize>,
) -> Result<EigenGrouping> {
    let mut members = Vec::with_capacity(hybrid.entries.len() + model.entries.len());
    for (set, j) in [(hybrid, 0u8), (model, 1u8)] {
        for e in &set.entries {
            if e.lambda < 0.0 {
                return Err(SlqError::NegativeShiftedEigenvalue { lambda: e.lambda, shift: set.shift });
            }
            let rho = e.lambda.sqrt();
            let (tn, tn_inv) = normalizer(t1, rho);
            members.push(GroupMember {
                index: e.index,
                j,
                rho,
                lambda: e.lambda,
                alpha_prime: e.alpha_prime.clone(),
                tn,
                tn_inv,
            });
        }
    }
    let n_top = members.iter().map(|g| g.index.n).max().unwrap_or(0).max(1);
    let gap = consts.gap();
    let candidates: Vec<usize> = match n0_override {
        Some(n0) => vec![n0.max(1)],
        None => (1..=n_top).collect(),
    };
    for n0 in candidates {
        let close = members
            .iter()
            .filter(|g| g.index.n > n0)
            .all(|g| (g.rho - (g.index.n as f64 + consts.r(g.index.k))).abs() < 0.25 * gap);
        if !close {
            continue;
        }
        let groups = split(&members, n0, consts);
        let ordered = groups.windows(2).all(|w| {
            let hi = w[0].iter().map(|g| g.rho).fold(f64::NEG_INFINITY, f64::max);
            let lo = w[1].iter().map(|g| g.rho).fold(f64::INFINITY, f64::min);
            hi < lo
        });
        if ordered {
            return Ok(EigenGrouping { n0, groups, t1: t1.clone() });
        }
    }
    Err(SlqError::NoValidN0 { limit: n0_override.unwrap_or(n_top) })
}

fn split(members: &[GroupMember], n0: usize, consts: &ModelConstants) -> Vec<Vec<GroupMember>> {
    let mut groups: Vec<Vec<GroupMember>> = vec![members.iter().filter(|g| g.index.n <= n0).cloned().collect()];
    let n_top = members.iter().map(|g| g.index.n).max().unwrap_or(0);
    for n in n0 + 1..=n_top {
        for (s, _) in consts.cal_j.iter().enumerate() {
            let g: Vec<GroupMember> = members
                .iter()
                .filter(|g| g.index.n == n && consts.class_of(g.index.k) == s)
                .cloned()
                .collect();
            if !g.is_empty() {
                groups.push(g);
            }
        }
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// `phi_tilde(x, lambda) T = cos(rho x) T1 + sin(rho x) T1perp`, or `T1 + x T1perp` at `rho = 0`.
fn model_block(t1: &CMat, t1p: &CMat, rho: f64, x: f64) -> CMat {
    if rho == 0.0 {
        t1 + t1p * c(x)
    } else {
        t1 * c((rho * x).cos()) + t1p * c((rho * x).sin())
    }
}

/// Per-member factors reused at every `x`.
struct Prepared {
    rho: Vec<f64>,
    /// `rho`, or 1 when `rho = 0`.
    tau: Vec<f64>,
    /// `(-1)^j T^{-1} alpha' T1` and `(-1)^j T^{-1} alpha' T1perp`, `None` when `alpha' = 0`.
    factors: Vec<Option<(CMat, CMat)>>,
    weighted: Vec<CMat>,
    t1: CMat,
    t1p: CMat,
}

impl Prepared {
    fn new(grouping: &EigenGrouping) -> Self {
        let t1 = grouping.t1.clone();
        let t1p = identity(t1.nrows()) - &t1;
        let members: Vec<&GroupMember> = grouping.members().collect();
        Prepared {
            rho: members.iter().map(|g| g.rho).collect(),
            tau: members.iter().map(|g| if g.rho == 0.0 { 1.0 } else { g.rho }).collect(),
            factors: members
                .iter()
                .map(|g| {
                    (g.alpha_prime.iter().any(|z| z.norm() > 0.0)).then(|| {
                        let p = &g.tn_inv * &g.alpha_prime * c(g.sign());
                        (&p * &t1, &p * &t1p)
                    })
                })
                .collect(),
            weighted: members.iter().map(|g| g.weighted_alpha()).collect(),
            t1,
            t1p,
        }
    }

    fn len(&self) -> usize {
        self.rho.len()
    }
}

/// `I + R(x)` and the right-hand side `phi_tilde(x)`, one `m x m` block per member.
#[derive(Clone, Debug)]
pub struct MainSystem {
    pub x: f64,
    /// Block `(u, v)` is `(-1)^j T_u^{-1} alpha'_u D(x, lambda_u, lambda_v) T_v`.
    pub r: CMat,
    /// Block row `v` is `phi_tilde_v(x)`.
    pub rhs: Vec<CMat>,
}

fn assemble(prep: &Prepared, x: f64) -> MainSystem {
    let m = prep.t1.nrows();
    let k = prep.len();
    let mut r = CMat::zeros(k * m, k * m);
    for u in 0..k {
        let Some((a, b)) = &prep.factors[u] else { continue };
        for v in 0..k {
            let (cc, ss) = model_d_coeffs_real(x, prep.rho[u], prep.rho[v]);
            let block = a * c(cc) + b * c(ss * prep.tau[v]);
            r.view_mut((u * m, v * m), (m, m)).copy_from(&block);
        }
    }
    let rhs = (0..k).map(|v| model_block(&prep.t1, &prep.t1p, prep.rho[v], x)).collect();
    MainSystem { x, r, rhs }
}

pub fn assemble_main_system(x: f64, grouping: &EigenGrouping) -> MainSystem {
    assemble(&Prepared::new(grouping), x)
}

/// Solution of `phi (I + R) = phi_tilde` at one `x`.
#[derive(Clone, Debug)]
pub struct MainSolution {
    pub x: f64,
    /// `phi_u(x)`, one block per member in grouping order.
    pub blocks: Vec<CMat>,
    /// 1-norm condition estimate of `I + R`.
    pub cond: f64,
    /// `max |phi (I + R) - phi_tilde|` relative to `max(1, |phi_tilde|)`.
    pub residual: f64,
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn solve_system(sys: &MainSystem, m: usize) -> MainSolution {
    let n = sys.r.nrows();
    let k = n / m;
    // phi (I + R) = phi_tilde  <=>  (I + R)^T phi^T = phi_tilde^T
    let s = (CMat::identity(n, n) + &sys.r).transpose();
    let mut rhs = CMat::zeros(n, m);
    for (v, b) in sys.rhs.iter().enumerate() {
        rhs.view_mut((v * m, 0), (m, m)).copy_from(&b.transpose());
    }
    let lu = s.clone().lu();
    let sol = lu.solve(&rhs).unwrap_or_else(|| CMat::from_element(n, m, c(f64::NAN)));
    let blocks = (0..k).map(|u| sol.view((u * m, 0), (m, m)).transpose()).collect();
    let scale = rhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residual = (&s * &sol - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    let cond = one_norm(&s) * inverse_one_norm_estimate(&lu, n);
    MainSolution { x: sys.x, blocks, cond, residual }
}

/// Hager's estimate of `||A^{-1}||_1` from an LU factorization of `A`.
fn inverse_one_norm_estimate(lu: &nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>, n: usize) -> f64 {
    let l = lu.l();
    let u = lu.u();
    let p = lu.p();
    let solve = |b: &CMat| lu.solve(b);
    // A = P^T L U, so A^H y = b is U^H L^H (P y) = b.
    let solve_adjoint = |b: &CMat| -> Option<CMat> {
        let w = u.ad_solve_upper_triangular(b)?;
        let mut z = l.ad_solve_lower_triangular(&w)?;
        p.inv_permute_rows(&mut z);
        Some(z)
    };
    let mut x = CMat::from_element(n, 1, c(1.0 / n as f64));
    let mut est = 0.0;
    for iter in 0..5 {
        let Some(y) = solve(&x) else { return f64::INFINITY };
        let norm: f64 = y.iter().map(|z| z.norm()).sum();
        if iter > 0 && norm <= est {
            break;
        }
        est = norm;
        let xi = y.map(|z| if z.norm() == 0.0 { c(1.0) } else { z / z.norm() });
        let Some(z) = solve_adjoint(&xi) else { return f64::INFINITY };
        let (j, zj) = z.iter().enumerate().map(|(i, v)| (i, v.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = z.iter().zip(x.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        if iter > 0 && zj <= ztx {
            break;
        }
        x = CMat::zeros(n, 1);
        x[(j, 0)] = c(1.0);
    }
    est
}

/// Solves the truncated main equation at every grid point.
pub fn solve_main_equation(grid: &[f64], grouping: &EigenGrouping, cond_limit: f64) -> Result<Vec<MainSolution>> {
    let prep = Prepared::new(grouping);
    let m = prep.t1.nrows();
    grid.par_iter()
        .map(|&x| {
            let sol = solve_system(&assemble(&prep, x), m);
            if !(sol.cond <= cond_limit) {
                return Err(SlqError::IllConditioned { x, cond: sol.cond });
            }
            Ok(sol)
        })
        .collect()
}

/// `sum (-1)^j phi_u T^{-1} alpha' T^{-1} phi_tilde_u` at one point.
fn series_at(prep: &Prepared, sol: &MainSolution) -> CMat {
    let m = prep.t1.nrows();
    let mut acc = linalg::zeros(m);
    for (u, phi) in sol.blocks.iter().enumerate() {
        if prep.factors[u].is_some() {
            acc += phi * &prep.weighted[u] * model_block(&prep.t1, &prep.t1p, prep.rho[u], sol.x);
        }
    }
    acc
}

fn compensator(t1: &CMat, alpha_hat: &CMat) -> CMat {
    let t1p = identity(t1.nrows()) - t1;
    t1 * alpha_hat * t1 + &t1p * alpha_hat * &t1p
}

/// `sigma^N(x) = -2 (series(x) - (T1 a T1 + T1perp a T1perp) / 2)` with `a` the
/// total `alpha_hat`. Returns the Hermitian samples and the largest discarded
/// anti-Hermitian part.
pub fn reconstruct_sigma(grouping: &EigenGrouping, solution: &[MainSolution]) -> (Vec<CMat>, f64) {
    let prep = Prepared::new(grouping);
    let comp = compensator(&grouping.t1, &grouping.alpha_hat_total());
    let mut anti: f64 = 0.0;
    let values = solution
        .iter()
        .map(|sol| {
            let raw = series_at(&prep, sol) * c(-2.0) + &comp;
            let h = hermitian_part(&raw);
            anti = anti.max(norm2(&(&raw - &h)));
            h
        })
        .collect();
    (values, anti)
}

/// `H2^N = T2 (series(pi) - (T1 a T1 + T1perp a T1perp)) T2` and the gauge
/// constant `C^N = T1perp a T1perp`.
pub fn reconstruct_h2(grouping: &EigenGrouping, at_pi: &MainSolution, t2: &CMat) -> (CMat, CMat, f64) {
    let prep = Prepared::new(grouping);
    let a = grouping.alpha_hat_total();
    let raw = t2 * (series_at(&prep, at_pi) - compensator(&grouping.t1, &a)) * t2;
    let h2 = hermitian_part(&raw);
    let anti = norm2(&(&raw - &h2));
    let t1p = identity(t2.nrows()) - &grouping.t1;
    (h2, hermitian_part(&(&t1p * a * &t1p)), anti)
}

#[derive(Clone, Debug, Default)]
pub struct ReconstructionDiagnostics {
    pub cond: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_cond: f64,
    pub max_residual: f64,
    pub sigma_anti_hermitian: f64,
    pub h2_anti_hermitian: f64,
    pub xi: Vec<f64>,
    pub big_xi: f64,
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    /// `sigma^N` on the grid, shift removed.
    pub sigma: Sigma,
    pub h2: CMat,
    /// Gauge constant `T1perp a T1perp`. Both `(sigma, H2)` and
    /// `(sigma - C, H2 + T2 C T2)` carry the input data; the latter also has the
    /// Weyl matrix [`ReconstructionResult::weyl_partial_fraction`].
    pub cn: CMat,
    pub g_n: usize,
    pub n0: usize,
    pub shift: f64,
    pub t1: CMat,
    pub t2: CMat,
    pub grouping: EigenGrouping,
    pub diagnostics: ReconstructionDiagnostics,
}

impl ReconstructionResult {
    /// `sigma^N - C^N`.
    pub fn sigma_star(&self) -> Sigma {
        self.sigma.add_constant(&-&self.cn)
    }

    /// `H2^N + T2 C^N T2`.
    pub fn h2_star(&self) -> CMat {
        &self.h2 + &self.t2 * &self.cn * &self.t2
    }

    /// `sigma^N` evaluated exactly by solving the main equation at each
    /// requested `x`, shift removed. Free of grid interpolation error.
    pub fn sigma_exact(&self) -> Sigma {
        let prep = Prepared::new(&self.grouping);
        let comp = compensator(&self.t1, &self.grouping.alpha_hat_total());
        let m = self.t1.nrows();
        let shift = self.shift;
        let sup = self.sigma.sup_norm() * 1.5 + 1.0;
        Sigma::Function(SigmaFn::new(m, sup, move |x| {
            let sol = solve_system(&assemble(&prep, x), m);
            hermitian_part(&(series_at(&prep, &sol) * c(-2.0) + &comp)) - identity(m) * c(shift * x)
        }))
    }

    /// [`ReconstructionResult::sigma_exact`] with the gauge constant applied.
    pub fn sigma_star_exact(&self) -> Sigma {
        self.sigma_exact().add_constant(&-&self.cn)
    }

    /// `M_model(lambda) + sum (-1)^j alpha' / (lambda - lambda_u)` in the
    /// unshifted frame; the Weyl matrix of `(sigma_star, h2_star)`.
    pub fn weyl_partial_fraction(&self, lambda: Complex64) -> Result<CMat> {
        let shifted = lambda + self.shift;
        let mut acc = model_weyl(shifted, &self.t1, &self.t2)?;
        for g in self.grouping.members() {
            acc += &g.alpha_prime * (c(g.sign()) / (shifted - g.lambda));
        }
        Ok(acc)
    }
}

/// Reconstruction from data: shift, model, hybrid with cut `n_cut`, grouping,
/// main equation on a uniform grid, series and unshift.
pub fn run_algorithm1(
    data: &SpectralDataSet,
    t1: &CMat,
    t2: &CMat,
    n_cut: usize,
    opts: &InverseOptions,
) -> Result<ReconstructionResult> {
    let consts = model_constants(t1, t2)?;
    let shift = opts.shift.unwrap_or_else(|| default_shift(data));
    let mut shifted = shift_spectrum(data, shift)?;
    for e in &mut shifted.entries {
        if e.lambda.abs() < 1e-12 {
            e.lambda = 0.0;
        }
    }
    let model = model_spectral_data(t1, &consts, n_cut);
    let hybrid = hybrid_data(&shifted, &model, n_cut, opts.cluster_tol)?;
    let grouping = group_eigenvalues(&hybrid, &model, t1, &consts, opts.n0)?;
    let grid = uniform_grid(opts.grid_nodes.max(3));
    let solution = solve_main_equation(&grid, &grouping, opts.cond_limit)?;
    let (values, sigma_anti) = reconstruct_sigma(&grouping, &solution);
    let (h2, cn, h2_anti) = reconstruct_h2(&grouping, solution.last().expect("nonempty grid"), t2);
    let (sigma, h2) = unshift_reconstruction(&Sigma::Grid { x: grid, values }, &h2, t2, shift);
    let cond: Vec<f64> = solution.iter().map(|s| s.cond).collect();
    let residual: Vec<f64> = solution.iter().map(|s| s.residual).collect();
    let diagnostics = ReconstructionDiagnostics {
        max_cond: cond.iter().copied().fold(0.0, f64::max),
        max_residual: residual.iter().copied().fold(0.0, f64::max),
        cond,
        residual,
        sigma_anti_hermitian: sigma_anti,
        h2_anti_hermitian: h2_anti,
        xi: grouping.xi(),
        big_xi: grouping.big_xi(),
    };
    Ok(ReconstructionResult {
        sigma,
        h2,
        cn,
        g_n: grouping.groups.len(),
        n0: grouping.n0,
        shift,
        t1: t1.clone(),
        t2: t2.clone(),
        grouping,
        diagnostics,
    })
}
