//! Problem definition: potential, boundary projectors, validation, gauge
//! transform and the spectral index set.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Result, SlqError};
use crate::linalg::{
    self, hermitian_deviation, identity, kernel_intersection_dim, norm2, projector_deviation, CMat,
};

/// Default tolerance for projector and Hermiticity checks.
pub const DEFAULT_STRUCTURE_TOL: f64 = 1e-10;

/// Hermitian matrix function on `[0, pi]`.
#[derive(Clone, Debug)]
pub enum Sigma {
    /// Uniform or non-uniform samples, linearly interpolated.
    Grid { x: Vec<f64>, values: Vec<CMat> },
    Constant(CMat),
    /// `sum_j cos[j] cos(j x) + sum_j sin[j] sin(j x)`.
    Trig { cos: Vec<CMat>, sin: Vec<CMat> },
    /// Smooth potential evaluated on demand.
    Function(SigmaFn),
}

/// Callable potential with its dimension and a bound on its norm.
#[derive(Clone)]
pub struct SigmaFn {
    pub m: usize,
    pub sup_norm: f64,
    pub f: Arc<dyn Fn(f64) -> CMat + Send + Sync>,
}

impl fmt::Debug for SigmaFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigmaFn {{ m: {}, sup_norm: {} }}", self.m, self.sup_norm)
    }
}

impl SigmaFn {
    pub fn new(m: usize, sup_norm: f64, f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        SigmaFn { m, sup_norm, f: Arc::new(f) }
    }
}

impl Sigma {
    pub fn zero(m: usize) -> Self {
        Sigma::Constant(linalg::zeros(m))
    }

    /// Samples `f` on a uniform grid of `nodes` points over `[0, pi]`.
    pub fn sample_uniform(nodes: usize, f: impl Fn(f64) -> CMat) -> Self {
        let x = uniform_grid(nodes);
        let values = x.iter().map(|&t| f(t)).collect();
        Sigma::Grid { x, values }
    }

    pub fn eval(&self, x: f64) -> CMat {
        let mut hint = 0;
        self.eval_with_hint(x, &mut hint)
    }

    /// Evaluation that reuses the last grid cell as a starting guess.
    pub fn eval_with_hint(&self, x: f64, hint: &mut usize) -> CMat {
        match self {
            Sigma::Constant(v) => v.clone(),
            Sigma::Trig { cos, sin } => {
                let m = cos.first().or(sin.first()).map_or(0, |a| a.nrows());
                let mut out = linalg::zeros(m);
                for (j, a) in cos.iter().enumerate() {
                    out += a * linalg::c((j as f64 * x).cos());
                }
                for (j, b) in sin.iter().enumerate() {
                    out += b * linalg::c((j as f64 * x).sin());
                }
                out
            }
            Sigma::Grid { x: grid, values } => {
                let i = locate_cell(grid, x, hint);
                let (x0, x1) = (grid[i], grid[i + 1]);
                let w = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                &values[i] * linalg::c(1.0 - w) + &values[i + 1] * linalg::c(w)
            }
            Sigma::Function(g) => (g.f)(x),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Sigma::Constant(v) => v.nrows(),
            Sigma::Trig { cos, sin } => cos.first().or(sin.first()).map_or(0, |a| a.nrows()),
            Sigma::Grid { values, .. } => values.first().map_or(0, |a| a.nrows()),
            Sigma::Function(g) => g.m,
        }
    }

    /// Upper bound on `max_x ||sigma(x)||`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Sigma::Constant(v) => norm2(v),
            Sigma::Trig { cos, sin } => cos.iter().chain(sin.iter()).map(norm2).sum(),
            Sigma::Grid { values, .. } => values.iter().map(norm2).fold(0.0, f64::max),
            Sigma::Function(g) => g.sup_norm,
        }
    }

    /// Points where the integrator must stop because sigma is only piecewise smooth.
    pub fn breakpoints(&self) -> Option<&[f64]> {
        match self {
            Sigma::Grid { x, .. } => Some(x),
            _ => None,
        }
    }

    /// Adds a constant matrix.
    pub fn add_constant(&self, h: &CMat) -> Sigma {
        match self {
            Sigma::Constant(v) => Sigma::Constant(v + h),
            Sigma::Trig { cos, sin } => {
                let mut cos = cos.clone();
                if cos.is_empty() {
                    cos.push(h.clone());
                } else {
                    cos[0] += h;
                }
                Sigma::Trig { cos, sin: sin.clone() }
            }
            Sigma::Grid { x, values } => Sigma::Grid {
                x: x.clone(),
                values: values.iter().map(|v| v + h).collect(),
            },
            Sigma::Function(g) => {
                let (f, h) = (g.f.clone(), h.clone());
                Sigma::Function(SigmaFn::new(g.m, g.sup_norm + norm2(&h), move |x| f(x) + &h))
            }
        }
    }

    /// Sample on the given grid.
    pub fn to_grid(&self, x: &[f64]) -> Sigma {
        let mut hint = 0;
        Sigma::Grid {
            x: x.to_vec(),
            values: x.iter().map(|&t| self.eval_with_hint(t, &mut hint)).collect(),
        }
    }
}

fn locate_cell(grid: &[f64], x: f64, hint: &mut usize) -> usize {
    let last = grid.len() - 2;
    let mut i = (*hint).min(last);
    if x >= grid[i] && x <= grid[i + 1] {
        return i;
    }
    if i < last && x >= grid[i + 1] && x <= grid[i + 2] {
        *hint = i + 1;
        return i + 1;
    }
    i = match grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
        Ok(k) => k.min(last),
        Err(k) => k.saturating_sub(1).min(last),
    };
    *hint = i;
    i
}

pub fn uniform_grid(nodes: usize) -> Vec<f64> {
    assert!(nodes >= 2);
    (0..nodes)
        .map(|i| {
            if i + 1 == nodes {
                PI
            } else {
                PI * i as f64 / (nodes - 1) as f64
            }
        })
        .collect()
}

/// The data `(sigma, T1, T2, H2)` defining one boundary value problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub m: usize,
    pub t1: CMat,
    pub t2: CMat,
    pub h2: CMat,
    pub sigma: Sigma,
}

impl ProblemSpec {
    pub fn new(t1: CMat, t2: CMat, h2: CMat, sigma: Sigma) -> Self {
        ProblemSpec { m: t1.nrows(), t1, t2, h2, sigma }
    }

    /// `L(0, T1, T2, 0)`.
    pub fn model(t1: &CMat, t2: &CMat) -> Self {
        let m = t1.nrows();
        ProblemSpec::new(t1.clone(), t2.clone(), linalg::zeros(m), Sigma::zero(m))
    }

    pub fn t1_perp(&self) -> CMat {
        identity(self.m) - &self.t1
    }

    pub fn t2_perp(&self) -> CMat {
        identity(self.m) - &self.t2
    }
}

/// A problem whose structural invariants have been checked.
#[derive(Clone, Debug)]
pub struct ValidatedProblem {
    pub spec: ProblemSpec,
    pub t1_perp: CMat,
    pub t2_perp: CMat,
    /// dim(Ker T1 ∩ Ker T2).
    pub p_perp: usize,
}

impl std::ops::Deref for ValidatedProblem {
    type Target = ProblemSpec;
    fn deref(&self) -> &ProblemSpec {
        &self.spec
    }
}

pub fn validate_problem(spec: &ProblemSpec, tol: f64) -> Result<ValidatedProblem> {
    let m = spec.m;
    if m == 0 {
        return Err(SlqError::InvalidProblem("dimension m must be positive".into()));
    }
    for (name, a) in [("T1", &spec.t1), ("T2", &spec.t2), ("H2", &spec.h2)] {
        if a.nrows() != m || a.ncols() != m {
            return Err(SlqError::InvalidProblem(format!("{name} is not {m}x{m}")));
        }
        if !linalg::is_finite(a) {
            return Err(SlqError::InvalidProblem(format!("{name} has non-finite entries")));
        }
    }
    for (name, t) in [("T1", &spec.t1), ("T2", &spec.t2)] {
        let deviation = projector_deviation(t);
        if deviation > tol {
            return Err(SlqError::NonProjector { name, deviation });
        }
    }
    let h2_dev = hermitian_deviation(&spec.h2).max(norm2(&(&spec.t2 * &spec.h2 * &spec.t2 - &spec.h2)));
    if h2_dev > tol {
        return Err(SlqError::H2GaugeViolation { deviation: h2_dev });
    }
    validate_sigma(&spec.sigma, m, tol)?;
    Ok(ValidatedProblem {
        t1_perp: spec.t1_perp(),
        t2_perp: spec.t2_perp(),
        p_perp: kernel_intersection_dim(&spec.t1, &spec.t2, tol.max(1e-12)),
        spec: spec.clone(),
    })
}

fn validate_sigma(sigma: &Sigma, m: usize, tol: f64) -> Result<()> {
    let check = |a: &CMat, x: f64| -> Result<()> {
        if a.nrows() != m || a.ncols() != m {
            return Err(SlqError::InvalidProblem(format!("sigma sample at x = {x} is not {m}x{m}")));
        }
        if !linalg::is_finite(a) {
            return Err(SlqError::InvalidProblem(format!("sigma has non-finite entries at x = {x}")));
        }
        let deviation = hermitian_deviation(a);
        if deviation > tol {
            return Err(SlqError::NonHermitianSigma { x, deviation });
        }
        Ok(())
    };
    match sigma {
        Sigma::Constant(v) => check(v, 0.0),
        Sigma::Trig { cos, sin } => {
            if cos.is_empty() && sin.is_empty() {
                return Err(SlqError::InvalidProblem("trigonometric sigma without coefficients".into()));
            }
            cos.iter().chain(sin.iter()).try_for_each(|a| check(a, f64::NAN))
        }
        Sigma::Grid { x, values } => {
            if x.len() < 2 || x.len() != values.len() {
                return Err(SlqError::InvalidProblem("sigma grid and values lengths differ".into()));
            }
            if x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(SlqError::InvalidProblem("sigma grid is not strictly increasing".into()));
            }
            if x[0].abs() > 1e-9 || (x[x.len() - 1] - PI).abs() > 1e-9 {
                return Err(SlqError::InvalidProblem("sigma grid must cover [0, pi]".into()));
            }
            x.iter().zip(values).try_for_each(|(&t, a)| check(a, t))
        }
        Sigma::Function(g) => {
            let probe = 17;
            (0..probe).try_for_each(|i| {
                let t = PI * i as f64 / (probe - 1) as f64;
                check(&(g.f)(t), t)
            })
        }
    }
}

/// Constant Hermitian `H1d = T1perp H1d T1perp` leaving the spectral data unchanged.
#[derive(Clone, Debug)]
pub struct GaugeTransform {
    pub h1d: CMat,
}

impl GaugeTransform {
    pub fn deviation(&self, t1: &CMat) -> f64 {
        let t1p = identity(t1.nrows()) - t1;
        hermitian_deviation(&self.h1d).max(norm2(&(&t1p * &self.h1d * &t1p - &self.h1d)))
    }
}

/// `sigma -> sigma + H1d`, `H2 -> H2 - T2 H1d T2`.
pub fn apply_gauge(spec: &ProblemSpec, g: &GaugeTransform) -> Result<ProblemSpec> {
    let deviation = g.deviation(&spec.t1);
    if deviation > DEFAULT_STRUCTURE_TOL || g.h1d.nrows() != spec.m {
        return Err(SlqError::InvalidGauge { deviation });
    }
    Ok(ProblemSpec {
        m: spec.m,
        t1: spec.t1.clone(),
        t2: spec.t2.clone(),
        h2: &spec.h2 - &spec.t2 * &g.h1d * &spec.t2,
        sigma: spec.sigma.add_constant(&g.h1d),
    })
}

/// Index `(n, k)`: level `n >= 0`, branch `k` in `1..=m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpectralIndex {
    pub n: usize,
    pub k: usize,
}

impl SpectralIndex {
    pub fn new(n: usize, k: usize) -> Self {
        SpectralIndex { n, k }
    }
}

/// Levels `1..=n_max` with all branches, plus `(0, k)` for `k > p_perp`.
pub fn build_index_set(m: usize, t1: &CMat, t2: &CMat, n_max: usize) -> Vec<SpectralIndex> {
    let p_perp = kernel_intersection_dim(t1, t2, 1e-10);
    index_set_with_p_perp(m, p_perp, n_max)
}

pub fn index_set_with_p_perp(m: usize, p_perp: usize, n_max: usize) -> Vec<SpectralIndex> {
    let mut out: Vec<SpectralIndex> = (p_perp + 1..=m).map(|k| SpectralIndex::new(0, k)).collect();
    for n in 1..=n_max {
        out.extend((1..=m).map(|k| SpectralIndex::new(n, k)));
    }
    out
}

/// Builds a complex matrix from separate real and imaginary parts.
pub fn hermitian_from_parts(re: &[&[f64]], im: &[&[f64]]) -> CMat {
    let m = re.len();
    CMat::from_fn(m, m, |i, j| Complex64::new(re[i][j], im[i][j]))
}
