//! Adaptive Dormand-Prince 5(4) integration of the quasi-derivative system
//!
//! ```text
//! Y'     = sigma Y + Y1
//! Y1'    = -sigma Y1 - sigma^2 Y - lambda Y  =  -sigma Y' - lambda Y
//! ```
//!
//! for an `m x c` block of columns. The state is stored flat and row-major:
//! the first `m*c` entries hold `Y`, the next `m*c` hold `Y1 = Y^[1]`.

use num_complex::Complex64;

use crate::error::{Result, SlqError};
use crate::problem::Sigma;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 2_000_000;

/// Sigma restricted to one smooth segment, flattened for fast evaluation.
enum Sampler {
    Constant(Vec<Complex64>),
    /// `s0 + (x - x0) * slope`
    Linear { x0: f64, s0: Vec<Complex64>, slope: Vec<Complex64> },
    Trig { cos: Vec<Vec<Complex64>>, sin: Vec<Vec<Complex64>> },
    Function(std::sync::Arc<dyn Fn(f64) -> crate::linalg::CMat + Send + Sync>),
}

fn flat(a: &crate::linalg::CMat) -> Vec<Complex64> {
    let m = a.nrows();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(a[(i, j)]);
        }
    }
    out
}

impl Sampler {
    fn eval(&self, x: f64, out: &mut [Complex64]) {
        match self {
            Sampler::Constant(v) => out.copy_from_slice(v),
            Sampler::Linear { x0, s0, slope } => {
                let d = x - x0;
                for ((o, a), b) in out.iter_mut().zip(s0).zip(slope) {
                    *o = a + b * d;
                }
            }
            Sampler::Function(f) => out.copy_from_slice(&flat(&f(x))),
            Sampler::Trig { cos, sin } => {
                out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
                for (j, a) in cos.iter().enumerate() {
                    let w = (j as f64 * x).cos();
                    out.iter_mut().zip(a).for_each(|(o, v)| *o += v * w);
                }
                for (j, b) in sin.iter().enumerate() {
                    let w = (j as f64 * x).sin();
                    out.iter_mut().zip(b).for_each(|(o, v)| *o += v * w);
                }
            }
        }
    }
}

/// Integration workspace for one `(sigma, lambda)` pair.
pub struct Propagator<'a> {
    sigma: &'a Sigma,
    lambda: Complex64,
    m: usize,
    cols: usize,
    tol: f64,
}

impl<'a> Propagator<'a> {
    pub fn new(sigma: &'a Sigma, lambda: Complex64, cols: usize, tol: f64) -> Self {
        Propagator { sigma, lambda, m: sigma.dim(), cols, tol }
    }

    fn sampler_for(&self, a: f64, b: f64) -> Sampler {
        match self.sigma {
            Sigma::Constant(v) => Sampler::Constant(flat(v)),
            Sigma::Trig { cos, sin } => Sampler::Trig {
                cos: cos.iter().map(flat).collect(),
                sin: sin.iter().map(flat).collect(),
            },
            Sigma::Function(g) => Sampler::Function(g.f.clone()),
            Sigma::Grid { .. } => {
                let s_a = self.sigma.eval(a);
                let s_b = self.sigma.eval(b);
                let slope = (s_b - &s_a) / Complex64::new(b - a, 0.0);
                Sampler::Linear { x0: a, s0: flat(&s_a), slope: flat(&slope) }
            }
        }
    }

    /// Integrates from `x = 0` with initial state `y0` and returns the state at
    /// every point of `outputs` (sorted ascending, inside `[0, pi]`).
    pub fn run(&self, y0: &[Complex64], outputs: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let n = 2 * self.m * self.cols;
        assert_eq!(y0.len(), n);
        let mut stops: Vec<f64> = outputs.to_vec();
        if let Some(bp) = self.sigma.breakpoints() {
            stops.extend_from_slice(bp);
        }
        stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
        stops.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let mut results = Vec::with_capacity(outputs.len());
        let mut out_iter = outputs.iter().peekable();
        let mut y = y0.to_vec();
        let mut x = 0.0;
        let rho = self.lambda.norm().sqrt();
        let mut h = 0.25 / (1.0 + rho);
        let mut ws = Workspace::new(n, self.m);

        for &stop in &stops {
            if stop > x + 1e-14 {
                let sampler = self.sampler_for(x, stop);
                h = self.segment(&sampler, &mut ws, &mut y, x, stop, h)?;
                x = stop;
            }
            while let Some(&&o) = out_iter.peek() {
                if (o - x).abs() < 1e-12 || o < x {
                    results.push(y.clone());
                    out_iter.next();
                } else {
                    break;
                }
            }
        }
        Ok(results)
    }

    fn rhs(&self, sampler: &Sampler, x: f64, y: &[Complex64], dy: &mut [Complex64], s: &mut [Complex64]) {
        let (m, c) = (self.m, self.cols);
        let mc = m * c;
        sampler.eval(x, s);
        let (yv, y1) = y.split_at(mc);
        let (dyv, dy1) = dy.split_at_mut(mc);
        // dY = sigma Y + Y1
        for i in 0..m {
            for j in 0..c {
                let mut acc = y1[i * c + j];
                for k in 0..m {
                    acc += s[i * m + k] * yv[k * c + j];
                }
                dyv[i * c + j] = acc;
            }
        }
        // dY1 = -sigma dY - lambda Y
        for i in 0..m {
            for j in 0..c {
                let mut acc = -self.lambda * yv[i * c + j];
                for k in 0..m {
                    acc -= s[i * m + k] * dyv[k * c + j];
                }
                dy1[i * c + j] = acc;
            }
        }
    }

    fn segment(
        &self,
        sampler: &Sampler,
        ws: &mut Workspace,
        y: &mut Vec<Complex64>,
        a: f64,
        b: f64,
        h_start: f64,
    ) -> Result<f64> {
        let mut x = a;
        let mut h = h_start;
        self.rhs(sampler, x, y, &mut ws.k1, &mut ws.s);
        let mut steps = 0usize;
        while x < b - 1e-15 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(SlqError::IntegratorFailure { x });
            }
            let clipped = x + h >= b - 1e-14;
            let hh = if clipped { b - x } else { h };
            let n = y.len();
            let Workspace { k1, k2, k3, k4, k5, k6, k7, tmp, ynew, s } = ws;
            for i in 0..n {
                tmp[i] = y[i] + k1[i] * (hh * A21);
            }
            self.rhs(sampler, x + C2 * hh, tmp, k2, s);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * hh;
            }
            self.rhs(sampler, x + C3 * hh, tmp, k3, s);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * hh;
            }
            self.rhs(sampler, x + C4 * hh, tmp, k4, s);
            for i in 0..n {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * hh;
            }
            self.rhs(sampler, x + C5 * hh, tmp, k5, s);
            for i in 0..n {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * hh;
            }
            self.rhs(sampler, x + hh, tmp, k6, s);
            for i in 0..n {
                ynew[i] = y[i]
                    + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * hh;
            }
            self.rhs(sampler, x + hh, ynew, k7, s);

            let mut err = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hh;
                let sc = self.tol * (1.0 + y[i].norm().max(ynew[i].norm()));
                err += e.norm_sqr() / (sc * sc);
            }
            let err = (err / n as f64).sqrt();
            if err <= 1.0 {
                x = if clipped { b } else { x + hh };
                std::mem::swap(y, ynew);
                std::mem::swap(k1, k7);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a step shortened to hit the segment end says little about the next one
                if !clipped || hh * fac < h {
                    h = hh * fac;
                }
            } else {
                h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-13 {
                    return Err(SlqError::IntegratorFailure { x });
                }
            }
        }
        Ok(h)
    }
}

struct Workspace {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    k5: Vec<Complex64>,
    k6: Vec<Complex64>,
    k7: Vec<Complex64>,
    tmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
    s: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Workspace {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            k5: z.clone(),
            k6: z.clone(),
            k7: z.clone(),
            tmp: z.clone(),
            ynew: z,
            s: vec![Complex64::new(0.0, 0.0); m * m],
        }
    }
}
