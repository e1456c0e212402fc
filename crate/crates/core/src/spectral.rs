//! Spectral data sets `{lambda_nk, alpha_nk}` and the eigenvalue shift.

use std::f64::consts::PI;

use crate::error::{Result, SlqError};
use crate::linalg::{self, CMat};
use crate::problem::{Sigma, SpectralIndex};

/// Relative tolerance used to decide that two eigenvalues coincide.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SpectralEntry {
    pub index: SpectralIndex,
    /// Eigenvalue, already including the data set's `shift`.
    pub lambda: f64,
    pub alpha: CMat,
    /// `alpha` on the first index of a group of equal eigenvalues, zero on the rest.
    pub alpha_prime: CMat,
    /// Size of the group of equal eigenvalues this entry belongs to.
    pub multiplicity: usize,
}

impl SpectralEntry {
    /// `sqrt(lambda)` when `lambda >= 0`.
    pub fn rho(&self) -> Option<f64> {
        (self.lambda >= 0.0).then(|| self.lambda.sqrt())
    }
}

#[derive(Clone, Debug)]
pub struct SpectralDataSet {
    pub m: usize,
    /// Constant `c` already added to every eigenvalue.
    pub shift: f64,
    pub entries: Vec<SpectralEntry>,
}

impl SpectralDataSet {
    /// Builds a data set from `(index, lambda, alpha)` triples: sorts by
    /// eigenvalue, groups equal eigenvalues within
    /// `cluster_tol * (1 + |lambda|)`, orders each group by index and assigns multiplicities and `alpha'`.
    pub fn from_records(
        m: usize,
        shift: f64,
        records: Vec<(SpectralIndex, f64, CMat)>,
        cluster_tol: f64,
    ) -> Self {
        let mut records = records;
        records.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let mut entries: Vec<SpectralEntry> = records
            .into_iter()
            .map(|(index, lambda, alpha)| SpectralEntry {
                index,
                lambda,
                alpha_prime: alpha.clone(),
                alpha,
                multiplicity: 1,
            })
            .collect();
        for (start, end) in cluster_ranges(&entries, cluster_tol) {
            entries[start..end].sort_by_key(|e| e.index);
            for e in &mut entries[start..end] {
                e.multiplicity = end - start;
            }
            for e in &mut entries[start + 1..end] {
                e.alpha_prime = linalg::zeros(m);
            }
        }
        SpectralDataSet { m, shift, entries }
    }

    /// Recomputes groups and `alpha'` after entries were edited.
    pub fn regroup(&self, cluster_tol: f64) -> Self {
        SpectralDataSet::from_records(
            self.m,
            self.shift,
            self.entries.iter().map(|e| (e.index, e.lambda, e.alpha.clone())).collect(),
            cluster_tol,
        )
    }

    pub fn max_level(&self) -> usize {
        self.entries.iter().map(|e| e.index.n).max().unwrap_or(0)
    }

    pub fn get(&self, index: SpectralIndex) -> Option<&SpectralEntry> {
        self.entries.iter().find(|e| e.index == index)
    }

    /// Entries in lexicographic index order.
    pub fn by_index(&self) -> Vec<&SpectralEntry> {
        let mut v: Vec<&SpectralEntry> = self.entries.iter().collect();
        v.sort_by_key(|e| e.index);
        v
    }

    pub fn indices(&self) -> Vec<SpectralIndex> {
        self.by_index().iter().map(|e| e.index).collect()
    }

    /// Eigenvalues without the shift.
    pub fn unshifted_lambda(&self, e: &SpectralEntry) -> f64 {
        e.lambda - self.shift
    }

    /// Ranges `[start, end)` of groups of equal eigenvalues.
    pub fn groups(&self, cluster_tol: f64) -> Vec<(usize, usize)> {
        cluster_ranges(&self.entries, cluster_tol)
    }

    pub fn min_lambda(&self) -> f64 {
        self.entries.iter().map(|e| e.lambda).fold(f64::INFINITY, f64::min)
    }
}

fn cluster_ranges(entries: &[SpectralEntry], cluster_tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=entries.len() {
        let split = i == entries.len() || {
            let (a, b) = (entries[i - 1].lambda, entries[i].lambda);
            (b - a).abs() > cluster_tol * (1.0 + a.abs().max(b.abs()))
        };
        if split {
            if i > start {
                out.push((start, i));
            }
            start = i;
        }
    }
    out
}

/// Shift used when none is requested: zero for nonnegative spectra, otherwise
/// the one that moves the lowest eigenvalue to 1.
pub fn default_shift(data: &SpectralDataSet) -> f64 {
    let lo = data.min_lambda();
    if lo >= 0.0 {
        0.0
    } else {
        1.0 - lo
    }
}

/// `lambda -> lambda + c` on every entry.
pub fn shift_spectrum(data: &SpectralDataSet, c: f64) -> Result<SpectralDataSet> {
    if let Some(e) = data.entries.iter().find(|e| e.lambda + c < 0.0) {
        return Err(SlqError::NegativeShiftedEigenvalue { lambda: e.lambda, shift: c });
    }
    let mut out = data.clone();
    out.shift += c;
    for e in &mut out.entries {
        e.lambda += c;
    }
    Ok(out)
}

/// Undoes a shift on a reconstruction: `sigma -> sigma - c x I`, `H2 -> H2 + c pi T2`.
pub fn unshift_reconstruction(sigma: &Sigma, h2: &CMat, t2: &CMat, c: f64) -> (Sigma, CMat) {
    let m = h2.nrows();
    let sigma = match sigma {
        Sigma::Grid { x, values } => Sigma::Grid {
            x: x.clone(),
            values: x
                .iter()
                .zip(values)
                .map(|(&t, v)| v - linalg::identity(m) * linalg::c(c * t))
                .collect(),
        },
        other => {
            let x = crate::problem::uniform_grid(501);
            return unshift_reconstruction(&other.to_grid(&x), h2, t2, c);
        }
    };
    (sigma, h2 + t2 * linalg::c(c * PI))
}

/// Adds `c x I` to a grid potential and `-c pi T2` to `H2`; the inverse of
/// [`unshift_reconstruction`].
pub fn shift_reconstruction(sigma: &Sigma, h2: &CMat, t2: &CMat, c: f64) -> (Sigma, CMat) {
    unshift_reconstruction(sigma, h2, t2, -c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, identity};

    fn scalar_set(lams: &[f64]) -> SpectralDataSet {
        SpectralDataSet::from_records(
            1,
            0.0,
            lams.iter()
                .enumerate()
                .map(|(n, &l)| (SpectralIndex::new(n, 1), l, diag(&[1.0])))
                .collect(),
            DEFAULT_CLUSTER_TOL,
        )
    }

    #[test]
    fn zero_shift_is_identity() {
        let d = scalar_set(&[0.0, 1.0, 4.0]);
        let s = shift_spectrum(&d, 0.0).unwrap();
        for (a, b) in d.entries.iter().zip(&s.entries) {
            assert_eq!(a.lambda, b.lambda);
        }
    }

    #[test]
    fn shift_to_zero() {
        let d = scalar_set(&[-1.0, 1.0, 4.0]);
        let s = shift_spectrum(&d, 1.0).unwrap();
        assert_eq!(s.entries[0].rho(), Some(0.0));
        assert_eq!(s.shift, 1.0);
        assert!(matches!(
            shift_spectrum(&d, 0.5).unwrap_err(),
            SlqError::NegativeShiftedEigenvalue { .. }
        ));
    }

    #[test]
    fn multiple_eigenvalues_get_alpha_prime() {
        let a = identity(2) * linalg::c(2.0 / PI);
        let d = SpectralDataSet::from_records(
            2,
            0.0,
            vec![
                (SpectralIndex::new(1, 2), 1.0, a.clone()),
                (SpectralIndex::new(1, 1), 1.0 + 1e-12, a.clone()),
                (SpectralIndex::new(2, 1), 4.0, a.clone()),
            ],
            DEFAULT_CLUSTER_TOL,
        );
        assert_eq!(d.entries[0].index, SpectralIndex::new(1, 1));
        assert_eq!(d.entries[0].multiplicity, 2);
        assert_eq!(d.entries[0].alpha_prime, a);
        assert_eq!(d.entries[1].alpha_prime, linalg::zeros(2));
        assert_eq!(d.entries[2].multiplicity, 1);
    }

    #[test]
    fn unshift_then_shift_is_identity() {
        let x = crate::problem::uniform_grid(11);
        let sigma = Sigma::Grid { x: x.clone(), values: x.iter().map(|&t| diag(&[t.sin(), 1.0])).collect() };
        let h2 = diag(&[0.3, 0.0]);
        let t2 = diag(&[1.0, 0.0]);
        let (s1, h1) = unshift_reconstruction(&sigma, &h2, &t2, 2.5);
        let (s2, h2b) = shift_reconstruction(&s1, &h1, &t2, 2.5);
        assert!(linalg::max_abs_diff(&h2, &h2b) < 1e-14);
        for &t in &x {
            assert!(linalg::max_abs_diff(&sigma.eval(t), &s2.eval(t)) < 1e-14);
        }
    }
}
