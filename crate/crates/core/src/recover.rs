//! Finitely-atomic measures on `[0, 1]` and their recovery from truncated
//! moment sequences.
//!
//! Recovery follows the classical route: the leading Hankel block of the
//! moments determines a monic polynomial whose roots are the atoms, and the
//! weights then solve a Vandermonde system. A final Gauss-Newton pass fits
//! atoms and weights to every supplied moment.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::moments::{
    hankel, moment_membership_with_tol, Membership, MomentSequence, Violation,
};
use crate::poly::{companion_roots, Polynomial};

pub const DEFAULT_RANK_TOL: f64 = 1e-7;
/// Eigenvalue tolerance used to accept a sequence for recovery.
pub const RECOVER_MEMBERSHIP_TOL: f64 = 1e-6;
/// Roots this far outside `[0, 1]` are clamped; farther ones are rejected.
pub const SUPPORT_TOL: f64 = 1e-6;
/// Companion eigenvalues with a larger imaginary part are not real roots.
const IMAG_TOL: f64 = 1e-6;
/// Roots up to this far outside are clamped provisionally and kept only if
/// the clamped measure still reproduces the moments.
const SUPPORT_SLACK: f64 = 1e-3;
/// Atoms closer than this are merged.
const MERGE_GAP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecoverError {
    #[error("not a moment sequence on [0, 1]: {violated:?} condition fails with margin {margin:e}")]
    NotAMomentSequence { violated: Violation, margin: f64 },
    #[error("recovered atom {root} lies outside [0, 1]")]
    RootOutOfSupport { root: f64 },
    #[error("recovered atom polynomial has a complex root {re} + {im}i")]
    ComplexRoot { re: f64, im: f64 },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
}

/// `Σ weights[i] δ(atoms[i])` with strictly increasing atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Sorts the atoms; rejects mismatched lengths, duplicate atoms, atoms
    /// outside `[0, 1]` and negative or non-finite weights.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, RecoverError> {
        if atoms.len() != weights.len() {
            return Err(RecoverError::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(RecoverError::InvalidMeasure(format!("atom {a} outside [0, 1]")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(RecoverError::InvalidMeasure(format!("weight {w} is negative")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(RecoverError::InvalidMeasure("duplicate atom".into()));
        }
        Ok(Self {
            atoms: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Unit point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ p dμ`
    pub fn integrate(&self, p: &Polynomial) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w * p.evaluate(*a))
            .sum()
    }
}

/// `[m_0, ..., m_upto]` with `m_j = Σ w_i a_i^j`.
pub fn moments_of(m: &DiscreteMeasure, upto: usize) -> MomentSequence {
    let mut out = vec![0.0; upto + 1];
    for (a, w) in m.atoms.iter().zip(&m.weights) {
        let mut p = *w;
        for v in out.iter_mut() {
            *v += p;
            p *= a;
        }
    }
    MomentSequence::new(out)
}

/// Recovers a finitely-atomic measure whose moments match `m`.
///
/// The atom count is at most the numerical rank of the leading Hankel
/// matrix, the largest `k` with `σ_k / σ_1 > rank_tol`; a smaller count is
/// used when its measure matches every moment to `10 rank_tol`. A full-rank
/// sequence of odd length has one moment too few to pin down the atoms; it
/// is extended by the midpoint of the interval of admissible next moments.
pub fn recover_measure(m: &MomentSequence, rank_tol: f64) -> Result<DiscreteMeasure, RecoverError> {
    match moment_membership_with_tol(m, RECOVER_MEMBERSHIP_TOL) {
        Membership::Member { .. } => {}
        Membership::NotMember { violated, margin } => {
            return Err(RecoverError::NotAMomentSequence { violated, margin })
        }
    }
    let v = m.values();
    let scale = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if v[0] <= 1e-12 * scale.max(1.0) {
        return Ok(DiscreteMeasure {
            atoms: Vec::new(),
            weights: Vec::new(),
        });
    }

    let size = v.len().div_ceil(2);
    let h = hankel(&v[..2 * size - 1]).expect("odd prefix");
    let sv = h.singular_values();
    let top = sv.max();
    let k_max = sv.iter().filter(|s| **s > rank_tol * top).count().max(1);

    // Noise can lift a singular value just above the threshold; prefer the
    // fewest atoms that reproduce the data.
    let fit_tol = 10.0 * rank_tol * scale.max(1.0);
    for k in 1..k_max {
        if let Ok(out) = with_atom_count(v, k, scale) {
            if fit_error(&out, v) <= fit_tol {
                return Ok(out);
            }
        }
    }
    with_atom_count(v, k_max, scale)
}

fn fit_error(m: &DiscreteMeasure, v: &[f64]) -> f64 {
    let fit = moments_of(m, v.len() - 1);
    fit.values().iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn with_atom_count(v: &[f64], k: usize, scale: f64) -> Result<DiscreteMeasure, RecoverError> {
    let mut ext = v.to_vec();
    if 2 * k > v.len() {
        ext.push(next_moment_midpoint(v));
    }
    let hk = DMatrix::from_fn(k, k, |i, j| ext[i + j]);
    let rhs = DVector::from_iterator(k, (0..k).map(|i| -ext[i + k]));
    let c = solve_least_squares(&hk, &rhs);

    let mut atoms = Vec::with_capacity(k);
    let mut provisional = None;
    for (re, im) in companion_roots(c.as_slice()) {
        if im.abs() > IMAG_TOL * (1.0 + re.abs()) {
            return Err(RecoverError::ComplexRoot { re, im });
        }
        if !(-SUPPORT_TOL..=1.0 + SUPPORT_TOL).contains(&re) {
            if !(-SUPPORT_SLACK..=1.0 + SUPPORT_SLACK).contains(&re) {
                return Err(RecoverError::RootOutOfSupport { root: re });
            }
            provisional = Some(re);
        }
        atoms.push(re.clamp(0.0, 1.0));
    }
    atoms.sort_by(f64::total_cmp);
    let merged = merge_close(&atoms);

    let mut weights = if merged.len() == atoms.len() {
        vandermonde_solve(&merged, &v[..merged.len()])
    } else {
        weights_least_squares(&merged, v)
    };
    let mut atoms = merged;
    if v.len() >= 2 * atoms.len() {
        polish(&mut atoms, &mut weights, v);
    }

    let mut pairs: Vec<(f64, f64)> = atoms
        .into_iter()
        .zip(weights)
        .map(|(a, w)| (a.clamp(0.0, 1.0), w.max(0.0)))
        .filter(|p| p.1 > 0.0)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    let out = DiscreteMeasure {
        atoms: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    };
    if let Some(root) = provisional {
        if fit_error(&out, v) > RECOVER_MEMBERSHIP_TOL * scale.max(1.0) {
            return Err(RecoverError::RootOutOfSupport { root });
        }
    }
    Ok(out)
}

/// Midpoint of the admissible interval for `m_{2n+1}` given `m_0..m_2n`.
///
/// The lower end makes the `x·μ` Hankel matrix singular, the upper end the
/// `(1-x)·μ` one.
fn next_moment_midpoint(v: &[f64]) -> f64 {
    let n = (v.len() - 1) / 2;
    if n == 0 {
        return 0.5 * v[0];
    }
    let b11 = DMatrix::from_fn(n, n, |i, j| v[i + j + 1]);
    let b = DVector::from_iterator(n, (0..n).map(|i| v[n + i + 1]));
    let lower = b.dot(&pinv_apply(&b11, &b));
    let c11 = DMatrix::from_fn(n, n, |i, j| v[i + j] - v[i + j + 1]);
    let c = DVector::from_iterator(n, (0..n).map(|i| v[n + i] - v[n + i + 1]));
    let upper = v[2 * n] - c.dot(&pinv_apply(&c11, &c));
    0.5 * (lower + upper)
}

fn pinv_apply(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = SVD::new(a.clone(), true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(b, eps).expect("u and v requested")
}

fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| pinv_apply(a, b))
}

fn merge_close(sorted: &[f64]) -> Vec<f64> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &a in sorted {
        match groups.last_mut() {
            Some(g) if a - g[g.len() - 1] < MERGE_GAP => g.push(a),
            _ => groups.push(vec![a]),
        }
    }
    groups
        .into_iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect()
}

/// Solves `Σ_i w_i x_i^j = m_j`, `j = 0..n`, by the Björck-Pereyra scheme.
pub fn vandermonde_solve(x: &[f64], m: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert_eq!(n, m.len());
    let mut b = m.to_vec();
    if n == 0 {
        return b;
    }
    for k in 0..n - 1 {
        for i in (k + 1..n).rev() {
            b[i] -= x[k] * b[i - 1];
        }
    }
    for k in (0..n - 1).rev() {
        for i in k + 1..n {
            b[i] /= x[i] - x[i - k - 1];
        }
        for i in k..n - 1 {
            b[i] -= b[i + 1];
        }
    }
    b
}

fn power_matrix(atoms: &[f64], rows: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, atoms.len(), |j, i| atoms[i].powi(j as i32))
}

fn weights_least_squares(atoms: &[f64], m: &[f64]) -> Vec<f64> {
    let a = power_matrix(atoms, m.len());
    let b = DVector::from_column_slice(m);
    pinv_apply(&a, &b).iter().copied().collect()
}

fn residual_norm(atoms: &[f64], weights: &[f64], m: &[f64]) -> f64 {
    let mut r = 0.0;
    for (j, mj) in m.iter().enumerate() {
        let s: f64 = atoms.iter().zip(weights).map(|(a, w)| w * a.powi(j as i32)).sum();
        r += (s - mj).powi(2);
    }
    r.sqrt()
}

/// Gauss-Newton refinement of atoms and weights against all moments.
fn polish(atoms: &mut [f64], weights: &mut [f64], m: &[f64]) {
    let k = atoms.len();
    let mut res = residual_norm(atoms, weights, m);
    for _ in 0..30 {
        if res == 0.0 {
            break;
        }
        let jac = DMatrix::from_fn(m.len(), 2 * k, |j, c| {
            if c < k {
                atoms[c].powi(j as i32)
            } else if j == 0 {
                0.0
            } else {
                let i = c - k;
                weights[i] * j as f64 * atoms[i].powi(j as i32 - 1)
            }
        });
        let r = DVector::from_iterator(
            m.len(),
            m.iter().enumerate().map(|(j, mj)| {
                mj - atoms
                    .iter()
                    .zip(weights.iter())
                    .map(|(a, w)| w * a.powi(j as i32))
                    .sum::<f64>()
            }),
        );
        let step = pinv_apply(&jac, &r);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let na: Vec<f64> = (0..k).map(|i| (atoms[i] + t * step[k + i]).clamp(0.0, 1.0)).collect();
            let nw: Vec<f64> = (0..k).map(|i| weights[i] + t * step[i]).collect();
            let nr = residual_norm(&na, &nw, m);
            if nr < res {
                atoms.copy_from_slice(&na);
                weights.copy_from_slice(&nw);
                improved = res - nr > 1e-3 * res;
                res = nr;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
}
