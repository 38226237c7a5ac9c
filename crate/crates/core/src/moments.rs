//! Hankel operators, sum-of-squares certificates of nonnegativity on `[0, 1]`
//! and membership tests for truncated moment sequences on `[0, 1]`.
//!
//! A polynomial `p` of degree `2n` is nonnegative on `[0, 1]` iff
//! `p = z + x(1-x) w` with `z`, `w` sums of squares, i.e. iff there are
//! `Z ⪰ 0` (side `n+1`) and `W ⪰ 0` (side `n`) with
//!
//! ```text
//! p = H*(Z + ½(L1 W L2ᵀ + L2 W L1ᵀ) - L2 W L2ᵀ)
//! ```
//!
//! Dually, `[m_0, ..., m_2n]` are the moments of a nonnegative measure on
//! `[0, 1]` iff `H(m) ⪰ 0` and the localizing matrix
//! `½(L1ᵀ H(m) L2 + L2ᵀ H(m) L1) - L2ᵀ H(m) L2 ⪰ 0`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::conic::{self, mterm, BlockId, ConicProblem, SolveStatus, SolverOptions, Term};
use crate::poly::{Polynomial, Sense};

/// Minimum-eigenvalue tolerance used by [`moment_membership_01`].
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentError {
    #[error("expected an odd number of entries, got {0}")]
    EvenLength(usize),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty input")]
    Empty,
    #[error("conic solver stopped with status {0:?}")]
    Solver(SolveStatus),
}

/// A truncated moment sequence `[m_0, ..., m_n]` of a measure on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MomentSequence {
    values: Vec<f64>,
}

impl MomentSequence {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Member of the moment cone with `m_0 = 1` (within `tol`).
    pub fn is_probability(&self, tol: f64) -> bool {
        !self.values.is_empty()
            && (self.values[0] - 1.0).abs() <= tol
            && moment_membership_with_tol(self, tol).is_member()
    }
}

impl From<Vec<f64>> for MomentSequence {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// `H(v)`: the `n×n` Hankel matrix of a sequence of `2n-1` entries.
pub fn hankel(v: &[f64]) -> Result<DMatrix<f64>, MomentError> {
    if v.is_empty() {
        return Err(MomentError::Empty);
    }
    if v.len().is_multiple_of(2) {
        return Err(MomentError::EvenLength(v.len()));
    }
    let n = v.len().div_ceil(2);
    Ok(DMatrix::from_fn(n, n, |i, j| v[i + j]))
}

/// `H*(M)`: sums of the antidiagonals of a square matrix.
pub fn hankel_adjoint(m: &DMatrix<f64>) -> Result<Vec<f64>, MomentError> {
    if m.nrows() != m.ncols() {
        return Err(MomentError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Err(MomentError::Empty);
    }
    let mut out = vec![0.0; 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            out[i + j] += m[(i, j)];
        }
    }
    Ok(out)
}

/// `L1 = [I_n; 0]`, an `(n+1)×n` matrix.
pub fn l1(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// `L2 = [0; I_n]`, an `(n+1)×n` matrix.
pub fn l2(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
}

/// Localizing matrix for `x(1-x)` built from `H(m)`; entry `(i, j)` is
/// `m[i+j+1] - m[i+j+2]`. Empty when `m` has a single entry.
pub fn localizing(m: &[f64]) -> Result<DMatrix<f64>, MomentError> {
    let h = hankel(m)?;
    let n = h.nrows() - 1;
    let (a, b) = (l1(n), l2(n));
    let cross = a.transpose() * &h * &b;
    Ok((&cross + cross.transpose()) * 0.5 - b.transpose() * &h * &b)
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Gram matrices certifying `p ≥ 0` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCertificate {
    pub z: DMatrix<f64>,
    /// Side one smaller than `z`; `0×0` for constant polynomials.
    pub w: DMatrix<f64>,
}

impl SosCertificate {
    /// Coefficients `H*(Z + ½(L1 W L2ᵀ + L2 W L1ᵀ) - L2 W L2ᵀ)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.w.nrows();
        let (a, b) = (l1(n), l2(n));
        let cross = &a * &self.w * b.transpose();
        let m = &self.z + (&cross + cross.transpose()) * 0.5 - &b * &self.w * b.transpose();
        hankel_adjoint(&m).expect("square by construction")
    }

    /// Smallest eigenvalue over both Gram matrices.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eig(&self.z).min(min_eig(&self.w))
    }
}

/// Blocks `Z` and `W` of an SOS-on-`[0, 1]` certificate for a polynomial of
/// degree at most `2n`, added to a conic problem.
#[derive(Debug, Clone, Copy)]
pub struct SosBlocks {
    pub z: BlockId,
    pub w: Option<BlockId>,
    pub n: usize,
}

impl SosBlocks {
    pub fn add(problem: &mut ConicProblem, n: usize) -> Self {
        let z = problem.add_psd(n + 1);
        let w = (n > 0).then(|| problem.add_psd(n));
        Self { z, w, n }
    }

    /// Number of coefficients the certificate spans, `2n + 1`.
    pub fn len(&self) -> usize {
        2 * self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Terms whose sum is coefficient `k` of the certified polynomial.
    pub fn coefficient_terms(&self, k: usize) -> Vec<Term> {
        let mut terms = Vec::new();
        antidiagonal(&mut terms, self.z, self.n + 1, k, 1.0);
        if let Some(w) = self.w {
            if k >= 1 {
                antidiagonal(&mut terms, w, self.n, k - 1, 1.0);
            }
            if k >= 2 {
                antidiagonal(&mut terms, w, self.n, k - 2, -1.0);
            }
        }
        terms
    }

    pub fn extract(&self, sol: &conic::ConicSolution) -> SosCertificate {
        SosCertificate {
            z: sol.matrix(self.z).clone(),
            w: self.w.map_or_else(|| DMatrix::zeros(0, 0), |w| sol.matrix(w).clone()),
        }
    }
}

/// A moment vector `m_0..m_2k` held in a free block, tied by equality
/// constraints to PSD blocks for `H(m)` and its localizing matrix, so that
/// `m` is constrained to the moment cone of `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct MomentBlocks {
    pub values: BlockId,
    pub hankel: BlockId,
    pub localizing: Option<BlockId>,
    /// Number of moments, `2k + 1`.
    pub len: usize,
}

impl MomentBlocks {
    /// Adds `2k + 1` moment variables and their cone constraints.
    pub fn add(problem: &mut ConicProblem, k: usize) -> Self {
        let len = 2 * k + 1;
        let values = problem.add_free(len);
        let hankel = problem.add_psd(k + 1);
        for i in 0..=k {
            for j in i..=k {
                problem.add_constraint(
                    vec![mterm(hankel, i, j, 1.0), conic::term(values, i + j, -1.0)],
                    0.0,
                );
            }
        }
        let localizing = (k > 0).then(|| {
            let loc = problem.add_psd(k);
            for i in 0..k {
                for j in i..k {
                    problem.add_constraint(
                        vec![
                            mterm(loc, i, j, 1.0),
                            conic::term(values, i + j + 1, -1.0),
                            conic::term(values, i + j + 2, 1.0),
                        ],
                        0.0,
                    );
                }
            }
            loc
        });
        Self {
            values,
            hankel,
            localizing,
            len,
        }
    }
}

/// Pushes `coef * M[i][j]` for every `i + j = k` inside an `n×n` block.
pub fn antidiagonal(terms: &mut Vec<Term>, block: BlockId, n: usize, k: usize, coef: f64) {
    for i in 0..n {
        if k >= i && k - i < n {
            terms.push(mterm(block, i, k - i, coef));
        }
    }
}

/// Outcome of [`certify_nonneg_01`].
#[derive(Debug, Clone, PartialEq)]
pub enum Certification {
    Certificate(SosCertificate),
    /// A point of `[0, 1]` where the polynomial is negative.
    Infeasible { witness: f64 },
}

/// Searches for an SOS certificate of `p ≥ 0` on `[0, 1]`.
///
/// Polynomials of odd degree are padded with a zero leading coefficient.
/// Among all certificates the one with least `tr Z + tr W` is returned.
pub fn certify_nonneg_01(p: &Polynomial) -> Result<Certification, MomentError> {
    let (min, arg) = p.extremum_on_unit_interval(Sense::Min);
    let scale = 1.0 + p.abs_bound_unit();
    if min < -1e-9 * scale {
        return Ok(Certification::Infeasible { witness: arg });
    }

    let n = p.degree().div_ceil(2);
    let mut problem = ConicProblem::new();
    let sos = SosBlocks::add(&mut problem, n);
    for i in 0..=n {
        problem.add_objective_entry(sos.z, i, i, 1.0);
    }
    if let Some(w) = sos.w {
        for i in 0..n {
            problem.add_objective_entry(w, i, i, 1.0);
        }
    }
    for k in 0..sos.len() {
        problem.add_constraint(sos.coefficient_terms(k), p.coeff(k));
    }
    let sol = conic::solve(&problem, &SolverOptions::default()).expect("problem built with valid terms");
    match sol.status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => Ok(Certification::Certificate(sos.extract(&sol))),
        SolveStatus::Infeasible => Ok(Certification::Infeasible { witness: arg }),
        SolveStatus::NumericalTrouble if sol.primal_res <= 1e-7 => {
            // Boundary cases (roots of p inside [0, 1]) stall short of the gap
            // tolerance while the certificate itself is accurate.
            let cert = sos.extract(&sol);
            if cert.min_eigenvalue() >= -1e-7 {
                Ok(Certification::Certificate(cert))
            } else {
                Err(MomentError::Solver(sol.status))
            }
        }
        status => Err(MomentError::Solver(status)),
    }
}

/// Which moment condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// `H(m)` is not PSD.
    Hankel,
    /// The localizing matrix for `x(1-x)` is not PSD.
    Localizing,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Membership {
    /// Smallest eigenvalue over both matrices.
    Member { margin: f64 },
    NotMember { violated: Violation, margin: f64 },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Member { .. })
    }

    pub fn margin(&self) -> f64 {
        match *self {
            Membership::Member { margin } | Membership::NotMember { margin, .. } => margin,
        }
    }
}

/// Tests whether `m` is a truncated moment sequence of a nonnegative measure
/// on `[0, 1]`, with eigenvalue tolerance [`MEMBERSHIP_TOL`].
pub fn moment_membership_01(m: &MomentSequence) -> Membership {
    moment_membership_with_tol(m, MEMBERSHIP_TOL)
}

/// As [`moment_membership_01`] with an explicit eigenvalue tolerance.
///
/// Sequences of even length are extended by one free trailing moment; the
/// margin is then the best one achievable over that extra entry.
pub fn moment_membership_with_tol(m: &MomentSequence, tol: f64) -> Membership {
    let v = m.values();
    if v.is_empty() {
        return Membership::NotMember {
            violated: Violation::Empty,
            margin: f64::NEG_INFINITY,
        };
    }
    let (h, l) = if v.len() % 2 == 1 {
        odd_margins(v)
    } else {
        let t = best_extension(v);
        let mut ext = v.to_vec();
        ext.push(t);
        odd_margins(&ext)
    };
    let margin = h.min(l);
    if margin >= -tol {
        Membership::Member { margin }
    } else if h < -tol {
        Membership::NotMember {
            violated: Violation::Hankel,
            margin,
        }
    } else {
        Membership::NotMember {
            violated: Violation::Localizing,
            margin,
        }
    }
}

fn odd_margins(v: &[f64]) -> (f64, f64) {
    let h = hankel(v).expect("odd length");
    let l = localizing(v).expect("odd length");
    (min_eig(&h), min_eig(&l))
}

/// Maximizes the (concave) smallest eigenvalue over the appended moment.
fn best_extension(v: &[f64]) -> f64 {
    let last = v[v.len() - 1];
    let span = v.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    let (mut lo, mut hi) = (last.min(0.0) - span, last.max(0.0) + span);
    let f = |t: f64| {
        let mut ext = v.to_vec();
        ext.push(t);
        let (h, l) = odd_margins(&ext);
        h.min(l)
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..120 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = f(a);
        }
        if hi - lo <= 1e-15 * span {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hankel_examples() {
        assert_eq!(hankel(&[1.0, 0.0, 0.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(
            hankel(&[1.0, 0.5, 0.25]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.25])
        );
        let h = hankel(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(h.nrows(), 3);
        assert_eq!(h[(2, 0)], 3.0);
        assert_eq!(hankel(&[1.0, 2.0]), Err(MomentError::EvenLength(2)));
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(hankel_adjoint(&DMatrix::identity(2, 2)).unwrap(), vec![1.0, 0.0, 1.0]);
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.7, 0.7, -2.0]);
        assert_eq!(hankel_adjoint(&m).unwrap(), vec![3.0, 1.4, -2.0]);
        assert!(matches!(
            hankel_adjoint(&DMatrix::zeros(2, 3)),
            Err(MomentError::NotSquare { .. })
        ));
    }

    #[test]
    fn adjointness_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..7);
            let v: Vec<f64> = (0..2 * n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &g + g.transpose();
            let lhs = hankel(&v).unwrap().dot(&m);
            let rhs: f64 = v.iter().zip(hankel_adjoint(&m).unwrap()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn localizing_entries() {
        let m = [1.0, 0.5, 1.0 / 3.0, 0.25, 0.2];
        let l = localizing(&m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((l[(i, j)] - (m[i + j + 1] - m[i + j + 2])).abs() < 1e-15);
            }
        }
        assert_eq!(localizing(&[2.0]).unwrap().nrows(), 0);
    }

    fn certificate(p: &Polynomial) -> SosCertificate {
        match certify_nonneg_01(p).unwrap() {
            Certification::Certificate(c) => c,
            other => panic!("expected certificate for {p:?}, got {other:?}"),
        }
    }

    fn check_identity(p: &Polynomial, c: &SosCertificate) {
        let coef = c.coefficients();
        let target = p.padded(coef.len());
        assert!(close(&coef, &target, 1e-7), "{coef:?} vs {target:?}");
        assert!(c.min_eigenvalue() >= -1e-8);
    }

    #[test]
    fn certify_examples() {
        let p = Polynomial::new(vec![0.0, 1.0, -1.0]);
        let c = certificate(&p);
        check_identity(&p, &c);
        assert!(c.z.abs().max() < 1e-6, "{}", c.z);
        assert!((c.w[(0, 0)] - 1.0).abs() < 1e-6);

        let p = Polynomial::new(vec![0.09, -0.6, 1.0]);
        let c = certificate(&p);
        check_identity(&p, &c);
        assert!(c.w.abs().max() < 1e-6, "{}", c.w);

        let p = Polynomial::new(vec![-0.5, 1.0]);
        assert_eq!(certify_nonneg_01(&p).unwrap(), Certification::Infeasible { witness: 0.0 });
    }

    #[test]
    fn certify_constants_and_odd_degree() {
        let c = certificate(&Polynomial::constant(2.0));
        assert!((c.z[(0, 0)] - 2.0).abs() < 1e-7);
        assert_eq!(c.w.nrows(), 0);
        let p = Polynomial::new(vec![0.0, 1.0]);
        check_identity(&p, &certificate(&p));
        let p = Polynomial::new(vec![1.0, 0.0, 0.0, -1.0]);
        check_identity(&p, &certificate(&p));
    }

    fn random_sos(rng: &mut ChaCha8Rng, basis: usize) -> Polynomial {
        let g = DMatrix::from_fn(basis, basis, |_, _| rng.random_range(-1.0..1.0));
        let rank = rng.random_range(1..=basis);
        let g = g.columns(0, rank).into_owned();
        let gram = &g * g.transpose();
        Polynomial::new(hankel_adjoint(&gram).unwrap())
    }

    #[test]
    fn certificates_are_complete_and_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x1mx = Polynomial::new(vec![0.0, 1.0, -1.0]);
        let grid: Vec<f64> = (0..10_000).map(|i| i as f64 / 9_999.0).collect();
        for trial in 0..100 {
            let bz = rng.random_range(1..=4);
            let z = random_sos(&mut rng, bz);
            let bw = rng.random_range(1..=3);
            let w = random_sos(&mut rng, bw);
            let p = z.add(&x1mx.mul(&w));
            let c = certificate(&p);
            check_identity(&p, &c);
            for &x in &grid {
                assert!(p.evaluate(x) >= -1e-6, "trial {trial}");
            }
        }
    }

    #[test]
    fn membership_examples() {
        let m = moment_membership_01(&vec![1.0, 0.5, 0.25].into());
        assert!(m.is_member());
        let m = moment_membership_01(&vec![1.0, 0.5, 1.0 / 3.0].into());
        assert!(m.is_member() && m.margin() > 1e-3);
        let m = moment_membership_01(&vec![1.0, 0.5, 0.6].into());
        assert_eq!(m, Membership::NotMember { violated: Violation::Localizing, margin: m.margin() });
        let m = moment_membership_01(&vec![1.0, 2.0, 1.0].into());
        assert!(!m.is_member());
        assert!(!moment_membership_01(&vec![].into()).is_member());
        assert!(!moment_membership_01(&vec![-1.0].into()).is_member());
    }

    #[test]
    fn even_length_membership() {
        assert!(moment_membership_01(&vec![1.0, 0.5].into()).is_member());
        assert!(moment_membership_01(&vec![1.0, 0.5, 1.0 / 3.0, 0.25].into()).is_member());
        assert!(!moment_membership_01(&vec![1.0, 1.5].into()).is_member());
        // m3 above m2 is impossible on [0, 1]
        assert!(!moment_membership_01(&vec![1.0, 0.5, 0.3, 0.4].into()).is_member());
    }

    #[test]
    fn atomic_measures_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let atoms: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..=1.0)).collect();
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let len = rng.random_range(1..10);
            let m: Vec<f64> = (0..len)
                .map(|j| atoms.iter().zip(&weights).map(|(a, w)| w * a.powi(j)).sum())
                .collect();
            let r = moment_membership_01(&m.clone().into());
            assert!(r.is_member(), "{m:?}: {r:?}");
        }
    }

    #[test]
    fn l_matrices_shape() {
        assert_eq!(l1(2), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        assert_eq!(l2(2), DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]));
    }
}
