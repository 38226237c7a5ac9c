//! Dense univariate and bivariate polynomials with real coefficients.
//!
//! Coefficients are stored low-degree-first. Degrees in this crate are small
//! (rarely above ten), so everything is dense and evaluated with Horner.

use nalgebra::{Complex, DMatrix, Schur};
use serde::{Deserialize, Serialize};

/// Imaginary parts below this are treated as real roots.
const ROOT_IMAG_TOL: f64 = 1e-8;
/// Real roots this far outside `[0, 1]` are still clamped in.
const ROOT_SUPPORT_TOL: f64 = 1e-8;

/// A univariate polynomial `Σ coeffs[i] x^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

/// Which extremum [`Polynomial::extremum_on_unit_interval`] looks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            return Self::zero();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    /// The monomial `c x^k`.
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^i`, zero past the stored length.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    /// Index of the last nonzero coefficient; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    /// Copy with trailing zero coefficients removed.
    pub fn trimmed(&self) -> Self {
        Self {
            coeffs: self.coeffs[..=self.degree()].to_vec(),
        }
    }

    /// Coefficient vector zero-padded (or truncated) to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.coeff(i)).collect()
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        Self::new((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    /// `max |p|` bound by the coefficient 1-norm; valid on `[0, 1]`.
    pub fn abs_bound_unit(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Real roots of the polynomial via companion-matrix eigenvalues, each
    /// polished by a few Newton steps. Complex roots are dropped.
    pub fn real_roots(&self) -> Vec<f64> {
        let p = self.trimmed();
        let deg = p.degree();
        if deg == 0 {
            return Vec::new();
        }
        let lead = p.coeffs[deg];
        let monic: Vec<f64> = p.coeffs[..deg].iter().map(|c| c / lead).collect();
        let roots = companion_roots(&monic);
        let dp = p.derivative();
        roots
            .into_iter()
            .filter(|(_, im)| im.abs() < ROOT_IMAG_TOL)
            .map(|(re, _)| newton_polish(&p, &dp, re))
            .collect()
    }

    /// Global extremum over `[0, 1]`. Candidates are the endpoints and the
    /// real critical points inside the interval; ties go to the smaller point.
    pub fn extremum_on_unit_interval(&self, sense: Sense) -> (f64, f64) {
        let mut candidates = vec![0.0, 1.0];
        for r in self.derivative().real_roots() {
            if (-ROOT_SUPPORT_TOL..=1.0 + ROOT_SUPPORT_TOL).contains(&r) {
                candidates.push(r.clamp(0.0, 1.0));
            }
        }
        candidates.sort_by(|a, b| a.total_cmp(b));
        let mut best = (self.evaluate(candidates[0]), candidates[0]);
        for &x in &candidates[1..] {
            let v = self.evaluate(x);
            let better = match sense {
                Sense::Max => v > best.0,
                Sense::Min => v < best.0,
            };
            if better {
                best = (v, x);
            }
        }
        best
    }
}

/// Roots `(re, im)` of the monic polynomial `x^n + c[n-1] x^{n-1} + ... + c[0]`.
pub fn companion_roots(lower_coeffs: &[f64]) -> Vec<(f64, f64)> {
    // exact zero roots make the companion matrix nilpotent, where the QR
    // iteration can stall
    let zeros = lower_coeffs.iter().take_while(|c| **c == 0.0).count();
    let c = &lower_coeffs[zeros..];
    let mut out = vec![(0.0, 0.0); zeros];
    let n = c.len();
    if n == 0 {
        return out;
    }
    if n == 1 {
        out.push((-c[0], 0.0));
        return out;
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i];
    }
    match Schur::try_new(m, f64::EPSILON, 200 * n) {
        Some(schur) => out.extend(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im))),
        None => out.extend(durand_kerner(c)),
    }
    out
}

fn durand_kerner(c: &[f64]) -> Vec<(f64, f64)> {
    let n = c.len();
    let eval = |z: Complex<f64>| c.iter().rev().fold(Complex::new(1.0, 0.0), |acc, ci| acc * z + ci);
    let radius = 1.0 + c.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut z: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..1000 {
        let mut shift = 0.0_f64;
        for i in 0..n {
            let denom = (0..n)
                .filter(|j| *j != i)
                .fold(Complex::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            if denom.norm() == 0.0 {
                continue;
            }
            let d = eval(z[i]) / denom;
            z[i] -= d;
            shift = shift.max(d.norm());
        }
        if shift <= 1e-15 * radius {
            break;
        }
    }
    z.into_iter().map(|w| (w.re, w.im)).collect()
}

fn newton_polish(p: &Polynomial, dp: &Polynomial, mut x: f64) -> f64 {
    let mut fx = p.evaluate(x);
    for _ in 0..8 {
        let d = dp.evaluate(x);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - fx / d;
        let fnext = p.evaluate(next);
        if !(fnext.abs() < fx.abs()) {
            break;
        }
        x = next;
        fx = fnext;
    }
    x
}

/// A polynomial `Σ coeffs[i][j] a1^i a2^j` in two variables.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariatePolynomial {
    /// Row-major `(deg1 + 1) x (deg2 + 1)`.
    coeffs: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl BivariatePolynomial {
    /// Builds from a row-per-`a1`-power matrix. Ragged rows are zero padded.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len().max(1);
        let ncols = rows.iter().map(|r| r.len()).max().unwrap_or(1).max(1);
        let mut coeffs = vec![0.0; nrows * ncols];
        for (i, r) in rows.iter().enumerate() {
            for (j, &c) in r.iter().enumerate() {
                coeffs[i * ncols + j] = c;
            }
        }
        Self {
            coeffs,
            rows: nrows,
            cols: ncols,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: vec![c],
            rows: 1,
            cols: 1,
        }
    }

    /// Embeds a polynomial in `a1` alone.
    pub fn from_a1(p: &Polynomial) -> Self {
        Self::from_rows(&p.coeffs().iter().map(|&c| vec![c]).collect::<Vec<_>>())
    }

    /// Embeds a polynomial in `a2` alone.
    pub fn from_a2(p: &Polynomial) -> Self {
        Self::from_rows(&[p.coeffs().to_vec()])
    }

    /// Coefficient of `a1^i a2^j`, zero outside the stored shape.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i < self.rows && j < self.cols {
            self.coeffs[i * self.cols + j]
        } else {
            0.0
        }
    }

    /// Degree in `a1`: last row holding a nonzero coefficient.
    pub fn deg1(&self) -> usize {
        (0..self.rows)
            .rev()
            .find(|&i| (0..self.cols).any(|j| self.coeff(i, j) != 0.0))
            .unwrap_or(0)
    }

    /// Degree in `a2`: last column holding a nonzero coefficient.
    pub fn deg2(&self) -> usize {
        (0..self.cols)
            .rev()
            .find(|&j| (0..self.rows).any(|i| self.coeff(i, j) != 0.0))
            .unwrap_or(0)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..=self.deg1())
            .map(|i| (0..=self.deg2()).map(|j| self.coeff(i, j)).collect())
            .collect()
    }

    pub fn evaluate(&self, a1: f64, a2: f64) -> f64 {
        (0..self.rows).rev().fold(0.0, |acc, i| {
            let row = (0..self.cols)
                .rev()
                .fold(0.0, |r, j| r * a2 + self.coeff(i, j));
            acc * a1 + row
        })
    }

    /// Integrates out `a2` against moments `m[j] = ∫ a2^j dν`, leaving a
    /// polynomial in `a1`. Missing moments count as zero.
    pub fn pair_a2(&self, m: &[f64]) -> Polynomial {
        Polynomial::new(
            (0..self.rows)
                .map(|i| {
                    (0..self.cols)
                        .map(|j| self.coeff(i, j) * m.get(j).copied().unwrap_or(0.0))
                        .sum()
                })
                .collect(),
        )
    }

    /// Integrates out `a1` against moments `m[i] = ∫ a1^i dμ`.
    pub fn pair_a1(&self, m: &[f64]) -> Polynomial {
        Polynomial::new(
            (0..self.cols)
                .map(|j| {
                    (0..self.rows)
                        .map(|i| self.coeff(i, j) * m.get(i).copied().unwrap_or(0.0))
                        .sum()
                })
                .collect(),
        )
    }

    /// `∫∫ p dμ dν` from the two moment sequences.
    pub fn pair_both(&self, mu: &[f64], nu: &[f64]) -> f64 {
        self.pair_a2(nu)
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| c * mu.get(i).copied().unwrap_or(0.0))
            .sum()
    }

    /// `p(a1, ·)` as a polynomial in `a2`.
    pub fn at_a1(&self, a1: f64) -> Polynomial {
        let mut pw = vec![1.0; self.rows];
        for i in 1..self.rows {
            pw[i] = pw[i - 1] * a1;
        }
        self.pair_a1(&pw)
    }

    /// `p(·, a2)` as a polynomial in `a1`.
    pub fn at_a2(&self, a2: f64) -> Polynomial {
        let mut pw = vec![1.0; self.cols];
        for j in 1..self.cols {
            pw[j] = pw[j - 1] * a2;
        }
        self.pair_a2(&pw)
    }

    /// Polynomial in `a1` given by column 0; exact when `deg2() == 0`.
    pub fn a1_part(&self) -> Polynomial {
        Polynomial::new((0..self.rows).map(|i| self.coeff(i, 0)).collect())
    }

    /// Coefficient-wise linear combination `Σ scalar_k · p_k`.
    pub fn combine(terms: &[(f64, &BivariatePolynomial)]) -> Self {
        let rows = terms.iter().map(|(_, p)| p.rows).max().unwrap_or(1);
        let cols = terms.iter().map(|(_, p)| p.cols).max().unwrap_or(1);
        let mut coeffs = vec![0.0; rows * cols];
        for (s, p) in terms {
            for i in 0..p.rows {
                for j in 0..p.cols {
                    coeffs[i * cols + j] += s * p.coeff(i, j);
                }
            }
        }
        Self { coeffs, rows, cols }
    }

    /// Coefficient 1-norm, an upper bound on `|p|` over `[0,1]²`.
    pub fn abs_bound_unit(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Largest `|p|` seen on an `n x n` uniform grid of `[0,1]²`.
    pub fn grid_abs_max(&self, n: usize) -> f64 {
        let step = 1.0 / (n - 1) as f64;
        let mut best = 0.0f64;
        for a in 0..n {
            let q = self.at_a1(a as f64 * step);
            for b in 0..n {
                best = best.max(q.evaluate(b as f64 * step).abs());
            }
        }
        best
    }

    /// Smallest value seen on an `n x n` uniform grid of `[0,1]²`.
    pub fn grid_min(&self, n: usize) -> (f64, f64, f64) {
        let step = 1.0 / (n - 1) as f64;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..n {
            let x = a as f64 * step;
            let q = self.at_a1(x);
            for b in 0..n {
                let y = b as f64 * step;
                let v = q.evaluate(y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        best
    }
}

/// Free-function form of [`Polynomial::evaluate`].
pub fn evaluate(p: &Polynomial, x: f64) -> f64 {
    p.evaluate(x)
}

/// Free-function form of [`BivariatePolynomial::combine`].
pub fn combine(terms: &[(f64, &BivariatePolynomial)]) -> BivariatePolynomial {
    BivariatePolynomial::combine(terms)
}

/// Free-function form of [`Polynomial::extremum_on_unit_interval`].
pub fn extremum_on_unit_interval(p: &Polynomial, sense: Sense) -> (f64, f64) {
    p.extremum_on_unit_interval(sense)
}
