//! Homogeneous self-dual primal-dual interior-point method.
//!
//! The embedding solved is
//!
//! ```text
//!  A x - b τ           = 0
//!  c τ - A'y - s       = 0      (s = 0 on free coordinates)
//!  b'y - c'x - κ       = 0
//!  x, s ∈ K,  τ, κ ≥ 0
//! ```
//!
//! started from `x = s = e`, `y = 0`, `τ = κ = 1`. Each iteration takes a
//! Mehrotra predictor-corrector step using Nesterov-Todd scaling on every
//! cone block. The Newton system is reduced to the normal matrix
//! `A_c D⁻¹ A_c'` bordered by the free columns and the `τ` direction, and
//! factored densely with LU plus iterative refinement.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU, SVD};

use super::{
    BlockKind, BlockValue, ConicBackend, ConicProblem, ConicSolution, ProblemError, SolveStatus, NEAR_OPTIMAL_FACTOR,
    SolverOptions,
};

const STEP_FRACTION: f64 = 0.99;
const MIN_STEP: f64 = 1e-10;
const REFINE_STEPS: usize = 3;

/// Reference interior-point backend. Stateless; `solve` is reentrant.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn solve(&self, problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ProblemError> {
        problem.check()?;
        let cp = Compiled::new(problem);
        Ok(run(&cp, problem, opts))
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Free { off: usize, len: usize },
    Cone { cone: usize },
}

#[derive(Debug, Clone, Copy)]
enum ConeKind {
    Nonneg(usize),
    Psd(usize),
}

#[derive(Debug, Clone)]
struct Cone {
    kind: ConeKind,
    off: usize,
    dim: usize,
}

/// The problem flattened into internal coordinates: free variables first,
/// then cone coordinates (PSD blocks in scaled `svec` form).
struct Compiled {
    m: usize,
    n_free: usize,
    n_cone: usize,
    slots: Vec<Slot>,
    cones: Vec<Cone>,
    b: DVector<f64>,
    c_free: DVector<f64>,
    c_cone: DVector<f64>,
    a_free: DMatrix<f64>,
    /// Sparse column of `A` for every cone coordinate.
    cone_cols: Vec<Vec<(usize, f64)>>,
    /// For each PSD cone: rows touching it with their coefficient matrix.
    psd_rows: Vec<Vec<(usize, DMatrix<f64>)>>,
    degree: f64,
}

fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

fn svec_index(i: usize, j: usize) -> usize {
    let (a, b) = if i >= j { (i, j) } else { (j, i) };
    a * (a + 1) / 2 + b
}

fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / std::f64::consts::SQRT_2;
                m[(j, i)] = m[(i, j)];
            }
        }
    }
    m
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..=i {
            out[svec_index(i, j)] = if i == j {
                m[(i, i)]
            } else {
                0.5 * (m[(i, j)] + m[(j, i)]) * std::f64::consts::SQRT_2
            };
        }
    }
}

impl Compiled {
    fn new(p: &ConicProblem) -> Self {
        let mut slots = Vec::with_capacity(p.blocks().len());
        let mut cones = Vec::new();
        let mut n_free = 0;
        let mut n_cone = 0;
        let mut degree = 0.0;
        for kind in p.blocks() {
            match *kind {
                BlockKind::Free(n) => {
                    slots.push(Slot::Free { off: n_free, len: n });
                    n_free += n;
                }
                BlockKind::Nonneg(n) => {
                    slots.push(Slot::Cone { cone: cones.len() });
                    cones.push(Cone {
                        kind: ConeKind::Nonneg(n),
                        off: n_cone,
                        dim: n,
                    });
                    n_cone += n;
                    degree += n as f64;
                }
                BlockKind::PsdMatrix(n) => {
                    slots.push(Slot::Cone { cone: cones.len() });
                    let dim = svec_dim(n);
                    cones.push(Cone {
                        kind: ConeKind::Psd(n),
                        off: n_cone,
                        dim,
                    });
                    n_cone += dim;
                    degree += n as f64;
                }
            }
        }

        let m = p.num_constraints();
        let mut cp = Compiled {
            m,
            n_free,
            n_cone,
            slots,
            cones,
            b: DVector::from_iterator(m, p.constraints().iter().map(|c| c.rhs)),
            c_free: DVector::zeros(n_free),
            c_cone: DVector::zeros(n_cone),
            a_free: DMatrix::zeros(m, n_free),
            cone_cols: vec![Vec::new(); n_cone],
            psd_rows: Vec::new(),
            degree,
        };

        for t in p.objective() {
            match cp.coordinate(t.block.0, t.row, t.col) {
                (false, k, s) => cp.c_free[k] += s * t.coef,
                (true, k, s) => cp.c_cone[k] += s * t.coef,
            }
        }

        let mut cone_acc: Vec<std::collections::BTreeMap<usize, f64>> =
            vec![Default::default(); n_cone];
        for (r, con) in p.constraints().iter().enumerate() {
            for t in &con.terms {
                match cp.coordinate(t.block.0, t.row, t.col) {
                    (false, k, s) => cp.a_free[(r, k)] += s * t.coef,
                    (true, k, s) => *cone_acc[k].entry(r).or_insert(0.0) += s * t.coef,
                }
            }
        }
        for (k, acc) in cone_acc.into_iter().enumerate() {
            cp.cone_cols[k] = acc.into_iter().filter(|&(_, v)| v != 0.0).collect();
        }

        let mut psd_rows = Vec::with_capacity(cp.cones.len());
        for cone in &cp.cones {
            let mut rows = Vec::new();
            if let ConeKind::Psd(n) = cone.kind {
                let mut per_row: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
                for k in 0..cone.dim {
                    for &(r, v) in &cp.cone_cols[cone.off + k] {
                        per_row.entry(r).or_insert_with(|| vec![0.0; cone.dim])[k] = v;
                    }
                }
                rows = per_row.into_iter().map(|(r, v)| (r, smat(&v, n))).collect();
            }
            psd_rows.push(rows);
        }
        cp.psd_rows = psd_rows;
        cp
    }

    /// Internal coordinate of a user entry: `(is_cone, index, scale)`.
    fn coordinate(&self, block: usize, row: usize, col: usize) -> (bool, usize, f64) {
        match self.slots[block] {
            Slot::Free { off, .. } => (false, off + row, 1.0),
            Slot::Cone { cone } => {
                let c = &self.cones[cone];
                match c.kind {
                    ConeKind::Nonneg(_) => (true, c.off + row, 1.0),
                    ConeKind::Psd(_) => {
                        let s = if row == col {
                            1.0
                        } else {
                            std::f64::consts::FRAC_1_SQRT_2
                        };
                        (true, c.off + svec_index(row, col), s)
                    }
                }
            }
        }
    }

    fn a_mul(&self, xf: &DVector<f64>, xc: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a_free * xf;
        for (k, col) in self.cone_cols.iter().enumerate() {
            let v = xc[k];
            if v != 0.0 {
                for &(r, a) in col {
                    out[r] += a * v;
                }
            }
        }
        out
    }

    fn at_mul(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let f = self.a_free.tr_mul(y);
        let c = DVector::from_iterator(
            self.n_cone,
            self.cone_cols
                .iter()
                .map(|col| col.iter().map(|&(r, a)| a * y[r]).sum::<f64>()),
        );
        (f, c)
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.n_cone);
        for cone in &self.cones {
            match cone.kind {
                ConeKind::Nonneg(n) => e.rows_mut(cone.off, n).fill(1.0),
                ConeKind::Psd(n) => {
                    for i in 0..n {
                        e[cone.off + svec_index(i, i)] = 1.0;
                    }
                }
            }
        }
        e
    }
}

/// Per-cone Nesterov-Todd scaling at the current iterate.
enum Scale {
    Nonneg {
        /// `w = sqrt(x / s)`; `W s = W⁻ᵀ x = λ`.
        w: Vec<f64>,
        lam: Vec<f64>,
    },
    Psd {
        r: DMatrix<f64>,
        /// `r⁻ᵀ`
        rinvt: DMatrix<f64>,
        /// `r rᵀ`, the NT scaling point.
        t: DMatrix<f64>,
        lam: Vec<f64>,
    },
}

/// A quantity expressed in the scaled (λ) frame of one cone.
#[derive(Clone)]
enum Frame {
    Vec(Vec<f64>),
    Mat(DMatrix<f64>),
}

impl Scale {
    fn new(cone: &Cone, x: &[f64], s: &[f64]) -> Option<Scale> {
        match cone.kind {
            ConeKind::Nonneg(_) => {
                if x.iter().chain(s).any(|&v| !(v > 0.0)) {
                    return None;
                }
                Some(Scale::Nonneg {
                    w: x.iter().zip(s).map(|(a, b)| (a / b).sqrt()).collect(),
                    lam: x.iter().zip(s).map(|(a, b)| (a * b).sqrt()).collect(),
                })
            }
            ConeKind::Psd(n) => {
                let lx = smat(x, n).cholesky()?.l();
                let ls = smat(s, n).cholesky()?.l();
                let svd = SVD::new(ls.transpose() * &lx, true, true);
                let u = svd.u?;
                let v = svd.v_t?.transpose();
                let lam: Vec<f64> = svd.singular_values.iter().copied().collect();
                if lam.iter().any(|&l| !(l > 0.0)) {
                    return None;
                }
                let isq = DMatrix::from_diagonal(&DVector::from_iterator(
                    n,
                    lam.iter().map(|l| 1.0 / l.sqrt()),
                ));
                let r = &lx * &v * &isq;
                let rinvt = &ls * &u * &isq;
                let t = &r * r.transpose();
                Some(Scale::Psd { r, rinvt, t, lam })
            }
        }
    }

    /// `D⁻¹ u`, where `D⁻¹ = WᵀW`.
    fn dinv(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scale::Nonneg { w, .. } => {
                for i in 0..u.len() {
                    out[i] = w[i] * w[i] * u[i];
                }
            }
            Scale::Psd { t, .. } => {
                let um = smat(u, t.nrows());
                svec_into(&(t * um * t), out);
            }
        }
    }

    /// `W⁻ᵀ x`: a primal direction in the scaled frame.
    fn scale_primal(&self, x: &[f64]) -> Frame {
        match self {
            Scale::Nonneg { w, .. } => Frame::Vec(x.iter().zip(w).map(|(a, b)| a / b).collect()),
            Scale::Psd { rinvt, .. } => {
                let xm = smat(x, rinvt.nrows());
                Frame::Mat(rinvt.transpose() * xm * rinvt)
            }
        }
    }

    /// `W s`: a dual direction in the scaled frame.
    fn scale_dual(&self, s: &[f64]) -> Frame {
        match self {
            Scale::Nonneg { w, .. } => Frame::Vec(s.iter().zip(w).map(|(a, b)| a * b).collect()),
            Scale::Psd { r, .. } => {
                let sm = smat(s, r.nrows());
                Frame::Mat(r.transpose() * sm * r)
            }
        }
    }

    /// `W⁻¹ u` for a frame quantity, written back in svec form.
    fn unscale(&self, u: &Frame, out: &mut [f64]) {
        match (self, u) {
            (Scale::Nonneg { w, .. }, Frame::Vec(v)) => {
                for i in 0..v.len() {
                    out[i] = v[i] / w[i];
                }
            }
            (Scale::Psd { rinvt, .. }, Frame::Mat(m)) => {
                svec_into(&(rinvt * m * rinvt.transpose()), out);
            }
            _ => unreachable!("frame does not match cone"),
        }
    }

    fn lam(&self) -> &[f64] {
        match self {
            Scale::Nonneg { lam, .. } | Scale::Psd { lam, .. } => lam,
        }
    }

    /// `λ ∘ λ`
    fn lam_sq(&self) -> Frame {
        match self {
            Scale::Nonneg { lam, .. } => Frame::Vec(lam.iter().map(|l| l * l).collect()),
            Scale::Psd { lam, .. } => Frame::Mat(DMatrix::from_diagonal(&DVector::from_iterator(
                lam.len(),
                lam.iter().map(|l| l * l),
            ))),
        }
    }

    /// Solves `λ ∘ u = d` for `u`.
    fn lam_div(&self, d: &Frame) -> Frame {
        match (self, d) {
            (Scale::Nonneg { lam, .. }, Frame::Vec(v)) => {
                Frame::Vec(v.iter().zip(lam).map(|(a, l)| a / l).collect())
            }
            (Scale::Psd { lam, .. }, Frame::Mat(m)) => {
                let n = lam.len();
                Frame::Mat(DMatrix::from_fn(n, n, |i, j| 2.0 * m[(i, j)] / (lam[i] + lam[j])))
            }
            _ => unreachable!("frame does not match cone"),
        }
    }

    /// Largest step `α` with `λ + α·u ⪰ 0` for a frame direction `u`.
    fn max_step(&self, u: &Frame) -> f64 {
        let lam = self.lam();
        match u {
            Frame::Vec(v) => v
                .iter()
                .zip(lam)
                .filter(|(d, _)| **d < 0.0)
                .map(|(d, l)| -l / d)
                .fold(f64::INFINITY, f64::min),
            Frame::Mat(m) => {
                let n = lam.len();
                let scaled =
                    DMatrix::from_fn(n, n, |i, j| m[(i, j)] / (lam[i] * lam[j]).sqrt());
                let scaled = 0.5 * (&scaled + scaled.transpose());
                let min = SymmetricEigen::new(scaled)
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                if min < 0.0 {
                    -1.0 / min
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

impl Frame {
    fn jordan(&self, other: &Frame) -> Frame {
        match (self, other) {
            (Frame::Vec(a), Frame::Vec(b)) => Frame::Vec(a.iter().zip(b).map(|(x, y)| x * y).collect()),
            (Frame::Mat(a), Frame::Mat(b)) => Frame::Mat(0.5 * (a * b + b * a)),
            _ => unreachable!("frame kinds differ"),
        }
    }

    /// `self * a + other * b`
    fn axpby(&self, a: f64, other: &Frame, b: f64) -> Frame {
        match (self, other) {
            (Frame::Vec(x), Frame::Vec(y)) => {
                Frame::Vec(x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
            }
            (Frame::Mat(x), Frame::Mat(y)) => Frame::Mat(x * a + y * b),
            _ => unreachable!("frame kinds differ"),
        }
    }

    fn add_identity(&mut self, c: f64) {
        match self {
            Frame::Vec(v) => v.iter_mut().for_each(|x| *x += c),
            Frame::Mat(m) => {
                for i in 0..m.nrows() {
                    m[(i, i)] += c;
                }
            }
        }
    }
}

struct Direction {
    dxf: DVector<f64>,
    dxc: DVector<f64>,
    dy: DVector<f64>,
    dsc: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Residuals {
    rp: DVector<f64>,
    rdf: DVector<f64>,
    rdc: DVector<f64>,
    rg: f64,
}

#[derive(Clone)]
struct Iterate {
    xf: DVector<f64>,
    xc: DVector<f64>,
    y: DVector<f64>,
    sc: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Snapshot {
    it: Iterate,
    pres: f64,
    dres: f64,
    iters: usize,
}

/// Dense LU of the reduced Newton matrix with refinement against the
/// unregularized matrix.
struct Kkt {
    k0: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kkt {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.lu.solve(rhs)?;
        for _ in 0..REFINE_STEPS {
            let res = rhs - &self.k0 * &x;
            let dx = self.lu.solve(&res)?;
            x += dx;
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }
}

fn run(cp: &Compiled, problem: &ConicProblem, opts: &SolverOptions) -> ConicSolution {
    let (m, nf) = (cp.m, cp.n_free);
    let e = cp.identity();
    let mut it = Iterate {
        xf: DVector::zeros(nf),
        xc: e.clone(),
        y: DVector::zeros(m),
        sc: e.clone(),
        tau: 1.0,
        kappa: 1.0,
    };
    let bnorm = 1.0 + cp.b.norm();
    let cnorm = 1.0 + (cp.c_free.norm_squared() + cp.c_cone.norm_squared()).sqrt();
    let mut best: Option<(f64, Snapshot)> = None;

    for iter in 0..opts.max_iters {
        let res = residuals(cp, &it);
        let pres = res.rp.norm() / it.tau / bnorm;
        let dres = (res.rdf.norm_squared() + res.rdc.norm_squared()).sqrt() / it.tau / cnorm;
        let cx = cp.c_free.dot(&it.xf) + cp.c_cone.dot(&it.xc);
        let by = cp.b.dot(&it.y);
        let pobj = cx / it.tau;
        let dobj = by / it.tau;
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        log::trace!(
            "ipm it={iter} pobj={pobj:.10e} dobj={dobj:.10e} pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} tau={:.2e} kappa={:.2e}",
            it.tau,
            it.kappa
        );

        let score = pres.max(dres).max(relgap);
        if score.is_finite() && best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((
                score,
                Snapshot {
                    it: it.clone(),
                    pres,
                    dres,
                    iters: iter,
                },
            ));
        }

        if pres <= opts.feas_tol && dres <= opts.feas_tol && relgap <= opts.gap_tol {
            return finish(cp, problem, &it, SolveStatus::Optimal, pres, dres, iter);
        }
        if let Some(status) = infeasibility(cp, &it, opts, cnorm, bnorm) {
            return finish(cp, problem, &it, status, pres, dres, iter);
        }

        let Some(scales) = scalings(cp, &it) else {
            break;
        };
        let kkt = assemble(cp, &it, &scales);
        let mu = (it.xc.dot(&it.sc) + it.tau * it.kappa) / (cp.degree + 1.0);

        // predictor
        let lam_sq: Vec<Frame> = scales.iter().map(|s| s.lam_sq()).collect();
        let d_aff: Vec<Frame> = lam_sq.iter().map(|f| f.axpby(-1.0, f, 0.0)).collect();
        let Some(aff) = direction(cp, &it, &scales, &kkt, &res, 1.0, &d_aff, -it.tau * it.kappa)
        else {
            break;
        };
        let alpha_aff = step_length(cp, &it, &scales, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut d_comb = Vec::with_capacity(scales.len());
        for (k, (sc, cone)) in scales.iter().zip(&cp.cones).enumerate() {
            let r = cone.off..cone.off + cone.dim;
            let dx = sc.scale_primal(&aff.dxc.as_slice()[r.clone()]);
            let ds = sc.scale_dual(&aff.dsc.as_slice()[r]);
            let mut d = lam_sq[k].axpby(-1.0, &dx.jordan(&ds), -1.0);
            d.add_identity(sigma * mu);
            d_comb.push(d);
        }
        let d_tau = sigma * mu - it.tau * it.kappa - aff.dtau * aff.dkappa;
        let Some(dir) = direction(cp, &it, &scales, &kkt, &res, 1.0 - sigma, &d_comb, d_tau) else {
            break;
        };
        let alpha = (STEP_FRACTION * step_length(cp, &it, &scales, &dir)).min(1.0);
        if alpha < MIN_STEP {
            log::debug!("ipm: step length collapsed at iteration {iter}");
            break;
        }
        it.xf.axpy(alpha, &dir.dxf, 1.0);
        it.xc.axpy(alpha, &dir.dxc, 1.0);
        it.y.axpy(alpha, &dir.dy, 1.0);
        it.sc.axpy(alpha, &dir.dsc, 1.0);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
    }

    let near = NEAR_OPTIMAL_FACTOR * opts.feas_tol.min(opts.gap_tol);
    match best {
        Some((score, snap)) => finish(
            cp,
            problem,
            &snap.it,
            if score <= near {
                SolveStatus::NearOptimal
            } else {
                SolveStatus::NumericalTrouble
            },
            snap.pres,
            snap.dres,
            snap.iters,
        ),
        None => finish(cp, problem, &it, SolveStatus::NumericalTrouble, f64::NAN, f64::NAN, 0),
    }
}

fn residuals(cp: &Compiled, it: &Iterate) -> Residuals {
    let ax = cp.a_mul(&it.xf, &it.xc);
    let (atyf, atyc) = cp.at_mul(&it.y);
    let cx = cp.c_free.dot(&it.xf) + cp.c_cone.dot(&it.xc);
    Residuals {
        rp: &cp.b * it.tau - ax,
        rdf: &cp.c_free * it.tau - atyf,
        rdc: &cp.c_cone * it.tau - atyc - &it.sc,
        rg: it.kappa + cx - cp.b.dot(&it.y),
    }
}

/// Farkas-type certificates, checked only once `τ` has collapsed below `κ`.
fn infeasibility(
    cp: &Compiled,
    it: &Iterate,
    opts: &SolverOptions,
    cnorm: f64,
    bnorm: f64,
) -> Option<SolveStatus> {
    if it.tau >= it.kappa {
        return None;
    }
    let by = cp.b.dot(&it.y);
    if by > 0.0 {
        let (atyf, atyc) = cp.at_mul(&it.y);
        let r = (atyf.norm_squared() + (atyc + &it.sc).norm_squared()).sqrt();
        if r / by * cnorm.recip() <= opts.feas_tol {
            return Some(SolveStatus::Infeasible);
        }
    }
    let cx = cp.c_free.dot(&it.xf) + cp.c_cone.dot(&it.xc);
    if cx < 0.0 {
        let r = cp.a_mul(&it.xf, &it.xc).norm();
        if r / -cx * bnorm.recip() <= opts.feas_tol {
            return Some(SolveStatus::Unbounded);
        }
    }
    None
}

fn scalings(cp: &Compiled, it: &Iterate) -> Option<Vec<Scale>> {
    cp.cones
        .iter()
        .map(|c| {
            let r = c.off..c.off + c.dim;
            Scale::new(c, &it.xc.as_slice()[r.clone()], &it.sc.as_slice()[r])
        })
        .collect()
}

fn dinv_all(cp: &Compiled, scales: &[Scale], u: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(cp.n_cone);
    for (sc, cone) in scales.iter().zip(&cp.cones) {
        let r = cone.off..cone.off + cone.dim;
        sc.dinv(&u.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
    }
    out
}

fn cone_a_mul(cp: &Compiled, u: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(cp.m);
    for (k, col) in cp.cone_cols.iter().enumerate() {
        let v = u[k];
        if v != 0.0 {
            for &(r, a) in col {
                out[r] += a * v;
            }
        }
    }
    out
}

fn assemble(cp: &Compiled, it: &Iterate, scales: &[Scale]) -> Kkt {
    let (m, nf) = (cp.m, cp.n_free);
    let n = m + nf + 1;
    let mut k = DMatrix::<f64>::zeros(n, n);

    for (ci, (sc, cone)) in scales.iter().zip(&cp.cones).enumerate() {
        match sc {
            Scale::Nonneg { w, .. } => {
                for i in 0..cone.dim {
                    let d = w[i] * w[i];
                    let col = &cp.cone_cols[cone.off + i];
                    for &(r1, a1) in col {
                        for &(r2, a2) in col {
                            k[(r1, r2)] += d * a1 * a2;
                        }
                    }
                }
            }
            Scale::Psd { t, .. } => {
                let rows = &cp.psd_rows[ci];
                let scaled: Vec<DMatrix<f64>> = rows.iter().map(|(_, u)| t * u * t).collect();
                for (i, (ri, _)) in rows.iter().enumerate() {
                    for (rj, uj) in rows.iter() {
                        k[(*ri, *rj)] += scaled[i].dot(uj);
                    }
                }
            }
        }
    }

    let dc = dinv_all(cp, scales, &cp.c_cone);
    let g = cone_a_mul(cp, &dc);
    for r in 0..m {
        for j in 0..nf {
            k[(r, m + j)] = cp.a_free[(r, j)];
            k[(m + j, r)] = cp.a_free[(r, j)];
        }
        k[(r, n - 1)] = -(g[r] + cp.b[r]);
        k[(n - 1, r)] = g[r] - cp.b[r];
    }
    for j in 0..nf {
        k[(m + j, n - 1)] = -cp.c_free[j];
        k[(n - 1, m + j)] = cp.c_free[j];
    }
    k[(n - 1, n - 1)] = -(cp.c_cone.dot(&dc) + it.kappa / it.tau);

    let scale = (0..n).map(|i| k[(i, i)].abs()).fold(1.0, f64::max);
    let reg = 1e-13 * scale;
    let mut kr = k.clone();
    for i in 0..m {
        kr[(i, i)] += reg;
    }
    for j in 0..nf {
        kr[(m + j, m + j)] -= reg;
    }
    let lu = kr.lu();
    Kkt { k0: k, lu }
}

#[allow(clippy::too_many_arguments)]
fn direction(
    cp: &Compiled,
    it: &Iterate,
    scales: &[Scale],
    kkt: &Kkt,
    res: &Residuals,
    gamma: f64,
    d_cone: &[Frame],
    d_tau: f64,
) -> Option<Direction> {
    let (m, nf) = (cp.m, cp.n_free);
    let mut q = DVector::zeros(cp.n_cone);
    for ((sc, cone), d) in scales.iter().zip(&cp.cones).zip(d_cone) {
        let r = cone.off..cone.off + cone.dim;
        sc.unscale(&sc.lam_div(d), &mut q.as_mut_slice()[r]);
    }
    q.axpy(-gamma, &res.rdc, 1.0);
    let dq = dinv_all(cp, scales, &q);

    let mut rhs = DVector::zeros(m + nf + 1);
    let adq = cone_a_mul(cp, &dq);
    for r in 0..m {
        rhs[r] = gamma * res.rp[r] - adq[r];
    }
    for j in 0..nf {
        rhs[m + j] = gamma * res.rdf[j];
    }
    rhs[m + nf] = -gamma * res.rg - d_tau / it.tau - cp.c_cone.dot(&dq);

    let sol = kkt.solve(&rhs)?;
    let dy = sol.rows(0, m).into_owned();
    let dxf = sol.rows(m, nf).into_owned();
    let dtau = sol[m + nf];

    let (_, atdy) = cp.at_mul(&dy);
    let mut u = atdy.clone();
    u.axpy(-dtau, &cp.c_cone, 1.0);
    let mut dxc = dinv_all(cp, scales, &u);
    dxc += &dq;
    let mut dsc = &res.rdc * gamma - atdy;
    dsc.axpy(dtau, &cp.c_cone, 1.0);
    let dkappa = (d_tau - it.kappa * dtau) / it.tau;
    Some(Direction {
        dxf,
        dxc,
        dy,
        dsc,
        dtau,
        dkappa,
    })
}

fn step_length(cp: &Compiled, it: &Iterate, scales: &[Scale], d: &Direction) -> f64 {
    let mut alpha = f64::INFINITY;
    for (sc, cone) in scales.iter().zip(&cp.cones) {
        let r = cone.off..cone.off + cone.dim;
        alpha = alpha.min(sc.max_step(&sc.scale_primal(&d.dxc.as_slice()[r.clone()])));
        alpha = alpha.min(sc.max_step(&sc.scale_dual(&d.dsc.as_slice()[r])));
    }
    if d.dtau < 0.0 {
        alpha = alpha.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-it.kappa / d.dkappa);
    }
    alpha
}

fn finish(
    cp: &Compiled,
    problem: &ConicProblem,
    it: &Iterate,
    status: SolveStatus,
    pres: f64,
    dres: f64,
    iterations: usize,
) -> ConicSolution {
    // Certificates are reported unnormalized; optimal points are divided by τ.
    let scale = match status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => 1.0,
        _ => 1.0 / it.tau,
    };
    let mut primal = Vec::with_capacity(cp.slots.len());
    let mut dual_slack = Vec::with_capacity(cp.slots.len());
    for slot in &cp.slots {
        match *slot {
            Slot::Free { off, len } => {
                primal.push(BlockValue::Vector(
                    (0..len).map(|i| it.xf[off + i] * scale).collect(),
                ));
                dual_slack.push(BlockValue::Vector(vec![0.0; len]));
            }
            Slot::Cone { cone } => {
                let c = &cp.cones[cone];
                let xs = &it.xc.as_slice()[c.off..c.off + c.dim];
                let ss = &it.sc.as_slice()[c.off..c.off + c.dim];
                match c.kind {
                    ConeKind::Nonneg(_) => {
                        primal.push(BlockValue::Vector(xs.iter().map(|v| v * scale).collect()));
                        dual_slack.push(BlockValue::Vector(ss.iter().map(|v| v * scale).collect()));
                    }
                    ConeKind::Psd(n) => {
                        primal.push(BlockValue::Matrix(smat(xs, n) * scale));
                        dual_slack.push(BlockValue::Matrix(smat(ss, n) * scale));
                    }
                }
            }
        }
    }
    debug_assert_eq!(primal.len(), problem.blocks().len());
    let cx = cp.c_free.dot(&it.xf) + cp.c_cone.dot(&it.xc);
    ConicSolution {
        status,
        primal,
        dual_slack,
        dual: it.y.iter().map(|v| v * scale).collect(),
        primal_obj: cx * scale,
        dual_obj: cp.b.dot(&it.y) * scale,
        primal_res: pres,
        dual_res: dres,
        iterations,
    }
}
