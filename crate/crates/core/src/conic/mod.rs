//! Small dense conic programs and a primal-dual interior-point backend.
//!
//! A [`ConicProblem`] is a linear objective over variable blocks, each of
//! which is free, elementwise nonnegative or a symmetric PSD matrix, subject
//! to affine equalities:
//!
//! ```text
//! minimize   <c, x>
//! subject to <a_k, x> = b_k          k = 0..m
//!            x_b free | x_b >= 0 | X_b ⪰ 0   for each block b
//! ```
//!
//! The dual reported alongside every solution is
//!
//! ```text
//! maximize   <b, y>
//! subject to c - Σ y_k a_k = s,   s_b = 0 on free blocks, s_b in the cone otherwise
//! ```
//!
//! For a PSD block a term `(block, i, j, coef)` contributes `coef * X[i][j]`;
//! `(i, j)` and `(j, i)` refer to the same entry, so an off-diagonal
//! coefficient is *not* doubled automatically.

mod dump;
mod ipm;

use nalgebra::DMatrix;

pub use dump::write_sparse_text;
pub use ipm::InteriorPoint;

/// Handle to a variable block inside a [`ConicProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub(crate) usize);

impl BlockId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Free(usize),
    Nonneg(usize),
    /// Symmetric PSD matrix of the given side.
    PsdMatrix(usize),
}

impl BlockKind {
    /// Number of `(row, col)` addresses: vector length or matrix side.
    pub fn side(&self) -> usize {
        match *self {
            BlockKind::Free(n) | BlockKind::Nonneg(n) | BlockKind::PsdMatrix(n) => n,
        }
    }
}

/// One coefficient of a linear functional over the blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub block: BlockId,
    pub row: usize,
    pub col: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown block {0}")]
    UnknownBlock(usize),
    #[error("entry ({row}, {col}) out of range for block {block} of kind {kind:?}")]
    OutOfRange {
        block: usize,
        row: usize,
        col: usize,
        kind: BlockKind,
    },
    #[error("problem has no variables")]
    Empty,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    blocks: Vec<BlockKind>,
    objective: Vec<Term>,
    constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_free(&mut self, n: usize) -> BlockId {
        self.push_block(BlockKind::Free(n))
    }

    pub fn add_nonneg(&mut self, n: usize) -> BlockId {
        self.push_block(BlockKind::Nonneg(n))
    }

    pub fn add_psd(&mut self, side: usize) -> BlockId {
        self.push_block(BlockKind::PsdMatrix(side))
    }

    fn push_block(&mut self, kind: BlockKind) -> BlockId {
        self.blocks.push(kind);
        BlockId(self.blocks.len() - 1)
    }

    pub fn blocks(&self) -> &[BlockKind] {
        &self.blocks
    }

    pub fn kind(&self, b: BlockId) -> BlockKind {
        self.blocks[b.0]
    }

    pub fn objective(&self) -> &[Term] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds `coef` to the objective coefficient of `x_b[i]` (vector blocks).
    pub fn add_objective(&mut self, block: BlockId, i: usize, coef: f64) {
        self.add_objective_entry(block, i, 0, coef);
    }

    /// Adds `coef * X_b[i][j]` to the objective.
    pub fn add_objective_entry(&mut self, block: BlockId, row: usize, col: usize, coef: f64) {
        self.objective.push(Term {
            block,
            row,
            col,
            coef,
        });
    }

    /// Appends an equality constraint and returns its index.
    pub fn add_constraint(&mut self, terms: Vec<Term>, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, rhs });
        self.constraints.len() - 1
    }

    /// Checks that every term references a declared block and a valid entry.
    pub fn check(&self) -> Result<(), ProblemError> {
        if self.blocks.iter().all(|k| k.side() == 0) {
            return Err(ProblemError::Empty);
        }
        let all = self
            .objective
            .iter()
            .chain(self.constraints.iter().flat_map(|c| c.terms.iter()));
        for t in all {
            let kind = *self
                .blocks
                .get(t.block.0)
                .ok_or(ProblemError::UnknownBlock(t.block.0))?;
            let ok = match kind {
                BlockKind::Free(n) | BlockKind::Nonneg(n) => t.row < n && t.col == 0,
                BlockKind::PsdMatrix(n) => t.row < n && t.col < n,
            };
            if !ok {
                return Err(ProblemError::OutOfRange {
                    block: t.block.0,
                    row: t.row,
                    col: t.col,
                    kind,
                });
            }
        }
        Ok(())
    }
}

/// Shorthand for building a [`Term`] on a vector block.
pub fn term(block: BlockId, i: usize, coef: f64) -> Term {
    Term {
        block,
        row: i,
        col: 0,
        coef,
    }
}

/// Shorthand for building a [`Term`] on a matrix entry.
pub fn mterm(block: BlockId, row: usize, col: usize, coef: f64) -> Term {
    Term {
        block,
        row,
        col,
        coef,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Stalled, but the best iterate is within a factor
    /// [`NEAR_OPTIMAL_FACTOR`] of the tolerances.
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
}

pub const NEAR_OPTIMAL_FACTOR: f64 = 100.0;

impl SolveStatus {
    /// Optimal or near optimal.
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iters: 200,
        }
    }
}

/// Value of one block: a vector for free/nonneg blocks, a matrix for PSD.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Vector(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl BlockValue {
    pub fn as_vector(&self) -> &[f64] {
        match self {
            BlockValue::Vector(v) => v,
            BlockValue::Matrix(_) => panic!("block holds a matrix"),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        match self {
            BlockValue::Matrix(m) => m,
            BlockValue::Vector(_) => panic!("block holds a vector"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal values, one per block (in declaration order).
    pub primal: Vec<BlockValue>,
    /// Dual slack `s = c - Σ y_k a_k`, one per block.
    pub dual_slack: Vec<BlockValue>,
    /// Multiplier `y_k` per equality constraint.
    pub dual: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    /// Relative primal residual `||Ax - b|| / (1 + ||b||)`.
    pub primal_res: f64,
    /// Relative dual residual `||c - A'y - s|| / (1 + ||c||)`.
    pub dual_res: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn vector(&self, b: BlockId) -> &[f64] {
        self.primal[b.0].as_vector()
    }

    pub fn matrix(&self, b: BlockId) -> &DMatrix<f64> {
        self.primal[b.0].as_matrix()
    }

    pub fn gap(&self) -> f64 {
        (self.primal_obj - self.dual_obj).abs()
    }

    /// `|primal - dual| / (1 + |primal|)`.
    pub fn relative_gap(&self) -> f64 {
        self.gap() / (1.0 + self.primal_obj.abs())
    }
}

/// A conic solver backend. [`InteriorPoint`] is the reference implementation.
pub trait ConicBackend {
    fn solve(&self, problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ProblemError>;
}

/// Solves with the reference interior-point backend.
pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ProblemError> {
    InteriorPoint.solve(problem, opts)
}

/// Evaluates every constraint's left-hand side at a primal point.
pub fn constraint_values(problem: &ConicProblem, primal: &[BlockValue]) -> Vec<f64> {
    problem
        .constraints()
        .iter()
        .map(|c| c.terms.iter().map(|t| t.coef * entry(&primal[t.block.0], t)).sum())
        .collect()
}

fn entry(v: &BlockValue, t: &Term) -> f64 {
    match v {
        BlockValue::Vector(x) => x[t.row],
        BlockValue::Matrix(m) => m[(t.row, t.col)],
    }
}

#[cfg(test)]
mod tests;
