use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[test]
fn lp_single_variable() {
    let mut p = ConicProblem::new();
    let x = p.add_nonneg(1);
    p.add_objective(x, 0, 1.0);
    p.add_constraint(vec![term(x, 0, 1.0)], 3.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_obj - 3.0).abs() < 1e-7, "{}", sol.primal_obj);
    assert!((sol.dual[0] - 1.0).abs() < 1e-7);
}

#[test]
fn sdp_trace_with_fixed_corner() {
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    p.add_objective_entry(x, 0, 0, 1.0);
    p.add_objective_entry(x, 1, 1, 1.0);
    p.add_constraint(vec![mterm(x, 0, 0, 1.0)], 1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_obj - 1.0).abs() < 1e-7);
    assert!(sol.matrix(x)[(1, 1)].abs() < 1e-6);
}

#[test]
fn sdp_off_diagonal_coupling() {
    // min X00 + X11 s.t. X01 = 1  =>  X = [[1,1],[1,1]], value 2
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    p.add_objective_entry(x, 0, 0, 1.0);
    p.add_objective_entry(x, 1, 1, 1.0);
    p.add_constraint(vec![mterm(x, 0, 1, 1.0)], 1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_obj - 2.0).abs() < 1e-7, "{}", sol.primal_obj);
}

#[test]
fn free_variables_and_mixed_blocks() {
    // min t  s.t. t - x = 0, x - 2 >= 0 via slack  =>  2
    let mut p = ConicProblem::new();
    let t = p.add_free(1);
    let x = p.add_free(1);
    let s = p.add_nonneg(1);
    p.add_objective(t, 0, 1.0);
    p.add_constraint(vec![term(t, 0, 1.0), term(x, 0, -1.0)], 0.0);
    p.add_constraint(vec![term(x, 0, 1.0), term(s, 0, -1.0)], 2.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.vector(t)[0] - 2.0).abs() < 1e-7);
}

#[test]
fn detects_infeasible_lp() {
    // x >= 0, x = -1
    let mut p = ConicProblem::new();
    let x = p.add_nonneg(1);
    p.add_objective(x, 0, 1.0);
    p.add_constraint(vec![term(x, 0, 1.0)], -1.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn detects_unbounded_lp() {
    // min -x0 s.t. x0 - x1 = 0
    let mut p = ConicProblem::new();
    let x = p.add_nonneg(2);
    p.add_objective(x, 0, -1.0);
    p.add_constraint(vec![term(x, 0, 1.0), term(x, 1, -1.0)], 0.0);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Unbounded);
}

#[test]
fn rejects_bad_terms() {
    let mut p = ConicProblem::new();
    let x = p.add_nonneg(1);
    p.add_constraint(vec![term(x, 3, 1.0)], 0.0);
    assert!(matches!(solve(&p, &SolverOptions::default()), Err(ProblemError::OutOfRange { .. })));
    assert_eq!(solve(&ConicProblem::new(), &SolverOptions::default()), Err(ProblemError::Empty));
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Builds a problem with a known strictly feasible primal point and a known
/// strictly feasible dual point, so strong duality holds.
fn random_pair(seed: u64) -> ConicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..5);
    let k = rng.random_range(1..5);
    let m = rng.random_range(1..6);
    let mut p = ConicProblem::new();
    let xb = p.add_psd(n);
    let lb = p.add_nonneg(k);
    let fb = p.add_free(1);
    let x0 = random_psd(&mut rng, n);
    let l0: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let f0 = rng.random_range(-1.0..1.0);
    let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s0 = random_psd(&mut rng, n);
    let t0: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();

    let mut c_mat = s0.clone();
    let mut c_lin = t0.clone();
    let mut c_free = 0.0;
    for yk in &y0 {
        let mut terms = Vec::new();
        let mut rhs = 0.0;
        let a = random_psd(&mut rng, n) - DMatrix::identity(n, n) * 1.5;
        for i in 0..n {
            for j in 0..n {
                // entry (i,j) and (j,i) are the same variable; split the coefficient
                if i <= j {
                    let coef = if i == j { a[(i, i)] } else { 2.0 * a[(i, j)] };
                    terms.push(mterm(xb, i, j, coef));
                }
            }
        }
        rhs += a.dot(&x0);
        c_mat += &a * *yk;
        for i in 0..k {
            let v = rng.random_range(-1.0..1.0);
            terms.push(term(lb, i, v));
            rhs += v * l0[i];
            c_lin[i] += v * yk;
        }
        let v = rng.random_range(-1.0..1.0);
        terms.push(term(fb, 0, v));
        rhs += v * f0;
        c_free += v * yk;
        p.add_constraint(terms, rhs);
    }
    for i in 0..n {
        for j in i..n {
            let coef = if i == j { c_mat[(i, i)] } else { 2.0 * c_mat[(i, j)] };
            p.add_objective_entry(xb, i, j, coef);
        }
    }
    for i in 0..k {
        p.add_objective(lb, i, c_lin[i]);
    }
    p.add_objective(fb, 0, c_free);
    p
}

#[test]
fn random_feasible_pairs_close_the_gap() {
    let opts = SolverOptions::default();
    for seed in 0..40 {
        let p = random_pair(seed);
        let sol = solve(&p, &opts).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}: {sol:?}");
        assert!(sol.relative_gap() <= 1e-7, "seed {seed}");
        let lhs = constraint_values(&p, &sol.primal);
        for (v, c) in lhs.iter().zip(p.constraints()) {
            assert!((v - c.rhs).abs() <= 1e-6 * (1.0 + c.rhs.abs()), "seed {seed}");
        }
        let eig = nalgebra::SymmetricEigen::new(sol.primal[0].as_matrix().clone()).eigenvalues;
        assert!(eig.min() > -1e-8);
    }
}

#[test]
fn solves_are_deterministic() {
    let p = random_pair(7);
    let a = solve(&p, &SolverOptions::default()).unwrap();
    let b = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sparse_dump_lists_every_term() {
    let mut p = ConicProblem::new();
    let x = p.add_psd(2);
    p.add_objective_entry(x, 0, 0, 1.0);
    p.add_constraint(vec![mterm(x, 0, 1, 2.0), mterm(x, 1, 1, -1.0)], 1.5);
    let mut buf = Vec::new();
    write_sparse_text(&p, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text,
        "block psd 0 2\n0 0 0 obj 1e0\n0 0 1 0 2e0\n0 1 1 0 -1e0\nrhs 0 1.5e0\n"
    );
}
