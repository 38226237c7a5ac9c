//! Serialized solution reports and their text rendering.

use std::fmt::Write;

use serde::Serialize;

use crate::recover::DiscreteMeasure;
use crate::sc_sdp::Slackness;
use crate::stochgame::ValidationReport;
use crate::verify::{RolloutReport, VerificationReport};

#[derive(Debug, Clone, Serialize)]
pub struct StrategyEntry {
    pub moments: Vec<f64>,
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl StrategyEntry {
    pub fn new(moments: &[f64], m: &DiscreteMeasure) -> Self {
        Self {
            moments: moments.to_vec(),
            atoms: m.atoms().to_vec(),
            weights: m.weights().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    #[serde(flatten)]
    pub verification: VerificationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slackness: Option<Slackness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    /// Largest difference between `α` from the multipliers and from the
    /// explicitly solved dual program.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit_dual_delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub iters: usize,
    /// Relative primal-dual gap for the SDP; the final fixed-point
    /// residual `‖T(φ) - φ‖∞` for value iteration.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapleySummary {
    pub value: Vec<f64>,
    pub iterations: usize,
    pub fixed_point_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub method: String,
    pub value: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub player1: Vec<StrategyEntry>,
    pub player2: Vec<StrategyEntry>,
    pub residuals: Residuals,
    pub solver: SolverSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shapley: Option<ShapleySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_value_delta: Option<f64>,
    pub passed: bool,
}

/// Six significant digits.
pub fn sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // exponent after rounding, so 0.9999999 counts as 1
    let s = format!("{x:.5e}");
    let e: i32 = s[s.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..5).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        s
    }
}

fn list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| sig(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

fn measure_line(m: &StrategyEntry) -> String {
    if m.atoms.is_empty() {
        return "0".to_string();
    }
    m.atoms
        .iter()
        .zip(&m.weights)
        .map(|(a, w)| format!("{} δ({})", sig(*w), sig(*a)))
        .collect::<Vec<_>>()
        .join(" + ")
}

pub fn rollout_text(out: &mut String, r: &RolloutReport, value: &[f64]) {
    let _ = writeln!(
        out,
        "rollout: {} episodes, horizon {}, seed {}, rng {}, truncation bias <= {}",
        r.episodes,
        r.horizon,
        r.seed,
        r.rng,
        sig(r.truncation_bias)
    );
    for (s, st) in r.per_state.iter().enumerate() {
        let z = if st.stderr > 0.0 {
            sig((st.mean - value[s]) / st.stderr)
        } else {
            "-".to_string()
        };
        let _ = writeln!(
            out,
            "  start {s}: mean {} stderr {} (z = {z})",
            sig(st.mean),
            sig(st.stderr)
        );
    }
}

pub fn verification_text(out: &mut String, v: &VerificationReport, value: &[f64]) {
    let _ = writeln!(out, "bellman residual: {}", list(&v.bellman_res));
    let _ = writeln!(out, "player 1 gap:     {}", list(&v.p1_gap));
    let _ = writeln!(out, "player 2 gap:     {}", list(&v.p2_gap));
    if let Some(r) = &v.rollout {
        rollout_text(out, r, value);
    }
}

pub fn solution_text(r: &SolutionReport, states: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method: {}", r.method);
    for (s, name) in states.iter().enumerate() {
        let _ = write!(out, "state {name}: value {}", sig(r.value[s]));
        if let Some(a) = &r.alpha {
            let _ = write!(out, ", alpha {}", sig(a[s]));
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "  player 1: {}  moments {}",
            measure_line(&r.player1[s]),
            list(&r.player1[s].moments)
        );
        let _ = writeln!(
            out,
            "  player 2: {}  moments {}",
            measure_line(&r.player2[s]),
            list(&r.player2[s].moments)
        );
    }
    verification_text(&mut out, &r.residuals.verification, &r.value);
    if let Some(sl) = &r.residuals.slackness {
        let _ = writeln!(
            out,
            "slackness:        {}",
            sig(max(&sl.res1).max(max(&sl.res2)))
        );
    }
    if let Some(f) = &r.residuals.flow {
        let _ = writeln!(out, "flow residual:    {}", sig(max(f)));
    }
    if let Some(g) = r.residuals.duality_gap {
        let _ = writeln!(out, "duality gap:      {}", sig(g));
    }
    if let Some(d) = r.residuals.explicit_dual_delta {
        let _ = writeln!(out, "explicit dual:    max |Δα| {}", sig(d));
    }
    let _ = writeln!(out, "solver: {} iterations, gap {}", r.solver.iters, sig(r.solver.gap));
    if let Some(sh) = &r.shapley {
        let _ = writeln!(
            out,
            "value iteration: {} after {} iterations (fixed-point residual {})",
            list(&sh.value),
            sh.iterations,
            sig(sh.fixed_point_residual)
        );
    }
    if let Some(d) = r.max_value_delta {
        let _ = writeln!(out, "max |Δv|: {}", sig(d));
    }
    let _ = writeln!(out, "{}", if r.passed { "passed" } else { "FAILED" });
    out
}

pub fn validation_text(v: &ValidationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "single controller: {}", v.single_controller);
    for issue in &v.issues {
        let _ = writeln!(out, "issue: {issue}");
    }
    let _ = writeln!(out, "{}", if v.accepted() { "accepted" } else { "rejected" });
    out
}

pub fn measure_text(m: &DiscreteMeasure) -> String {
    let mut out = String::new();
    for (a, w) in m.atoms().iter().zip(m.weights()) {
        let _ = writeln!(out, "atom {} weight {}", sig(*a), sig(*w));
    }
    out
}
