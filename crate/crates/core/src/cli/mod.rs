//! Command-line front end: `solve`, `verify`, `recover` and `validate`.
//!
//! Exit codes: 0 success, 1 verification checks failed, 2 unreadable or
//! malformed input, 3 input rejected by validation, 4 solver failure.

pub mod input;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::conic::SolverOptions;
use crate::moments::MomentSequence;
use crate::recover::{recover_measure, DEFAULT_RANK_TOL};
use crate::sc_sdp::{check_complementary_slackness, solve_equilibrium, SpOptions};
use crate::shapley::{value_iterate_from, DEFAULT_MAX_ITER};
use crate::stochgame::{game_from_json, validate, StochasticGame};
use crate::verify::{self, ClaimedEquilibrium, VerifyOptions};

pub use input::{parse_moment_list, parse_solution_json, MomentListError, SolutionParseError};
pub use output::{SolutionReport, StrategyEntry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Allowed `|p* - d*| / (1 + |p*|)` for an accepted SDP solution.
pub const DUALITY_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "polygame", version, about = "Zero-sum polynomial stochastic games on [0, 1]")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Moment/SOS semidefinite program (single-controller games only).
    Sdp,
    /// Value iteration on stage games.
    Shapley,
    /// Both, reporting the largest value difference.
    Both,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Sdp => "sdp",
            Method::Shapley => "shapley",
            Method::Both => "both",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct CheckArgs {
    /// Grid points for the best-response scan.
    #[arg(long, default_value_t = verify::DEFAULT_GRID)]
    pub grid: usize,
    /// Rollout seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rollout episodes per start state; 0 skips the rollout.
    #[arg(long, default_value_t = 0)]
    pub episodes: usize,
}

impl CheckArgs {
    fn options(&self) -> VerifyOptions {
        VerifyOptions {
            grid: self.grid,
            seed: self.seed,
            episodes: self.episodes,
            ..VerifyOptions::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a game and verify the result.
    Solve {
        game: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Sdp)]
        method: Method,
        /// Feasibility and gap tolerance of the conic solver.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Target accuracy of value iteration.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Relative singular-value cutoff for atom recovery.
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        /// Also solve the dual program and compare multipliers.
        #[arg(long)]
        solve_dual_explicitly: bool,
        #[command(flatten)]
        check: CheckArgs,
    },
    /// Check a solution file against a game.
    Verify {
        game: PathBuf,
        solution: PathBuf,
        #[command(flatten)]
        check: CheckArgs,
    },
    /// Recover an atomic measure from moments, given inline ("1,.5,.25")
    /// or as a file.
    Recover {
        #[arg(allow_hyphen_values = true)]
        moments: String,
        #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
    },
    /// Check that a game file describes a valid game.
    Validate { game: PathBuf },
}

/// Failure with an exit code and a message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Stdout text and exit code of a successful run (which may still have
/// failed its checks).
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn load_game(path: &Path) -> Result<StochasticGame, Failure> {
    game_from_json(&read(path)?).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn check_game(g: &StochasticGame) -> Result<(), Failure> {
    let report = validate(g);
    if report.accepted() {
        return Ok(());
    }
    let issues: Vec<String> = report.issues.iter().map(|i| i.to_string()).collect();
    Err(Failure::new(EXIT_VALIDATION, format!("invalid game: {}", issues.join("; "))))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct SolveArgs<'a> {
    method: Method,
    tol: f64,
    eps: f64,
    rank_tol: f64,
    solve_dual_explicitly: bool,
    check: &'a CheckArgs,
}

fn strategies(
    value: Vec<f64>,
    mu: &[MomentSequence],
    nu: &[MomentSequence],
    rank_tol: f64,
) -> Result<(ClaimedEquilibrium, Vec<StrategyEntry>, Vec<StrategyEntry>), Failure> {
    let eq = ClaimedEquilibrium::from_moments(value, mu, nu, rank_tol)
        .map_err(|e| Failure::new(EXIT_SOLVER, format!("strategy recovery failed: {e}")))?;
    let p1 = mu.iter().zip(&eq.player1).map(|(m, d)| StrategyEntry::new(m.values(), d)).collect();
    let p2 = nu.iter().zip(&eq.player2).map(|(m, d)| StrategyEntry::new(m.values(), d)).collect();
    Ok((eq, p1, p2))
}

fn solve_sdp(g: &StochasticGame, a: &SolveArgs) -> Result<SolutionReport, Failure> {
    let solver = SolverOptions {
        feas_tol: a.tol,
        gap_tol: a.tol,
        ..SolverOptions::default()
    };
    let sol = solve_equilibrium(
        g,
        &SpOptions {
            solver,
            solve_dual_explicitly: a.solve_dual_explicitly,
        },
    )
    .map_err(|e| Failure::new(EXIT_SOLVER, format!("SDP solve failed: {e}")))?;
    let (eq, player1, player2) = strategies(sol.v_star.clone(), &sol.mu_bar, &sol.nu_bar, a.rank_tol)?;
    let verification = verify::verify(g, &eq, &a.check.options());
    let slackness = check_complementary_slackness(g, &sol);
    let duality_gap = (sol.p_star - sol.d_star).abs();
    let explicit_dual_delta = sol
        .explicit_dual
        .as_ref()
        .map(|d| max_abs_diff(&d.alpha, &sol.alpha_star));
    let passed = verification.passes()
        && slackness.passes()
        && duality_gap <= DUALITY_TOL * (1.0 + sol.p_star.abs())
        && explicit_dual_delta.is_none_or(|d| d <= 1e-5);
    Ok(SolutionReport {
        method: Method::Sdp.name().to_string(),
        value: sol.v_star.clone(),
        alpha: Some(sol.alpha_star.clone()),
        player1,
        player2,
        residuals: output::Residuals {
            verification,
            slackness: Some(slackness),
            flow: Some(sol.flow_residual.clone()),
            duality_gap: Some(duality_gap),
            explicit_dual_delta,
        },
        solver: output::SolverSummary {
            iters: sol.iterations,
            gap: sol.relative_gap(),
        },
        shapley: None,
        max_value_delta: None,
        passed,
    })
}

fn solve_shapley(g: &StochasticGame, a: &SolveArgs) -> Result<SolutionReport, Failure> {
    let solver = SolverOptions {
        feas_tol: a.tol,
        gap_tol: a.tol,
        ..SolverOptions::default()
    };
    let vi = value_iterate_from(g, &vec![0.0; g.num_states()], a.eps, DEFAULT_MAX_ITER, &solver)
        .map_err(|e| Failure::new(EXIT_SOLVER, format!("value iteration failed: {e}")))?;
    let mu: Vec<MomentSequence> = vi.strategies.iter().map(|s| s.mu.clone()).collect();
    let nu: Vec<MomentSequence> = vi.strategies.iter().map(|s| s.nu.clone()).collect();
    let (eq, player1, player2) = strategies(vi.phi.clone(), &mu, &nu, a.rank_tol)?;
    let verification = verify::verify(g, &eq, &a.check.options());
    let passed = verification.passes();
    Ok(SolutionReport {
        method: Method::Shapley.name().to_string(),
        value: vi.phi.clone(),
        alpha: None,
        player1,
        player2,
        residuals: output::Residuals {
            verification,
            slackness: None,
            flow: None,
            duality_gap: None,
            explicit_dual_delta: None,
        },
        solver: output::SolverSummary {
            iters: vi.trace.residuals.len(),
            gap: vi.fixed_point_residual,
        },
        shapley: None,
        max_value_delta: None,
        passed,
    })
}

fn cmd_solve(path: &Path, a: &SolveArgs, format: Format) -> Result<Outcome, Failure> {
    let g = load_game(path)?;
    check_game(&g)?;
    if a.method != Method::Shapley && !g.single_controller() {
        return Err(Failure::new(
            EXIT_VALIDATION,
            "NotSingleController: transitions depend on player 2's action; use --method shapley",
        ));
    }
    let report = match a.method {
        Method::Sdp => solve_sdp(&g, a)?,
        Method::Shapley => solve_shapley(&g, a)?,
        Method::Both => {
            let mut sdp = solve_sdp(&g, a)?;
            let vi = solve_shapley(&g, a)?;
            let delta = max_abs_diff(&sdp.value, &vi.value);
            sdp.method = Method::Both.name().to_string();
            // value iteration stops within eps of the fixed point
            sdp.passed = sdp.passed && vi.passed && delta <= a.eps + 1e-6;
            sdp.max_value_delta = Some(delta);
            sdp.shapley = Some(output::ShapleySummary {
                value: vi.value,
                iterations: vi.solver.iters,
                fixed_point_residual: vi.solver.gap,
            });
            sdp
        }
    };
    let stdout = match format {
        Format::Json => to_json(&report),
        Format::Text => output::solution_text(&report, g.states()),
    };
    Ok(Outcome {
        code: if report.passed { EXIT_OK } else { EXIT_CHECKS_FAILED },
        stdout,
    })
}

fn cmd_verify(game: &Path, solution: &Path, check: &CheckArgs, format: Format) -> Result<Outcome, Failure> {
    let g = load_game(game)?;
    let text = read(solution)?;
    let eq = parse_solution_json(&text)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", solution.display())))?;
    check_game(&g)?;
    if eq.value.len() != g.num_states() {
        return Err(Failure::new(
            EXIT_VALIDATION,
            format!(
                "solution has {} states but the game has {}",
                eq.value.len(),
                g.num_states()
            ),
        ));
    }
    let report = verify::verify(&g, &eq, &check.options());
    let passed = report.passes();
    let stdout = match format {
        Format::Json => to_json(&report),
        Format::Text => {
            let mut s = String::new();
            output::verification_text(&mut s, &report, &eq.value);
            s.push_str(if passed { "passed\n" } else { "FAILED\n" });
            s
        }
    };
    Ok(Outcome {
        code: if passed { EXIT_OK } else { EXIT_CHECKS_FAILED },
        stdout,
    })
}

fn cmd_recover(arg: &str, rank_tol: f64, format: Format) -> Result<Outcome, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() { read(path)? } else { arg.to_string() };
    let m = parse_moment_list(&text).map_err(|e| Failure::new(EXIT_PARSE, e.to_string()))?;
    let measure = recover_measure(&m, rank_tol).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let stdout = match format {
        Format::Json => to_json(&measure),
        Format::Text => output::measure_text(&measure),
    };
    Ok(Outcome { code: EXIT_OK, stdout })
}

fn cmd_validate(path: &Path, format: Format) -> Result<Outcome, Failure> {
    let g = load_game(path)?;
    let report = validate(&g);
    let stdout = match format {
        Format::Json => to_json(&report),
        Format::Text => output::validation_text(&report),
    };
    Ok(Outcome {
        code: if report.accepted() { EXIT_OK } else { EXIT_VALIDATION },
        stdout,
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Solve {
            game,
            method,
            tol,
            eps,
            rank_tol,
            solve_dual_explicitly,
            check,
        } => cmd_solve(
            game,
            &SolveArgs {
                method: *method,
                tol: *tol,
                eps: *eps,
                rank_tol: *rank_tol,
                solve_dual_explicitly: *solve_dual_explicitly,
                check,
            },
            cli.format,
        ),
        Command::Verify { game, solution, check } => cmd_verify(game, solution, check, cli.format),
        Command::Recover { moments, rank_tol } => cmd_recover(moments, *rank_tol, cli.format),
        Command::Validate { game } => cmd_validate(game, cli.format),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            let _ = out.write_all(o.stdout.as_bytes());
            o.code
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("POLYGAME_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
