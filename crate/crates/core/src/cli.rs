//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on runtime failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alloc::{lemma_conditional_win, lemma_max_others_ks, AllocationRule};
use crate::config::{parse_config, ExperimentConfig};
use crate::dist::{parse_number, Distribution};
use crate::poa::{critical_lambda, integrate_poa_ode, Terminal};
use crate::sim::{adversary_best_response, run_game, write_trace, Game};
use crate::targets::{f_star, f_star_two_goods, fair_floor, fair_floor_quadrature, phi, TargetQuery};
use crate::tu::{interim_utility_verify, opponent_grid, tu_payments_with, Mechanism};

const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "gumlab", version, about = "Guaranteed-utility mechanisms: targets, transfers, budgets and simulation")]
pub struct Cli {
    /// Master seed for every randomized computation.
    #[arg(long, global = true, env = "GUMLAB_SEED", hide_env_values = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fair floor E[max of n draws]/n.
    Floor {
        /// Distribution literal, e.g. uniform:2,14.
        #[arg(long)]
        dist: String,
        /// Number of i.i.d. players.
        #[arg(long)]
        n: usize,
        /// Use numerical quadrature instead of the closed form.
        #[arg(long)]
        quadrature: bool,
    },
    /// Per-round target utility phi(alpha, D).
    Phi {
        /// Weight in [0, 1]; fractions such as 1/3 are accepted.
        #[arg(long)]
        alpha: String,
        /// Distribution literal.
        #[arg(long)]
        dist: String,
    },
    /// Horizon target f*(alpha, D, T).
    Fstar {
        /// Weight in [0, 1]; fractions such as 1/3 are accepted.
        #[arg(long)]
        alpha: String,
        /// Distribution literal.
        #[arg(long)]
        dist: String,
        /// Horizon T.
        #[arg(long, default_value_t = 1)]
        periods: u64,
        /// Number of identical goods per round (1 or 2).
        #[arg(long, default_value_t = 1)]
        goods: u8,
    },
    /// Transfer table of the three-player example as CSV.
    TuExample {
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit an evaluated sweep with this many points per V2 level instead of the case table.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Interim-utility constancy check over an opponent report grid.
    TuVerify {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Grid points per opponent axis.
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Largest allowed spread before exiting with status 1.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Externality tables of the transfer-free example as CSV.
    NtuExample {
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-round records of a transfer-free run as CSV.
    NtuRun {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of replications to trace.
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Override the horizon T.
        #[arg(long)]
        periods: Option<u64>,
    },
    /// Price-of-anarchy ODE.
    Poa {
        #[command(subcommand)]
        command: PoaCommand,
    },
    /// Monte Carlo run of a configuration; prints a JSON summary.
    Simulate(SimArgs),
    /// Statistical checks of the quantile-power allocation rule.
    LemmaCheck {
        /// Comma-separated weights, fractions allowed.
        #[arg(long, default_value = "1/3,1/3,1/3")]
        alphas: String,
        /// Draws per test.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Bins for the conditional-frequency test.
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Significance level of each test.
        #[arg(long, default_value_t = 0.01)]
        significance: f64,
        /// Largest allowed per-bin z-score.
        #[arg(long, default_value_t = 4.0)]
        z_band: f64,
    },
    /// Worst truthful utility of a target over the built-in adversaries; prints JSON.
    Adversary {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Target player, starting at 1.
        #[arg(long)]
        target: usize,
        /// Report grid resolution per adversary.
        #[arg(long, default_value_t = 33)]
        grid: usize,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<u64>,
        /// Override the horizon T.
        #[arg(long)]
        periods: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PoaCommand {
    /// Emits the curve as CSV (x, y).
    Curve {
        /// Scaling factor, above 1.
        #[arg(long)]
        lambda: f64,
        /// Integration step, at most 1e-3.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        /// Output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints the critical lambda.
    Critical {
        /// Bisection tolerance, at least 1e-5.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the replication count.
    #[arg(long)]
    pub reps: Option<u64>,
    /// Override the horizon T.
    #[arg(long)]
    pub periods: Option<u64>,
    /// JSON summary path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-round trace CSV of the first replication.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

/// Long help of the program and of every subcommand, in declaration order.
pub fn help_text() -> String {
    fn walk(cmd: &mut clap::Command, path: &str, out: &mut String) {
        let name = if path.is_empty() { cmd.get_name().to_string() } else { format!("{path} {}", cmd.get_name()) };
        out.push_str(&format!("==> {name}\n"));
        out.push_str(&cmd.render_long_help().to_string());
        out.push('\n');
        for sub in cmd.get_subcommands_mut() {
            walk(sub, &name, out);
        }
    }
    let mut cmd = Cli::command().term_width(100);
    cmd.build();
    let mut out = String::new();
    walk(&mut cmd, "", &mut out);
    out
}

/// Every `--flag` accepted anywhere in the command tree.
pub fn flag_names() -> Vec<String> {
    fn walk(cmd: &clap::Command, out: &mut Vec<String>) {
        for a in cmd.get_arguments() {
            if let Some(l) = a.get_long() {
                out.push(format!("--{l}"));
            }
        }
        for sub in cmd.get_subcommands() {
            walk(sub, out);
        }
    }
    let mut cmd = Cli::command();
    cmd.build();
    let mut out = Vec::new();
    walk(&cmd, &mut out);
    out.sort();
    out.dedup();
    out
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<crate::error::Error> for Failure {
    fn from(e: crate::error::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.12}")
}

fn dist_arg(text: &str) -> std::result::Result<Distribution, Failure> {
    text.parse().map_err(|e| Failure::Usage(format!("bad distribution `{text}`: {e}")))
}

fn number_arg(text: &str) -> std::result::Result<f64, Failure> {
    parse_number(text).ok_or_else(|| Failure::Usage(format!("bad number `{text}`")))
}

fn load_config(path: &Path) -> std::result::Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_command<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Outcome {
    let seed = cli.seed;
    match cli.command {
        Command::Floor { dist, n, quadrature } => {
            let d = dist_arg(&dist)?;
            let f = if quadrature { fair_floor_quadrature(&d, n)? } else { fair_floor(&d, n)? };
            writeln!(out, "{}", fmt_num(f))?;
        }
        Command::Phi { alpha, dist } => {
            writeln!(out, "{}", fmt_num(phi(number_arg(&alpha)?, &dist_arg(&dist)?)?))?;
        }
        Command::Fstar { alpha, dist, periods, goods } => {
            let q = TargetQuery::new(number_arg(&alpha)?, dist_arg(&dist)?, periods)?;
            let v = match goods {
                1 => f_star(&q)?,
                2 => f_star_two_goods(&q)?,
                g => return Err(Failure::Usage(format!("goods must be 1 or 2, got {g}"))),
            };
            writeln!(out, "{}", fmt_num(v))?;
        }
        Command::TuExample { out: path, sweep } => {
            let text = tu_example_csv(sweep)?;
            emit(out, path.as_deref(), &text)?;
        }
        Command::TuVerify { config, points, tol } => {
            let cfg = load_config(&config)?;
            let game = Game::new(cfg)?;
            let mech = game.mechanism();
            writeln!(out, "player,min,max,spread,points")?;
            let mut worst: f64 = 0.0;
            for i in 0..mech.players() {
                let grid = opponent_grid(mech.priors(), i, points);
                let r = interim_utility_verify(mech, game.kappa(), i, &grid)?;
                worst = worst.max(r.spread);
                writeln!(out, "{},{},{},{},{}", i + 1, fmt_num(r.min), fmt_num(r.max), fmt_num(r.spread), r.points)?;
            }
            if worst > tol {
                return Err(Failure::Runtime(format!("interim spread {worst:e} exceeds {tol:e}")));
            }
        }
        Command::NtuExample { out: path } => {
            let text = ntu_example_csv()?;
            emit(out, path.as_deref(), &text)?;
        }
        Command::NtuRun { config, out: path, reps, periods } => {
            let mut cfg = load_config(&config)?;
            if let Some(t) = periods {
                cfg.periods = t;
            }
            let seed = seed.unwrap_or(cfg.seed);
            let game = Game::new(cfg)?;
            let mut buf = Vec::new();
            write_trace(&game, seed, reps, &mut buf)?;
            emit(out, path.as_deref(), &String::from_utf8_lossy(&buf))?;
        }
        Command::Poa { command } => match command {
            PoaCommand::Curve { lambda, step, out: path } => {
                let curve = integrate_poa_ode(lambda, step)?;
                let mut text = String::from("x,y\n");
                for (x, y) in &curve.samples {
                    text.push_str(&format!("{},{}\n", fmt_num(*x), fmt_num(*y)));
                }
                if let Terminal::HitZero { x_stop } = curve.terminal {
                    text.push_str(&format!("{},{}\n", fmt_num(x_stop), fmt_num(0.0)));
                }
                emit(out, path.as_deref(), &text)?;
            }
            PoaCommand::Critical { tol } => {
                let c = critical_lambda(tol)?;
                if !c.stable(tol) {
                    return Err(Failure::Runtime(format!(
                        "critical lambda moved from {} to {} under step halving",
                        c.value, c.halved
                    )));
                }
                writeln!(out, "{}", fmt_num(c.value))?;
            }
        },
        Command::Simulate(a) => {
            let mut cfg = load_config(&a.config)?;
            if let Some(t) = a.periods {
                cfg.periods = t;
            }
            if let Some(r) = a.reps {
                cfg.reps = r;
            }
            let seed = seed.unwrap_or(cfg.seed);
            let summary_path = a.out.or_else(|| cfg.summary.clone());
            let trace_path = a.trace.or_else(|| cfg.trace.clone());
            let game = Game::new(cfg.clone())?;
            let summary = run_game(&game, seed, cfg.reps)?;
            if let Some(p) = trace_path {
                let mut f = io::BufWriter::new(fs::File::create(p)?);
                write_trace(&game, seed, 1, &mut f)?;
                f.flush()?;
            }
            emit(out, summary_path.as_deref(), &(summary.to_json() + "\n"))?;
        }
        Command::LemmaCheck { alphas, samples, bins, significance, z_band } => {
            let alphas = alphas.split(',').map(|a| number_arg(a.trim())).collect::<std::result::Result<Vec<_>, _>>()?;
            AllocationRule::quantile_power(alphas.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(DEFAULT_SEED));
            writeln!(out, "player,test,statistic,p_value,pass")?;
            let mut all = true;
            for i in 0..alphas.len() {
                let ks = lemma_max_others_ks(&alphas, i, samples, &mut rng);
                let ks_pass = ks.passes(significance);
                writeln!(out, "{},max-others-ks,{},{},{}", i + 1, fmt_num(ks.statistic), fmt_num(ks.p_value), ks_pass)?;
                let bw = lemma_conditional_win(&alphas, i, samples, bins, &mut rng)?;
                let bw_pass = bw.passes(significance, z_band);
                writeln!(out, "{},conditional-win,{},{},{}", i + 1, fmt_num(bw.chi_square), fmt_num(bw.p_value), bw_pass)?;
                all &= ks_pass && bw_pass;
            }
            if !all {
                return Err(Failure::Runtime("a statistical check failed".into()));
            }
        }
        Command::Adversary { config, target, grid, reps, periods } => {
            let mut cfg = load_config(&config)?;
            if let Some(t) = periods {
                cfg.periods = t;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if target == 0 || target > cfg.players.len() {
                return Err(Failure::Usage(format!("target {target} is not a player")));
            }
            let report = adversary_best_response(&cfg, target - 1, grid)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(out, "{json}")?;
        }
    }
    Ok(())
}

fn example_priors() -> crate::error::Result<Vec<Distribution>> {
    Ok(vec![Distribution::uniform(2.0, 14.0)?, Distribution::uniform(5.0, 11.0)?, Distribution::point(8.0)?])
}

struct TuCase {
    label: &'static str,
    text: [&'static str; 3],
    applies: fn(f64, f64) -> bool,
    value: fn(f64, f64) -> [f64; 3],
}

const TU_CASES: [TuCase; 5] = [
    TuCase {
        label: "V1<=8 and V2<=8",
        text: ["15/4", "9/4", "-6"],
        applies: |a, b| a <= 8.0 && b <= 8.0,
        value: |_, _| [15.0 / 4.0, 9.0 / 4.0, -6.0],
    },
    TuCase {
        label: "V1<=8 and V2>8",
        text: ["15/4", "-23/4", "2"],
        applies: |a, b| a <= 8.0 && b > 8.0,
        value: |_, _| [15.0 / 4.0, -23.0 / 4.0, 2.0],
    },
    TuCase {
        label: "8<V1<11 and V1>=V2",
        text: ["(V1^2-22V1+61)/12", "(-V1^2+22V1-85)/12", "2"],
        applies: |a, b| a > 8.0 && a < 11.0 && a >= b,
        value: |a, _| [(a * a - 22.0 * a + 61.0) / 12.0, (-a * a + 22.0 * a - 85.0) / 12.0, 2.0],
    },
    TuCase {
        label: "8<V1<11 and V1<V2",
        text: ["(V1^2-10V1+61)/12", "(-V1^2+10V1-85)/12", "2"],
        applies: |a, b| a > 8.0 && a < 11.0 && a < b,
        value: |a, _| [(a * a - 10.0 * a + 61.0) / 12.0, (-a * a + 10.0 * a - 85.0) / 12.0, 2.0],
    },
    TuCase { label: "V1>=11", text: ["-5", "3", "2"], applies: |a, _| a >= 11.0, value: |_, _| [-5.0, 3.0, 2.0] },
];

const TU_V2_LEVELS: [f64; 5] = [5.3, 7.1, 8.6, 9.7, 10.9];
const EXAMPLE_TOL: f64 = 1e-12;

/// Transfers of the three-player example with zero constants, reports `(v1, v2, 8)`.
pub fn tu_example_payments(v1: f64, v2: f64) -> crate::error::Result<[f64; 3]> {
    let mech = Mechanism::ascending(AllocationRule::argmax(3), example_priors()?)?;
    let gamma = mech.externalities(&[Some(v1), Some(v2), Some(8.0)])?;
    let y = tu_payments_with(&gamma, &[0.0; 3]).y;
    Ok([y[0], y[1], y[2]])
}

fn tu_example_csv(sweep: Option<usize>) -> std::result::Result<String, Failure> {
    let points = sweep.unwrap_or(200);
    let mut rows = String::from(if sweep.is_some() { "case,v1,v2,y1,y2,y3\n" } else { "case,y1,y2,y3\n" });
    let mut worst: f64 = 0.0;
    let mut hits = [0usize; 5];
    for &v2 in &TU_V2_LEVELS {
        for k in 0..points {
            let v1 = 2.0 + 12.0 * (k as f64 + 0.5) / points as f64;
            if (v1 - v2).abs() < 1e-9 {
                continue;
            }
            let y = tu_example_payments(v1, v2)?;
            let c = TU_CASES.iter().position(|c| (c.applies)(v1, v2)).unwrap_or(0);
            hits[c] += 1;
            let want = (TU_CASES[c].value)(v1, v2);
            worst = (0..3).map(|j| (y[j] - want[j]).abs()).fold(worst, f64::max);
            if sweep.is_some() {
                rows.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c + 1,
                    fmt_num(v1),
                    fmt_num(v2),
                    fmt_num(y[0]),
                    fmt_num(y[1]),
                    fmt_num(y[2])
                ));
            }
        }
    }
    if worst > EXAMPLE_TOL || (points >= 50 && hits.contains(&0)) {
        return Err(Failure::Runtime(format!("transfer table deviates by {worst:e}")));
    }
    if sweep.is_none() {
        for c in &TU_CASES {
            rows.push_str(&format!("{},{},{},{}\n", c.label, c.text[0], c.text[1], c.text[2]));
        }
    }
    Ok(rows)
}

struct NtuRow {
    pair: (usize, usize),
    region: &'static str,
    expression: &'static str,
    value: fn(f64, f64) -> Option<f64>,
}

const R: f64 = 0.84 / 0.96;

const NTU_ROWS: [NtuRow; 10] = [
    NtuRow { pair: (1, 2), region: "0.84V1<=8", expression: "5266/5103", value: |a, _| (0.84 * a <= 8.0).then_some(5266.0 / 5103.0) },
    NtuRow {
        pair: (1, 2),
        region: "8<0.84V1<10.56",
        expression: "(121/12-16658/5103)-((0.84/0.96)^2/12)*V1^2",
        value: |a, _| (0.84 * a > 8.0 && 0.84 * a < 10.56).then(|| 121.0 / 12.0 - 16658.0 / 5103.0 - R * R / 12.0 * a * a),
    },
    NtuRow { pair: (1, 2), region: "0.84V1>=10.56", expression: "-16658/5103", value: |a, _| (0.84 * a >= 10.56).then_some(-16658.0 / 5103.0) },
    NtuRow { pair: (1, 3), region: "0.84V1<=8", expression: "940/567", value: |a, _| (0.84 * a <= 8.0).then_some(940.0 / 567.0) },
    NtuRow { pair: (1, 3), region: "0.84V1>8", expression: "-1580/567", value: |a, _| (0.84 * a > 8.0).then_some(-1580.0 / 567.0) },
    NtuRow {
        pair: (2, 1),
        region: "8<=0.84V1<10.56 and 0.96V2<=0.84V1",
        expression: "(11V1-(0.84/0.96)V1^2)/6",
        value: |a, b| (0.84 * a >= 8.0 && 0.84 * a < 10.56 && 0.96 * b <= 0.84 * a).then(|| (11.0 * a - R * a * a) / 6.0),
    },
    NtuRow {
        pair: (2, 1),
        region: "8<=0.84V1<10.56 and 0.96V2>0.84V1",
        expression: "(5V1-(0.84/0.96)V1^2)/6",
        value: |a, b| (0.84 * a >= 8.0 && 0.84 * a < 10.56 && 0.96 * b > 0.84 * a).then(|| (5.0 * a - R * a * a) / 6.0),
    },
    NtuRow { pair: (2, 1), region: "otherwise", expression: "0", value: |a, _| (0.84 * a < 8.0 || 0.84 * a >= 10.56).then_some(0.0) },
    NtuRow {
        pair: (2, 3),
        region: "0.84V1<=8 and 0.96V2<=8",
        expression: "32/9",
        value: |a, b| (0.84 * a <= 8.0 && 0.96 * b <= 8.0).then_some(32.0 / 9.0),
    },
    NtuRow {
        pair: (2, 3),
        region: "0.84V1<=8 and 0.96V2>8",
        expression: "-40/9",
        value: |a, b| (0.84 * a <= 8.0 && 0.96 * b > 8.0).then_some(-40.0 / 9.0),
    },
];

/// Externalities of the transfer-free example under reports `(v1, v2, 8)`.
pub fn ntu_example_gamma(v1: f64, v2: f64) -> crate::error::Result<crate::tu::GammaMatrix> {
    let mech = Mechanism::ascending(AllocationRule::linear_scaled(vec![0.84, 0.96, 1.0])?, example_priors()?)?;
    mech.externalities(&[Some(v1), Some(v2), Some(8.0)])
}

fn ntu_example_csv() -> std::result::Result<String, Failure> {
    let mut rows = String::from("pair,region,expression,numeric_check\n");
    let mut pair_23_tail = 0.0f64;
    let mut checks = vec![(0.0f64, 0usize); NTU_ROWS.len()];
    for k1 in 0..120 {
        let v1 = 2.0 + 12.0 * (k1 as f64 + 0.5) / 120.0;
        for k2 in 0..37 {
            let v2 = 5.0 + 6.0 * (k2 as f64 + 0.5) / 37.0;
            if (0.84 * v1 - 0.96 * v2).abs() < 1e-9 {
                continue;
            }
            let g = ntu_example_gamma(v1, v2)?;
            for (r, row) in NTU_ROWS.iter().enumerate() {
                if let Some(want) = (row.value)(v1, v2) {
                    let got = g.get(row.pair.0 - 1, row.pair.1 - 1);
                    checks[r].0 = checks[r].0.max((got - want).abs());
                    checks[r].1 += 1;
                }
            }
            if 0.84 * v1 > 8.0 {
                pair_23_tail = pair_23_tail.max(g.get(1, 2).abs());
            }
        }
    }
    for (row, (dev, n)) in NTU_ROWS.iter().zip(&checks) {
        if *n == 0 || *dev > EXAMPLE_TOL {
            return Err(Failure::Runtime(format!("gamma {}->{} on {} deviates by {dev:e}", row.pair.0, row.pair.1, row.region)));
        }
        rows.push_str(&format!("{}->{},{},{},{}\n", row.pair.0, row.pair.1, row.region, row.expression, fmt_num(*dev)));
    }
    if pair_23_tail > EXAMPLE_TOL {
        return Err(Failure::Runtime(format!("gamma 2->3 above the threshold deviates by {pair_23_tail:e}")));
    }
    rows.push_str(&format!("2->3,0.84V1>8,0,{}\n", fmt_num(pair_23_tail)));
    Ok(rows)
}
