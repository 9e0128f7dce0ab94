//! Command-line front end.
//!
//! Commands return an [`Output`] holding the full standard output, the
//! diagnostic stream and the exit code, so nothing is printed until a run
//! has finished. Exit codes: 0 ok, 1 invariant failure, 2 config error,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::alfn::{self, SignTracker};
use crate::curve::CurveSpec;
use crate::error::Error;
use crate::exec::{self, Execution};
use crate::mumford::{MumfordTriple, DIVISIBILITY_TOL};
use crate::neumann::{self, NeumannState, Trajectory, MANIFOLD_TOL};
use crate::poly::Poly;
use crate::spectral::{self, SpectralData};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Residuals reported by `invariants` must stay below this.
pub const INVARIANT_TOL: f64 = 1e-7;
pub const DEFAULT_T_END: f64 = 5.0;
pub const DEFAULT_DT_OUT: f64 = 0.01;
pub const DEFAULT_RTOL: f64 = 1e-10;

const SEED_ATTEMPTS: usize = 10_000;
/// Seeded states are redrawn until every `m_i` exceeds this.
const SEED_MIN_M: f64 = 0.02;

#[derive(Debug, Parser)]
#[command(name = "neumann", version, about = "Neumann oscillator: direct and algebraic evolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate along one or both paths and emit the trajectory.
    Simulate(RunArgs),
    /// Report the largest residual of every conserved quantity and identity.
    Invariants(RunArgs),
    /// Print the spectral curve and Mumford triple of the initial state.
    Spectrum(RunArgs),
    /// Run one command over several config files.
    Batch(BatchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Direct,
    Algebraic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coupling constants, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub qdot: Option<Vec<f64>>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt_out: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long, value_enum)]
    pub path: Option<PathKind>,
    /// Draw a random interlaced initial state when none is configured.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BatchCommand {
    Simulate,
    Invariants,
    Spectrum,
}

#[derive(Debug, Clone, Args)]
pub struct BatchArgs {
    #[arg(value_enum)]
    pub command: BatchCommand,
    /// Config files, run in the order given.
    #[arg(long = "config", required = true)]
    pub configs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Run configs one after another instead of in parallel.
    #[arg(long)]
    pub sequential: bool,
}

/// Everything a command produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub code: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Config file layout; every field may also come from a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub a: Option<Vec<f64>>,
    pub state: Option<StateConfig>,
    pub spectrum: Option<SpectrumConfig>,
    pub t_end: Option<f64>,
    pub dt_out: Option<f64>,
    pub rtol: Option<f64>,
    pub path: Option<PathKind>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

/// Curve branch points `c` and a triple: `u` holds all `g + 1` coefficients
/// of the monic `U`, `v` the `g` coefficients of `V`, both ascending.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum InitialData {
    State(StateConfig),
    Spectrum(SpectrumConfig),
    Seeded(u64),
}

/// A merged configuration, not yet checked numerically.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub a: Vec<f64>,
    pub initial: InitialData,
    pub t_end: f64,
    pub dt_out: f64,
    pub rtol: f64,
    pub path: PathKind,
}

impl RunConfig {
    /// Read the config file (if any) and apply flag overrides.
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let a = args
            .a
            .clone()
            .or(file.a)
            .ok_or_else(|| CliError::Config("coupling constants a are required".into()))?;

        let initial = if args.q.is_some() || args.qdot.is_some() {
            let q = args.q.clone().or_else(|| file.state.as_ref().map(|s| s.q.clone()));
            let qdot = args
                .qdot
                .clone()
                .or_else(|| file.state.as_ref().map(|s| s.qdot.clone()));
            match (q, qdot) {
                (Some(q), Some(qdot)) => InitialData::State(StateConfig { q, qdot }),
                _ => return Err(CliError::Config("state needs both q and qdot".into())),
            }
        } else {
            match (file.state, file.spectrum) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "give either state or spectrum, not both".into(),
                    ))
                }
                (Some(s), None) => InitialData::State(s),
                (None, Some(s)) => InitialData::Spectrum(s),
                (None, None) => match args.seed.or(file.seed) {
                    Some(seed) => InitialData::Seeded(seed),
                    None => {
                        return Err(CliError::Config(
                            "one of state, spectrum or seed is required".into(),
                        ))
                    }
                },
            }
        };
        Ok(RunConfig {
            a,
            initial,
            t_end: args.t_end.or(file.t_end).unwrap_or(DEFAULT_T_END),
            dt_out: args.dt_out.or(file.dt_out).unwrap_or(DEFAULT_DT_OUT),
            rtol: args.rtol.or(file.rtol).unwrap_or(DEFAULT_RTOL),
            path: args.path.or(file.path).unwrap_or(PathKind::Both),
        })
    }
}

#[derive(Debug, Clone)]
enum Initial {
    State(NeumannState),
    Triple(MumfordTriple),
}

/// A validated run.
#[derive(Debug, Clone)]
struct Prepared {
    a: Vec<f64>,
    initial: Initial,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
    path: PathKind,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    neumann::validate_couplings(&cfg.a).map_err(config_err)?;
    neumann::check_run_args(cfg.t_end, cfg.dt_out, cfg.rtol).map_err(config_err)?;
    let n = cfg.a.len();
    let initial = match &cfg.initial {
        InitialData::State(s) => {
            if s.q.len() != n || s.qdot.len() != n {
                return Err(CliError::Config(format!(
                    "state has {} positions and {} velocities, expected {n} of each",
                    s.q.len(),
                    s.qdot.len()
                )));
            }
            let state = NeumannState::new(s.q.clone(), s.qdot.clone()).map_err(config_err)?;
            state.check_on_manifold(MANIFOLD_TOL).map_err(config_err)?;
            Initial::State(state)
        }
        InitialData::Spectrum(sp) => {
            let curve = CurveSpec::new(cfg.a.clone(), sp.c.clone()).map_err(config_err)?;
            let g = curve.genus();
            if sp.u.len() != g + 1 || sp.v.len() != g {
                return Err(CliError::Config(format!(
                    "spectrum needs {} coefficients of u and {g} of v, got {} and {}",
                    g + 1,
                    sp.u.len(),
                    sp.v.len()
                )));
            }
            let triple = MumfordTriple::new(
                Arc::new(curve),
                Poly::new(sp.u.clone()),
                Poly::new(sp.v.clone()),
            )
            .map_err(config_err)?;
            Initial::Triple(triple)
        }
        InitialData::Seeded(seed) => Initial::State(seeded_state(&cfg.a, *seed)?),
    };
    Ok(Prepared {
        a: cfg.a.clone(),
        initial,
        t_end: cfg.t_end,
        dt_out: cfg.dt_out,
        rtol: cfg.rtol,
        path: cfg.path,
    })
}

/// Deterministic random on-manifold state with an interlaced spectrum.
pub fn seeded_state(a: &[f64], seed: u64) -> Result<NeumannState, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SEED_ATTEMPTS {
        let s = NeumannState::random(a.len(), 1.0, &mut rng);
        if let Ok(sd) = spectral::spectrum_from_state(a, &s) {
            if sd.curve.is_interlaced() && sd.m.iter().all(|&m| m > SEED_MIN_M) {
                return Ok(s);
            }
        }
    }
    Err(CliError::Numerical(format!(
        "no interlaced state found for seed {seed} after {SEED_ATTEMPTS} draws"
    )))
}

impl Prepared {
    fn initial_state(&self) -> crate::Result<NeumannState> {
        match &self.initial {
            Initial::State(s) => Ok(s.clone()),
            Initial::Triple(t) => alfn::recover_state(t, &SignTracker::positive(self.a.len())),
        }
    }

    /// Spectral data and starting branches for the algebraic path.
    fn spectral(&self) -> crate::Result<(SpectralData, SignTracker)> {
        match &self.initial {
            Initial::State(s) => Ok((
                spectral::spectrum_from_state(&self.a, s)?,
                SignTracker::from_state(s),
            )),
            Initial::Triple(t) => Ok((
                SpectralData::from_triple(t.clone())?,
                SignTracker::positive(self.a.len()),
            )),
        }
    }

    fn algebraic(&self) -> crate::Result<(Trajectory, Vec<(f64, MumfordTriple)>)> {
        let (sd, tracker) = self.spectral()?;
        if !sd.curve.is_interlaced() {
            return Err(Error::NotInterlaced);
        }
        spectral::algebraic_trajectory(&sd, tracker, self.t_end, self.dt_out, self.rtol)
    }

    fn direct(&self) -> crate::Result<Trajectory> {
        let s0 = self.initial_state()?;
        neumann::integrate(&self.a, &s0, self.t_end, self.dt_out, self.rtol)
    }
}

/// `wp_gg` read off a state: `sum a_i - sum a_i q_i^2`.
fn wp_gg_of_state(a: &[f64], s: &NeumannState) -> f64 {
    a.iter().sum::<f64>() - a.iter().zip(&s.q).map(|(ai, q)| ai * q * q).sum::<f64>()
}

struct Block {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn columns(n: usize, residuals: &[&str]) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("q_{i}")));
    cols.extend((1..=n).map(|i| format!("qdot_{i}")));
    cols.extend(["H", "L", "wp_gg"].map(String::from));
    cols.extend((1..=n).map(|i| format!("m_{i}")));
    cols.extend(residuals.iter().map(|r| format!("res_{r}")));
    cols
}

fn state_row(a: &[f64], t: f64, s: &NeumannState, wp: f64) -> Vec<f64> {
    let mut row = vec![t];
    row.extend(&s.q);
    row.extend(&s.qdot);
    row.push(neumann::hamiltonian(a, s));
    row.push(neumann::lagrangian(a, s));
    row.push(wp);
    row.extend(neumann::uhlenbeck_m(a, s));
    row
}

fn direct_block(a: &[f64], traj: &Trajectory) -> Block {
    let rows = (0..traj.len())
        .map(|k| {
            let s = &traj.states[k];
            let mut row = state_row(a, traj.times[k], s, wp_gg_of_state(a, s));
            let r = &traj.residuals[k];
            row.push(r["phi"].max(r["phi_dot"]));
            row
        })
        .collect();
    Block {
        columns: columns(a.len(), &["constraint"]),
        rows,
    }
}

fn algebraic_block(a: &[f64], traj: &Trajectory, triples: &[(f64, MumfordTriple)]) -> Block {
    let rows = (0..traj.len())
        .map(|k| {
            let s = &traj.states[k];
            let mut row = state_row(a, traj.times[k], s, triples[k].1.wp_gg());
            let r = &traj.residuals[k];
            row.push(r["frobenius1"]);
            row.push(r["divisibility"]);
            row
        })
        .collect();
    Block {
        columns: columns(a.len(), &["frobenius1", "divisibility"]),
        rows,
    }
}

fn write_csv(out: &mut String, block: &Block) {
    out.push_str(&block.columns.join(","));
    out.push('\n');
    for row in &block.rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
}

fn block_json(block: &Block) -> Value {
    json!({ "columns": block.columns, "rows": block.rows })
}

fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

pub fn cmd_simulate(cfg: &RunConfig, format: Format) -> Result<Output, CliError> {
    let p = prepare(cfg)?;
    let direct = match p.path {
        PathKind::Algebraic => None,
        _ => Some(p.direct().map_err(numerical)?),
    };
    let algebraic = match p.path {
        PathKind::Direct => None,
        _ => Some(p.algebraic().map_err(numerical)?),
    };
    let maxdiff = match (&direct, &algebraic) {
        (Some(d), Some((alg, _))) => {
            let (dq, dv) = d.sup_distance(alg).map_err(numerical)?;
            Some(dq.max(dv))
        }
        _ => None,
    };
    let blocks: Vec<(&str, Block)> = direct
        .as_ref()
        .map(|d| ("direct", direct_block(&p.a, d)))
        .into_iter()
        .chain(
            algebraic
                .as_ref()
                .map(|(t, tr)| ("algebraic", algebraic_block(&p.a, t, tr))),
        )
        .collect();

    let mut stdout = String::new();
    match format {
        Format::Csv => {
            for (k, (_, block)) in blocks.iter().enumerate() {
                if k > 0 {
                    stdout.push('\n');
                }
                write_csv(&mut stdout, block);
            }
            if let Some(d) = maxdiff {
                let _ = writeln!(stdout, "\nmaxdiff={d:.16e}");
            }
        }
        Format::Json => {
            let mut obj = Map::new();
            for (name, block) in &blocks {
                obj.insert(name.to_string(), block_json(block));
            }
            if let Some(d) = maxdiff {
                obj.insert("maxdiff".into(), json!(d));
            }
            stdout = to_json_string(&Value::Object(obj));
        }
    }
    Ok(Output {
        stdout,
        stderr: String::new(),
        code: EXIT_OK,
    })
}

/// Residual report of the `invariants` command.
#[derive(Debug, Clone, Default)]
pub struct InvariantReport {
    pub residuals: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Set when the algebraic flow refused to start.
    pub refused: bool,
}

impl InvariantReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.refused && self.residuals.values().all(|&r| r <= INVARIANT_TOL)
    }

    fn to_json(&self) -> Value {
        json!({
            "pass": self.passed(),
            "tolerance": INVARIANT_TOL,
            "max_residual": self.max_residual(),
            "residuals": self.residuals,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
        })
    }
}

fn invariant_report(p: &Prepared) -> Result<InvariantReport, CliError> {
    let mut rep = InvariantReport::default();
    if let Initial::Triple(t) = &p.initial {
        let div = t.divisibility_residual();
        if div > DIVISIBILITY_TOL {
            rep.residuals.insert("divisibility".into(), div);
            rep.notes
                .push("initial triple is off the curve; algebraic flow refused".into());
            rep.refused = true;
            return Ok(rep);
        }
    }

    let direct = p.direct().map_err(numerical)?;
    for (key, name) in [("phi", "constraint_phi"), ("phi_dot", "constraint_phi_dot")] {
        rep.residuals
            .insert(name.into(), direct.max_residual(key).unwrap_or(0.0));
    }
    let drift = spectral::conserved_report_with(&direct, &p.a, Execution::Sequential)
        .map_err(numerical)?;
    for (k, v) in drift {
        let name = match k.as_str() {
            "sum_m" | "sum_am_2h" => k,
            _ => format!("drift_{k}"),
        };
        rep.residuals.insert(name, v);
    }

    let spectrum = match p.spectral() {
        Ok(s) => s,
        Err(e) => {
            rep.notes
                .push(format!("{e}; algebraic checks skipped"));
            return Ok(rep);
        }
    };
    for (k, v) in &spectrum.0.residuals {
        if k != "divisibility" {
            rep.residuals.insert(k.clone(), *v);
        }
    }
    if !spectrum.0.curve.is_interlaced() {
        rep.notes
            .push("spectrum is not interlaced; algebraic checks skipped".into());
        return Ok(rep);
    }
    let (alg, triples) = p.algebraic().map_err(numerical)?;
    let ids = spectral::identity_sweep(&triples, Execution::Sequential).map_err(numerical)?;
    rep.residuals.extend(ids);
    rep.residuals
        .insert("divisibility".into(), alg.max_residual("divisibility").unwrap_or(0.0));
    let (dq, dv) = direct.sup_distance(&alg).map_err(numerical)?;
    rep.diagnostics.insert("cross_path_q".into(), dq);
    rep.diagnostics.insert("cross_path_qdot".into(), dv);
    Ok(rep)
}

pub fn cmd_invariants(cfg: &RunConfig, format: Format) -> Result<Output, CliError> {
    if format == Format::Csv {
        return Err(CliError::Config("invariants only supports --format json".into()));
    }
    let p = prepare(cfg)?;
    let rep = invariant_report(&p)?;
    Ok(Output {
        stdout: to_json_string(&rep.to_json()),
        stderr: String::new(),
        code: if rep.passed() { EXIT_OK } else { EXIT_INVARIANT },
    })
}

pub fn cmd_spectrum(cfg: &RunConfig, format: Format) -> Result<Output, CliError> {
    if format == Format::Csv {
        return Err(CliError::Config("spectrum only supports --format json".into()));
    }
    let p = prepare(cfg)?;
    let s = p.initial_state().map_err(numerical)?;
    let sd = spectral::spectrum_from_state(&p.a, &s).map_err(numerical)?;
    let (w, _) = sd.triple.w_poly().map_err(numerical)?;
    let report = json!({
        "c": sd.curve.c(),
        "m": sd.m,
        "H_curve": sd.curve.hamiltonian(),
        "H_state": neumann::hamiltonian(&p.a, &s),
        "interlaced": sd.curve.is_interlaced(),
        "U": sd.triple.u().coeffs(),
        "V": sd.triple.v().coeffs(),
        "W": w.coeffs(),
    });
    Ok(Output {
        stdout: to_json_string(&report),
        stderr: String::new(),
        code: EXIT_OK,
    })
}

fn finish(result: Result<Output, CliError>) -> Output {
    result.unwrap_or_else(|e| Output {
        stdout: String::new(),
        stderr: format!("error: {e}\n"),
        code: e.code(),
    })
}

fn run_one(command: BatchCommand, args: &RunArgs) -> Output {
    let default_format = match command {
        BatchCommand::Simulate => Format::Csv,
        _ => Format::Json,
    };
    let format = args.format.unwrap_or(default_format);
    finish(RunConfig::from_args(args).and_then(|cfg| match command {
        BatchCommand::Simulate => cmd_simulate(&cfg, format),
        BatchCommand::Invariants => cmd_invariants(&cfg, format),
        BatchCommand::Spectrum => cmd_spectrum(&cfg, format),
    }))
}

/// Runs each config separately; outputs are concatenated in input order,
/// each preceded by a `# config=<path> exit=<code>` line. The exit code is
/// the largest one seen.
pub fn cmd_batch(args: &BatchArgs) -> Output {
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let outputs = exec::map(exec, &args.configs, |path| {
        let run = RunArgs {
            config: Some(path.clone()),
            format: args.format,
            ..RunArgs::default()
        };
        run_one(args.command, &run)
    });
    let mut all = Output::default();
    for (path, out) in args.configs.iter().zip(outputs) {
        let _ = writeln!(all.stdout, "# config={} exit={}", path.display(), out.code);
        all.stdout.push_str(&out.stdout);
        for line in out.stderr.lines() {
            let _ = writeln!(all.stderr, "{}: {line}", path.display());
        }
        all.code = all.code.max(out.code);
    }
    all
}

pub fn run(cli: &Cli) -> Output {
    match &cli.command {
        Command::Simulate(a) => run_one(BatchCommand::Simulate, a),
        Command::Invariants(a) => run_one(BatchCommand::Invariants, a),
        Command::Spectrum(a) => run_one(BatchCommand::Spectrum, a),
        Command::Batch(b) => cmd_batch(b),
    }
}
