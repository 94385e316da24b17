//! `taulattice` command-line front end.
//!
//! Every subcommand reads an optional JSON config (`--config`) and applies
//! flag overrides on top. It writes its artifacts to the output directory
//! and prints a one-line JSON summary on stdout. Exit status 0 means every
//! requested check passed. A failed check or a numerical breakdown gives 1;
//! usage and configuration errors give 2.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use taulattice::continuum::{
    continuum_convergence, haantjes_scan, hopf_solve, hydro_scaling_check, solve_hydro_chain, ChainClosure,
    ConvergenceConfig, HaantjesScanConfig, HydroChainField, HydroScalingConfig, Profile,
};
use taulattice::export::{columns_table, evolution_table, field_table, pfaff_table, Table};
use taulattice::flows::{evolve, Lattice, ReducedChainState, ReducedClosure, VOLTERRA_GHOSTS};
use taulattice::identities::{
    commutator_check, exact_oracles, flow_commutation, init_goe_check, init_gue_check, kp_residual, loop_closure,
    mkp_residuals, monte_carlo_check, observables_check, reduction_check, scaling_check, skew_map_check,
    tau_cross_check, CommutationConfig, CommutatorConfig, IdentityReport, KpConfig, LoopClosureConfig,
    MkpConfig, MonteCarloConfig, OracleKind, ReductionConfig, ScalingConfig,
};
use taulattice::lax::{goe_lax_init_window, gue_lax_init, pfaff_lax_at, toda_lax_stieltjes};
use taulattice::moments::{skew_moment_matrix, symmetric_moment_table};
use taulattice::ode::Stepper;
use taulattice::tau::{tau_sequence, Ensemble};
use taulattice::weight::DEFAULT_TOL;
use taulattice::CouplingVector;

#[derive(Debug, Parser)]
#[command(name = "taulattice", version, about = "Random-matrix tau functions and integrable lattices")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default `taulattice-out`).
    #[arg(long, global = true, env = "TAULATTICE_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Partition functions τ_0..τ_n and the moment matrix of size n.
    Tau(TauArgs),
    /// Initial Lax data from closed forms or quadrature.
    LaxInit(LaxInitArgs),
    /// Evolve a lattice along one flow.
    Evolve(EvolveArgs),
    /// Run one verification suite.
    Verify(VerifyArgs),
    /// Continuum solvers and convergence checks.
    Continuum(ContinuumArgs),
    /// Haantjes tensor scan of the hydrodynamic chain.
    ScanHaantjes(ScanArgs),
}

/// Options shared by most subcommands.
#[derive(Debug, Args, Default, Clone)]
struct Common {
    /// Lattice size N.
    #[arg(long = "N", visible_alias = "n")]
    n: Option<usize>,
    /// Positive window K (K_pos).
    #[arg(long = "K", visible_alias = "k-pos")]
    k: Option<usize>,
    /// Negative window K_neg.
    #[arg(long = "K-neg")]
    k_neg: Option<usize>,
    /// Coupling `k=value`, repeatable.
    #[arg(long = "t", value_name = "K=VALUE")]
    couplings: Vec<String>,
    /// Tolerance of the check.
    #[arg(long)]
    tol: Option<f64>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// RK4 step.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EnsembleArg {
    Unitary,
    Orthogonal,
}

#[derive(Debug, Args)]
struct TauArgs {
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleArg>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LaxKind {
    Toda,
    Pfaff,
}

#[derive(Debug, Args)]
struct LaxInitArgs {
    #[arg(long, value_enum, default_value = "pfaff")]
    kind: LaxKind,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LatticeArg {
    Toda,
    Volterra,
    Pfaff,
    Reduced,
    Hydro,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[arg(value_enum)]
    lattice: LatticeArg,
    /// End time of the t₁ flow.
    #[arg(long)]
    t1: Option<f64>,
    /// End time of the t₂ flow.
    #[arg(long)]
    t2: Option<f64>,
    /// End time of the t₄ flow.
    #[arg(long)]
    t4: Option<f64>,
    /// End time of the t₆ flow.
    #[arg(long)]
    t6: Option<f64>,
    /// Number of equally spaced sample times after t = 0.
    #[arg(long)]
    samples: Option<usize>,
    /// Use the adaptive stepper with this relative tolerance.
    #[arg(long)]
    rtol: Option<f64>,
    /// Top-moment closure: `repeat` or a constant value.
    #[arg(long)]
    closure: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Default, Clone)]
struct GridArgs {
    #[arg(long)]
    x_lo: Option<f64>,
    #[arg(long)]
    x_hi: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    InitGue,
    InitGoe,
    Scaling,
    Mkp,
    Kp,
    Commute,
    Reduction,
    Observables,
    TauCross,
    SkewMap,
    LoopClosure,
    FlowCommutation,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// Add a Monte-Carlo estimate with this many samples (observables only).
    #[arg(long)]
    mc_samples: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ContinuumKind {
    Hopf,
    Chain,
    Converge,
}

#[derive(Debug, Args)]
struct ContinuumArgs {
    #[arg(value_enum)]
    kind: ContinuumKind,
    /// Initial profile: comma-separated polynomial coefficients or `sqrt`.
    #[arg(long)]
    profile: Option<String>,
    /// Speed constant c of the Hopf flow.
    #[arg(long)]
    c: Option<f64>,
    /// Hopf flow power k.
    #[arg(long = "power")]
    power: Option<u32>,
    /// Time.
    #[arg(long)]
    time: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Number of random points.
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridConfig {
    x_lo: Option<f64>,
    x_hi: Option<f64>,
    nx: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MonteCarloSection {
    count: Option<usize>,
    seed: Option<u64>,
    z_max: Option<f64>,
}

/// Contents of a `--config` file. Top-level fields and flags override the
/// per-suite sections.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    /// Free-form label, ignored.
    #[serde(rename = "command")]
    _command: Option<String>,
    couplings: Option<CouplingVector>,
    ensemble: Option<EnsembleArg>,
    n: Option<usize>,
    k_pos: Option<usize>,
    k_neg: Option<usize>,
    tolerance: Option<f64>,
    seed: Option<u64>,
    h: Option<f64>,
    samples: Option<usize>,
    out: Option<PathBuf>,
    grid: GridConfig,
    scaling: Option<ScalingConfig>,
    reduction: Option<ReductionConfig>,
    commutator: Option<CommutatorConfig>,
    loop_closure: Option<LoopClosureConfig>,
    flow_commutation: Option<CommutationConfig>,
    mkp: Option<MkpConfig>,
    kp: Option<KpConfig>,
    convergence: Option<ConvergenceConfig>,
    hydro: Option<HydroScalingConfig>,
    haantjes: Option<HaantjesScanConfig>,
    monte_carlo: Option<MonteCarloSection>,
}

/// A configuration or usage problem (exit status 2).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Settings after merging config and flags.
#[derive(Debug, Clone)]
struct Settings {
    cfg: RunConfig,
    couplings: CouplingVector,
    n: Option<usize>,
    k: Option<usize>,
    k_neg: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    h: Option<f64>,
    out: PathBuf,
}

fn parse_couplings(items: &[String]) -> Result<Option<CouplingVector>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut t = CouplingVector::zero();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("coupling {item:?} is not of the form k=value")))?;
        let k: u32 = k.trim().parse().map_err(|_| usage(format!("coupling index {k:?} is not an integer")))?;
        let v: f64 = v.trim().parse().map_err(|_| usage(format!("coupling value {v:?} is not a number")))?;
        if k == 0 {
            return Err(usage("coupling indices start at 1"));
        }
        t.set(k, v);
    }
    Ok(Some(t))
}

/// Every numeric field whose name mentions a tolerance must be positive.
fn check_tolerances(v: &Value, path: &str) -> Result<()> {
    if let Value::Object(map) = v {
        for (key, val) in map {
            let here = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
            if key.contains("tol") || key == "z_max" {
                if let Some(x) = val.as_f64() {
                    positive(&here, Some(x))?;
                }
            }
            check_tolerances(val, &here)?;
        }
    }
    Ok(())
}

fn positive(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0) => Err(usage(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

impl Settings {
    fn new(cli_config: Option<&Path>, cli_out: Option<PathBuf>, common: &Common) -> Result<Self> {
        let cfg: RunConfig = match cli_config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
                let raw: Value =
                    serde_json::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?;
                check_tolerances(&raw, "")?;
                serde_json::from_value(raw).map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let couplings = parse_couplings(&common.couplings)?.or_else(|| cfg.couplings.clone()).unwrap_or_default();
        couplings.check_integrable().map_err(|e| usage(e.to_string()))?;
        let s = Self {
            couplings,
            n: common.n.or(cfg.n),
            k: common.k.or(cfg.k_pos),
            k_neg: common.k_neg.or(cfg.k_neg),
            tol: common.tol.or(cfg.tolerance),
            seed: common.seed.or(cfg.seed),
            h: common.h.or(cfg.h),
            out: cli_out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("taulattice-out")),
            cfg,
        };
        positive("tolerance", s.tol)?;
        positive("step h", s.h)?;
        Ok(s)
    }

    fn artifact(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let path = self.artifact(name)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path.display().to_string())
    }

    fn write_csv(&self, name: &str, table: &Table) -> Result<String> {
        let path = self.artifact(name)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in table.formatted_rows() {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(path.display().to_string())
    }

    fn is_gaussian(&self) -> bool {
        self.couplings.entries().all(|(_, v)| v == 0.0)
    }
}

/// What a subcommand hands back for the summary line.
struct Summary {
    pass: bool,
    fields: Value,
    artifacts: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(s) => {
            let mut line = json!({"command": name, "pass": s.pass, "artifacts": s.artifacts});
            if let (Value::Object(dst), Value::Object(src)) = (&mut line, s.fields) {
                dst.extend(src);
            }
            println!("{line}");
            if s.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            println!("{}", json!({"command": name, "pass": false, "error": format!("{e:#}")}));
            ExitCode::from(code)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<taulattice::Error>() {
        Some(taulattice::Error::InvalidInput(_) | taulattice::Error::UnsupportedKind(_)) => 2,
        _ => 1,
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Tau(_) => "tau".into(),
        Command::LaxInit(_) => "lax-init".into(),
        Command::Evolve(a) => format!("evolve {}", value_name(a.lattice)),
        Command::Verify(a) => format!("verify {}", value_name(a.suite)),
        Command::Continuum(a) => format!("continuum {}", value_name(a.kind)),
        Command::ScanHaantjes(_) => "scan-haantjes".into(),
    }
}

fn value_name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

fn run(cli: Cli) -> Result<Summary> {
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Tau(a) => run_tau(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
        Command::LaxInit(a) => run_lax_init(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
        Command::Evolve(a) => run_evolve(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
        Command::Verify(a) => run_verify(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
        Command::Continuum(a) => run_continuum(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
        Command::ScanHaantjes(a) => run_scan(&Settings::new(cfg, cli.out.clone(), &a.common)?, a),
    }
}

// ---------------------------------------------------------------------------
// tau and lax-init

fn run_tau(s: &Settings, a: &TauArgs) -> Result<Summary> {
    let ensemble = a.ensemble.or(s.cfg.ensemble).unwrap_or(EnsembleArg::Unitary);
    let n = s.n.ok_or_else(|| usage("tau needs --n"))?;
    let tol = s.tol.unwrap_or(DEFAULT_TOL);
    let (ens, sizes): (Ensemble, Vec<usize>) = match ensemble {
        EnsembleArg::Unitary => (Ensemble::Unitary, (0..=n).collect()),
        EnsembleArg::Orthogonal => {
            if n % 2 == 1 {
                return Err(usage(format!("orthogonal τ_n needs even n, got {n}")));
            }
            (Ensemble::Orthogonal, (0..=n).step_by(2).collect())
        }
    };
    let seq = tau_sequence(ens, &s.couplings, sizes.len())?;
    let moments: Vec<Vec<f64>> = match ens {
        _ if n == 0 => Vec::new(),
        Ensemble::Unitary => {
            let m = symmetric_moment_table(&s.couplings, 2 * n - 2, tol)?.hankel(n);
            (0..n).map(|i| m.row(i).to_vec()).collect()
        }
        Ensemble::Orthogonal => {
            let m = skew_moment_matrix(&s.couplings, n, tol)?.m;
            (0..n).map(|i| m.row(i).to_vec()).collect()
        }
    };
    let value = *seq.values.last().expect("sequence holds τ_0");
    let artifact = s.write_json(
        "tau.json",
        &json!({
            "ensemble": ensemble,
            "couplings": s.couplings,
            "sizes": sizes,
            "tau": seq.values,
            "moment_matrix": moments,
        }),
    )?;
    Ok(Summary { pass: true, fields: json!({"ensemble": ensemble, "n": n, "value": value}), artifacts: vec![artifact] })
}

fn run_lax_init(s: &Settings, a: &LaxInitArgs) -> Result<Summary> {
    let tol = s.tol.unwrap_or(DEFAULT_TOL);
    let n = s.n.unwrap_or(8);
    let source = if s.is_gaussian() { "closed-form" } else { "quadrature" };
    match a.kind {
        LaxKind::Toda => {
            let lax = if s.is_gaussian() { gue_lax_init(n) } else { toda_lax_stieltjes(&s.couplings, n, tol)? };
            let artifact = s.write_json("lax.json", &lax)?;
            Ok(Summary { pass: true, fields: json!({"kind": "toda", "N": n, "source": source}), artifacts: vec![artifact] })
        }
        LaxKind::Pfaff => {
            let kpos = s.k.unwrap_or(6);
            let kneg = s.k_neg.unwrap_or(kpos);
            let w = if s.is_gaussian() {
                goe_lax_init_window(n, kpos, kneg)
            } else {
                pfaff_lax_at(&s.couplings, n, kpos, kneg, tol)?
            };
            let artifacts = vec![s.write_json("lax.json", &w)?, s.write_csv("lax.csv", &pfaff_table(&w))?];
            Ok(Summary {
                pass: true,
                fields: json!({"kind": "pfaff", "N": n, "Kpos": kpos, "Kneg": kneg, "source": source}),
                artifacts,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// evolve

fn parse_closure(text: Option<&str>) -> Result<(ReducedClosure, ChainClosure)> {
    match text {
        None | Some("repeat") => Ok((ReducedClosure::Repeat, ChainClosure::Repeat)),
        Some(v) => {
            let c: f64 = v.parse().map_err(|_| usage(format!("closure {v:?} is neither `repeat` nor a number")))?;
            Ok((ReducedClosure::Constant(c), ChainClosure::Constant(c)))
        }
    }
}

fn run_evolve(s: &Settings, a: &EvolveArgs) -> Result<Summary> {
    let flows: Vec<(u8, f64)> = [(1, a.t1), (2, a.t2), (4, a.t4), (6, a.t6)]
        .into_iter()
        .filter_map(|(f, t)| t.map(|t| (f, t)))
        .collect();
    let &[(flow, t_end)] = flows.as_slice() else {
        return Err(usage("give exactly one of --t1, --t2, --t4, --t6"));
    };
    if t_end == 0.0 || !t_end.is_finite() {
        return Err(usage(format!("end time {t_end} must be finite and nonzero")));
    }
    let allowed: &[u8] = match a.lattice {
        LatticeArg::Toda => &[1, 2],
        LatticeArg::Volterra => &[2, 4, 6],
        _ => &[2],
    };
    if !allowed.contains(&flow) {
        return Err(usage(format!("{} has no t{flow} flow here", value_name(a.lattice))));
    }
    positive("rtol", a.rtol)?;
    let (reduced_closure, chain_closure) = parse_closure(a.closure.as_deref())?;
    if a.lattice == LatticeArg::Hydro {
        return run_evolve_hydro(s, a, t_end, chain_closure);
    }
    let n = s.n.unwrap_or(64);
    let kpos = s.k.unwrap_or(12);
    let tol = DEFAULT_TOL;
    let gaussian = s.is_gaussian();
    let (lattice, y0) = match a.lattice {
        LatticeArg::Toda => {
            let lax = if gaussian { gue_lax_init(n) } else { toda_lax_stieltjes(&s.couplings, n, tol)? };
            (Lattice::Toda { flow, n }, lax.a.iter().chain(&lax.b).copied().collect::<Vec<_>>())
        }
        LatticeArg::Volterra => {
            let b = if gaussian {
                (1..=n + VOLTERRA_GHOSTS).map(|k| k as f64).collect()
            } else {
                toda_lax_stieltjes(&s.couplings, n + VOLTERRA_GHOSTS + 1, tol)?.volterra()
            };
            (Lattice::Volterra { flow, n }, b)
        }
        LatticeArg::Pfaff => {
            let kneg = s.k_neg.unwrap_or(kpos);
            let w = if gaussian { goe_lax_init_window(n, kpos, kneg) } else { pfaff_lax_at(&s.couplings, n, kpos, kneg, tol)? };
            (Lattice::Pfaff { template: w.clone() }, w.as_slice().to_vec())
        }
        LatticeArg::Reduced => {
            if !gaussian {
                return Err(usage("the reduced chain starts from the Gaussian point only"));
            }
            (Lattice::Reduced { k: kpos, closure: reduced_closure }, ReducedChainState::goe(kpos).to_vec())
        }
        LatticeArg::Hydro => unreachable!("handled above"),
    };
    let count = a.samples.or(s.cfg.samples).unwrap_or(1).max(1);
    let samples: Vec<f64> = (1..=count).map(|i| t_end * i as f64 / count as f64).collect();
    let stepper = match a.rtol {
        Some(rtol) => Stepper::Adaptive { rtol, atol: rtol },
        None => Stepper::Rk4 { h: s.h.unwrap_or(1e-3) },
    };
    let result = evolve(&lattice, &y0, &samples, stepper, true)?;
    let artifact = s.write_csv("evolution.csv", &evolution_table(&result))?;

    let mut fields = json!({
        "lattice": value_name(a.lattice),
        "flow": format!("t{flow}"),
        "t_end": t_end,
        "N": n,
        "boundary_front": result.boundary_front,
        "clean_sites": result.clean_sites(n),
    });
    let kind = if flow == 1 { OracleKind::T1Translation } else { OracleKind::T2Scaling };
    if gaussian {
        if let Ok(exact) = exact_oracles(kind, &lattice, t_end) {
            let clean = result.clean_sites(n);
            let err = result
                .last()
                .iter()
                .zip(&exact)
                .zip(lattice.sites())
                .filter(|(_, site)| site.map_or(true, |(m, ghost)| !ghost && m <= clean))
                .map(|((x, y), _)| (x - y).abs())
                .fold(0.0f64, f64::max);
            fields["oracle_error_clean_sites"] = json!(err);
        }
    }
    Ok(Summary { pass: true, fields, artifacts: vec![artifact] })
}

fn grid_of(s: &Settings, g: &GridArgs, default: (f64, f64, usize)) -> (f64, f64, usize) {
    (
        g.x_lo.or(s.cfg.grid.x_lo).unwrap_or(default.0),
        g.x_hi.or(s.cfg.grid.x_hi).unwrap_or(default.1),
        g.nx.or(s.cfg.grid.nx).unwrap_or(default.2),
    )
}

fn run_evolve_hydro(s: &Settings, a: &EvolveArgs, t_end: f64, closure: ChainClosure) -> Result<Summary> {
    let (x_lo, x_hi, nx) = grid_of(s, &a.grid, (0.5, 2.0, 61));
    let kpos = s.k.unwrap_or(8);
    let kneg = s.k_neg.unwrap_or(6);
    let f0 = HydroChainField::goe_initial(x_lo, x_hi, nx, kneg, kpos)?;
    let f = solve_hydro_chain(&f0, t_end, closure, 0.2, 1e6)?;
    let artifact = s.write_csv("field.csv", &field_table(&f))?;
    Ok(Summary {
        pass: true,
        fields: json!({"lattice": "hydro", "flow": "t2", "t_end": t_end, "nx": nx, "Kpos": kpos, "Kneg": kneg}),
        artifacts: vec![artifact],
    })
}

// ---------------------------------------------------------------------------
// verify

fn report_line(r: &IdentityReport) -> Value {
    json!({
        "identity": r.identity,
        "residual_abs": r.residual_abs,
        "residual_rel": r.residual_rel,
        "tolerance": r.tolerance,
        "measure": r.measure,
        "pass": r.pass,
    })
}

fn reports_summary(s: &Settings, name: &str, reports: &[IdentityReport], extra: Value) -> Result<Summary> {
    let artifact = s.write_json(&format!("{name}.json"), &reports)?;
    let failures: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.identity.as_str()).collect();
    for r in reports.iter().filter(|r| !r.pass) {
        let judged = match r.measure {
            taulattice::identities::Measure::Abs => r.residual_abs,
            taulattice::identities::Measure::Rel => r.residual_rel,
        };
        eprintln!("check failed: {} residual {judged:e} exceeds tolerance {:e}", r.identity, r.tolerance);
    }
    let mut fields = json!({
        "reports": reports.iter().map(report_line).collect::<Vec<_>>(),
        "failures": failures,
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut fields, extra) {
        dst.extend(src);
    }
    Ok(Summary { pass: failures.is_empty(), fields, artifacts: vec![artifact] })
}

fn run_verify(s: &Settings, a: &VerifyArgs) -> Result<Summary> {
    let name = format!("verify-{}", value_name(a.suite));
    if a.mc_samples.is_some() && a.suite != Suite::Observables {
        return Err(usage("--mc-samples applies to `verify observables` only"));
    }
    let mut extra = json!({});
    let reports: Vec<IdentityReport> = match a.suite {
        Suite::InitGue => vec![init_gue_check(s.n.unwrap_or(10), s.tol.unwrap_or(1e-8))?],
        Suite::InitGoe => vec![init_goe_check(s.n.unwrap_or(8), s.k.unwrap_or(6), s.tol.unwrap_or(1e-9))?],
        Suite::Scaling => {
            let mut c = s.cfg.scaling.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            c.k = s.k.unwrap_or(c.k);
            c.h = s.h.unwrap_or(c.h);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            scaling_check(&c)?
        }
        Suite::Mkp => {
            let mut c = s.cfg.mkp.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            if let Some(t) = s.tol {
                c.conservation_tolerance = t;
                c.potential_tolerance = t;
            }
            let suite = mkp_residuals(&c)?;
            extra = json!({"passing_variants": suite.passing_variants()});
            let mut reps: Vec<IdentityReport> = suite.reports().into_iter().cloned().collect();
            let mut exactly_one = IdentityReport::new(
                "mkp-single-variant",
                (suite.passing_variants().len() as f64 - 1.0).abs(),
                (suite.passing_variants().len() as f64 - 1.0).abs(),
                0.0,
                taulattice::identities::Measure::Abs,
            );
            exactly_one.meta_set("passing_variants", &suite.passing_variants());
            exactly_one.meta_set("variants", &suite.variants);
            reps.retain(|r| !r.identity.starts_with("mkp-variant-"));
            reps.push(exactly_one);
            reps
        }
        Suite::Kp => {
            let mut c = s.cfg.kp.clone().unwrap_or_default();
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            (1..=s.n.unwrap_or(3)).map(|n| kp_residual(n, &s.couplings, &c)).collect::<Result<_, _>>()?
        }
        Suite::Commute => {
            let mut c = s.cfg.commutator.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            c.k = s.k.unwrap_or(c.k);
            c.seed = s.seed.unwrap_or(c.seed);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            vec![commutator_check(&c)?]
        }
        Suite::Reduction => {
            let mut c = s.cfg.reduction.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            c.k = s.k.unwrap_or(c.k);
            c.h = s.h.unwrap_or(c.h);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            vec![reduction_check(&c)?]
        }
        Suite::Observables => {
            let mut reps = vec![observables_check(s.n.unwrap_or(1), &s.couplings, s.tol.unwrap_or(1e-8))?];
            let section = s.cfg.monte_carlo.clone();
            let count = a.mc_samples.or(section.as_ref().and_then(|m| m.count));
            if let Some(count) = count {
                let seed = s
                    .seed
                    .or(section.as_ref().and_then(|m| m.seed))
                    .ok_or_else(|| usage("a Monte-Carlo run needs --seed"))?;
                if !s.is_gaussian() {
                    return Err(usage("the Monte-Carlo estimate is available at t = 0 only"));
                }
                let mut c = MonteCarloConfig { count, seed, ..Default::default() };
                if let Some(z) = section.and_then(|m| m.z_max) {
                    positive("z_max", Some(z))?;
                    c.z_max = z;
                }
                reps.push(monte_carlo_check(&c)?);
            }
            reps
        }
        Suite::TauCross => vec![tau_cross_check(&s.couplings, s.n.unwrap_or(4), s.tol.unwrap_or(1e-8))?],
        Suite::SkewMap => vec![skew_map_check(s.n.unwrap_or(8), s.tol.unwrap_or(1e-10))?],
        Suite::LoopClosure => {
            let mut c = s.cfg.loop_closure.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            c.k = s.k.unwrap_or(c.k);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            vec![loop_closure(&c)?]
        }
        Suite::FlowCommutation => {
            let mut c = s.cfg.flow_commutation.clone().unwrap_or_default();
            c.n_sites = s.n.unwrap_or(c.n_sites);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            vec![flow_commutation(&c)?]
        }
    };
    reports_summary(s, &name, &reports, extra)
}

// ---------------------------------------------------------------------------
// continuum and scan-haantjes

fn parse_profile(text: Option<&str>) -> Result<Option<Profile>> {
    match text {
        None => Ok(None),
        Some("sqrt") => Ok(Some(Profile::Sqrt)),
        Some(list) => {
            let coef = list
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| usage(format!("profile coefficient {c:?} is not a number"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(Some(Profile::Polynomial(coef)))
        }
    }
}

fn run_continuum(s: &Settings, a: &ContinuumArgs) -> Result<Summary> {
    let profile = parse_profile(a.profile.as_deref())?;
    match a.kind {
        ContinuumKind::Hopf => {
            let (x_lo, x_hi, nx) = grid_of(s, &a.grid, (0.0, 2.0, 41));
            if nx < 2 || !(x_hi > x_lo) {
                return Err(usage(format!("grid [{x_lo}, {x_hi}] with {nx} points")));
            }
            let u0 = profile.unwrap_or(Profile::Polynomial(vec![0.0, 1.0, 0.5]));
            let c = a.c.unwrap_or(2.0);
            let k = a.power.unwrap_or(1);
            let t = a.time.unwrap_or(0.1);
            let x: Vec<f64> = (0..nx).map(|i| x_lo + (x_hi - x_lo) * i as f64 / (nx - 1) as f64).collect();
            let u = hopf_solve(&u0, c, k, &x, t)?;
            let artifact = s.write_csv("hopf.csv", &columns_table(&[("x", &x), ("u", &u)]))?;
            Ok(Summary { pass: true, fields: json!({"t": t, "c": c, "k": k, "nx": nx}), artifacts: vec![artifact] })
        }
        ContinuumKind::Chain => {
            let mut c = s.cfg.hydro.clone().unwrap_or_default();
            let (x_lo, x_hi, nx) = grid_of(s, &a.grid, (c.x_lo, c.x_hi, c.nx));
            c.x_lo = x_lo;
            c.x_hi = x_hi;
            c.nx = nx;
            c.kpos = s.k.unwrap_or(c.kpos);
            c.kneg = s.k_neg.unwrap_or(c.kneg);
            c.tolerance = s.tol.unwrap_or(c.tolerance);
            if let Some(t) = a.time {
                c.times = vec![t];
            }
            let (report, field) = hydro_scaling_check(&c)?;
            let mut summary = reports_summary(s, "continuum-chain", &[report], json!({}))?;
            summary.artifacts.push(s.write_csv("field.csv", &field_table(&field))?);
            Ok(summary)
        }
        ContinuumKind::Converge => {
            let mut c = s.cfg.convergence.clone().unwrap_or_default();
            if let Some(p) = profile {
                c.profile = p;
            }
            c.t = a.time.unwrap_or(c.t);
            let r = continuum_convergence(&c)?;
            let extra = json!({"ratios": r.meta.get("ratios"), "observed_order": r.meta.get("observed_order")});
            reports_summary(s, "continuum-converge", &[r], extra)
        }
    }
}

fn run_scan(s: &Settings, a: &ScanArgs) -> Result<Summary> {
    let mut c = s.cfg.haantjes.clone().unwrap_or_default();
    c.k = s.k.unwrap_or(c.k);
    c.points = a.points.unwrap_or(c.points);
    c.seed = s.seed.unwrap_or(c.seed);
    c.tolerance = s.tol.unwrap_or(c.tolerance);
    let reports = haantjes_scan(&c)?;
    reports_summary(s, "haantjes", &reports, json!({}))
}
