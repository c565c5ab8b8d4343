//! Command line front end: one scenario file, five subcommands.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure.

pub mod report;
pub mod scenario;
pub mod svg;

use std::path::{Path, PathBuf};

use adiabat_core::amplitudes::{
    adiabatic_amplitude, exact_leading_amplitude, nikitin_umanskii_probability, two_tp_amplitude, AmplitudeError,
    ChainSetup,
};
use adiabat_core::field::{FieldError, FieldProfile};
use adiabat_core::oracle::{sweep_t, transition_probability, OracleError, Representation};
use adiabat_core::potential::EffectivePotential;
use adiabat_core::stokes::{build_graph, StokesError, StokesGraph};
use adiabat_core::transition::{Method, TransitionResult};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use report::{compare_report, read_sweep_csv, write_compare_csv, write_sweep_csv, SweepRow, SCHEMA_VERSION};
use scenario::{MethodChoice, Scenario};
use svg::{emit_graph_svg, GraphView, Style};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<AmplitudeError> for CliError {
    fn from(e: AmplitudeError) -> Self {
        match e {
            AmplitudeError::NotApplicable(_) | AmplitudeError::InvalidT(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Settings(_) | OracleError::TList => CliError::Validation(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<StokesError> for CliError {
    fn from(e: StokesError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "adiabat",
    version,
    about = "Adiabatic transition probabilities from Stokes geometry and direct integration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output file; defaults to the matching `outputs` entry of the scenario.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub chi_order: Option<u8>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stokes graph as SVG (or JSON when the output does not end in .svg).
    Graph(Common),
    /// Asymptotic amplitude at `T`, as JSON.
    Amplitude(Common),
    /// Direct integration at `T` or over `T_list`, as JSON.
    Oracle(Common),
    /// Oracle and asymptotic probabilities over `T_list`, as CSV.
    Sweep(Common),
    /// Relative differences and decay-order fit, as JSON plus a CSV alongside.
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Graph(c)
            | Command::Amplitude(c)
            | Command::Oracle(c)
            | Command::Sweep(c)
            | Command::Compare(c) => c,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Graph(_) => "graph",
            Command::Amplitude(_) => "amplitude",
            Command::Oracle(_) => "oracle",
            Command::Sweep(_) => "sweep",
            Command::Compare(_) => "compare",
        }
    }
}

/// Size the global thread pool from ADIABAT_THREADS, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ADIABAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Validation(format!("ADIABAT_THREADS must be a positive integer, got `{v}`")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let c = cli.command.common();
    let mut sc = Scenario::load(&c.scenario)?;
    if let Some(k) = c.chi_order {
        sc.chi_order = k;
    }
    if let Some(m) = c.method {
        sc.method = m;
    }
    let declared = match &cli.command {
        Command::Graph(_) => &sc.outputs.graph,
        Command::Amplitude(_) => &sc.outputs.amplitude,
        Command::Oracle(_) => &sc.outputs.oracle,
        Command::Sweep(_) => &sc.outputs.sweep,
        Command::Compare(_) => &sc.outputs.compare,
    };
    let name = cli.command.name();
    let out = c
        .out
        .clone()
        .or_else(|| declared.as_ref().map(|p| relative_to(&c.scenario, p)))
        .ok_or_else(|| CliError::Validation(format!("no output path: pass --out or set `outputs.{name}`")))?;
    match &cli.command {
        Command::Graph(_) => graph(&sc, &out)?,
        Command::Amplitude(_) => amplitude(&sc, &out)?,
        Command::Oracle(_) => oracle(&sc, &out)?,
        Command::Sweep(_) => sweep(&sc, &out)?,
        Command::Compare(_) => compare(&sc, &c.scenario, &out)?,
    }
    Ok(out)
}

// paths inside a scenario are relative to the scenario file
fn relative_to(scenario: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    scenario.parent().map(|d| d.join(p)).unwrap_or_else(|| p.to_path_buf())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numeric(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn build(sc: &Scenario) -> Result<(FieldProfile, StokesGraph), CliError> {
    let field = sc.field()?;
    let ep = EffectivePotential::adiabatic(field.clone());
    let g = build_graph(&ep, &sc.graph_options())?;
    Ok((field, g))
}

#[derive(Serialize)]
struct GraphDoc<'a> {
    schema_version: u32,
    graph: &'a StokesGraph,
}

fn graph(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let (_, g) = build(sc)?;
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg")) {
        let doc = emit_graph_svg(&GraphView::from(&g), &Style::default());
        write_file(out, doc.as_bytes())
    } else {
        write_json(out, &GraphDoc { schema_version: SCHEMA_VERSION, graph: &g })
    }
}

/// Evaluate the selected asymptotic formula.
pub fn asymptotic(sc: &Scenario, setup: &ChainSetup, t: f64) -> Result<TransitionResult, CliError> {
    let opts = &sc.amplitude;
    let r = match sc.method {
        MethodChoice::Auto if setup.chain.n() == 2 => two_tp_amplitude(setup, t, opts)?,
        MethodChoice::Auto | MethodChoice::Sum => adiabatic_amplitude(setup, t, opts)?,
        MethodChoice::TwoTp => two_tp_amplitude(setup, t, opts)?,
        MethodChoice::Nu => nikitin_umanskii_probability(setup, t)?,
        MethodChoice::Exact => exact_leading_amplitude(setup, t, sc.chi_order, opts)?,
    };
    Ok(r)
}

/// The argument x of the cos^2 x factor, whatever the method's own convention.
fn cos_phase(r: &TransitionResult) -> Option<f64> {
    let x = r.decomposition.as_ref()?.interference?;
    Some(match r.method {
        // sin^2 x = cos^2 (x - pi/2)
        Method::NikitinUmanskii => x - std::f64::consts::FRAC_PI_2,
        _ => x,
    })
}

#[derive(Serialize)]
struct AmplitudeDoc {
    schema_version: u32,
    chain: Vec<num_complex::Complex64>,
    result: TransitionResult,
}

fn amplitude(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let t = sc.single_t()?;
    let (field, g) = build(sc)?;
    let setup = ChainSetup::from_graph(&field, &g)?;
    let result = asymptotic(sc, &setup, t)?;
    let mut chain = vec![setup.chain.conj_first];
    chain.extend(&setup.chain.upper);
    write_json(out, &AmplitudeDoc { schema_version: SCHEMA_VERSION, chain, result })
}

#[derive(Serialize)]
struct OracleDoc {
    schema_version: u32,
    results: Vec<TransitionResult>,
}

fn oracle(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let field = sc.field()?;
    let results = match (sc.t, &sc.t_list) {
        (_, Some(list)) => sweep_t(&field, list, &sc.integration)?,
        (Some(t), None) => vec![transition_probability(&field, t, &sc.integration, Representation::APm)?],
        (None, None) => return Err(CliError::Validation("missing key `T` (or `T_list`)".into())),
    };
    write_json(out, &OracleDoc { schema_version: SCHEMA_VERSION, results })
}

/// Oracle and asymptotic probabilities for every T of the scenario.
pub fn sweep_rows(sc: &Scenario) -> Result<Vec<SweepRow>, CliError> {
    let ts = sc.t_values()?;
    let (field, g) = build(sc)?;
    let setup = ChainSetup::from_graph(&field, &g)?;
    let oracle = sweep_t(&field, &ts, &sc.integration)?;
    let asym: Vec<TransitionResult> = ts.par_iter().map(|&t| asymptotic(sc, &setup, t)).collect::<Result<_, _>>()?;
    Ok(ts
        .iter()
        .zip(oracle.iter().zip(&asym))
        .map(|(&t, (o, a))| {
            let d = a.decomposition.as_ref();
            SweepRow {
                exponent: d.map(|d| d.exponent),
                phase: cos_phase(a),
                winding_n12: d.and_then(|d| d.windings.from_first.get(1).copied()),
                ..SweepRow::new(t, Some(o.probability), Some(a.probability))
            }
        })
        .collect())
}

fn sweep(sc: &Scenario, out: &Path) -> Result<(), CliError> {
    let rows = sweep_rows(sc)?;
    let mut buf = vec![];
    write_sweep_csv(&rows, &mut buf)?;
    write_file(out, &buf)
}

fn compare(sc: &Scenario, scenario_path: &Path, out: &Path) -> Result<(), CliError> {
    let rows = match &sc.sweep_table {
        Some(p) => {
            let p = relative_to(scenario_path, p);
            let f = std::fs::File::open(&p)
                .map_err(|e| CliError::Validation(format!("cannot read sweep table {}: {e}", p.display())))?;
            read_sweep_csv(f)?
        }
        None => sweep_rows(sc)?,
    };
    let rep = compare_report(&rows)?;
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    let (json, csv) = if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        (out.with_extension("json"), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.with_extension("csv"))
    };
    write_json(&json, &rep)?;
    let mut buf = vec![];
    write_compare_csv(&rep, &mut buf)?;
    write_file(&csv, &buf)
}
