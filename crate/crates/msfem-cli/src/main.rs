//! Experiment driver for the multiscale Darcy solver.
//!
//! `msfem run` executes one enrichment experiment and writes a level history
//! CSV, a per-element basis-count map, a JSON summary, and an SVG convergence
//! plot. `msfem compare` repeats the same problem across several enrichment
//! modes and overlays their histories in one plot.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msfem::adapt::{
    run, EnrichmentConfig, Mode, OfflineIndicator, Problem, RunOutcome, Sweep,
};
use msfem::field::{
    gen_perm, load_perm, BoundarySpec, BoundaryValue, PermSpec, Permeability, SourceField,
};
use msfem::fine::SolverOptions;
use msfem::grid::{FineGrid, GridHierarchy};
use msfem::Error;

use report::Series;

#[derive(Parser)]
#[command(
    name = "msfem",
    version,
    about = "Multiscale Darcy-flow experiments on structured grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one enrichment experiment and write its artifacts.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Run several modes on the same problem and plot them together.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(clap::Args)]
struct ProblemArgs {
    /// Fine grid, NXxNY.
    #[arg(long, default_value = "100x100", value_name = "NXxNY")]
    fine: String,

    /// Coarse grid, NXxNY; each dimension must divide the fine one.
    #[arg(long, default_value = "10x10", value_name = "NXxNY")]
    coarse: String,

    /// Permeability: `gen:<name,key=value,...>` or `file:<path>`. Generators:
    /// uniform,value=V; lognormal,sigma=S; channels,contrast=C,count=N;
    /// inclusions,contrast=C,count=N,size=S. Files hold an `nx ny` header and
    /// positive cell values, bottom row first.
    #[arg(long, default_value = "gen:lognormal,sigma=1", value_name = "SPEC")]
    perm: String,

    /// Seed for generated permeability fields.
    #[arg(long, default_value_t = 0, value_name = "U64")]
    seed: u64,

    /// Source term: `zero`, `blobs[,magnitude=M]` (net-zero source and sink
    /// on two distant coarse elements), or `file:<path>` with the
    /// permeability raster format, any sign.
    #[arg(long, default_value = "zero", value_name = "SPEC")]
    source: String,

    /// Boundary conditions: `flow[,left=PL][,right=PR]` (Dirichlet pressures
    /// on the x sides, no-flow y sides) or
    /// `dirichlet,left=..,right=..,bottom=..,top=..` (constant pressure on
    /// every side).
    #[arg(long, default_value = "flow,left=1,right=0", value_name = "SPEC")]
    bc: String,
}

#[derive(clap::Args)]
struct EnrichArgs {
    /// Fraction of the total squared indicator enriched per adaptive
    /// iteration.
    #[arg(long, default_value_t = 0.7)]
    theta: f64,

    /// Offline basis fields per coarse element in the initial space.
    #[arg(long, default_value_t = 3, value_name = "L")]
    init_basis: usize,

    /// Basis fields added per selected element per offline iteration.
    #[arg(long, default_value_t = 1, value_name = "N")]
    add_count: usize,

    /// Oversampling layers around each coarse element for snapshot and
    /// correction problems.
    #[arg(long, default_value_t = 2, value_name = "N")]
    layers: usize,

    /// Stop once the largest element indicator falls below this value.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,

    /// Maximum enrichment iterations after the initial level.
    #[arg(long, default_value_t = 20, value_name = "N")]
    max_iters: usize,

    /// Stop before the coarse space exceeds this many dofs (0 = unlimited).
    #[arg(long, default_value_t = 0, value_name = "N")]
    dof_cap: usize,

    /// Online grouping per level: `batch` or `colored`. Default: batch for
    /// adaptive modes, colored for online-uniform.
    #[arg(long, value_name = "STYLE")]
    sweep: Option<String>,

    /// Offline selection indicator: `weighted` (residual dual norm scaled by
    /// the next eigenvalue) or `exact` (true local error energy).
    #[arg(long, default_value = "weighted", value_name = "KIND")]
    indicator: String,

    /// Relative residual accepted from the linear solvers.
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,

    /// Worker threads for per-element stages (0 = all cores). Results do not
    /// depend on this.
    #[arg(long, default_value_t = 0, value_name = "N")]
    threads: usize,
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Directory receiving all artifacts; created if missing.
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Skip the SVG convergence plot.
    #[arg(long)]
    no_plot: bool,

    /// Key=value file supplying defaults for any long flag of this
    /// subcommand; command-line flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// Enrichment mode: offline-adaptive, online-adaptive, offline-uniform,
    /// or online-uniform.
    #[arg(long, default_value = "offline-adaptive", value_name = "MODE")]
    mode: String,

    #[command(flatten)]
    enrich: EnrichArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(clap::Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,

    /// Comma-separated enrichment modes, one plotted series each.
    #[arg(long, value_delimiter = ',', value_name = "MODE,...")]
    modes: Vec<String>,

    #[command(flatten)]
    enrich: EnrichArgs,

    #[command(flatten)]
    output: OutputArgs,
}

/// Library error tagged with the pipeline stage it came from.
struct StageError {
    stage: &'static str,
    source: Error,
}

impl StageError {
    fn exit_code(&self) -> u8 {
        match self.source {
            Error::NotPositiveDefinite { .. }
            | Error::SolverStalled { .. }
            | Error::DependentBasis { .. }
            | Error::ZeroReference { .. } => 3,
            _ => 2,
        }
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for msfem::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn main() -> ExitCode {
    let argv = match merged_args(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error in configuration: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error in {}: {}", e.stage, e.source);
            ExitCode::from(e.exit_code())
        }
    }
}

/// Splices `key=value` lines from `--config <file>` in front of the real
/// command-line flags, so explicit flags override file entries.
fn merged_args(argv: Vec<String>) -> msfem::Result<Vec<String>> {
    let mut path = None;
    let mut it = argv.iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            path = it.next().cloned();
        } else if let Some(rest) = arg.strip_prefix("--config=") {
            path = Some(rest.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    if argv.len() < 2 {
        return Ok(argv);
    }
    let contents = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let mut file_args = Vec::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("{path}:{}: expected key=value", idx + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key == "config" {
            return Err(Error::config(format!(
                "{path}:{}: config files cannot nest",
                idx + 1
            )));
        }
        match value {
            "true" => file_args.push(format!("--{key}")),
            "false" => {}
            _ => {
                file_args.push(format!("--{key}"));
                file_args.push(value.to_string());
            }
        }
    }
    let mut merged = argv[..2].to_vec();
    merged.extend(file_args);
    merged.extend(argv[2..].iter().cloned());
    Ok(merged)
}

fn parse_grid(s: &str) -> msfem::Result<(usize, usize)> {
    let parse = |v: &str| -> msfem::Result<usize> {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("grid `{s}` must look like 100x100")))?;
        if n == 0 {
            return Err(Error::config(format!("grid `{s}` has a zero dimension")));
        }
        Ok(n)
    };
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::config(format!("grid `{s}` must look like 100x100")))?;
    Ok((parse(a)?, parse(b)?))
}

/// Comma-separated `key=value` pairs after a spec name, all values numeric.
fn spec_pairs<'a>(spec: &str, body: impl Iterator<Item = &'a str>) -> msfem::Result<Vec<(String, f64)>> {
    let mut pairs = Vec::new();
    for part in body {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::config(format!("malformed field `{part}` in `{spec}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad number `{v}` in `{spec}`")))?;
        pairs.push((k.trim().to_string(), v));
    }
    Ok(pairs)
}

fn parse_bc(spec: &str) -> msfem::Result<BoundarySpec> {
    let mut parts = spec.split(',');
    let name = parts.next().unwrap_or_default().trim();
    let pairs = spec_pairs(spec, parts)?;
    let lookup = |key: &str, default: f64| -> f64 {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map_or(default, |&(_, v)| v)
    };
    let known = |allowed: &[&str]| -> msfem::Result<()> {
        for (k, _) in &pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::config(format!("unknown key `{k}` in `{spec}`")));
            }
        }
        Ok(())
    };
    match name {
        "flow" | "flow-through" => {
            known(&["left", "right"])?;
            Ok(BoundarySpec::flow_through(
                lookup("left", 1.0),
                lookup("right", 0.0),
            ))
        }
        "dirichlet" => {
            known(&["left", "right", "bottom", "top"])?;
            Ok(BoundarySpec::dirichlet_all(
                BoundaryValue::Constant(lookup("left", 0.0)),
                BoundaryValue::Constant(lookup("right", 0.0)),
                BoundaryValue::Constant(lookup("bottom", 0.0)),
                BoundaryValue::Constant(lookup("top", 0.0)),
            ))
        }
        other => Err(Error::config(format!(
            "unknown boundary spec `{other}`; use flow or dirichlet"
        ))),
    }
}

fn parse_mode(s: &str) -> msfem::Result<Mode> {
    match s {
        "offline-adaptive" => Ok(Mode::OfflineAdaptive),
        "online-adaptive" => Ok(Mode::OnlineAdaptive),
        "offline-uniform" => Ok(Mode::OfflineUniform),
        "online-uniform" => Ok(Mode::OnlineUniform),
        other => Err(Error::config(format!(
            "unknown mode `{other}`; use offline-adaptive, online-adaptive, \
             offline-uniform, or online-uniform"
        ))),
    }
}

fn build_permeability(
    grid: &FineGrid,
    spec: &str,
    seed: u64,
) -> msfem::Result<Permeability> {
    if let Some(gen) = spec.strip_prefix("gen:") {
        gen_perm(grid, &PermSpec::parse(gen)?, seed)
    } else if let Some(path) = spec.strip_prefix("file:") {
        load_perm(grid, path)
    } else {
        Err(Error::config(format!(
            "permeability `{spec}` must start with gen: or file:"
        )))
    }
}

fn build_source(hier: &GridHierarchy, spec: &str) -> msfem::Result<SourceField> {
    if spec == "zero" {
        return Ok(SourceField::zero(hier.fine()));
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return SourceField::load(hier.fine(), path);
    }
    let mut parts = spec.split(',');
    let name = parts.next().unwrap_or_default().trim();
    if name != "blobs" {
        return Err(Error::config(format!(
            "source `{spec}` must be zero, blobs[,magnitude=M], or file:<path>"
        )));
    }
    let pairs = spec_pairs(spec, parts)?;
    let mut magnitude = 1.0;
    for (k, v) in pairs {
        if k == "magnitude" {
            magnitude = v;
        } else {
            return Err(Error::config(format!("unknown key `{k}` in `{spec}`")));
        }
    }
    Ok(SourceField::balanced_blobs(hier, magnitude))
}

fn build_problem(args: &ProblemArgs) -> Result<Problem, StageError> {
    let (fx, fy) = parse_grid(&args.fine).stage("configuration")?;
    let (cx, cy) = parse_grid(&args.coarse).stage("configuration")?;
    let fine = FineGrid::unit(fx, fy).stage("configuration")?;
    let hier = GridHierarchy::new(fine, cx, cy).stage("configuration")?;
    let perm = build_permeability(hier.fine(), &args.perm, args.seed)
        .stage("permeability input")?;
    let source = build_source(&hier, &args.source).stage("source input")?;
    let bc = parse_bc(&args.bc).stage("configuration")?;
    Problem::new(hier, perm, &bc, source).stage("problem assembly")
}

fn enrichment_config(mode: Mode, e: &EnrichArgs) -> msfem::Result<EnrichmentConfig> {
    let sweep = match e.sweep.as_deref() {
        None => None,
        Some("batch") => Some(Sweep::Batch),
        Some("colored") => Some(Sweep::Colored),
        Some(other) => {
            return Err(Error::config(format!(
                "unknown sweep `{other}`; use batch or colored"
            )))
        }
    };
    let indicator = match e.indicator.as_str() {
        "weighted" => OfflineIndicator::Weighted,
        "exact" => OfflineIndicator::Exact,
        other => {
            return Err(Error::config(format!(
                "unknown indicator `{other}`; use weighted or exact"
            )))
        }
    };
    if !(e.rtol > 0.0 && e.rtol.is_finite()) {
        return Err(Error::config(format!(
            "rtol must be positive and finite, got {}",
            e.rtol
        )));
    }
    let cfg = EnrichmentConfig {
        mode,
        theta: e.theta,
        init_basis: e.init_basis,
        add_count: e.add_count,
        layers: e.layers,
        tol: e.tol,
        max_iters: e.max_iters,
        dof_cap: if e.dof_cap == 0 { usize::MAX } else { e.dof_cap },
        sweep,
        indicator,
        solver: SolverOptions {
            rtol: e.rtol,
            ..SolverOptions::default()
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn execute(problem: &Problem, cfg: &EnrichmentConfig, threads: usize) -> Result<RunOutcome, StageError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
        .stage("configuration")?;
    pool.install(|| run(problem, cfg)).stage("enrichment")
}

fn print_history(label: &str, outcome: &RunOutcome) {
    println!("{label}: iter dofs erp eru sum_eta2");
    for r in &outcome.history.records {
        println!(
            "{label}: {:4} {:5} {:.4e} {:.4e} {:.4e}",
            r.iter, r.dofs, r.erp, r.eru, r.sum_eta2
        );
    }
    println!(
        "{label}: stopped on {} after {} levels",
        outcome.history.stop.as_str(),
        outcome.history.records.len()
    );
}

fn summary_value(mode: &str, problem: &Problem, outcome: &RunOutcome) -> serde_json::Value {
    let last = outcome
        .history
        .records
        .last()
        .expect("a run records at least one level");
    serde_json::json!({
        "mode": mode,
        "fine": { "nx": problem.hier.fine().nx(), "ny": problem.hier.fine().ny() },
        "coarse": { "nx": problem.hier.coarse().nx(), "ny": problem.hier.coarse().ny() },
        "levels": outcome.history.records.len(),
        "stop": outcome.history.stop.as_str(),
        "final": {
            "iter": last.iter,
            "dofs": last.dofs,
            "erp": last.erp,
            "eru": last.eru,
            "sum_eta2": last.sum_eta2,
        },
        "wall_ms_total": outcome.history.records.iter().map(|r| r.wall_ms).sum::<f64>(),
    })
}

fn write_summary(path: &Path, value: &serde_json::Value) -> msfem::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serialization");
    report::write_text(path, &(text + "\n"))
}

fn ensure_out_dir(dir: &Path) -> Result<(), StageError> {
    fs::create_dir_all(dir)
        .map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })
        .stage("report")
}

fn series_of(label: &str, outcome: &RunOutcome) -> Series {
    Series {
        label: label.to_string(),
        points: outcome
            .history
            .records
            .iter()
            .map(|r| (r.dofs as f64, r.eru))
            .collect(),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), StageError> {
    let mode = parse_mode(&args.mode).stage("configuration")?;
    let cfg = enrichment_config(mode, &args.enrich).stage("configuration")?;
    let problem = build_problem(&args.problem)?;
    let outcome = execute(&problem, &cfg, args.enrich.threads)?;
    print_history(&args.mode, &outcome);

    let dir = &args.output.out;
    ensure_out_dir(dir)?;
    report::write_text(
        &dir.join("history.csv"),
        &report::history_csv(&outcome.history),
    )
    .stage("report")?;
    let coarse = problem.hier.coarse();
    let final_levels = &outcome
        .history
        .records
        .last()
        .expect("a run records at least one level")
        .levels;
    report::write_text(
        &dir.join("basis_map.csv"),
        &report::basis_map_csv(coarse.nx(), coarse.ny(), final_levels),
    )
    .stage("report")?;

    let mut summary = summary_value(&args.mode, &problem, &outcome);
    if !args.output.no_plot {
        match report::convergence_svg(&[series_of(&args.mode, &outcome)]) {
            Some(svg) => {
                report::write_text(&dir.join("plot.svg"), &svg).stage("report")?;
                summary["artifacts"] = serde_json::json!({
                    "history": "history.csv",
                    "basis_map": "basis_map.csv",
                    "plot": "plot.svg",
                });
            }
            None => eprintln!("warning: no positive errors to plot, skipping plot.svg"),
        }
    }
    if summary.get("artifacts").is_none() {
        summary["artifacts"] = serde_json::json!({
            "history": "history.csv",
            "basis_map": "basis_map.csv",
        });
    }
    write_summary(&dir.join("summary.json"), &summary).stage("report")?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), StageError> {
    let modes: Vec<String> = args
        .modes
        .iter()
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    if modes.is_empty() {
        eprintln!("warning: no modes requested, nothing to compare");
        return Ok(());
    }
    let mut configs = Vec::new();
    for name in &modes {
        let mode = parse_mode(name).stage("configuration")?;
        configs.push((name.clone(), enrichment_config(mode, &args.enrich).stage("configuration")?));
    }
    let problem = build_problem(&args.problem)?;

    let dir = &args.output.out;
    ensure_out_dir(dir)?;
    let mut series = Vec::new();
    let mut summaries = Vec::new();
    for (name, cfg) in &configs {
        let outcome = execute(&problem, cfg, args.enrich.threads)?;
        print_history(name, &outcome);
        report::write_text(
            &dir.join(format!("history_{name}.csv")),
            &report::history_csv(&outcome.history),
        )
        .stage("report")?;
        let coarse = problem.hier.coarse();
        let final_levels = &outcome
            .history
            .records
            .last()
            .expect("a run records at least one level")
            .levels;
        report::write_text(
            &dir.join(format!("basis_map_{name}.csv")),
            &report::basis_map_csv(coarse.nx(), coarse.ny(), final_levels),
        )
        .stage("report")?;
        summaries.push(summary_value(name, &problem, &outcome));
        series.push(series_of(name, &outcome));
    }

    if !args.output.no_plot {
        match report::convergence_svg(&series) {
            Some(svg) => report::write_text(&dir.join("plot.svg"), &svg).stage("report")?,
            None => eprintln!("warning: no positive errors to plot, skipping plot.svg"),
        }
    }
    write_summary(
        &dir.join("summary.json"),
        &serde_json::json!({ "runs": summaries }),
    )
    .stage("report")?;
    println!("artifacts written to {}", dir.display());
    Ok(())
}
