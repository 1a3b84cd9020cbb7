use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use clutterbench::cfar::write_masks_csv;
use clutterbench::godec::write_trace_csv;
use clutterbench::pipeline::{benchmark, run_scheme, simulate, sweep_nmov, Scheme, DEFAULT_NMOV_GRID};
use clutterbench::rdmap::{normalized_db, range_velocity_map, write_grid_f32, write_map_csv};
use clutterbench::Scenario;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "clutterbench", version, about = "Slow-moving weak target detection workbench")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON, or a manifest written by an earlier run.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize all scans and write IF matrices and raw maps.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run one detection scheme and write its report, masks and map grids.
    Detect {
        #[command(flatten)]
        common: Common,
        /// One of raw_ca, raw_os, mti_ca, mti_os, godec_ca.
        #[arg(long)]
        scheme: String,
        /// Overrides the scenario's GoDec sparsity knob.
        #[arg(long)]
        nmov: Option<usize>,
    },
    /// Sweep the GoDec sparsity knob and recommend a band.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values (default: the 13-point reference grid).
        #[arg(long, value_delimiter = ',')]
        nmov: Option<Vec<usize>>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Time every stage of the chosen schemes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Comma-separated schemes (default: all).
        #[arg(long, value_delimiter = ',')]
        scheme: Option<Vec<String>>,
    },
    /// Print a built-in scenario as JSON.
    Preset {
        #[arg(value_enum)]
        name: Preset,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Reference,
    LeakageBand,
}

/// Everything needed to reproduce a run.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmov: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    schemes: Option<Vec<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recommendation: Option<Recommendation>,
    outputs: Vec<String>,
    scenario: &'a Scenario,
}

impl<'a> Manifest<'a> {
    fn new(command: &'static str, scenario: &'a Scenario) -> Self {
        Manifest {
            tool: "clutterbench",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: scenario.seed,
            scheme: None,
            nmov: None,
            repeats: None,
            schemes: None,
            recommendation: None,
            outputs: Vec::new(),
            scenario,
        }
    }
}

#[derive(Serialize)]
struct Recommendation {
    optimum: usize,
    band: Vec<usize>,
    mean_f: Vec<(usize, f64)>,
}

/// Bad input: exits with status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    let path = &common.scenario;
    let text = fs::read_to_string(path).with_context(|| format!("cannot read scenario {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: not valid JSON: {e}", path.display())))?;
    let document = match value.get("scenario") {
        Some(inner) => inner.to_string(),
        None => text,
    };
    let mut scenario = Scenario::from_json(&document).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    scenario.validate().with_context(|| format!("in {}", path.display()))?;
    Ok(scenario)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(dir: &Path, name: &str, outputs: &mut Vec<String>, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))?;
    outputs.push(name.to_string());
    Ok(())
}

fn write_manifest(dir: &Path, mut manifest: Manifest) -> Result<()> {
    manifest.outputs.push("manifest.json".into());
    let text = serde_json::to_string_pretty(&manifest)?;
    let path = dir.join("manifest.json");
    fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    name.parse::<Scheme>().map_err(Into::into)
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let scenario = load_scenario(common)?;
    prepare_out(&common.out)?;
    let sim = simulate(&scenario)?;
    let mut manifest = Manifest::new("simulate", &scenario);
    for scan in &sim.scans {
        let k = scan.scan_index;
        write_file(&common.out, &format!("scan_{k:02}.bin"), &mut manifest.outputs, |w| scan.write_to(w))?;
        let magnitude = range_velocity_map(scan).magnitude();
        write_file(&common.out, &format!("raw_map_{k:02}.csv"), &mut manifest.outputs, |w| {
            write_map_csv(&magnitude, w)
        })?;
    }
    write_manifest(&common.out, manifest)?;
    println!("wrote {} scans to {}", sim.scans.len(), common.out.display());
    Ok(())
}

fn cmd_detect(common: &Common, scheme: &str, nmov: Option<usize>) -> Result<()> {
    let scheme = parse_scheme(scheme)?;
    let mut scenario = load_scenario(common)?;
    if let Some(n) = nmov {
        scenario.godec.n_mov = n;
        scenario.validate()?;
    }
    prepare_out(&common.out)?;
    let report = run_scheme(&scenario, scheme)?;
    let mut manifest = Manifest::new("detect", &scenario);
    manifest.scheme = Some(scheme.name());
    write_file(&common.out, "report.json", &mut manifest.outputs, |w| {
        w.write_all(report.to_json().as_bytes())?;
        w.write_all(b"\n")
    })?;
    write_file(&common.out, "masks.csv", &mut manifest.outputs, |w| write_masks_csv(&report.masks, w))?;
    for (k, map) in report.maps.iter().enumerate() {
        write_file(&common.out, &format!("map_db_{k:02}.f32"), &mut manifest.outputs, |w| {
            write_grid_f32(&normalized_db(map), w)
        })?;
    }
    if !report.godec_trace.is_empty() {
        write_file(&common.out, "godec_trace.csv", &mut manifest.outputs, |w| {
            write_trace_csv(&report.godec_trace, w)
        })?;
    }
    write_manifest(&common.out, manifest)?;
    let f = report.f.map(|f| format!(" f={f:.4}")).unwrap_or_default();
    println!(
        "{}: P_d={:.2} N_fa={:.1} iter_cov={}{f}",
        scheme, report.p_d, report.n_fa, report.iter_cov
    );
    Ok(())
}

fn cmd_sweep(common: &Common, nmov: Option<&[usize]>, repeats: usize) -> Result<()> {
    let grid = nmov.unwrap_or(&DEFAULT_NMOV_GRID);
    if grid.is_empty() {
        return Err(usage("--nmov needs at least one value"));
    }
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let scenario = load_scenario(common)?;
    prepare_out(&common.out)?;
    let table = sweep_nmov(&scenario, grid, repeats)?;
    let mut manifest = Manifest::new("sweep", &scenario);
    manifest.nmov = Some(grid);
    manifest.repeats = Some(repeats);
    write_file(&common.out, "sweep.csv", &mut manifest.outputs, |w| table.write_csv(w))?;
    if let Some(report) = &table.final_report {
        write_file(&common.out, "final_report.json", &mut manifest.outputs, |w| {
            w.write_all(report.to_json().as_bytes())?;
            w.write_all(b"\n")
        })?;
    }
    manifest.recommendation = Some(Recommendation {
        optimum: table.optimum,
        band: table.band.clone(),
        mean_f: table.means.clone(),
    });
    write_manifest(&common.out, manifest)?;
    println!("optimum N_mov={} band={:?}", table.optimum, table.band);
    Ok(())
}

fn cmd_bench(common: &Common, repeats: usize, schemes: Option<&[String]>) -> Result<()> {
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let schemes = match schemes {
        Some(names) => names.iter().map(|n| parse_scheme(n)).collect::<Result<Vec<_>>>()?,
        None => Scheme::ALL.to_vec(),
    };
    let scenario = load_scenario(common)?;
    prepare_out(&common.out)?;
    let table = benchmark(&scenario, &schemes, repeats)?;
    let mut manifest = Manifest::new("bench", &scenario);
    manifest.repeats = Some(repeats);
    manifest.schemes = Some(schemes.iter().map(|s| s.name()).collect());
    write_file(&common.out, "timing.csv", &mut manifest.outputs, |w| table.write_csv(w))?;
    write_manifest(&common.out, manifest)?;
    for row in &table.rows {
        println!("{:<9} {:<9} {:.4e} s/scan", row.scheme, row.stage.name(), row.mean_seconds);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Simulate { common } => cmd_simulate(common),
        Command::Detect { common, scheme, nmov } => cmd_detect(common, scheme, *nmov),
        Command::Sweep { common, nmov, repeats } => cmd_sweep(common, nmov.as_deref(), *repeats),
        Command::Bench { common, repeats, scheme } => cmd_bench(common, *repeats, scheme.as_deref()),
        Command::Preset { name } => {
            let scenario = match name {
                Preset::Reference => Scenario::reference(),
                Preset::LeakageBand => Scenario::leakage_band(),
            };
            println!("{}", scenario.to_json());
            Ok(())
        }
    }
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.downcast_ref::<Usage>().is_some()
            || cause.downcast_ref::<clutterbench::Error>().is_some_and(|e| e.is_validation())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_validation(&err) { 2 } else { 1 })
        }
    }
}
