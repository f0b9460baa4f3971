//! Command-line front end: golden profiling, target listing, single
//! injections, full campaigns, and report regeneration.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 execution error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kfi_core::campaign::{self, PlanEntry};
use kfi_core::config::{Config, FaultType};
use kfi_core::harness::{self, GoldenProfile};
use kfi_core::injector::FaultSpec;
use kfi_core::report;
use kfi_core::targets;

#[derive(Parser)]
#[command(name = "kfi", about = "Kernel fault-injection simulator", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Key-value config file; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the campaign seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the worker count
    #[arg(long, global = true)]
    workers: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the fault-free golden profile and writes golden.profile
    Golden,
    /// Target catalog operations
    Targets {
        #[command(subcommand)]
        sub: TargetsCmd,
    },
    /// Executes a single injection run and prints its outcome
    Inject(InjectArgs),
    /// Plans and runs a full campaign, writing all report artifacts
    Campaign,
    /// Regenerates summary and plot data from an existing runs.csv
    Report {
        /// Directory holding runs.csv (defaults to --out)
        #[arg(long)]
        dir: Option<PathBuf>,
        /// What to regenerate: summary, plotdata, or all
        #[arg(long, default_value = "all")]
        format: String,
    },
}

#[derive(Subcommand)]
enum TargetsCmd {
    /// Prints one line per target: name,category,size_bytes,valid_predicate
    List,
}

#[derive(Args)]
struct InjectArgs {
    /// Target name from `targets list`
    #[arg(long)]
    target: String,
    /// Byte offset within the target
    #[arg(long, default_value_t = 0)]
    byte: u32,
    /// Bit index 0-7
    #[arg(long, default_value_t = 0)]
    bit: u8,
    /// Fault type: transient or permanent
    #[arg(long = "type", default_value = "transient")]
    fault_type: String,
    /// Stuck level for permanent faults; omit to hold the flipped bit
    #[arg(long)]
    stuck: Option<u8>,
    /// Injection instant as `tick:event`
    #[arg(long, default_value = "1:0")]
    at: String,
}

enum CliError {
    Usage(String),
    Execution(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Execution(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Execution(m) => m,
        }
    }
}

fn load_config(global: &GlobalArgs) -> Result<Config, CliError> {
    let mut cfg = match &global.config {
        Some(path) => Config::from_file(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        cfg.campaign.seed = seed;
    }
    if let Some(workers) = global.workers {
        cfg.campaign.workers = workers;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn golden_path(out: &Path) -> PathBuf {
    out.join("golden.profile")
}

fn load_golden(out: &Path) -> Result<GoldenProfile, CliError> {
    let path = golden_path(out);
    GoldenProfile::load(&path).map_err(|e| {
        CliError::Execution(format!(
            "cannot load {} (run `kfi golden` first): {e}",
            path.display()
        ))
    })
}

fn cmd_golden(global: &GlobalArgs) -> Result<(), CliError> {
    let cfg = load_config(global)?;
    let profile = harness::golden_run(&cfg).map_err(|e| CliError::Execution(e.to_string()))?;
    std::fs::create_dir_all(&global.out)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    profile
        .save(&golden_path(&global.out))
        .map_err(|e| CliError::Execution(e.to_string()))?;
    println!("golden profile written to {}", golden_path(&global.out).display());
    println!("total_ticks {}", profile.total_ticks);
    for (id, (digest, tick)) in &profile.per_task {
        println!("task {} digest={digest:016x} completion_tick={tick}", id.name());
    }
    Ok(())
}

fn cmd_targets_list(global: &GlobalArgs) -> Result<(), CliError> {
    let cfg = load_config(global)?;
    let (kernel, _) =
        harness::build_system(&cfg).map_err(|e| CliError::Execution(e.to_string()))?;
    for t in targets::gather_targets(&kernel) {
        println!(
            "{},{},{},{}",
            t.name,
            t.category.as_str(),
            t.size,
            t.validity.as_str()
        );
    }
    Ok(())
}

fn cmd_inject(global: &GlobalArgs, args: &InjectArgs) -> Result<(), CliError> {
    let cfg = load_config(global)?;
    let golden = load_golden(&global.out)?;
    let (kernel, _) =
        harness::build_system(&cfg).map_err(|e| CliError::Execution(e.to_string()))?;
    let catalog = targets::gather_targets(&kernel);

    if targets::find_target(&catalog, &args.target).is_err() {
        let names: Vec<&str> = catalog.iter().map(|t| t.name.as_str()).collect();
        return Err(CliError::Usage(format!(
            "unknown target `{}`; valid targets:\n  {}",
            args.target,
            names.join("\n  ")
        )));
    }
    let fault_type = match args.fault_type.as_str() {
        "transient" => FaultType::Transient,
        "permanent" => FaultType::Permanent,
        other => {
            return Err(CliError::Usage(format!(
                "unknown fault type `{other}` (expected transient|permanent)"
            )))
        }
    };
    let (t_tick, t_event) = args
        .at
        .split_once(':')
        .and_then(|(t, e)| Some((t.parse().ok()?, e.parse().ok()?)))
        .ok_or_else(|| CliError::Usage(format!("bad --at `{}` (expected tick:event)", args.at)))?;

    let spec = FaultSpec {
        target: args.target.clone(),
        byte_off: args.byte,
        bit_off: args.bit,
        fault_type,
        stuck_value: args.stuck.map(|v| v & 1),
        t_tick,
        t_event,
    };
    let run = harness::execute_run(Some(&spec), &catalog, &golden, &cfg, true)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    std::fs::create_dir_all(&global.out).map_err(|e| CliError::Execution(e.to_string()))?;
    let log_path = global.out.join(format!(
        "run-{}-b{}-k{}-{}.log",
        args.target.replace(['[', ']'], "_"),
        args.byte,
        args.bit,
        fault_type
    ));
    harness::write_run_log(&log_path, &run, golden.total_ticks, cfg.campaign.seed)
        .map_err(|e| CliError::Execution(e.to_string()))?;

    println!("outcome {}", run.outcome.as_str());
    println!("run_ticks {} golden_ticks {}", run.run_ticks, golden.total_ticks);
    if let Some(p) = &run.panic {
        println!("panic {} ({})", p.reason.as_str(), p.detail);
    }
    if let Some(r) = &run.injection {
        println!(
            "applied at={}:{} pre_bit={} post_bit={} valid={}",
            r.applied_tick, r.applied_event, r.pre_bit, r.post_bit, r.valid
        );
    }
    println!("log {}", log_path.display());
    Ok(())
}

fn cmd_campaign(global: &GlobalArgs) -> Result<(), CliError> {
    let cfg = load_config(global)?;
    let golden = load_golden(&global.out)?;
    let (kernel, _) =
        harness::build_system(&cfg).map_err(|e| CliError::Execution(e.to_string()))?;
    let catalog = targets::gather_targets(&kernel);
    let plan: Vec<PlanEntry> = campaign::plan_campaign(&cfg, &catalog, &golden)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    println!(
        "campaign: {} runs ({} per location x {} targets), {} workers, fault type {}",
        plan.len(),
        plan.len() / catalog.len(),
        catalog.len(),
        cfg.campaign.workers,
        cfg.campaign.fault_type
    );
    let report_data = campaign::run_campaign(&plan, &golden, &catalog, &cfg)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    report::write_report_dir(&global.out, &report_data)
        .map_err(|e| CliError::Execution(e.to_string()))?;
    println!("completed in {} ms", report_data.duration_ms);
    println!("runs.csv, report.summary, plotdata/ written to {}", global.out.display());
    Ok(())
}

fn cmd_report(global: &GlobalArgs, dir: Option<&Path>, format: &str) -> Result<(), CliError> {
    let dir = dir.unwrap_or(&global.out);
    let rows = report::read_runs_csv(&dir.join("runs.csv"))
        .map_err(|e| CliError::Execution(e.to_string()))?;
    let data = campaign::CampaignReport::from_rows(rows, 0);
    match format {
        "summary" => report::write_summary(&dir.join("report.summary"), &data)
            .map_err(|e| CliError::Execution(e.to_string()))?,
        "plotdata" => report::write_plotdata(&dir.join("plotdata"), &data)
            .map_err(|e| CliError::Execution(e.to_string()))?,
        "all" => {
            report::write_summary(&dir.join("report.summary"), &data)
                .map_err(|e| CliError::Execution(e.to_string()))?;
            report::write_plotdata(&dir.join("plotdata"), &data)
                .map_err(|e| CliError::Execution(e.to_string()))?;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown format `{other}` (expected summary|plotdata|all)"
            )))
        }
    }
    println!("report artifacts regenerated in {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Golden => cmd_golden(&cli.global),
        Command::Targets { sub: TargetsCmd::List } => cmd_targets_list(&cli.global),
        Command::Inject(args) => cmd_inject(&cli.global, args),
        Command::Campaign => cmd_campaign(&cli.global),
        Command::Report { dir, format } => cmd_report(&cli.global, dir.as_deref(), format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
