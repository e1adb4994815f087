use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmc_verify::catalog::{list_surfaces, GridSpec};
use pmc_verify::cli::{
    emit, list_surfaces_text, parse_grid, parse_param, run_convergence, run_verify, Check, Precision,
    RunConfig, RunError, Status, VerificationReport,
};
use pmc_verify::invariants::IsothermalPolicy;

#[derive(Parser)]
#[command(name = "pmcverify", version, about = "Numerical verification of pmc surfaces in M^n(c) x R")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate all enabled checks at a single step.
    Verify(RunArgs),
    /// Evaluate at a decreasing step sequence and measure convergence orders.
    Sweep(RunArgs),
    /// Print the surface catalog.
    ListSurfaces {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    surface: Option<String>,
    /// Surface parameter, repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Grid size as NUxNV.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridSpec>,
    #[arg(long)]
    step: Option<f64>,
    /// Comma-separated decreasing steps.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<f64>>,
    /// Use closed-form jets instead of finite differences.
    #[arg(long)]
    analytic: bool,
    /// Comma-separated subset of pmc,codazzi,simons,gauss,bounds,holomorphic,identities.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<Check>>,
    #[arg(long, value_parser = ["f64", "dd"])]
    precision: Option<String>,
    /// Compute the holomorphicity residual on non-isothermal charts too.
    #[arg(long)]
    report_non_isothermal: bool,
    /// Include per-point records in the report.
    #[arg(long)]
    points: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence table destination (sweep).
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, RunError> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.surface {
            cfg.surface = s;
        }
        cfg.params.extend(self.params);
        cfg.c = self.c.or(cfg.c);
        cfg.grid = self.grid.unwrap_or(cfg.grid);
        cfg.step = self.step.or(cfg.step);
        cfg.steps = self.steps.or(cfg.steps);
        cfg.analytic |= self.analytic;
        if let Some(c) = self.checks {
            cfg.checks = c;
        }
        match self.precision.as_deref() {
            Some("f64") => cfg.precision = Precision::F64,
            Some("dd") => cfg.precision = Precision::Dd,
            _ => {}
        }
        if self.report_non_isothermal {
            cfg.isothermal_policy = IsothermalPolicy::ReportOnly;
        }
        cfg.include_points |= self.points;
        cfg.out = self.out.or(cfg.out);
        cfg.csv = self.csv.or(cfg.csv);
        Ok(cfg)
    }
}

fn print_summary(r: &VerificationReport) {
    for c in &r.checks {
        let status = match c.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skip",
        };
        let worst = c.worst.map_or("-".to_string(), |w| format!("{w:.3e}"));
        let extra = c.reason.as_deref().unwrap_or("");
        eprintln!("  {status} {:<12} worst {worst:<11} tol {:.1e} {extra}", c.check.name(), c.tolerance);
    }
    eprintln!("{}: {:?}", r.surface.name, r.verdict);
}

fn run(args: RunArgs, sweep: bool) -> Result<i32, RunError> {
    let cfg = args.into_config()?;
    let report = if sweep { run_convergence(&cfg)? } else { run_verify(&cfg)? };
    let json = emit(&cfg, &report)?;
    if cfg.out.is_none() {
        print!("{json}");
    }
    print_summary(&report);
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::ListSurfaces { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(&list_surfaces()).expect("catalog serializes"));
            } else {
                print!("{}", list_surfaces_text());
            }
            0
        }
        Cmd::Verify(a) => run(a, false).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        }),
        Cmd::Sweep(a) => run(a, true).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        }),
    };
    ExitCode::from(code as u8)
}
