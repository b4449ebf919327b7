//! `mrcie` command line front end.

mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use mrcie_core::config::{validate_inputs, Project};
use mrcie_core::metrics::{scenario_report, ReportOptions, ScenarioReport};
use mrcie_core::pipeline::{slug, Pipeline, RunOptions, StageRecord};
use mrcie_core::sim::Trajectory;
use mrcie_core::CoreError;

#[derive(Parser)]
#[command(name = "mrcie", version, about = "Model-reference inertia emulation for diesel-wind microgrids")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Project manifest.
    #[arg(long, global = true, default_value = "fixtures/manifest.json")]
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Plant fidelity for every simulated scenario.
    #[arg(long, global = true, value_enum)]
    fidelity: Option<Fidelity>,
    /// Delay policy for every simulated scenario.
    #[arg(long, global = true, value_enum)]
    delay_policy: Option<Policy>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fidelity {
    Nonlinear,
    Linear10,
    Reduced1,
}

impl Fidelity {
    fn name(self) -> &'static str {
        match self {
            Fidelity::Nonlinear => "nonlinear",
            Fidelity::Linear10 => "linear10",
            Fidelity::Reduced1 => "reduced1",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Worst,
    Min,
    Random,
}

impl Policy {
    fn name(self) -> &'static str {
        match self {
            Policy::Worst => "worst",
            Policy::Min => "min",
            Policy::Random => "random",
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the manifest and every file it references.
    Validate,
    /// Solve the DFIG operating point.
    Equilibrium,
    /// Linearize about the operating point and print the modes.
    Linearize,
    /// Reduce the linear model to first order.
    Reduce,
    /// Synthesize the controller designs of a config.
    Synthesize {
        #[arg(long)]
        config: String,
        /// One design; all of the config's designs when omitted.
        #[arg(long)]
        design: Option<String>,
    },
    /// Simulate scenarios of a config and write their trajectories.
    Simulate {
        #[arg(long)]
        config: String,
        /// One scenario; all when omitted.
        #[arg(long)]
        scenario: Option<String>,
        /// Also write an SVG per trajectory.
        #[arg(long)]
        svg: bool,
    },
    /// Metrics of a config's scenarios, or of a trajectory CSV.
    Report {
        #[arg(long, required_unless_present = "csv", conflicts_with = "csv")]
        config: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        f_bar: f64,
        /// Synthesis gamma for the bound check on a CSV.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Every stage for the given configs (all when omitted).
    Pipeline {
        #[arg(long = "config")]
        configs: Vec<String>,
        #[arg(long)]
        svg: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.chain().find_map(|c| c.downcast_ref::<CoreError>()).map_or(1, CoreError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn print(v: &serde_json::Value) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_records(records: &[StageRecord]) {
    for r in records {
        let state = if r.cached { "cached" } else { "wrote" };
        eprintln!("{:<28} {state:<7} {} {}", r.stage, &r.content_hash[..12], r.path.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if let Cmd::Validate = cli.cmd {
        let d = validate_inputs(&g.manifest);
        for w in &d.warnings {
            eprintln!("warning: {w}");
        }
        for e in &d.errors {
            eprintln!("error: {e}");
        }
        if !d.is_ok() {
            return Err(CoreError::validation(format!("{} error(s) in the inputs", d.errors.len())).into());
        }
        println!("ok");
        return Ok(());
    }
    if let Cmd::Report { csv: Some(path), f_bar, gamma, .. } = &cli.cmd {
        return report_csv(path, *f_bar, *gamma);
    }

    let project = Project::load(&g.manifest).with_context(|| format!("loading {}", g.manifest.display()))?;
    let opts = RunOptions {
        out_dir: g.out.clone(),
        seed: g.seed,
        fidelity: g.fidelity.map(|f| f.name().to_string()),
        delay_policy: g.delay_policy.map(|p| p.name().to_string()),
    };
    let mut p = Pipeline::new(&project, opts);
    let result = dispatch(&mut p, &project, cli.cmd);
    print_records(p.records());
    result
}

fn dispatch(p: &mut Pipeline, project: &Project, cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Validate => unreachable!("handled before loading"),
        Cmd::Equilibrium => {
            let a = p.operating_point()?;
            print(&serde_json::to_value(&a.payload)?)
        }
        Cmd::Linearize => {
            p.linear()?;
            let m = p.modal()?.payload;
            let modes: Vec<_> = m
                .analysis
                .eigenvalues
                .iter()
                .map(|l| json!({ "re": l.re, "im": l.im }))
                .collect();
            print(&json!({
                "eigenvalues": modes,
                "relevant_state": m.relevant_state,
                "relevant_mode": m.relevant_mode,
                "lambda_r": m.lambda_r,
                "participation": m.relevant_participation,
            }))
        }
        Cmd::Reduce => {
            let r = p.reduced()?.payload;
            print(&serde_json::to_value(&r)?)
        }
        Cmd::Synthesize { config, design } => {
            let (_, cfg) = project.config(&config)?;
            let names: Vec<String> = match design {
                Some(d) => vec![d],
                None => cfg.designs.keys().cloned().collect(),
            };
            let mut out = serde_json::Map::new();
            for d in names {
                let r = p.synthesis(&config, &d)?.payload;
                out.insert(
                    d,
                    json!({
                        "gamma": r.gamma,
                        "tracking_bound": r.tracking_bound,
                        "k": r.k,
                        "certified": r.certified(),
                        "eta_m": r.eta_m,
                        "kappa": r.kappa,
                        "requested_eta_m": r.requested_eta_m,
                        "requested_kappa": r.requested_kappa,
                        "solver": r.solver_message,
                    }),
                );
            }
            print(&serde_json::Value::Object(out))
        }
        Cmd::Simulate { config, scenario, svg } => {
            let (_, cfg) = project.config(&config)?;
            let names: Vec<String> = match scenario {
                Some(s) => vec![s],
                None => cfg.scenarios.iter().map(|s| s.name.clone()).collect(),
            };
            let mut out = Vec::new();
            for name in names {
                let (meta, tr) = p.trajectory(&config, &name)?;
                if svg {
                    write_svg(p, &config, &name, &tr)?;
                }
                out.push(json!({ "scenario": name, "csv": meta.payload.csv, "samples": meta.payload.samples }));
            }
            print(&json!(out))
        }
        Cmd::Report { config, .. } => {
            let config = config.expect("clap requires --config without --csv");
            let r = p.report(&config)?.payload;
            let rows: Vec<&ScenarioReport> = r.scenarios.iter().flat_map(|s| &s.groups).collect();
            print_table(&rows);
            print(&serde_json::to_value(&r)?)
        }
        Cmd::Pipeline { configs, svg } => {
            let ids: Vec<String> = if configs.is_empty() {
                project.configs.keys().cloned().collect()
            } else {
                configs
            };
            let mut out = serde_json::Map::new();
            for id in ids {
                info!("config {id}");
                let r = p.run_config(&id)?;
                if svg {
                    let (_, cfg) = project.config(&id)?;
                    for s in &cfg.scenarios {
                        let (_, tr) = p.trajectory(&id, &s.name)?;
                        write_svg(p, &id, &s.name, &tr)?;
                    }
                }
                let rows: Vec<&ScenarioReport> = r.scenarios.iter().flat_map(|s| &s.groups).collect();
                eprintln!("config {id}");
                print_table(&rows);
                out.insert(id, serde_json::to_value(&r)?);
            }
            print(&serde_json::Value::Object(out))
        }
    }
}

fn write_svg(p: &Pipeline, config: &str, scenario: &str, tr: &Trajectory) -> anyhow::Result<()> {
    let path = p.config_dir(config).join(format!("trajectory-{}.svg", slug(scenario)));
    svg::plot_trajectory(tr, &path, scenario)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn report_csv(path: &Path, f_bar: f64, gamma: Option<f64>) -> anyhow::Result<()> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let tr = Trajectory::read_csv(file)?;
    let opts = ReportOptions {
        f_bar,
        gamma,
        ..ReportOptions::default()
    };
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let rows = scenario_report(&name, &tr, &opts)?;
    print_table(&rows.iter().collect::<Vec<_>>());
    print(&serde_json::to_value(&rows)?)
}

/// Human-readable summary on stderr; stdout stays machine-readable.
fn print_table(rows: &[&ScenarioReport]) {
    eprintln!(
        "{:<24} {:<6} {:>10} {:>9} {:>10} {:>10} {:>8} {:>10}",
        "scenario", "group", "nadir Hz", "t nadir", "RoCoF", "e peak", "H_ie", "WTG peak"
    );
    for r in rows {
        let h = r.inertia.h_ie.map_or("n/a".to_string(), |h| format!("{h:.3}"));
        let peak = r.wtg_peak_dp_g.iter().cloned().fold(0.0f64, f64::max);
        eprintln!(
            "{:<24} {:<6} {:>10.4} {:>9.3} {:>10.4} {:>10.4} {:>8} {:>10.4}",
            r.scenario, r.group, r.frequency.nadir_hz, r.frequency.nadir_time, r.frequency.max_rocof, r.tracking.peak, h, peak
        );
    }
}
