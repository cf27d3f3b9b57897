use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use wet_core::geometry::{capacity_sweep, write_capacity_csv};
use wet_core::harness::{compare_tdma_sdma, export_report, heatmap_grid, ReportPaths, RunReport, Scenario};
use wet_core::harvester::sample_curve;
use wet_core::precoding::{design, PrecoderInput};
use wet_core::{Error, ScenarioConfig, SolveStatus};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "wet", version, about = "Energy beamforming with radio-stripe power beacons")]
struct Cli {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo trials; overrides the scenario file.
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the PB layout and the PB capacity sweep.
    Layout,
    /// Write the harvester transfer/efficiency curve and the capacity sweep.
    Curves {
        /// Largest RF input power on the curve, watts.
        #[arg(long, default_value_t = 20.0)]
        max_power: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
    /// Run the Monte Carlo scenario and write per-trial reports.
    Run,
    /// Compare TDMA and SDMA for the first K UEs on paired draws.
    Compare {
        /// Number of UEs; defaults to all configured UEs.
        #[arg(long)]
        ues: Option<usize>,
    },
    /// Design the precoder for one trial and map the field power in the room.
    Heatmap {
        /// Grid spacing in meters.
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
        /// Trial whose channel draw is used.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
}

fn load_config(cli: &Cli) -> wet_core::Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(label: &str, rep: &RunReport) {
    let s = rep.summary();
    println!(
        "{label}: method={} schedule={} trials={} feasible={} mean_power={:.6e} W ({:.3} dBW) mean_harvested={:.6} J",
        s.method, s.schedule, s.trials, s.feasible, s.mean_power_w, s.mean_power_dbw, s.mean_harvested_j
    );
}

fn write_capacity(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let freqs: Vec<f64> = (1..=100).map(f64::from).collect();
    let points = capacity_sweep(cfg.room.side_length, cfg.layout.antennas_per_pb, cfg.layout.spacing, &freqs)?;
    let path = out.join("capacity.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_capacity_csv(&points, std::io::BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: &Cli, cfg: &ScenarioConfig) -> Result<ExitCode> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Layout => {
            let layout = cfg.build_layout()?;
            let path = cli.out.join("layout.csv");
            layout.write_csv(&path)?;
            println!(
                "layout: N={} M={} MN={} min_gap={:.4} m",
                layout.pb_count(),
                layout.antennas_per_pb,
                layout.dim(),
                layout.min_adjacent_gap()
            );
            println!("wrote {}", path.display());
            write_capacity(cfg, &cli.out)?;
        }
        Command::Curves { max_power, points } => {
            if !(*max_power > 0.0) || *points < 2 {
                return Err(Error::Config("curves need max_power > 0 and at least 2 points".into()).into());
            }
            let path = cli.out.join("eh_curve.csv");
            let mut w = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            writeln!(w, "rf_power_w,harvested_w,efficiency")?;
            for (x, g, eta) in sample_curve(&cfg.eh_curve, *max_power, *points) {
                writeln!(w, "{x},{g},{eta}")?;
            }
            let (x, eta) = cfg.eh_curve.peak_efficiency();
            println!("efficiency peak: {:.4} W ({:.2} dBW), eta = {:.4}", x, 10.0 * x.log10(), eta);
            println!("wrote {}", path.display());
            write_capacity(cfg, &cli.out)?;
        }
        Command::Run => {
            let rep = wet_core::harness::run_scenario(cfg)?;
            export_report(&rep, &ReportPaths::in_dir(&cli.out, ""))?;
            print_report("run", &rep);
            if rep.feasible().count() == 0 {
                eprintln!("all trials infeasible");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Compare { ues } => {
            let k = ues.unwrap_or(cfg.ue_count());
            let (sdma, tdma) = compare_tdma_sdma(cfg, k)?;
            export_report(&sdma, &ReportPaths::in_dir(&cli.out, "sdma_"))?;
            export_report(&tdma, &ReportPaths::in_dir(&cli.out, "tdma_"))?;
            print_report("sdma", &sdma);
            print_report("tdma", &tdma);
            if sdma.feasible().count() == 0 && tdma.feasible().count() == 0 {
                eprintln!("all trials infeasible");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Heatmap { resolution, trial } => {
            let sc = Scenario::prepare(cfg)?;
            let (_, est) = sc.draw(*trial)?;
            let Some(deltas) = sc.deltas.iter().copied().collect::<Option<Vec<f64>>>() else {
                eprintln!("requirement above harvester saturation");
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            };
            let input = PrecoderInput {
                channels: &est.per_ue,
                antennas_per_pb: sc.layout.antennas_per_pb,
                deltas: &deltas,
                p_max: cfg.constraints.p_max(),
                emf: sc.emf[0].as_ref(),
            };
            let sol = design(cfg.method, &input, &cfg.solver)?;
            if sol.status() == SolveStatus::Infeasible {
                eprintln!("design infeasible: {}", sol.diagnosis.as_deref().unwrap_or("no detail"));
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
            sol.write_csv(
                &cli.out.join("precoders.csv"),
                &cli.out.join("solution_summary.csv"),
                sc.layout.antennas_per_pb,
            )?;
            let map = heatmap_grid(&sol.precoders, &sc.layout, *resolution)?;
            let path = cli.out.join("heatmap.csv");
            map.write_csv(&path)?;
            println!(
                "heatmap: {}x{}x{} points, {} masked, total power {:.6e} W",
                map.xs.len(),
                map.ys.len(),
                map.zs.len(),
                map.masked.len(),
                sol.total_power
            );
            println!("wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    info!("scenario: {} UEs, {} trials, seed {}", cfg.ue_count(), cfg.trials, cfg.seed);
    match execute(&cli, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
