use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scaffold_opt::config::RunConfig;
use scaffold_opt::experiments::{self, output_dir};
use scaffold_opt::Result;

/// Scaffold density simulation and optimization.
#[derive(Parser)]
#[command(name = "scaffold-opt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward simulation at the initial density.
    Simulate(Args),
    /// Gradient flow on the density, then a simulation at the optimum.
    Optimize(Args),
    /// Adjoint gradient against central finite differences.
    GradCheck(Args),
    /// Optimize without and with the fixture and compare near-fixture fields.
    StressShielding(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var("SCAFFOLD_OPT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("SCAFFOLD_OPT_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> Result<u8> {
    let (Command::Simulate(args)
    | Command::Optimize(args)
    | Command::GradCheck(args)
    | Command::StressShielding(args)) = &command;
    let cfg = RunConfig::load(&args.config)?;
    let out = output_dir(&cfg, args.out.clone());
    match command {
        Command::Simulate(_) => {
            let sim = experiments::simulate(&cfg, &out)?;
            let last = sim.energy.last().expect("at least one state");
            println!(
                "simulated {} steps: E(T) = {:.6e} N mm, bone volume {:.6e} mm^3 -> {}",
                sim.energy.len() - 1,
                last.elastic_energy_nmm,
                last.bone_volume_mm3,
                out.display()
            );
            Ok(0)
        }
        Command::Optimize(_) => {
            let opt = experiments::optimize(&cfg, &out)?;
            let first = opt.state.history[0].objective;
            println!(
                "{:?} after {} iterations: objective {:.6e} -> {:.6e} -> {}",
                opt.state.status,
                opt.state.history.len() - 1,
                first,
                opt.state.objective,
                out.display()
            );
            Ok(0)
        }
        Command::GradCheck(_) => {
            let check = experiments::grad_check(&cfg, &out)?;
            println!("metric,value");
            println!("max_relative_discrepancy,{:e}", check.max_discrepancy);
            println!(
                "max_directional_discrepancy,{:e}",
                check.max_directional_discrepancy
            );
            println!("passed,{}", check.passed);
            Ok(if check.passed { 0 } else { 1 })
        }
        Command::StressShielding(_) => {
            let s = experiments::stress_shielding(&cfg, &out)?;
            println!("arch,region,mean_rho,mean_stimulus");
            for r in &s.rows {
                println!(
                    "{},{},{:.6e},{:.6e}",
                    r.arch, r.region, r.mean_rho, r.mean_stimulus
                );
            }
            println!("low_density_near_fixture,{}", s.low_density_near_fixture());
            println!("mitigates_shielding,{}", s.mitigates_shielding());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
