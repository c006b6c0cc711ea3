use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use gridflex::config::{RawConfig, StudyConfig};
use gridflex::economics::{reinforcement_cost_from_maxima, element_maxima, ReinforcementInputs};
use gridflex::opf::{solve_period, FlexContext, FlexMode};
use gridflex::powerflow::{audit, extract_periods, solve_series, summarize};
use gridflex::profiles::PvScenario;
use gridflex::report::{
    emit_reports, read_audit, read_dispatch, read_report, read_states, write_audit, write_dispatch,
    write_dispatch_summary, write_opf, write_reinforce, write_states,
};
use gridflex::study::{dispatch_stage, injection_frames, run_study, StudyInputs};

#[derive(Parser)]
#[command(name = "gridflex", version, about = "PV flexibility versus grid reinforcement studies on LV networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Study configuration (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set opf.tol=1e-5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct Stage {
    #[command(flatten)]
    common: Common,
    /// Working directory holding the stage files.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Size and dispatch the prosumer batteries for one scenario.
    Dispatch {
        #[command(flatten)]
        stage: Stage,
        /// PV scale factor of the scenario.
        #[arg(long)]
        scale: f64,
        #[arg(long, default_value = "with_storage")]
        mode: FlexMode,
    },
    /// Solve the load flow for every step of `dispatch.csv`.
    Powerflow {
        #[command(flatten)]
        stage: Stage,
    },
    /// Check `states.csv` against the operating limits.
    Audit {
        #[command(flatten)]
        stage: Stage,
    },
    /// Price reinforcement of the elements overloaded in `states.csv`.
    Reinforce {
        #[command(flatten)]
        stage: Stage,
    },
    /// Solve the OPF for every intervention period found in `audit.csv`.
    Flexopf {
        #[command(flatten)]
        stage: Stage,
        #[arg(long, default_value = "with_storage")]
        mode: FlexMode,
    },
    /// Run the full study over the scenario ladder.
    Study {
        #[command(flatten)]
        common: Common,
        /// Comma-separated PV scale factors.
        #[arg(long)]
        scales: Option<String>,
        /// Comma-separated modes: with_storage, no_storage.
        #[arg(long)]
        modes: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise the `report.csv` of a finished study.
    Report {
        /// Output directory of a study run.
        #[arg(long)]
        run: PathBuf,
    },
}

fn raw_config(common: &Common) -> anyhow::Result<RawConfig> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for o in &common.overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override {o:?} is not KEY=VALUE");
        };
        raw.set(k.trim(), v.trim())?;
    }
    Ok(raw)
}

fn stage_inputs(common: &Common) -> anyhow::Result<(StudyConfig, StudyInputs)> {
    let cfg = StudyConfig::from_raw(&raw_config(common)?)?;
    let inputs = StudyInputs::prepare(&cfg)?;
    Ok((cfg, inputs))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Dispatch { stage, scale, mode } => {
            let (cfg, inputs) = stage_inputs(&stage.common)?;
            let scenario = PvScenario::build(scale, &inputs.systems, cfg.module_kw, &cfg.lcoe, &inputs.profiles)?;
            let sols = dispatch_stage(&inputs, &scenario.capacities_kw(), mode, &cfg)?;
            write_dispatch(&stage.dir.join("dispatch.csv"), &sols)?;
            write_dispatch_summary(&stage.dir.join("dispatch_summary.csv"), &sols)?;
            println!(
                "penetration {:.1} %, PV {:.1} kW, battery {:.1} kWh",
                scenario.penetration_pct,
                scenario.total_capacity_kw(),
                sols.iter().map(|s| s.capacity_kwh).sum::<f64>()
            );
        }
        Command::Powerflow { stage } => {
            let (cfg, inputs) = stage_inputs(&stage.common)?;
            let sols = read_dispatch(&stage.dir.join("dispatch.csv"), None, &inputs.network)?;
            let grid: Vec<&[f64]> = sols.iter().map(|s| s.p_grid_kw.as_slice()).collect();
            let frames = injection_frames(&inputs.network, &grid, None)?;
            let states = solve_series(&inputs.model, &frames, &cfg.pf)?;
            write_states(&stage.dir.join("states.csv"), &states, &inputs.network)?;
            println!("solved {} steps", states.len());
        }
        Command::Audit { stage } => {
            let (_, inputs) = stage_inputs(&stage.common)?;
            let states = read_states(&stage.dir.join("states.csv"), &inputs.network)?;
            let records = audit(&states, &inputs.network, &inputs.limits);
            write_audit(&stage.dir.join("audit.csv"), &records)?;
            for c in summarize(&records, inputs.profiles.dt_hours()) {
                println!("{:<13} {:>6} steps {:>8.2} h", c.kind.as_str(), c.steps, c.hours);
            }
        }
        Command::Reinforce { stage } => {
            let (cfg, inputs) = stage_inputs(&stage.common)?;
            let states = read_states(&stage.dir.join("states.csv"), &inputs.network)?;
            let maxima = element_maxima(&states, &inputs.network, &inputs.limits);
            write_reinforce(&stage.dir.join("reinforce.csv"), &maxima)?;
            for &c in &cfg.c_trafo_values {
                let inp = ReinforcementInputs {
                    c_trafo_kchf_per_mva: c,
                    ..cfg.reinforcement
                };
                let cost = reinforcement_cost_from_maxima(&maxima, &inp);
                println!(
                    "c_trafo {c} kCHF/MVA: C_reinf {:.1} CHF/yr (lines {:.0} CHF, transformers {:.0} CHF) replaced [{}]",
                    cost.c_reinf_chf_yr,
                    cost.c_line_chf,
                    cost.c_trafo_chf,
                    cost.replaced.join(", ")
                );
            }
        }
        Command::Flexopf { stage, mode } => {
            let (cfg, inputs) = stage_inputs(&stage.common)?;
            let sols = read_dispatch(
                &stage.dir.join("dispatch.csv"),
                Some(&stage.dir.join("dispatch_summary.csv")),
                &inputs.network,
            )?;
            let records = read_audit(&stage.dir.join("audit.csv"))?;
            let periods = extract_periods(&records, inputs.profiles.horizon(), cfg.padding);
            let ctx = FlexContext::new(&inputs.network, &inputs.model, &inputs.limits, &inputs.profiles, &sols, &cfg.battery)?;
            let mut solved = Vec::new();
            let mut failed = 0;
            for p in &periods {
                match solve_period(&ctx, p, mode, &cfg.opf) {
                    Ok(s) => {
                        println!("period {} [{}..{}]: curtailed {:.3} kWh", p.index, p.start, p.end, s.curtailed_kwh);
                        solved.push(s);
                    }
                    Err(e) => {
                        eprintln!("period {} [{}..{}]: {e}", p.index, p.start, p.end);
                        failed += 1;
                    }
                }
            }
            write_opf(&stage.dir.join("opf.csv"), &solved)?;
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Study {
            common,
            scales,
            modes,
            workers,
            seed,
            out,
        } => {
            let mut raw = raw_config(&common)?;
            if let Some(s) = scales {
                raw.set("scenario.scales", s)?;
            }
            if let Some(m) = modes {
                raw.set("study.modes", m)?;
            }
            if let Some(w) = workers {
                raw.set("study.workers", w.to_string())?;
            }
            if let Some(s) = seed {
                raw.set("profiles.seed", s.to_string())?;
            }
            let mut cfg = StudyConfig::from_raw(&raw)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let run = run_study(&cfg)?;
            emit_reports(&run, &cfg.out_dir).with_context(|| format!("writing reports to {}", cfg.out_dir.display()))?;
            let failures = run.failures();
            println!(
                "{} scenarios, {} with failures; reports in {}",
                run.scenarios.len(),
                failures,
                cfg.out_dir.display()
            );
            if failures > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { run } => print_report(&run)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(dir: &Path) -> anyhow::Result<()> {
    let rows = read_report(&dir.join("report.csv"))?;
    println!(
        "{:>8} {:>8} {:>13} {:>9} {:>12} {:>12} {:>10} {:>8} {:>10}",
        "scenario", "pen_%", "mode", "c_trafo", "c_reinf", "d_opex", "curt_MWh", "curt_%", "value"
    );
    for r in &rows {
        println!(
            "{:>8} {:>8.1} {:>13} {:>9} {:>12.1} {:>12.1} {:>10.2} {:>8.3} {:>10.1}",
            r.scenario,
            r.penetration_pct,
            r.mode.as_str(),
            r.c_trafo_kchf_mva,
            r.c_reinf_chf_yr,
            r.delta_opex_chf_yr,
            r.curtailed_mwh,
            r.curtailed_pct,
            r.flex_value_chf_kw
        );
    }
    let mut keys: Vec<(FlexMode, u64)> = rows.iter().map(|r| (r.mode, r.c_trafo_kchf_mva.to_bits())).collect();
    keys.sort();
    keys.dedup();
    for (mode, bits) in keys {
        let mut pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|r| r.mode == mode && r.c_trafo_kchf_mva.to_bits() == bits)
            .map(|r| (r.penetration_pct, r.c_reinf_chf_yr, r.delta_opex_chf_yr))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        match gridflex::economics::break_even(&pts) {
            Some(p) => println!("{mode} at {} kCHF/MVA: break-even {p:.1} %", f64::from_bits(bits)),
            None => println!("{mode} at {} kCHF/MVA: flexibility cheaper over the whole ladder", f64::from_bits(bits)),
        }
    }
    Ok(())
}
