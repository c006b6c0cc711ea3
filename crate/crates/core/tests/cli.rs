use std::path::Path;
use std::process::Command;

use gridflex::config::{RawConfig, StudyConfig};
use gridflex::profiles::PvScenario;
use gridflex::opf::FlexMode;
use gridflex::powerflow::solve_series;
use gridflex::report::{read_dispatch, read_report, write_states};
use gridflex::study::{dispatch_stage, injection_frames, StudyInputs};

fn gridflex(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gridflex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn one_week() -> StudyConfig {
    let mut raw = RawConfig::default();
    raw.set("profiles.weeks", "28").unwrap();
    StudyConfig::from_raw(&raw).unwrap()
}

#[test]
fn powerflow_stage_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = gridflex(&["dispatch", "--set", "profiles.weeks=28", "--scale", "0.45", "--dir", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = gridflex(&["powerflow", "--set", "profiles.weeks=28", "--dir", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = one_week();
    let inputs = StudyInputs::prepare(&cfg).unwrap();
    let scenario = PvScenario::build(0.45, &inputs.systems, cfg.module_kw, &cfg.lcoe, &inputs.profiles).unwrap();
    let direct = dispatch_stage(&inputs, &scenario.capacities_kw(), FlexMode::WithStorage, &cfg).unwrap();
    let solve = |sols: &[gridflex::dispatch::DispatchSolution]| {
        let grid: Vec<&[f64]> = sols.iter().map(|s| s.p_grid_kw.as_slice()).collect();
        let frames = injection_frames(&inputs.network, &grid, None).unwrap();
        solve_series(&inputs.model, &frames, &cfg.pf).unwrap()
    };
    let in_process = solve(&direct);
    let reloaded = solve(&read_dispatch(&dir.path().join("dispatch.csv"), None, &inputs.network).unwrap());

    assert_eq!(in_process.len(), reloaded.len());
    let mut worst: f64 = 0.0;
    for (a, b) in in_process.iter().zip(&reloaded) {
        for (x, y) in a.vm.iter().chain(&a.va).zip(b.vm.iter().chain(&b.va)) {
            worst = worst.max((x - y).abs());
        }
        for (x, y) in a.current_ka.iter().zip(&b.current_ka) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst <= 1e-9, "round trip through dispatch.csv moved the load flow by {worst:e}");

    // the subcommand writes exactly what the reloaded pipeline produces
    let expect = dir.path().join("expected_states.csv");
    write_states(&expect, &reloaded, &inputs.network).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("states.csv")).unwrap(),
        std::fs::read(&expect).unwrap()
    );
}

#[test]
fn study_subcommand_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let o = out_dir.to_str().unwrap();
    let out = gridflex(&[
        "study", "--set", "profiles.weeks=28", "--scales", "0.07", "--modes", "with_storage,no_storage", "--workers", "2",
        "--seed", "3", "--out", o,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.csv", "violations.csv", "interventions.csv", "scenarios.csv", "breakeven.csv"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let rows = read_report(&out_dir.join("report.csv")).unwrap();
    // one scenario, two modes, two transformer costs
    assert_eq!(rows.len(), 4);

    let out = gridflex(&["report", "--run", o]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("with_storage") && text.contains("no_storage"), "{text}");
}

#[test]
fn fatal_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "scenario.scales = 1.5\n").unwrap();
    let out = gridflex(&["study", "--config", conf.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(&conf, "nonsense.key = 1\n").unwrap();
    let out = gridflex(&["study", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense.key"));

    let out = gridflex(&["powerflow", "--dir", Path::new("/nonexistent/dir").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundled_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/study.conf");
    let cfg = StudyConfig::load(&path).unwrap();
    let mut raw = RawConfig::default();
    raw.set("profiles.weeks", "2,15,28,41").unwrap();
    let mut expect = StudyConfig::from_raw(&raw).unwrap();
    // relative paths resolve against the config file's directory
    expect.out_dir = path.parent().unwrap().join("out");
    assert_eq!(cfg, expect);
}
