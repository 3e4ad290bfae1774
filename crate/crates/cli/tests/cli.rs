use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bruijn_regret::ExpertPanel;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bruijn-regret"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn write_panel(dir: &Path, name: &str, panel: &ExpertPanel) -> String {
    fs::write(dir.join(name), panel.to_text()).unwrap();
    name.to_string()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("valid json")
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_panel(dir.path(), "good.txt", &ExpertPanel::constant(1, &[1.0, -1.0]).unwrap());
    let agree = write_panel(dir.path(), "agree.txt", &ExpertPanel::constant(1, &[0.5, 0.5]).unwrap());
    let dup = write_panel(dir.path(), "dup.txt", &ExpertPanel::constant(2, &[0.3, 0.3]).unwrap());

    let out = run(dir.path(), &["validate", &good]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("E1           pass") && text.contains("E2           pass"), "{text}");
    assert!(text.contains("vartheta     1"));

    assert_eq!(run(dir.path(), &["validate", &agree]).status.code(), Some(1));
    let out = run(dir.path(), &["validate", &dup]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("E2           fail"));

    fs::write(dir.path().join("bad.txt"), "2 1 0\n- 1 -1\n+ 1\n").unwrap();
    let out = run(dir.path(), &["validate", "bad.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 3"));
}

#[test]
fn unknown_config_key_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "[panel]\ncolour = blue\n").unwrap();
    assert_eq!(run(dir.path(), &["--config", "c.cfg", "value"]).status.code(), Some(2));
}

#[test]
fn simulated_exact_play_matches_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "[value]\nhorizon = 10\n[simulate]\nhorizon = 10\n").unwrap();
    let out = run(dir.path(), &["--config", "c.cfg", "value"]);
    assert!(out.status.success());
    let value = json(&String::from_utf8(out.stdout).unwrap())["value"].as_f64().unwrap();

    assert!(run(dir.path(), &["--config", "c.cfg", "simulate"]).status.success());
    let summary = json(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap());
    let payoff = summary["mean_final_payoff"].as_f64().unwrap();
    assert!((payoff - value).abs() < 1e-12, "{payoff} vs {value}");
    assert!((summary["game_value"].as_f64().unwrap() - value).abs() < 1e-12);
}

#[test]
fn random_market_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 7\n[simulate]\nhorizon = 12\ninvestor = constant:0.25\nmarket = random\nruns = 50\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    assert!(run(dir.path(), &["--config", "c.cfg", "--out", "a", "simulate"]).status.success());
    assert!(run(dir.path(), &["--config", "c.cfg", "--out", "b", "simulate"]).status.success());
    let files: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("trajectory_"))
        .collect();
    assert_eq!(files.len(), 50);
    for name in files.iter().chain(std::iter::once(&"summary.json".to_string())) {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
    let first = fs::read_to_string(dir.path().join("a/trajectory_constant_random_7.csv")).unwrap();
    assert!(first.starts_with("day,state,f,b,x_1,x_2,running_payoff\n"));
    assert!(first.lines().last().unwrap().starts_with("# version="));
}

#[test]
fn converge_linear_payoff_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[panel]\nfamily = random\nn = 3\nd = 2\nseed = 4\n[payoff]\nspec = linear:0.2,0.3,0.5\n\
               [sweep]\nhorizons = 16, 32\nprobes = @ 0; 0.1,-0.2,0.3 @ 0.25\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let out = run(dir.path(), &["--config", "c.cfg", "converge"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/converge.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.filter(|l| !l.starts_with('#')).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[col("error")], "");
        for c in ["err_plus", "err_minus"] {
            assert!(r[col(c)].parse::<f64>().unwrap() < 1e-9);
        }
    }
    assert!(csv.contains("# slope="));
    assert!(!header.contains(&"wall_time"));
}

#[test]
fn converge_static_max_errors_decrease() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "[sweep]\nhorizons = 64, 128, 256, 512\n").unwrap();
    assert!(run(dir.path(), &["--config", "c.cfg", "converge"]).status.success());
    let summary = json(&fs::read_to_string(dir.path().join("out/converge_summary.json")).unwrap());
    let errs: Vec<f64> = summary["max_errors"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(summary["slope"].as_f64().unwrap() <= -1.0 / 6.0 + 0.05);
}

#[test]
fn sweep_errors_become_records() {
    let dir = tempfile::tempdir().unwrap();
    // A probe with the wrong dimension fails alone.
    fs::write(dir.path().join("c.cfg"), "[sweep]\nhorizons = 8\nprobes = @ 0; 1,2,3 @ 0\n").unwrap();
    assert!(run(dir.path(), &["--config", "c.cfg", "converge"]).status.success());
    let csv = fs::read_to_string(dir.path().join("out/converge.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(','));
    assert!(rows[1].contains("coordinates"));
}

#[test]
fn local_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[panel]\nfamily = random\nn = 2\nd = 2\nseed = 1\n[local]\nk_max = 6\neps = 1e-3\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    assert!(run(dir.path(), &["--config", "c.cfg", "local"]).status.success());
    let csv = fs::read_to_string(dir.path().join("out/local.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            ["k", "delta_min", "delta_max", "h_mean_over_k", "h_limit"].iter().map(|c| f[col(c)].parse().unwrap()).collect()
        })
        .collect();
    assert_eq!(rows.len(), 6);
    // Deltas settle once k exceeds the window.
    let settled: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= 3.0).collect();
    for r in &settled {
        assert!((r[1] - settled[0][1]).abs() < 1e-12 && (r[2] - settled[0][2]).abs() < 1e-12);
    }
    assert!(csv.contains("search") && csv.contains("indifference"));

    fs::write(dir.path().join("z.cfg"), "[local]\nk_max = 3\nhessian = 0,0;0,0\n").unwrap();
    assert!(run(dir.path(), &["--config", "z.cfg", "--out", "z", "local"]).status.success());
    let csv = fs::read_to_string(dir.path().join("z/local.csv")).unwrap();
    for line in csv.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split(',').collect();
        for v in &f[2..6] {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{line}");
        }
    }
}

#[test]
fn pde_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.cfg"), "seed = 3\n[sweep]\nprobes = @ 0; 0.3,-0.1 @ 0.5; @ 1\n").unwrap();
    for out in ["a", "b"] {
        assert!(run(dir.path(), &["--config", "c.cfg", "--out", out, "pde"]).status.success());
    }
    let a = fs::read_to_string(dir.path().join("a/pde.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b/pde.csv")).unwrap());
    assert!(a.lines().nth(1).unwrap().starts_with("0,0,0,0.797884560802865"));
    assert!(a.lines().last().unwrap().contains("seed=3"));
}

#[test]
fn block_investor_never_clamps_on_static_panel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[simulate]\nhorizon = 1024\ninvestor = block\nmarket = greedy\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    assert!(run(dir.path(), &["--config", "c.cfg", "simulate"]).status.success());
    let summary = json(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap());
    assert_eq!(summary["clamps_total"].as_u64(), Some(0));
    let scaled = summary["mean_final_payoff"].as_f64().unwrap() / 32.0;
    assert!((scaled - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.01, "{scaled}");
}
