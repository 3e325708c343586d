use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eoslab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn eoslab(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eoslab"));
    cmd.args(args).env_remove("EOSLAB_SEED");
    if let Some(s) = env_seed {
        cmd.env("EOSLAB_SEED", s);
    }
    cmd.output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const EMPIRICAL: &str = "[neuron_empirical]\nn = 200\neta = 2.2\nv0 = 0.1\nwy0 = 0.1\nsteps = 200\nseed = 11\n";

#[test]
fn run_writes_all_outputs() {
    let dir = scratch("outputs");
    let cfg = dir.join("osc.toml");
    std::fs::write(&cfg, "[oscillate1d]\neta = 1.05\nx0 = 0.5\nsteps = 500\n").unwrap();
    let out = dir.join("out");
    let o = eoslab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--strict"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("step,x,loss,sharpness\n"));
    assert_eq!(csv.lines().count(), 502);
    let s = summary(&out);
    assert_eq!(s["experiment"], "oscillate1d");
    assert_eq!(s["all_passed"], true);
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.echo.json")).unwrap()).unwrap();
    assert_eq!(echo, s["config"]);
    assert_eq!(echo["params"]["eta"], 1.05);
}

#[test]
fn seed_precedence_cli_env_config() {
    let dir = scratch("seed");
    let cfg = dir.join("emp.toml");
    std::fs::write(&cfg, EMPIRICAL).unwrap();
    let c = cfg.to_str().unwrap();
    let run = |name: &str, extra: &[&str], env: Option<&str>| {
        let out = dir.join(name);
        let mut args = vec!["run", c, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(eoslab(&args, env).status.success());
        let s = summary(&out);
        (s["seed"].as_u64().unwrap(), s["seed_source"].as_str().unwrap().to_string())
    };
    assert_eq!(run("config", &[], None), (11, "config".into()));
    assert_eq!(run("env", &[], Some("5")), (5, "env".into()));
    assert_eq!(run("cli", &["--seed", "9"], Some("5")), (9, "cli".into()));

    let a = std::fs::read(dir.join("env/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.join("config/trajectory.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn strict_failure_and_errors_have_distinct_codes() {
    let dir = scratch("codes");
    let diverge = dir.join("diverge.toml");
    std::fs::write(&diverge, "[oscillate1d]\neta = 1.05\nx0 = 40\n").unwrap();
    let out = dir.join("out");
    let args = ["run", diverge.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(eoslab(&args, None).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(eoslab(&strict, None).status.code(), Some(1));
    assert!(summary(&out)["divergence"].is_string());

    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "[balance2d]\nk = 1.6\nx0 = 1\ny0 = 1.2\n").unwrap();
    let o = eoslab(&["run", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2, key `k`"));

    let o = eoslab(&["run", diverge.to_str().unwrap(), "--out", out.to_str().unwrap()], Some("abc"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn batch_runs_every_config() {
    let dir = scratch("batch");
    let configs = dir.join("configs");
    std::fs::create_dir_all(&configs).unwrap();
    std::fs::write(configs.join("a.toml"), EMPIRICAL).unwrap();
    std::fs::write(configs.join("b.json"), r#"{"experiment": "orbit_predict", "eta": 1.1}"#).unwrap();
    std::fs::write(configs.join("c.toml"), "[condition_check]\nfunction = \"sine\"\n").unwrap();
    std::fs::write(configs.join("notes.txt"), "ignored").unwrap();
    let out = dir.join("out");
    let o = eoslab(
        &["batch", configs.to_str().unwrap(), "--jobs", "3", "--out", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for stem in ["a", "b", "c"] {
        assert!(out.join(stem).join("summary.json").exists(), "{stem}");
    }
    assert!(!out.join("notes").exists());

    let serial = dir.join("serial");
    eoslab(&["batch", configs.to_str().unwrap(), "--jobs", "1", "--out", serial.to_str().unwrap()], None);
    for stem in ["a", "b", "c"] {
        assert_eq!(
            std::fs::read(out.join(stem).join("trajectory.csv")).unwrap(),
            std::fs::read(serial.join(stem).join("trajectory.csv")).unwrap()
        );
    }
}

#[test]
fn orbit_and_check_commands() {
    let o = eoslab(&["orbit", "--mu", "1", "--eta", "1.05"], None);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["x_low"].as_f64().unwrap() - 0.872871561).abs() < 1e-9);
    assert_eq!(v["stability"], "ConvergentMonotone");

    let o = eoslab(&["orbit", "--mu", "1", "--eta", "0.5"], None);
    assert_eq!(o.status.code(), Some(2));

    let o = eoslab(&["check-1d", "--fn", "quartic", "--mu", "2"], None);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["third_order_margin"].as_f64().unwrap() - 192.0).abs() < 1e-9);
    assert_eq!(v["classification"], "third_order");
}
