use std::process::{Command, Output};

fn metalag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metalag")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const FAST: &[&str] = &[
    "--episodes",
    "4",
    "--set",
    "episode_len=20",
    "--set",
    "window=2",
    "--set",
    "agent.warmup=20",
    "--set",
    "agent.batch_size=8",
    "--set",
    "agent.actor_hidden=4",
    "--set",
    "agent.critic_hidden=4",
];

#[test]
fn train_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["train", "--agent", "rc", "--seeds", "1,2", "--output", out];
    args.extend_from_slice(FAST);
    let o = metalag(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("agent,env,seed,"));
    assert_eq!(text.lines().count(), 3);
    assert!(dir.path().join("summary.csv").exists());
    assert!(dir.path().join("rc_s0.3_b0.1_seed1.telemetry.csv").exists());
}

#[test]
fn config_file_and_print_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "agent = metal\nmetal.lr_meta = 0.5 # comment\n").unwrap();
    let o = metalag(&["train", "--config", path.to_str().unwrap(), "--set", "agent.gamma=0.9", "--print-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("agent = metal"));
    assert!(text.contains("metal.lr_meta = 0.5"));
    assert!(text.contains("agent.gamma = 0.9"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(metalag(&["train", "--set", "agent.lr_critc=0.1"]).status.code(), Some(1));
    assert_eq!(metalag(&["train", "--set", "novalue"]).status.code(), Some(1));
    assert_eq!(metalag(&["train", "--agent", "ppo"]).status.code(), Some(1));
    assert_eq!(metalag(&["bogus"]).status.code(), Some(1));
    assert_eq!(metalag(&["gradcheck", "--suite", "metal", "--instances", "0"]).status.code(), Some(1));
    assert_eq!(metalag(&["train", "--config", "/nonexistent/run.cfg"]).status.code(), Some(1));
}

#[test]
fn gradcheck_pass_and_fail() {
    let o = metalag(&["gradcheck", "--suite", "approx", "--instances", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS approx"));
    let o = metalag(&["gradcheck", "--suite", "metal", "--instances", "5", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).starts_with("FAIL metal"));
}

#[test]
fn plotdata_emits_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["train", "--agent", "metal", "--seeds", "0", "--output", out];
    args.extend_from_slice(FAST);
    assert_eq!(metalag(&args).status.code(), Some(0));
    let telemetry = dir.path().join("metal_s0.3_b0.1_seed0.telemetry.csv");
    let o = metalag(&["plotdata", telemetry.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "episode,return,J_C_running,lambda,alpha_lambda,scaled_lr");
    assert_eq!(text.lines().count(), 5);
    let plots = dir.path().join("plots");
    let o = metalag(&["plotdata", telemetry.to_str().unwrap(), "--output", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(plots.join("metal_s0.3_b0.1_seed0.plot.csv").exists());
}

#[test]
fn runtime_errors_exit_three() {
    assert_eq!(metalag(&["plotdata", "/nonexistent/x.telemetry.csv"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,telemetry\n").unwrap();
    assert_eq!(metalag(&["plotdata", bad.to_str().unwrap()]).status.code(), Some(3));
}
