use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const ARENA: &str = env!("CARGO_BIN_EXE_auction-arena");
const ECHO: &str = env!("CARGO_BIN_EXE_echo-agent");

const TINY: &str = r#"
[episode]
opportunities_per_episode = 960
seed = 7
"#;

fn arena(args: &[&str]) -> Output {
    Command::new(ARENA).args(args).env("AUCTION_ARENA_LOG", "error").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("arena.toml");
    fs::write(&path, format!("{extra}\n{TINY}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn hash(path: &Path) -> String {
    let digest = Sha256::digest(fs::read(path).unwrap());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = arena(&["generate", "--seed", "7", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("seed 7"));
    }
    assert_eq!(hash(&a.join("manifest.jsonl")), hash(&b.join("manifest.jsonl")));
    let c = dir.path().join("c");
    assert_eq!(code(&arena(&["generate", "--seed", "8", "--out", s(&c)])), 0);
    assert_ne!(hash(&a.join("manifest.jsonl")), hash(&c.join("manifest.jsonl")));
}

#[test]
fn zero_opportunities_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("zero.toml");
    fs::write(&cfg, "[episode]\nopportunities_per_episode = 0\n").unwrap();
    let o = arena(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("opportunities_per_episode"), "{}", stderr(&o));
}

#[test]
fn twenty_one_periods_give_twenty_one_shards() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "periods = 21");
    let out = dir.path().join("data");
    let o = arena(&["generate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 21);
    assert!(out.join("period_20.tsv").exists());
}

#[test]
fn all_abid_run_reports_scores() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    let o = arena(&["run", "--config", &cfg, "--agents", "abid:48", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results = fs::read_to_string(out.join("results.tsv")).unwrap();
    assert_eq!(results.lines().count(), 49);
    assert!(results.lines().skip(1).all(|l| l.split('\t').nth(2) == Some("Abid")));
}

#[test]
fn unknown_strategy_exits_2_naming_it() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = arena(&["run", "--config", &cfg, "--agents", "abid:40,greedy:8", "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("greedy"), "{}", stderr(&o));
}

fn agents_file(dir: &Path, argv: &[&str]) -> String {
    let command = argv.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(", ");
    let path = dir.join("agents.toml");
    fs::write(
        &path,
        format!(
            "[[agents]]\nstrategy = \"external\"\ncommand = [{command}]\ntimeout_ms = 2000\n\n\
             [[agents]]\nstrategy = \"abid\"\ncount = 47\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn echo_agent_run_logs_its_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let agents = agents_file(dir.path(), &[ECHO, "--alpha", "200"]);
    let out = dir.path().join("run");
    let o = arena(&["run", "--config", &cfg, "--agents", &agents, "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results = fs::read_to_string(out.join("results.tsv")).unwrap();
    let row0: Vec<&str> = results.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row0[2], "External");
    assert_eq!(row0[13], "0", "agent faulted");
    let log = fs::read_to_string(out.join("period_0.tsv")).unwrap();
    assert!(log.lines().skip(1).any(|l| l.split('\t').nth(1) == Some("0")));
}

#[test]
fn agent_that_never_greets_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let agents = agents_file(dir.path(), &[ECHO, "--no-hello"]);
    let o = arena(&["run", "--config", &cfg, "--agents", &agents, "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let agents = agents_file(dir.path(), &["/nonexistent/agent"]);
    let o = arena(&["run", "--config", &cfg, "--agents", &agents, "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn hanging_agent_faults_but_episode_completes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let path = dir.path().join("agents.toml");
    fs::write(
        &path,
        format!(
            "[[agents]]\nstrategy = \"external\"\ncommand = [{ECHO:?}, \"--hang\"]\ntimeout_ms = 200\n\n\
             [[agents]]\nstrategy = \"abid\"\ncount = 47\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = arena(&["run", "--config", &cfg, "--agents", s(&path), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let results = fs::read_to_string(out.join("results.tsv")).unwrap();
    let row0: Vec<&str> = results.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row0[13], "1");
}

#[test]
fn summarize_outputs_and_errors() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&arena(&["summarize", s(&empty)])), 2);

    let header_only = dir.path().join("header");
    fs::create_dir(&header_only).unwrap();
    let cfg = write_config(dir.path(), "");
    let run = dir.path().join("run");
    assert_eq!(code(&arena(&["run", "--config", &cfg, "--agents", "abid:48", "--out", s(&run)])), 0);
    let log = fs::read_to_string(run.join("period_0.tsv")).unwrap();
    let header = log.lines().next().unwrap();
    fs::write(header_only.join("period_0.tsv"), format!("{header}\n")).unwrap();
    let o = arena(&["summarize", s(&header_only)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("degenerate"));

    let o = arena(&["summarize", s(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(run.join("summary_category_step.tsv")).unwrap();
    assert!(table.lines().count() > 1);

    let corrupt = dir.path().join("corrupt");
    fs::create_dir(&corrupt).unwrap();
    let mut lines: Vec<String> = log.lines().take(10).map(String::from).collect();
    let mut fields: Vec<&str> = lines[4].split('\t').collect();
    fields[8] = "not-a-number";
    lines[4] = fields.join("\t");
    fs::write(corrupt.join("period_0.tsv"), lines.join("\n") + "\n").unwrap();
    let o = arena(&["summarize", s(&corrupt)]);
    assert_eq!(code(&o), 2);
    // Rows count file lines, header included.
    assert!(stderr(&o).contains("row 5, column pValue"), "{}", stderr(&o));
}

#[test]
fn evaluate_report_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = arena(&["evaluate", "--config", &cfg, "--rounds", "2", "--seed", "3", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let text = String::from_utf8_lossy(&o.stdout).into_owned();
        for label in ["Abid", "PID", "OnlineLP"] {
            assert!(text.contains(label), "{text}");
        }
    }
    assert_eq!(hash(&a.join("report.tsv")), hash(&b.join("report.tsv")));
    let header = fs::read_to_string(a.join("report.tsv")).unwrap();
    assert!(header.starts_with("algorithm\tagents\tmean_score\tmean_normalized\tstd_normalized"));
}

#[test]
fn homogeneous_abid_field_normalizes_to_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[profiles]\nbudget_range = [6000.0, 6000.0]\ncpa_range = [30.0, 30.0]\n\n\
         [[agents]]\nstrategy = \"abid\"\ncount = 48\nparams = { spread = 0.0 }\n",
    );
    let out = dir.path().join("ev");
    let o = arena(&["evaluate", "--config", &cfg, "--rounds", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.tsv")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "Abid");
    assert!((row[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn io_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = arena(&["generate", "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = arena(&["generate", "--config", s(&dir.path().join("missing.toml")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
}

#[test]
fn stdio_bound_agent_speaks_on_stdout() {
    use std::io::{BufRead, BufReader, Write};
    use std::process::Stdio;
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[[agents]]\nstrategy = \"abid\"\ncount = 48\n");
    let mut child = Command::new(ARENA)
        .args(["run", "--config", &cfg, "--stdio-agent", "5", "--out", s(&dir.path().join("r"))])
        .env("AUCTION_ARENA_LOG", "error")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let hello = lines.next().unwrap().unwrap();
    assert!(hello.contains("\"type\":\"hello\"") && hello.contains("\"agent_index\":5"), "{hello}");
    writeln!(stdin, "{{\"type\":\"hello\",\"protocol_version\":1}}").unwrap();
    let mut requests = 0;
    for line in lines {
        let line = line.unwrap();
        if line.contains("\"type\":\"episode_end\"") {
            break;
        }
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["type"], "bid_request");
        writeln!(stdin, "{{\"type\":\"bid_response\",\"seq\":{},\"alpha\":50.0}}", v["seq"]).unwrap();
        requests += 1;
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
    assert!((1..=48).contains(&requests), "{requests}");
}
