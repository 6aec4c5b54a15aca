use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mapguide::belief::Policy;
use mapguide::dialogue::{AgentKind, Templates};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::Cost;
use mapguide::session::{write_log, AgentProfile, AgentSettings, LogEvent};
use mapguide::simulation::{simulate_episode, Report, UserModel};

fn mapguide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapguide")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares with a golden file, rewriting it when MAPGUIDE_BLESS is set.
fn assert_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("MAPGUIDE_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted; rerun with MAPGUIDE_BLESS=1 if intended");
}

#[test]
fn genmap_matches_its_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.toml");
    let o = mapguide(&["genmap", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_golden("genmap-seed7.toml", &text);
    assert_eq!(stdout(&mapguide(&["genmap", "--seed", "7"])), text);
    assert_eq!(mapguide(&["genmap", "--seed", "7", "--landmarks", "3"]).status.code(), Some(2));
}

#[test]
fn plan_without_bikes_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let mut map = bundled::line();
    map.bikes.clear();
    map.reports.clear();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, map.to_toml()).unwrap();
    let o = mapguide(&["plan", "--map", path.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["steps"].as_array().unwrap().len(), 0);
    assert_eq!(v["inexplicability"], 0);
}

#[test]
fn plan_reports_ambiguity_and_detours() {
    let o = mapguide(&["plan", "--map", "fig3", "--agent", "responsive"]);
    let text = stdout(&o);
    assert!(text.contains("move(B,D)        ambiguous with move(B,E), move(B,G)"), "{text}");
    assert!(text.contains("U 1"));
    let o = mapguide(&["plan", "--map", "fig3", "--agent", "predictive", "--delta", "1"]);
    let text = stdout(&o);
    assert!(text.contains("U 0"));
    assert!(text.contains("inefficient steps 1-3"), "{text}");
}

#[test]
fn plan_writes_policies_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig1.ndjson");
    let o = mapguide(&["plan", "--map", "fig1", "--agent", "responsive", "--budget", "1", "--policy-out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let header = Policy::header(&text).unwrap();
    assert_eq!((header.map.as_str(), header.agent.as_str(), header.budget), ("fig1", "responsive", 1));
    assert!(Policy::from_ndjson(&TaskModel::compile(&bundled::fig1()), &text).is_ok());

    let audit = stdout(&mapguide(&["plan", "--map", "fig3", "--audit"]));
    assert!(audit.contains("move(B,D)"), "{audit}");
    let dump = stdout(&mapguide(&["plan", "--map", "fig3", "--dump-problem"]));
    assert!(dump.contains("pickup(bike1,D)"), "{dump}");

    std::fs::write(dir.path().join("broken.ndjson"), "not a policy\n").unwrap();
    let o = mapguide(&["serve", "--port", "0", "--policy-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_validates_template_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.txt");
    let text = Templates::default().to_text().replace("Go to the {type}.", "Walk to the {type}.");
    std::fs::write(&path, text).unwrap();
    let o = mapguide(&["simulate", "--map", "line", "--agent", "responsive", "--n", "2", "--templates", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(&path, "instruction.move = Go to the {nowhere}.\n").unwrap();
    let o = mapguide(&["simulate", "--map", "line", "--n", "2", "--templates", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_report_matches_its_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = mapguide(&["simulate", "--map", "fig3", "--n", "50", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_golden("report-fig3.csv", &text);
    let report = Report::from_csv(&text).unwrap();
    assert_eq!(report.columns, ["responsive", "predictive d=1", "predictive d=2", "predictive d=3"]);
    assert_eq!(report.n, 50);
    let text = stdout(&mapguide(&["simulate", "--map", "fig3", "--n", "50", "--seed", "1", "--format", "text"]));
    assert!(text.lines().nth(1).unwrap().trim_start().starts_with("responsive"));
}

#[test]
fn failed_runs_leave_outputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    std::fs::write(&out, "previous").unwrap();
    let o = mapguide(&["simulate", "--map", "atlantis", "--n", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "previous");
    let missing = dir.path().join("no/such/dir/r.csv");
    let o = mapguide(&["simulate", "--map", "fig1", "--n", "5", "--out", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn exit_codes_distinguish_usage_and_validation() {
    assert_eq!(mapguide(&[]).status.code(), Some(1));
    assert_eq!(mapguide(&["simulate", "--map", "fig1", "--gamma", "2"]).status.code(), Some(1));
    assert_eq!(mapguide(&["simulate", "--map", "fig1", "--delta", "-1"]).status.code(), Some(1));
    assert_eq!(mapguide(&["replay", "--log", "/nonexistent.ndjson"]).status.code(), Some(2));
    assert_eq!(mapguide(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulated_episodes_replay_through_the_cli() {
    let task = Arc::new(TaskModel::compile(&bundled::fig1()));
    let settings = AgentSettings::new(AgentKind::Predictive { delta: Cost::units(1) });
    let profile = Arc::new(AgentProfile::new(task, settings, Arc::new(Templates::default())).unwrap());
    let ep = simulate_episode(&profile, &UserModel::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ep.ndjson");
    std::fs::write(&path, write_log(&ep.log)).unwrap();
    let o = mapguide(&["replay", "--log", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("utterances reproduced"));

    let mut tampered = ep.log.clone();
    for r in &mut tampered {
        if let LogEvent::Utterance { utterance, .. } = &mut r.event {
            utterance.text = "Turn left.".into();
            break;
        }
    }
    std::fs::write(&path, write_log(&tampered)).unwrap();
    let o = mapguide(&["replay", "--log", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("Turn left."));
}

fn dump() -> serde_json::Value {
    serde_json::from_str(&stdout(&mapguide(&["--dump-flags"]))).unwrap()
}

#[test]
fn every_flag_is_in_help() {
    for (sub, flags) in dump().as_object().unwrap() {
        let help = if sub == "global" { stdout(&mapguide(&["--help"])) } else { stdout(&mapguide(&[sub, "--help"])) };
        for f in flags.as_array().unwrap() {
            let long = format!("--{}", f["long"].as_str().unwrap());
            assert!(help.contains(&long), "{sub} help lacks {long}");
        }
    }
}

#[test]
fn readme_documents_every_flag() {
    let readme = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    for (sub, flags) in dump().as_object().unwrap() {
        let heading = if sub == "global" { "### Global flags".to_string() } else { format!("### `{sub}`") };
        let start = readme.find(&heading).unwrap_or_else(|| panic!("README has no `{heading}` section"));
        let section = &readme[start + heading.len()..];
        let section = &section[..section.find("\n### ").unwrap_or(section.len())];
        for f in flags.as_array().unwrap() {
            let long = format!("`--{}", f["long"].as_str().unwrap());
            let listed = section.contains(&format!("{long}`")) || section.contains(&format!("{long} "));
            assert!(listed, "README section {heading} lacks {long}`");
        }
    }
}

#[test]
fn serve_answers_on_its_port() {
    let dir = tempfile::tempdir().unwrap();
    let agent = dir.path().join("agent.toml");
    std::fs::write(&agent, "[agent]\nkind = \"responsive\"\n\n[timers]\nfirst_ms = 3000\nrepeat_ms = 5000\nrepeat = false\n").unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_mapguide"))
        .args(["serve", "--port", "0", "--agent-config", agent.to_str().unwrap()])
        .args(["--log-dir", dir.path().join("logs").to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let created: serde_json::Value = rt.block_on(async {
        let c = reqwest::Client::new();
        c.post(format!("{url}/api/sessions")).json(&serde_json::json!({"map": "fig2"})).send().await.unwrap().json().await.unwrap()
    });
    child.kill().unwrap();
    let kinds: Vec<&str> = created["messages"].as_array().unwrap().iter().filter_map(|m| m["kind"].as_str()).collect();
    assert_eq!(kinds, ["Instruction"]);
    assert!(dir.path().join("logs").join(format!("{}.ndjson", created["session"].as_str().unwrap())).exists());
}
