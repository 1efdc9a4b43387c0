mod common;

use std::collections::BTreeSet;
use std::process::{Command, Output};

use irqscope::report::Report;

use common::{corpus, SMALL};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irqscope")).args(args).output().expect("binary runs")
}

fn path(name: &str) -> String {
    corpus(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn exit_codes() {
    let hw = path("avr8.hw");
    assert_eq!(run(&["analyze", &path("traffic_light.c"), "--hw", &hw]).status.code(), Some(0));
    let uart = run(&["analyze", &path("uart.c"), "--hw", &hw]);
    assert_eq!(uart.status.code(), Some(1));
    assert!(stdout(&uart).ends_with("1 warning\n"));
}

#[test]
fn usage_and_input_errors_exit_2() {
    let missing = run(&["analyze", &path("uart.c")]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--hw"));
    let dir = std::env::temp_dir().join(format!("irqscope-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.c");
    std::fs::write(&bad, "void main() { x = ; }").unwrap();
    let o = run(&["analyze", bad.to_str().unwrap(), "--hw", "none"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = run(&["analyze", &path("uart.c"), "--hw", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn json_output_parses() {
    let o = run(&["analyze", &path("rgb_led.c"), "--hw", &path("avr8.hw"), "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let r: Report = serde_json::from_str(&stdout(&o)).expect("valid report json");
    assert_eq!(r.warnings.len(), 1);
    assert_eq!(r.warnings[0].loc.line, 78);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["warnings"][0]["severity"], "warning");
}

fn warning_keys(o: &Output) -> BTreeSet<(String, String)> {
    let r: Report = serde_json::from_str(&stdout(o)).unwrap();
    r.warnings.iter().flat_map(|w| w.memlocs.iter().map(move |m| (format!("{}:{}", w.loc.line, w.loc.col), m.clone()))).collect()
}

#[test]
fn agnostic_mode_reports_a_superset() {
    let mut names: Vec<&str> = vec!["uart.c", "rgb_led.c", "traffic_light.c", "wf_cases.c"];
    names.extend(SMALL.iter().map(|(n, _)| *n));
    for name in names {
        let aware = run(&["analyze", &path(name), "--hw", &path("avr8.hw"), "--format", "json"]);
        let none = run(&["analyze", &path(name), "--hw", "none", "--format", "json"]);
        let (a, n) = (warning_keys(&aware), warning_keys(&none));
        assert!(a.is_subset(&n), "{}: {:?} not in {:?}", name, a.difference(&n).collect::<Vec<_>>(), n);
    }
}

#[test]
fn isr_flag_names_handlers() {
    let src = "uint8 n;\nvoid tick() { n = n + 1; }\nvoid main() { uint8 c; c = n; }\n";
    let dir = std::env::temp_dir().join(format!("irqscope-isr-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let f = dir.join("tick.c");
    std::fs::write(&f, src).unwrap();
    let plain = run(&["analyze", f.to_str().unwrap(), "--hw", "none"]);
    assert_eq!(plain.status.code(), Some(0));
    let with = run(&["analyze", f.to_str().unwrap(), "--hw", "none", "--isr", "tick"]);
    assert_eq!(with.status.code(), Some(1), "{}", stdout(&with));
    let unknown = run(&["analyze", f.to_str().unwrap(), "--hw", "none", "--isr", "nope"]);
    assert_eq!(unknown.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn dumps() {
    let (uart, hw) = (path("uart.c"), path("avr8.hw"));
    let dot = run(&["analyze", &uart, "--hw", &hw, "--dump-cfg"]);
    assert!(stdout(&dot).starts_with("digraph"));
    let sets = stdout(&run(&["analyze", &uart, "--hw", &hw, "--dump-access-sets"]));
    assert!(sets.contains("rx_in") && sets.contains("main-reads/isr-writes"), "{}", sets);
    let state = stdout(&run(&["analyze", &uart, "--hw", &hw, "--dump-state", "27"]));
    assert!(state.contains("rx_out in [0, 15]"), "{}", state);
    let wf = run(&["analyze", &path("wf_cases.c"), "--hw", &hw, "--explain-wf", "12"]);
    assert_eq!(wf.status.code(), Some(0));
    assert!(!wf.stdout.is_empty());
    let both = run(&["analyze", &uart, "--hw", &hw, "--dump-cfg", "--dump-access-sets"]);
    assert_eq!(both.status.code(), Some(2));
    let stats = stdout(&run(&["analyze", &uart, "--hw", &hw, "--dump-stats"]));
    assert!(stats.contains("isr_analyses:"));
}

#[test]
fn oracle_subcommand() {
    let o = run(&["oracle", &path("small/counter.c"), "--hw", &path("avr8.hw"), "--isr-max", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("events = {") && text.ends_with("states explored\n"), "{}", text);
    let capped = run(&["oracle", &path("small/uart4.c"), "--hw", &path("avr8.hw"), "--max-states", "10"]);
    assert_eq!(capped.status.code(), Some(2));
}
