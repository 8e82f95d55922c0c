use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn snc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn sweep_gives_one_non_increasing_row_per_point() {
    let file = data("single_node.snc");
    let o = snc(&[
        "analyze", "--file", &file, "--flow", "foi", "--vertex", "server", "--bound", "delay", "--sweep", "1:20:1",
        "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,bound,theta"));
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1) as f64);
        assert!(r[1] > 0.0);
    }
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn inverse_human_output_is_one_line() {
    let file = data("single_node.snc");
    let o = snc(&[
        "analyze", "--file", &file, "--flow", "foi", "--vertex", "server", "--bound", "inverse-delay", "--epsilon",
        "1e-3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("delay of foi at server <= "), "{text}");
    assert!(text.contains("with probability >= 1 - 0.001"), "{text}");
}

#[test]
fn hoelder_columns_follow_theta() {
    let file = data("ladder.snc");
    let o = snc(&[
        "analyze", "--file", &file, "--flow", "foi", "--crossflow", "cross", "--analysis", "ladder", "--bound",
        "inverse-delay", "--epsilon", "1e-2", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,bound,theta,h1");
    let row: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row.len(), 4);
    assert!(row[3] > 1.0);
}

#[test]
fn end_to_end_defaults_to_the_full_route() {
    let file = data("tandem.snc");
    let o = snc(&["analyze", "--file", &file, "--flow", "foi", "--analysis", "end2end", "--bound", "delay", "--value", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("P(delay of foi at s1->s2 > 10) <= "));
}

#[test]
fn simulate_reports_exceedances() {
    let file = data("single_node.snc");
    let o = snc(&[
        "simulate", "--file", &file, "--flow", "foi", "--vertex", "server", "--bound", "delay", "--sweep", "2:6:2",
        "--horizon", "100000", "--format", "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,probability,exceedances,samples");
    assert_eq!(lines.len(), 4);
    let probs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn unstable_sample_reports_an_optimizer_error() {
    // v1 serves 1 unit per slot while F1 offers 2 on average
    let file = data("sample.snc");
    let o = snc(&[
        "analyze", "--file", &file, "--flow", "F1", "--vertex", "v2", "--analysis", "simple", "--bound",
        "inverse-delay", "--epsilon", "1e-3", "--granularity", "0.01",
    ]);
    assert_eq!(o.status.code(), Some(6));
    assert!(stderr(&o).starts_with("snc: OptimizeError: no feasible point"), "{}", stderr(&o));
}

#[test]
fn error_classes_map_to_exit_codes() {
    let single = data("single_node.snc");
    let missing_flow = snc(&["analyze", "--file", &single, "--vertex", "server", "--bound", "delay", "--value", "3"]);
    assert_eq!(missing_flow.status.code(), Some(2));

    let missing_value = snc(&["analyze", "--file", &single, "--flow", "foi", "--vertex", "server", "--bound", "delay"]);
    assert_eq!(missing_value.status.code(), Some(2));
    assert!(stderr(&missing_value).starts_with("snc: UsageError:"), "{}", stderr(&missing_value));

    let io = snc(&["analyze", "--file", "/nonexistent/x.snc", "--flow", "foi", "--bound", "delay", "--value", "3"]);
    assert_eq!(io.status.code(), Some(3));
    assert!(stderr(&io).starts_with("snc: IoError:"));

    let dir = std::env::temp_dir().join(format!("snc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.snc");
    std::fs::write(&bad, "I a, FIFO, CR, 4\nEOI\nF f, 1, b:0, CONSTANT, 1\nEOF\n").unwrap();
    let parse = snc(&["analyze", "--file", bad.to_str().unwrap(), "--flow", "f", "--bound", "delay", "--value", "3"]);
    assert_eq!(parse.status.code(), Some(4));
    assert!(stderr(&parse).starts_with("snc: ParseError: line 3:"), "{}", stderr(&parse));

    let unknown = snc(&["analyze", "--file", &single, "--flow", "nope", "--bound", "delay", "--value", "3"]);
    assert_eq!(unknown.status.code(), Some(2));

    let ladder = data("ladder.snc");
    let swapped = snc(&[
        "analyze", "--file", &ladder, "--flow", "cross", "--crossflow", "foi", "--analysis", "ladder", "--bound",
        "delay", "--value", "100",
    ]);
    assert_eq!(swapped.status.code(), Some(5));
    assert!(stderr(&swapped).starts_with("snc: AnalysisError:"), "{}", stderr(&swapped));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn strict_mode_rejects_shifted_servers() {
    let file = data("ladder.snc");
    let o = snc(&[
        "analyze", "--file", &file, "--flow", "foi", "--crossflow", "cross", "--analysis", "ladder", "--bound",
        "delay", "--value", "100", "--strict",
    ]);
    assert_eq!(o.status.code(), Some(4));
}
