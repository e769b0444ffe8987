use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn necsuf() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_necsuf"));
    cmd.env_remove("NECSUF_PREDICTOR_URL")
        .env_remove("NECSUF_INFILLER_URL")
        .env("RUST_LOG", "info");
    cmd
}

fn run(args: &[&str]) -> Output {
    necsuf().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn explain_prints_both_channels() {
    let o = run(&["explain", "I hate women", "--stub-classifier", "hate_like", "--color", "never"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("necessity") && lines[0].contains("I") && lines[0].ends_with("women"));
    assert!(lines[2].starts_with("sufficiency"));
    let nec: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(&nec[1..], ["1", "1"]);
    assert!(!out.contains('\x1b'));
    assert!(stderr(&o).contains("config_hash="));
}

#[test]
fn explain_exit_codes() {
    let o = run(&["explain", "good morning", "--stub-classifier", "hate_like"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("prediction is negative; explanations are defined for the positive class only"));

    assert_eq!(run(&["explain", "hate", "--stub-classifier", "hate_like"]).status.code(), Some(4));

    let o = run(&["explain", "I hate women", "--predictor-url", "http://127.0.0.1:9"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    // No predictor configured at all.
    assert_eq!(run(&["explain", "I hate women"]).status.code(), Some(1));
    assert_eq!(run(&["explain", "x y", "--stub-classifier", "nope"]).status.code(), Some(1));
}

#[test]
fn predictor_url_from_environment() {
    let o = necsuf()
        .args(["explain", "I hate women"])
        .env("NECSUF_PREDICTOR_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("127.0.0.1:9"));
}

#[test]
fn explain_exports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut exports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&[
            "explain",
            "These women disgust me so much.",
            "--stub-classifier",
            "abuse_like",
            "--seed",
            "17",
            "--budget",
            "30",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let html = std::fs::read_to_string(out.join("explanation.html")).unwrap();
        assert!(html.contains("<details>"));
        exports.push(std::fs::read(out.join("explanation.json")).unwrap());
    }
    assert_eq!(exports[0], exports[1]);
    let v: serde_json::Value = serde_json::from_slice(&exports[0]).unwrap();
    assert_eq!(v["tokens"].as_array().unwrap().len(), 6);
}

#[test]
fn mask_token_mode_runs_without_infiller() {
    let o = run(&[
        "explain",
        "I hate women",
        "--stub-classifier",
        "hate_like",
        "--mode",
        "mask_token",
        "--infiller-url",
        "http://127.0.0.1:9",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn suite_run(out: &Path) -> Output {
    run(&[
        "suite",
        "--stub-classifier",
        "hate_like",
        "--stub-classifier",
        "abuse_like",
        "--budget",
        "20",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn suite_reuses_corpus_and_reproduces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let first = suite_run(dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert!(!stderr(&first).contains("corpus reused"));
    let report = std::fs::read(dir.path().join("report-hate_like.json")).unwrap();
    let hyp = std::fs::read(dir.path().join("hypotheses.json")).unwrap();

    let second = suite_run(dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert!(stderr(&second).contains("corpus reused"));
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(report, std::fs::read(dir.path().join("report-hate_like.json")).unwrap());
    assert_eq!(hyp, std::fs::read(dir.path().join("hypotheses.json")).unwrap());

    // The necessity ordering between the two stubs is visible in the output.
    let v: serde_json::Value = serde_json::from_slice(&hyp).unwrap();
    let pair = &v["pairs"][0];
    assert_eq!(pair["first"], "hate_like");
    assert_eq!(pair["second"], "abuse_like");
    assert_eq!(pair["necessity"], "greater");
}

#[test]
fn suite_schema_error_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "identities = [\"women\"]\n[[functionalities]]\nid = \"F1\"\ngold = \"maybe\"\ntemplates = [\"x\"]\n")
        .unwrap();
    let o = run(&["suite", bad.to_str().unwrap(), "--stub-classifier", "hate_like"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));

    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["suite", missing.to_str().unwrap(), "--stub-classifier", "hate_like"]).status.code(), Some(1));
}

struct Server {
    child: Child,
    url: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start_server(extra: &[&str]) -> Server {
    let mut child = necsuf()
        .args(["stub-serve", "--listen", "127.0.0.1:0"])
        .args(extra)
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let url = loop {
        let line = lines.next().expect("server announces its address").unwrap();
        if let Some(at) = line.find("listening on ") {
            break line[at + "listening on ".len()..].trim().to_string();
        }
    };
    // Keep draining stderr so the server never blocks on a full pipe.
    std::thread::spawn(move || for _ in lines {});
    Server { child, url }
}

#[test]
fn explain_against_stub_server_matches_in_process() {
    let server = start_server(&["--stub-classifier", "hate_like"]);
    let args = ["explain", "I hate women", "--budget", "40", "--seed", "3", "--color", "never"];
    let remote = necsuf()
        .args(args)
        .args(["--predictor-url", &server.url, "--infiller-url", &server.url])
        .output()
        .unwrap();
    assert_eq!(remote.status.code(), Some(0), "{}", stderr(&remote));
    let local = run(&[&args[..], &["--stub-classifier", "hate_like"]].concat());
    assert_eq!(stdout(&remote), stdout(&local));
}

#[cfg(unix)]
#[test]
fn stub_server_stops_cleanly_on_sigterm() {
    let mut server = start_server(&[]);
    let status = Command::new("kill")
        .args(["-TERM", &server.child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let code = server.child.wait().unwrap();
    assert_eq!(code.code(), Some(0));
}

#[test]
fn stub_server_bind_failure_exits_6() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = run(&["stub-serve", "--listen", &addr]);
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
}
