use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mugsim"));
    c.env_remove("RUST_BACKTRACE").env_remove("MUGSIM_BIND");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn digest_of(stdout: &str) -> String {
    stdout.split_whitespace().next().unwrap().to_owned()
}

#[test]
fn validate_accepts_the_committed_scenarios() {
    for name in ["default.toml", "golden.toml", "drift.toml"] {
        let out = ok(bin().args(["validate"]).arg(scenario(name)).output().unwrap());
        assert!(out.contains(": ok"), "{out}");
    }
}

#[test]
fn validate_names_the_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[simulation]\ndt = 0\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("simulation.dt"), "{err}");

    std::fs::write(&bad, "[simulation]\nstrict = false\nwarp = 9\n").unwrap();
    let lenient = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warp"));
    let strict = bin().args(["validate", "--strict"]).arg(&bad).output().unwrap();
    assert!(!strict.status.success());
}

#[test]
fn run_writes_outputs_and_replay_hash_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(bin()
        .arg("run")
        .arg(scenario("golden.toml"))
        .args(["--duration", "1800", "--out"])
        .arg(dir.path())
        .output()
        .unwrap());
    let digest = out
        .lines()
        .find_map(|l| l.strip_prefix("digest "))
        .and_then(|l| l.split_whitespace().next())
        .expect("digest line")
        .to_owned();
    for f in ["telemetry.jsonl", "events.jsonl", "tracks.csv", "summary.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let from_file = ok(bin().arg("replay-hash").arg(dir.path().join("telemetry.jsonl")).output().unwrap());
    assert_eq!(digest_of(&from_file), digest);
    let replayed = ok(bin()
        .arg("replay-hash")
        .arg(scenario("golden.toml"))
        .args(["--duration", "1800"])
        .output()
        .unwrap());
    assert_eq!(replayed, from_file);

    let reseeded = ok(bin()
        .arg("replay-hash")
        .arg(scenario("golden.toml"))
        .args(["--duration", "1800", "--seed", "7"])
        .output()
        .unwrap());
    assert_ne!(digest_of(&reseeded), digest);
}

#[test]
fn decimation_thins_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let run = |dec: &str, sub: &str| {
        ok(bin()
            .arg("run")
            .arg(scenario("golden.toml"))
            .args(["--duration", "1800", "--decimation", dec, "--out"])
            .arg(dir.path().join(sub))
            .output()
            .unwrap());
        let s: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(sub).join("summary.json")).unwrap())
                .unwrap();
        s
    };
    let fine = run("1", "fine");
    let coarse = run("60", "coarse");
    assert!(fine["telemetry_lines"].as_u64() > coarse["telemetry_lines"].as_u64());
    assert_eq!(fine["vehicles"], coarse["vehicles"]);
    assert_eq!(fine["stats"], coarse["stats"]);
}

#[test]
fn realtime_run_is_paced() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    ok(bin()
        .arg("run")
        .arg(scenario("golden.toml"))
        .args(["--duration", "60", "--realtime", "--speed", "200", "--out"])
        .arg(dir.path())
        .output()
        .unwrap());
    // 60 ticks at 200x is 0.3 s of wall time
    assert!(start.elapsed() >= Duration::from_millis(290));
}

#[test]
fn missing_file_is_reported_with_its_path() {
    let out = bin().args(["run", "/nonexistent/scenario.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/scenario.toml"));
}

fn get(addr: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(addr).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    buf.split_once("\r\n\r\n").map(|(_, b)| b.to_owned())
}

#[test]
fn serve_answers_health_checks() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = bin()
        .arg("serve")
        .arg(scenario("golden.toml"))
        .args(["--attach", "paused"])
        .env("MUGSIM_BIND", &addr)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let body = loop {
        if let Some(b) = get(&addr, "/health") {
            break b;
        }
        assert!(Instant::now() < deadline, "gateway did not come up");
        std::thread::sleep(Duration::from_millis(100));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["clock"]["paused"], true);
}
