use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use diffscope::pipeline::{catalog_prompt, deserialize_trajectory, ENGINE_VERSION};
use diffscope::GenerationConfig;

fn diffscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffscope"))
        .args(args)
        .env_remove("DIFFSCOPE_CACHE_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn prompts_lists_thirteen_lines() {
    let o = diffscope(&["prompts"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 13);
    assert!(lines[0].starts_with("1\ta cute and adorable bunny"));
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.traj");
    let out = out.to_str().unwrap();
    for args in [
        vec!["generate", "--prompt-id", "1", "--seed", "1", "--scale", "25", "--out", out],
        vec!["generate", "--prompt-id", "0", "--seed", "1", "--out", out],
        vec!["generate", "--prompt-id", "1", "--seed", "-1", "--out", out],
        vec!["generate", "--seed", "1", "--out", out],
        vec!["export", "--id", "abc", "--out", out],
        vec!["frobnicate"],
    ] {
        let o = diffscope(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!Path::new(out).exists());
    }
    let missing = "0".repeat(64);
    let cache = dir.path().to_str().unwrap();
    let o = diffscope(&["export", "--id", &missing, "--out", out, "--cache", cache]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_is_byte_deterministic_and_exportable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.traj"), dir.path().join("b.traj"));
    let cache = dir.path().join("cache");
    let run = |out: &Path| {
        let o = diffscope(&[
            "generate", "--prompt-id", "1", "--seed", "1", "--scale", "7",
            "--out", out.to_str().unwrap(), "--cache", cache.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o).trim().to_owned()
    };
    let id = run(&a);
    assert_eq!(run(&b), id);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let cfg = GenerationConfig::new(catalog_prompt(1).unwrap().text.clone(), 1, 7.0).unwrap();
    assert_eq!(id, cfg.trajectory_id(ENGINE_VERSION));

    let exported = dir.path().join("exported.traj");
    let o = Command::new(env!("CARGO_BIN_EXE_diffscope"))
        .args(["export", "--id", &id, "--out", exported.to_str().unwrap()])
        .env("DIFFSCOPE_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let exported = std::fs::read(exported).unwrap();
    assert_eq!(exported, bytes);
    assert_eq!(deserialize_trajectory(&exported).unwrap().id, id);
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn serve_answers_health() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_diffscope"))
        .args(["serve", "--port", "0", "--cache", dir.path().to_str().unwrap()])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line
        .split("http://")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_owned();
    let health = http_get(&addr, "/health");
    let prompts = http_get(&addr, "/api/prompts");
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(ENGINE_VERSION));
    assert!(prompts.contains("red panda"));
}
