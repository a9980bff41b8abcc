//! End-to-end tests of the `psig` binary: exit codes, file handling,
//! output schemas.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn psig() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psig"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    psig().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal death")
}

fn keygen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["keygen", "--n", "64", "--pr", "0.01"];
    if !extra.contains(&"--seed") {
        args.extend_from_slice(&["--seed", "7"]);
    }
    args.extend_from_slice(extra);
    let out = run_in(dir, &args);
    assert_eq!(code(&out), 0, "keygen failed: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn keygen_sign_verify_pipeline_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);

    let out = run_in(
        dir.path(),
        &["sign", "--sk", "sk.psig", "-m", "prefix01:payload", "--out", "sig.bin", "--seed", "1"],
    );
    assert_eq!(code(&out), 0);
    let envelope = stdout(&out).trim().to_string();
    assert!(!envelope.is_empty());
    fs::write(dir.path().join("sig.b64"), &envelope).unwrap();

    // Binary container and base64 envelope both verify.
    for sig in ["sig.bin", "sig.b64"] {
        let out = run_in(dir.path(), &["verify", "--vk", "vk.psig", "-m", "prefix01:payload", "--sig", sig]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(stdout(&out).trim(), "accept");
    }

    // Envelope from stdin.
    let mut child = psig()
        .current_dir(dir.path())
        .args(["verify", "--vk", "vk.psig", "-m", "prefix01:payload", "--sig", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.as_mut().unwrap().write_all(envelope.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn tampered_message_is_rejected_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    let out = run_in(
        dir.path(),
        &["sign", "--sk", "sk.psig", "-m", "prefix01:payload", "--out", "sig.bin", "--seed", "1"],
    );
    assert_eq!(code(&out), 0);
    let out = run_in(
        dir.path(),
        &["verify", "--vk", "vk.psig", "-m", "prefix01:tampered", "--sig", "sig.bin"],
    );
    assert_eq!(code(&out), 4);
    assert_eq!(stdout(&out).trim(), "reject");
}

#[test]
fn second_sign_with_puncture_exits_prefix_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    let first = run_in(
        dir.path(),
        &["sign", "--sk", "sk.psig", "-m", "slot0001:block a", "--puncture", "--seed", "1"],
    );
    assert_eq!(code(&first), 0);
    // Same prefix, different payload: the key file was atomically updated,
    // so the prefix is gone.
    let second = run_in(
        dir.path(),
        &["sign", "--sk", "sk.psig", "-m", "slot0001:block b", "--puncture", "--seed", "2"],
    );
    assert_eq!(code(&second), 3);
    // A different prefix still works.
    let third = run_in(
        dir.path(),
        &["sign", "--sk", "sk.psig", "-m", "slot0002:block c", "--puncture", "--seed", "3"],
    );
    assert_eq!(code(&third), 0);
}

#[test]
fn explicit_puncture_blocks_signing_and_reports_state() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    let out = run_in(dir.path(), &["puncture", "--sk", "sk.psig", "-m", "slot0009:whatever"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("1 punctures"));
    let out = run_in(dir.path(), &["sign", "--sk", "sk.psig", "-m", "slot0009:else"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn corrupt_and_truncated_files_exit_2_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    let out =
        run_in(dir.path(), &["sign", "--sk", "sk.psig", "-m", "prefix01:x", "--out", "sig.bin"]);
    assert_eq!(code(&out), 0);

    // Truncated secret key.
    let sk = fs::read(dir.path().join("sk.psig")).unwrap();
    fs::write(dir.path().join("sk-cut.psig"), &sk[..sk.len() / 2]).unwrap();
    let out = run_in(dir.path(), &["sign", "--sk", "sk-cut.psig", "-m", "prefix01:x"]);
    assert_eq!(code(&out), 2, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // Corrupted public key (flip a point byte past the header).
    let mut vk = fs::read(dir.path().join("vk.psig")).unwrap();
    let mid = vk.len() - 10;
    vk[mid] ^= 0xFF;
    fs::write(dir.path().join("vk-bad.psig"), &vk).unwrap();
    let out =
        run_in(dir.path(), &["verify", "--vk", "vk-bad.psig", "-m", "prefix01:x", "--sig", "sig.bin"]);
    assert_eq!(code(&out), 2);

    // Truncated signature container.
    let sig = fs::read(dir.path().join("sig.bin")).unwrap();
    fs::write(dir.path().join("sig-cut.bin"), &sig[..sig.len() - 5]).unwrap();
    let out =
        run_in(dir.path(), &["verify", "--vk", "vk.psig", "-m", "prefix01:x", "--sig", "sig-cut.bin"]);
    assert_eq!(code(&out), 2);

    // Garbage envelope.
    fs::write(dir.path().join("sig-garbage"), "not base64 at all!!").unwrap();
    let out =
        run_in(dir.path(), &["verify", "--vk", "vk.psig", "-m", "prefix01:x", "--sig", "sig-garbage"]);
    assert_eq!(code(&out), 2);

    // Wrong container kind: a public key fed as a signature.
    let out =
        run_in(dir.path(), &["verify", "--vk", "vk.psig", "-m", "prefix01:x", "--sig", "vk.psig"]);
    assert_eq!(code(&out), 2);

    // Missing file.
    let out = run_in(dir.path(), &["sign", "--sk", "no-such.psig", "-m", "prefix01:x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn signature_from_foreign_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    keygen(dir.path(), &["--sk", "sk2.psig", "--vk", "vk2.psig", "--seed", "8"]);
    let out = run_in(
        dir.path(),
        &["sign", "--sk", "sk2.psig", "-m", "prefix01:payload", "--out", "sig2.bin"],
    );
    assert_eq!(code(&out), 0);
    let out = run_in(
        dir.path(),
        &["verify", "--vk", "vk.psig", "-m", "prefix01:payload", "--sig", "sig2.bin"],
    );
    assert_eq!(code(&out), 4);
}

#[test]
fn unsupported_curve_env_exits_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = psig()
        .current_dir(dir.path())
        .env("PSIG_CURVE", "p256")
        .args(["keygen", "--n", "16", "--pr", "0.01"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 5);
    // Explicit flag overrides the environment.
    let out = psig()
        .current_dir(dir.path())
        .env("PSIG_CURVE", "p256")
        .args(["keygen", "--n", "16", "--pr", "0.01", "--curve", "bls12-381", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

#[test]
fn keygen_is_deterministic_per_seed_and_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    keygen(dir.path(), &[]);
    keygen(dir.path(), &["--sk", "sk-b.psig", "--vk", "vk-b.psig"]);
    // Same seed, same bytes: write -> read -> write is bit-exact.
    assert_eq!(
        fs::read(dir.path().join("sk.psig")).unwrap(),
        fs::read(dir.path().join("sk-b.psig")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("vk.psig")).unwrap(),
        fs::read(dir.path().join("vk-b.psig")).unwrap()
    );
    // Deterministic signing randomness gives identical envelopes.
    let a = run_in(dir.path(), &["sign", "--sk", "sk.psig", "-m", "prefix01:m", "--seed", "5"]);
    let b = run_in(dir.path(), &["sign", "--sk", "sk-b.psig", "-m", "prefix01:m", "--seed", "5"]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn bench_emits_stable_csv_and_json_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["bench", "--n", "64", "--pr", "0.01", "--iterations", "30", "--seed", "3"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(
        lines[0],
        "op,n,pr,ell,k,puncture_count,iterations,mean_ns,median_ns,stddev_ns,sk_bytes,vk_bytes,sig_bytes"
    );
    let cols = lines[0].split(',').count();
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), cols, "ragged row: {line}");
    }
    // keygen row + {sign,verify,puncture} x {0, 32, 64} + 2 ratio rows.
    assert_eq!(lines.len() - 1, 1 + 3 * 3 + 2);
    for op in ["keygen", "sign", "verify", "puncture"] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("{op},"))), "missing op {op}");
    }
    for count in ["0", "32", "64"] {
        assert!(
            lines.iter().any(|l| l.starts_with("sign,") && l.contains(&format!(",{count},30,"))),
            "missing sign row at count {count}"
        );
    }
    assert!(lines.iter().any(|l| l.starts_with("ratio_sign_mid_over_zero,")));
    assert!(lines.iter().any(|l| l.starts_with("ratio_puncture_mid_over_zero,")));

    // Signature size column: payload bytes, constant across rows.
    for line in lines[1..].iter().filter(|l| !l.starts_with("ratio_")) {
        assert!(line.ends_with(",84"), "sig_bytes should be 84: {line}");
    }

    // JSON mirrors the rows.
    let out = run_in(
        dir.path(),
        &[
            "bench", "--n", "64", "--pr", "0.01", "--iterations", "30", "--seed", "3",
            "--format", "json", "--out", "bench.json",
        ],
    );
    assert_eq!(code(&out), 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    let records = json.as_array().unwrap();
    assert_eq!(records.len(), lines.len() - 1);
    assert_eq!(records[0]["op"], "keygen");
    for r in records {
        assert!(r["iterations"] == 30 || r["op"].as_str().unwrap().starts_with("ratio_"));
    }
    // Secret keys shrink as punctures accumulate.
    let sk_sizes: Vec<u64> = records
        .iter()
        .filter(|r| r["op"] == "sign")
        .map(|r| r["sk_bytes"].as_u64().unwrap())
        .collect();
    assert_eq!(sk_sizes.len(), 3);
    assert!(sk_sizes[0] > sk_sizes[1] && sk_sizes[1] > sk_sizes[2], "{sk_sizes:?}");
}

#[test]
fn bench_rejects_too_few_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["bench", "--n", "16", "--iterations", "10"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn simulate_bundled_config_is_clean_and_supports_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sim-small.json");
    let out = run_in(dir.path(), &["simulate", "--config", config, "--out", "report.json"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["common_prefix_violations"], 0);
    assert_eq!(report["fp_sign_refusals"], 0);
    let frac = report["nonempty_slot_fraction"].as_f64().unwrap();
    assert!((frac - 0.1).abs() < 0.03, "fraction {frac}");
    assert_eq!(report["chain_quality_ok"], true);
    assert_eq!(report["chain_growth_ok"], true);

    // Monte-Carlo sweep: array of per-seed reports, parallel mode agrees.
    let out = run_in(dir.path(), &["simulate", "--config", config, "--runs", "2"]);
    assert_eq!(code(&out), 0);
    let seq: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(seq.as_array().unwrap().len(), 2);
    let out = run_in(dir.path(), &["simulate", "--config", config, "--runs", "2", "--parallel"]);
    assert_eq!(code(&out), 0);
    let par: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(seq, par, "parallel sweep must be deterministic");
}

#[test]
fn malformed_configs_fail_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Not JSON at all: parse error.
    fs::write(dir.path().join("bad.json"), "{ this is not json").unwrap();
    let out = run_in(dir.path(), &["simulate", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    // Well-formed but semantically invalid: config error.
    fs::write(dir.path().join("empty.json"), r#"{"stake": [], "f": 0.1, "total_slots": 5}"#)
        .unwrap();
    let out = run_in(dir.path(), &["simulate", "--config", "empty.json"]);
    assert_eq!(code(&out), 5);
    // Missing file.
    let out = run_in(dir.path(), &["simulate", "--config", "nowhere.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn lrsl_bundled_config_reports_zero_forgeries() {
    let dir = tempfile::tempdir().unwrap();
    // A smaller cousin of configs/lrsl-example.json to keep the test fast.
    fs::write(
        dir.path().join("lrsl.json"),
        r#"{
          "sim": { "stake": [1, 1, 1, 1], "f": 0.3, "total_slots": 60, "seed": 9 },
          "corrupt_at_slot": 50,
          "forgery_attempts": 40
        }"#,
    )
    .unwrap();
    let out = run_in(dir.path(), &["lrsl", "--config", "lrsl.json"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["accepted_forgeries"], 0);
    assert_eq!(report["sign_refusals"], report["sign_attempts"]);
    assert_eq!(report["control_sign_succeeded"], true);
    assert_eq!(report["control_block_accepted"], true);
}
