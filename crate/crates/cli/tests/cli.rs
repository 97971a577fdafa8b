// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn ok(self) -> String {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        self.stdout
    }

    fn reason(&self) -> &str {
        assert_ne!(self.code, 0, "expected failure, stdout: {}", self.stdout);
        assert_eq!(self.stderr.lines().count(), 1, "stderr: {}", self.stderr);
        self.stderr.split(':').next().unwrap()
    }
}

fn lockchain(dir: &Path, args: &[&str]) -> Run {
    let out: Output = Command::new(env!("CARGO_BIN_EXE_lockchain"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn kv<'a>(text: &'a str, key: &str) -> Vec<&'a str> {
    let prefix = format!("{key}: ");
    text.lines().filter_map(|l| l.strip_prefix(prefix.as_str())).collect()
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<u8> = (0..20_000u32).map(|i| (i * 7 % 251) as u8).collect();
    std::fs::write(dir.path().join("data.bin"), data).unwrap();
    lockchain(dir.path(), &["mint", "issuer", "200000", "100000"]).ok();
    dir
}

#[test]
fn empty_chain_scan_is_zeroed() {
    let dir = tempfile::tempdir().unwrap();
    let out = lockchain(dir.path(), &["--format", "kv", "scan"]).ok();
    for key in ["transactions", "candidates", "bytes_prefilter", "bytes_deep", "total_chain_bytes"] {
        assert_eq!(kv(&out, key), ["0"], "{key}");
    }
}

#[test]
fn annex_replays() {
    let dir = tempfile::tempdir().unwrap();
    let one = lockchain(dir.path(), &["--format", "kv", "replay-annex", "1"]).ok();
    assert_eq!(kv(&one, "shards"), ["24"]);
    assert_eq!(kv(&one, "sequences_complete"), ["true"]);
    for n in ["2", "3", "4"] {
        lockchain(dir.path(), &["replay-annex", n]).ok();
    }
    assert_eq!(lockchain(dir.path(), &["replay-annex", "5"]).reason(), "Usage");
}

#[test]
fn multisig_issue_transfer_verify() {
    let dir = workspace();
    let p = dir.path();
    let manifest = lockchain(p, &["issue-static", "data.bin", "--chunks", "10", "--multisig", "--out", "m.txt"]).ok();
    assert_eq!(kv(&manifest, "token").len(), 10);
    lockchain(p, &["mint", "bob", "30000"]).ok();

    let first = lockchain(p, &["--format", "kv", "transfer", "m.txt", "--token", "3", "--to", "bob"]).ok();
    assert_eq!(kv(&first, "locktime"), ["4c037801"]);
    let stale = std::fs::read_to_string(p.join("m.txt")).unwrap();
    let second = lockchain(p, &["--format", "kv", "transfer", "m.txt", "--token", "3", "--to", "issuer"]).ok();
    assert_eq!(kv(&second, "locktime"), ["4c037802"]);

    let verified = lockchain(p, &["--format", "kv", "verify", "m.txt", "--data", "data.bin"]).ok();
    assert_eq!(kv(&verified, "sequence_ok"), ["true"]);
    assert_eq!(kv(&verified, "transactions"), ["4"]);

    std::fs::write(p.join("stale.txt"), stale).unwrap();
    assert_eq!(lockchain(p, &["transfer", "stale.txt", "--token", "3", "--to", "carol"]).reason(), "TokenSpent");
    assert_eq!(lockchain(p, &["transfer", "m.txt", "--token", "10", "--to", "bob"]).reason(), "NoSuchToken");
}

#[test]
fn corrupted_manifest_fails_verification() {
    let dir = workspace();
    let p = dir.path();
    let text = lockchain(p, &["issue-static", "data.bin", "--chunks", "4", "--two-tx", "--out", "m.txt"]).ok();
    lockchain(p, &["verify", "m.txt"]).ok();

    let root = kv(&text, "merkle_root")[0];
    let flipped = format!("{}{}", if root.starts_with('0') { '1' } else { '0' }, &root[1..]);
    std::fs::write(p.join("bad.txt"), text.replace(root, &flipped)).unwrap();
    assert_eq!(lockchain(p, &["verify", "bad.txt"]).reason(), "HashMismatch");

    std::fs::write(p.join("other.bin"), b"different bytes").unwrap();
    assert_eq!(lockchain(p, &["verify", "m.txt", "--data", "other.bin"]).reason(), "HashMismatch");

    let binding = kv(&text, "binding_hash")[0];
    std::fs::write(p.join("bind.txt"), text.replace(binding, &"0".repeat(64))).unwrap();
    assert_eq!(lockchain(p, &["verify", "bind.txt"]).reason(), "BindingMismatch");

    assert_eq!(lockchain(p, &["transfer", "m.txt", "--token", "0", "--to", "bob"]).reason(), "NotTransferable");
    std::fs::write(p.join("junk.txt"), "scheme: nonsense\n").unwrap();
    assert_eq!(lockchain(p, &["verify", "junk.txt"]).reason(), "MalformedManifest");
}

#[test]
fn shards_and_single_assets_verify() {
    let dir = workspace();
    let p = dir.path();
    std::fs::write(p.join("small.bin"), vec![b'z'; 500]).unwrap();
    let shards = lockchain(p, &["issue-shard", "small.bin", "--out", "s.txt"]).ok();
    assert_eq!(kv(&shards, "shard").len(), 500usize.div_ceil(48));
    lockchain(p, &["verify", "s.txt", "--data", "small.bin"]).ok();
    lockchain(p, &["issue-static", "data.bin", "--chunks", "3", "--out", "single.txt"]).ok();
    lockchain(p, &["verify", "single.txt", "--data", "data.bin"]).ok();

    let scan = lockchain(p, &["--format", "kv", "scan", "--index", "index.txt"]).ok();
    assert_eq!(kv(&scan, "confirmed_assets"), ["2"]);
    let index = std::fs::read_to_string(p.join("index.txt")).unwrap();
    assert_eq!(kv(&index, "asset").len(), 2);
    let baseline = lockchain(p, &["--format", "kv", "scan", "--baseline"]).ok();
    assert_eq!(kv(&baseline, "confirmed_assets"), ["2"]);
}

#[test]
fn failures_carry_one_reason_token() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("f.bin"), b"abc").unwrap();
    assert_eq!(lockchain(p, &["issue-static", "f.bin", "--chunks", "2"]).reason(), "InsufficientFunds");
    assert_eq!(lockchain(p, &["issue-shard", "missing.bin"]).reason(), "Io");
    assert_eq!(lockchain(p, &["--op-return-limit", "32", "scan"]).reason(), "InvalidConfig");
    assert_eq!(lockchain(p, &["--dust", "0", "scan"]).reason(), "InvalidConfig");
    std::fs::write(p.join("broken.chain"), b"not a chain").unwrap();
    assert_eq!(lockchain(p, &["scan", "broken.chain"]).reason(), "MalformedChain");
    assert_eq!(lockchain(p, &["issue-static", "f.bin"]).reason(), "Usage");
    std::fs::write(p.join("cfg"), "colour: blue\n").unwrap();
    assert_eq!(lockchain(p, &["--config", "cfg", "scan"]).reason(), "InvalidConfig");
}

#[test]
fn registry_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    lockchain(p, &["--registry", "r.reg", "registry", "init"]).ok();
    assert_eq!(lockchain(p, &["--registry", "r.reg", "registry", "init"]).reason(), "FileExists");
    lockchain(p, &["--registry", "r.reg", "registry", "init", "--force"]).ok();
    let shown = lockchain(p, &["--registry", "r.reg", "registry", "show"]).ok();
    assert!(shown.contains("lockchain-poc3"));

    std::fs::write(p.join("poc2.reg"), "4C 02 lockchain-poc2 static 73\n").unwrap();
    std::fs::write(p.join("data.bin"), vec![1u8; 3_000]).unwrap();
    lockchain(p, &["mint", "issuer", "100000"]).ok();
    lockchain(p, &["issue-static", "data.bin", "--chunks", "2", "--two-tx"]).ok();
    lockchain(p, &["issue-static", "data.bin", "--chunks", "2"]).ok();
    let scan = lockchain(p, &["--registry", "poc2.reg", "--format", "kv", "scan"]).ok();
    assert_eq!(kv(&scan, "confirmed_assets"), ["1"]);
    std::fs::write(p.join("bad.reg"), "4C 02 x static 73\n4C 02 y static 73\n").unwrap();
    assert_eq!(lockchain(p, &["--registry", "bad.reg", "scan"]).reason(), "MalformedRegistry");
}

#[test]
fn machine_output_is_reproducible() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        std::fs::write(p.join("data.bin"), vec![9u8; 4_096]).unwrap();
        let cfg = "format: kv\nclock: 1700000000\ndust: 650\n";
        std::fs::write(p.join("cfg"), cfg).unwrap();
        let mut out = String::new();
        for args in [
            &["--config", "cfg", "mint", "issuer", "50000"][..],
            &["--config", "cfg", "mint", "bob", "9000"],
            &["--config", "cfg", "issue-static", "data.bin", "--chunks", "8", "--multisig", "--out", "m.txt"],
            &["--config", "cfg", "transfer", "m.txt", "--token", "1", "--to", "bob"],
            &["--config", "cfg", "scan"],
            &["--config", "cfg", "verify", "m.txt"],
        ] {
            out += &lockchain(p, args).ok();
        }
        (out, std::fs::read(p.join("lockchain.chain")).unwrap())
    };
    let (a, chain_a) = run();
    let (b, chain_b) = run();
    assert_eq!(a, b);
    assert_eq!(chain_a, chain_b);
    assert!(a.contains("token: ") && a.contains(" 650 issuer 0"));
}

#[test]
fn synthetic_chain_scan() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let synth = lockchain(p, &["--format", "kv", "synth", "--out", "s.chain", "--transactions", "1000"]).ok();
    assert_eq!(kv(&synth, "transactions"), ["1000"]);
    let planted = kv(&synth, "planted").len();
    let scan = lockchain(p, &["--format", "kv", "scan", "s.chain"]).ok();
    assert_eq!(kv(&scan, "bytes_prefilter"), ["4000"]);
    assert_eq!(kv(&scan, "confirmed_assets"), [planted.to_string().as_str()]);
    let ratio: f64 = kv(&scan, "ratio")[0].parse().unwrap();
    assert!(ratio < 0.5, "ratio {ratio}");
    assert_eq!(lockchain(p, &["synth", "--out", "t.chain", "--transactions", "10"]).reason(), "InvalidConfig");
}
