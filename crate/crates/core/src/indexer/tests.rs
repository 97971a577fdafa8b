// SPDX-License-Identifier: Apache-2.0

use super::*;
use crate::assets::{
    poc1_issue, poc25_issue, poc2_issue, poc3_build_transfer, poc3_issue, poc3_transfer, ProtocolConstants,
};
use crate::chain::{ChainConfig, SimChain};
use crate::tx::{TxInput, TxOutput, SEQUENCE_RBF};

fn chain() -> SimChain {
    let mut c = SimChain::new(ChainConfig::default());
    for id in ["issuer", "service", "bob", "protocol", "noise"] {
        c.signers_mut().register(id);
    }
    c.mint("issuer", &[500_000; 4]).unwrap();
    c.mint("bob", &[50_000]).unwrap();
    c.mint("noise", &[10_000; 20]).unwrap();
    c.mine_block();
    c
}

/// Spends one `noise` output with the given locktime and optional OP_RETURN payload.
fn noise_tx(c: &mut SimChain, locktime: u32, payload: Option<Vec<u8>>) -> Txid {
    let u = c.spendable_by("noise").into_iter().next().unwrap();
    let mut outputs = Vec::new();
    if let Some(p) = payload {
        outputs.push(TxOutput::op_return(p));
    }
    outputs.push(TxOutput::new(u.value - 500, u.script.clone()));
    let mut tx = Transaction::new(vec![TxInput::new(u.outpoint, SEQUENCE_RBF)], outputs, locktime);
    c.signers().attest_all(&mut tx, "noise");
    c.broadcast(tx).unwrap()
}

fn scan_chain(c: &SimChain) -> ScanReport {
    scan(c.snapshot_bytes(), &Registry::lockchain_default()).unwrap()
}

#[test]
fn registry_files() {
    let r = Registry::lockchain_default();
    assert_eq!(r.len(), 3);
    assert_eq!(Registry::parse(&r.to_text()).unwrap(), r);
    let one = Registry::parse("4C 01 lockchain-poc1 sharding # comment").unwrap();
    assert_eq!(one.get(0x4C, 0x01).unwrap().name, "lockchain-poc1");
    assert_eq!(Registry::parse(&one.to_text()).unwrap(), one);
    assert_eq!(
        Registry::parse("4C 01 a sharding\n4C 01 b static"),
        Err(RegistryError::DuplicateEntry { magic: 0x4C, typ: 0x01 })
    );
    assert_eq!(Registry::parse("10 01 low sharding"), Err(RegistryError::MagicOutOfBand(0x10)));
    assert_eq!(Registry::parse("69 01 high sharding"), Err(RegistryError::MagicOutOfBand(0x69)));
    assert!(matches!(Registry::parse("4C 01 x"), Err(RegistryError::MalformedLine { line: 1, .. })));
    assert!(matches!(Registry::parse("\n4C zz x static"), Err(RegistryError::MalformedLine { line: 2, .. })));
    assert!(matches!(Registry::parse("4C 01 x weird"), Err(RegistryError::MalformedLine { .. })));

    let dir = tempdir();
    let path = dir.join("registry.txt");
    r.save(&path).unwrap();
    assert_eq!(Registry::load(&path).unwrap(), r);
    assert!(matches!(Registry::load(dir.join("missing")), Err(RegistryError::Io(_))));
}

fn tempdir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lockchain-indexer-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn empty_chain() {
    let c = SimChain::new(ChainConfig::default());
    let r = scan_chain(&c);
    assert_eq!(r, ScanReport::default());
    let s = scan_stats(&r, Some(&[]));
    assert_eq!((s.ratio, s.recall), (0.0, Some(1.0)));
}

#[test]
fn finds_every_scheme() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    let a1 = poc1_issue(&mut c, &[5u8; 300], "issuer", &p).unwrap();
    let a2 = poc2_issue(&mut c, &[6u8; 300], 4, "issuer", &p).unwrap();
    let a3 = poc25_issue(&mut c, &[7u8; 300], 4, "issuer", &p).unwrap();
    let mut a4 = poc3_issue(&mut c, &[8u8; 300], 4, "issuer", "service", &p).unwrap();
    poc3_transfer(&mut c, &mut a4, 1, "bob", None, &p).unwrap();
    poc3_transfer(&mut c, &mut a4, 1, "issuer", None, &p).unwrap();
    noise_tx(&mut c, 0, None);
    c.mine_block();

    let r = scan_chain(&c);
    assert_eq!(r.collisions_rejected, 0);
    assert!(r.unconfirmed_assets.is_empty());
    let ids: Vec<Txid> = r.confirmed_assets.iter().map(AssetRecord::genesis_txid).collect();
    assert_eq!(ids, vec![a1.funding_txid, a2.genesis_txid, a3.genesis_txid, a4.genesis_txid]);
    let schemes: Vec<Scheme> = r.confirmed_assets.iter().map(|a| a.scheme).collect();
    assert_eq!(schemes, vec![Scheme::Sharding, Scheme::Single, Scheme::TwoTx, Scheme::Multisig]);

    assert_eq!(r.confirmed_assets[0].txids, a1.shard_txids);
    assert_eq!(r.confirmed_assets[0].commitment, Some(a1.data_hash));
    assert_eq!(r.confirmed_assets[1].tokens.len(), 4);
    assert_eq!(r.confirmed_assets[2].binding_hash, a3.binding_hash);
    let ms = &r.confirmed_assets[3];
    assert_eq!(ms.txids.len(), 4);
    assert_eq!(ms.binding_hash, a4.binding_hash);
    let counts: Vec<u8> = ms.tokens.iter().map(|t| t.transfer_count).collect();
    assert_eq!(counts, vec![0, 2, 0, 0]);
    assert_eq!(ms.tokens[1].outpoint, a4.tokens[1].outpoint);

    let planted = ids.clone();
    let stats = scan_stats(&r, Some(&planted));
    assert_eq!(stats.recall, Some(1.0));
    assert_eq!(r.candidates, a1.n_shards() + 1 + 2 + 4);
}

#[test]
fn prefilter_reads_four_bytes_per_transaction() {
    let mut c = chain();
    for i in 0..30 {
        noise_tx(&mut c, 500_000_000 + i, Some(vec![0xAB; 70]));
    }
    c.mine_block();
    let r = scan_chain(&c);
    assert_eq!(r.bytes_prefilter, 4 * r.transactions as u64);
    assert_eq!(r.candidates, 0);
    assert_eq!(r.bytes_deep, 0);

    let snap = Snapshot::open(CountingSource::new(c.snapshot_bytes())).unwrap();
    let before = snap.source().bytes_read();
    prefilter(&snap, &Registry::lockchain_default()).unwrap();
    assert_eq!(snap.source().bytes_read() - before, 4 * snap.tx_count() as u64);
}

#[test]
fn prefilter_cost_ignores_payload_size() {
    let build = |payload: usize| {
        let mut c = chain();
        for i in 0..10 {
            noise_tx(&mut c, 500_000_000 + i, Some(vec![1; payload]));
        }
        c.mine_block();
        scan_chain(&c)
    };
    let small = build(20);
    let large = build(40);
    assert_eq!(small.bytes_prefilter, large.bytes_prefilter);
    assert!(large.total_chain_bytes > small.total_chain_bytes);
}

#[test]
fn decoys_are_collisions() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    let real = poc25_issue(&mut c, &[9u8; 400], 3, "issuer", &p).unwrap();
    noise_tx(&mut c, 0x4C03_7400, Some(vec![]));
    noise_tx(&mut c, 0x4C03_7401, Some(vec![1; 32]));
    noise_tx(&mut c, 0x4C02_7301, Some(vec![2; 31]));
    noise_tx(&mut c, 0x4C01_0005, None);
    noise_tx(&mut c, 0x4C03_7800, None);
    noise_tx(&mut c, 0x4C03_5000, None); // unregistered variant
    noise_tx(&mut c, 0x4C05_0000, None); // unregistered type
    noise_tx(&mut c, 0x1E00_0000, None); // below the band
    c.mine_block();
    let r = scan_chain(&c);
    assert_eq!(r.candidates, 2 + 6);
    assert_eq!(r.collisions_rejected, 6);
    assert_eq!(r.confirmed_assets.len(), 1);
    assert_eq!(r.confirmed_assets[0].genesis_txid(), real.genesis_txid);
    assert!(r.unconfirmed_assets.is_empty());
}

#[test]
fn decoy_genesis_with_empty_op_return() {
    let mut c = chain();
    noise_tx(&mut c, 0x4C03_7400, Some(vec![]));
    c.mine_block();
    let r = scan_chain(&c);
    assert_eq!((r.candidates, r.collisions_rejected), (1, 1));
}

#[test]
fn transfer_gap_fails_sequence_check() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    let mut asset = poc3_issue(&mut c, &[4u8; 300], 3, "issuer", "service", &p).unwrap();
    poc3_transfer(&mut c, &mut asset, 0, "bob", None, &p).unwrap();
    // skip sequence 2 by co-signing outside the service checks
    let mut token = asset.tokens[0].clone();
    token.transfer_count = 2;
    let proposal = poc3_build_transfer(&mut c, &token, "issuer", "service", None, &p).unwrap();
    let mut tx = proposal.tx;
    c.signers().attest(&mut tx, 0, "service");
    c.broadcast(tx).unwrap();
    c.mine_block();
    let r = scan_chain(&c);
    assert!(r.confirmed_assets.is_empty());
    let rec = &r.unconfirmed_assets[0];
    assert!(!rec.validation.sequence_ok);
    assert!(rec.validation.structure_ok && rec.validation.binding_ok && rec.validation.hash_ok);
    assert_eq!(r.collisions_rejected, 0);
}

#[test]
fn incomplete_shards_stay_unconfirmed() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    let a = poc1_issue(&mut c, &[1u8; 200], "issuer", &p).unwrap();
    c.mine_block();
    let blocks: Vec<Vec<Transaction>> = c
        .blocks()
        .iter()
        .map(|b| b.iter().filter(|t| t.txid() != a.shard_txids[2]).cloned().collect())
        .collect();
    let bytes = crate::snapshot::encode_snapshot(blocks.iter().map(Vec::as_slice), c.now());
    let r = scan(bytes, &Registry::lockchain_default()).unwrap();
    assert!(r.confirmed_assets.is_empty());
    assert!(!r.unconfirmed_assets[0].validation.sequence_ok);
}

#[test]
fn baseline_and_determinism() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    poc2_issue(&mut c, &[3u8; 100], 2, "issuer", &p).unwrap();
    noise_tx(&mut c, 0x4C03_7400, Some(vec![]));
    for i in 0..5 {
        noise_tx(&mut c, 500_000_000 + i, Some(vec![7; 60]));
    }
    c.mine_block();
    let a = scan_chain(&c);
    assert_eq!(a, scan_chain(&c));
    let base = scan_deep_all(c.snapshot_bytes(), &Registry::lockchain_default()).unwrap();
    assert_eq!(base.confirmed_assets, a.confirmed_assets);
    assert_eq!(base.collisions_rejected, a.collisions_rejected);
    assert_eq!(base.bytes_deep, base.total_chain_bytes);
    assert!(a.bytes_prefilter + a.bytes_deep < base.bytes_deep);
    let deep_cap: u64 = {
        let snap = Snapshot::open(c.snapshot_bytes()).unwrap();
        let cands = prefilter(&snap, &Registry::lockchain_default()).unwrap();
        cands.iter().map(|k| snap.entries()[k.index].len as u64).sum()
    };
    assert_eq!(a.bytes_deep, deep_cap);
}

#[test]
fn all_protocol_chain_reads_nearly_everything() {
    let mut c = SimChain::new(ChainConfig::default());
    for id in ["issuer", "protocol"] {
        c.signers_mut().register(id);
    }
    c.mint("issuer", &[1_000_000]).unwrap();
    c.mine_block();
    poc1_issue(&mut c, &[2u8; 2_000], "issuer", &ProtocolConstants::default()).unwrap();
    c.mine_block();
    let r = scan_chain(&c);
    let deep_share = r.bytes_deep as f64 / r.total_chain_bytes as f64;
    assert!(deep_share > 0.95, "{deep_share}");
}

#[test]
fn index_file() {
    let mut c = chain();
    let p = ProtocolConstants::default();
    let a = poc25_issue(&mut c, &[9u8; 400], 3, "issuer", &p).unwrap();
    c.mine_block();
    let r = scan_chain(&c);
    let text = index_text(&r.confirmed_assets);
    assert!(text.starts_with(&format!("asset: {}\nscheme: two-tx\nheader: 4c037400\n", a.genesis_txid)));
    assert_eq!(text.lines().filter(|l| l.starts_with("token:")).count(), 3);
    let dir = tempdir();
    write_index(&r.confirmed_assets, dir.join("index.txt")).unwrap();
    assert_eq!(std::fs::read_to_string(dir.join("index.txt")).unwrap(), text);
}
