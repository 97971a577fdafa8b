// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use lockchain::annex;
use lockchain::assets::{
    binding_hash, poc1_issue, poc25_issue, poc2_issue, poc3_issue, poc3_transfer, Scheme,
};
use lockchain::indexer::{index_text, scan_deep_all, scan_stats, AssetRecord, Registry, ScanReport};
use lockchain::manifest::Manifest;
use lockchain::merkle::{timestamp_digest, Hash32, MerkleCommitment};
use lockchain::snapshot::Snapshot;
use lockchain::synth::{synth_chain, SynthConfig, SynthError};
use lockchain::tx::OutPoint;

use crate::config::{signers_path, Settings};
use crate::error::CliError;
use crate::output::Report;
use crate::state::{load_chain, load_registry, read, read_manifest, save_chain, write};

pub fn mint(settings: &Settings, owner: &str, values: &[u64]) -> Result<String, CliError> {
    let mut chain = load_chain(settings)?;
    chain.signers_mut().register(owner);
    let outpoints = chain.mint(owner, values)?;
    save_chain(&mut chain, &settings.chain)?;
    let mut r = Report::new();
    r.row("owner", owner);
    for (op, v) in outpoints.iter().zip(values) {
        r.row("coin", format!("{op} {v}"));
    }
    Ok(r.render(settings.format))
}

fn emit_manifest(manifest: &Manifest, out: Option<&Path>) -> Result<String, CliError> {
    let text = manifest.to_text();
    if let Some(path) = out {
        write(path, text.as_bytes())?;
    }
    Ok(text)
}

pub fn issue_shard(settings: &Settings, file: &Path, issuer: &str, out: Option<&Path>) -> Result<String, CliError> {
    let data = read(file)?;
    let mut chain = load_chain(settings)?;
    chain.signers_mut().register(issuer);
    let asset = poc1_issue(&mut chain, &data, issuer, &settings.params())?;
    save_chain(&mut chain, &settings.chain)?;
    emit_manifest(&Manifest::Sharded(asset), out)
}

pub fn issue_static(
    settings: &Settings,
    file: &Path,
    chunks: usize,
    scheme: Scheme,
    issuer: &str,
    service: &str,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let data = read(file)?;
    let mut chain = load_chain(settings)?;
    chain.signers_mut().register(issuer);
    let params = settings.params();
    let asset = match scheme {
        Scheme::TwoTx => poc25_issue(&mut chain, &data, chunks, issuer, &params)?,
        Scheme::Multisig => {
            chain.signers_mut().register(service);
            poc3_issue(&mut chain, &data, chunks, issuer, service, &params)?
        }
        _ => poc2_issue(&mut chain, &data, chunks, issuer, &params)?,
    };
    save_chain(&mut chain, &settings.chain)?;
    emit_manifest(&Manifest::Static(asset), out)
}

pub fn transfer(
    settings: &Settings,
    manifest_path: &Path,
    token: usize,
    to: &str,
    fee_source: Option<OutPoint>,
) -> Result<String, CliError> {
    let mut asset = match read_manifest(manifest_path)? {
        Manifest::Static(a) if a.scheme == Scheme::Multisig => a,
        other => return Err(CliError::NotTransferable(other.scheme().to_string())),
    };
    let mut chain = load_chain(settings)?;
    chain.signers_mut().register(to);
    let txid = poc3_transfer(&mut chain, &mut asset, token, to, fee_source, &settings.params())?;
    save_chain(&mut chain, &settings.chain)?;
    let text = Manifest::Static(asset.clone()).to_text();
    write(manifest_path, text.as_bytes())?;
    let record = asset.history.last().expect("transfer recorded");
    let mut r = Report::new();
    r.row("transfer_txid", txid)
        .row("locktime", format!("{:08x}", record.locktime))
        .row("token", token)
        .row("owner", to)
        .row("transfer_count", asset.tokens[token].transfer_count);
    Ok(r.render(settings.format))
}

fn scan_file(path: &Path, registry: &Registry, baseline: bool) -> Result<ScanReport, CliError> {
    let bytes = read(path)?;
    let report = if baseline {
        scan_deep_all(bytes.as_slice(), registry)?
    } else {
        lockchain::indexer::scan(bytes.as_slice(), registry)?
    };
    Ok(report)
}

fn flags(r: &AssetRecord) -> String {
    let v = r.validation;
    let b = |ok: bool| if ok { '1' } else { '0' };
    format!("{}{}{}{}", b(v.structure_ok), b(v.hash_ok), b(v.binding_ok), b(v.sequence_ok))
}

pub fn scan(settings: &Settings, chain_file: Option<&Path>, baseline: bool, index: Option<&Path>) -> Result<String, CliError> {
    let path = chain_file.unwrap_or(&settings.chain);
    let registry = load_registry(settings)?;
    let report = if path.exists() {
        scan_file(path, &registry, baseline)?
    } else {
        ScanReport::default()
    };
    let stats = scan_stats(&report, None);
    if let Some(index) = index {
        let mut records = report.confirmed_assets.clone();
        records.extend(report.unconfirmed_assets.iter().cloned());
        write(index, index_text(&records).as_bytes())?;
    }
    let mut r = Report::new();
    r.row("mode", if baseline { "baseline" } else { "prefilter" })
        .row("transactions", report.transactions)
        .row("candidates", report.candidates)
        .row("confirmed_assets", report.confirmed_assets.len())
        .row("unconfirmed_assets", report.unconfirmed_assets.len())
        .row("collisions_rejected", report.collisions_rejected)
        .row("bytes_prefilter", report.bytes_prefilter)
        .row("bytes_deep", report.bytes_deep)
        .row("total_chain_bytes", report.total_chain_bytes)
        .row("ratio", format!("{:.6}", stats.ratio));
    for (status, list) in [("confirmed", &report.confirmed_assets), ("unconfirmed", &report.unconfirmed_assets)] {
        for a in list {
            r.row("asset", format!("{} {} {} {}", a.genesis_txid(), a.scheme, status, flags(a)));
        }
    }
    Ok(r.render(settings.format))
}

fn mismatch(reason: &'static str, detail: impl Into<String>) -> CliError {
    CliError::Verify { reason, detail: detail.into() }
}

pub fn verify(settings: &Settings, manifest_path: &Path, chain_file: Option<&Path>, data: Option<&Path>) -> Result<String, CliError> {
    let manifest = read_manifest(manifest_path)?;
    let path = chain_file.unwrap_or(&settings.chain);
    let registry = load_registry(settings)?;
    let report = scan_file(path, &registry, false)?;
    let id = manifest.asset_id();
    let record = report
        .confirmed_assets
        .iter()
        .chain(&report.unconfirmed_assets)
        .find(|r| r.genesis_txid() == id)
        .ok_or_else(|| mismatch("AssetNotFound", format!("no asset with genesis {id}")))?;

    let (commitment, expected_txids): (Hash32, Vec<_>) = match &manifest {
        Manifest::Sharded(a) => (a.data_hash, a.shard_txids.clone()),
        Manifest::Static(a) => {
            let mut txids: Vec<_> = a.tokenization_txid.into_iter().collect();
            txids.extend(a.history.iter().map(|h| h.txid));
            (a.merkle_root, txids)
        }
    };
    if record.commitment != Some(commitment) {
        return Err(mismatch("HashMismatch", "manifest commitment differs from the chain"));
    }
    if let Some(path) = data {
        let bytes = read(path)?;
        let recomputed = match &manifest {
            Manifest::Sharded(a) => timestamp_digest(&bytes, a.timestamp),
            Manifest::Static(a) => MerkleCommitment::build(&bytes, a.plan.n_chunks).map_err(lockchain::assets::AssetError::from)?.root,
        };
        if recomputed != commitment {
            return Err(mismatch("HashMismatch", "file does not match the commitment"));
        }
    }
    if let Manifest::Static(a) = &manifest {
        if let Some(b) = a.binding_hash {
            if b != binding_hash(&a.genesis_txid, &a.merkle_root) || record.binding_hash != Some(b) {
                return Err(mismatch("BindingMismatch", "binding hash does not match genesis and root"));
            }
        }
    }
    if let Some(missing) = expected_txids.iter().find(|t| !record.txids.contains(t)) {
        return Err(mismatch("TxMismatch", format!("{missing} is not part of the asset on chain")));
    }
    let v = record.validation;
    for (ok, reason) in [
        (v.structure_ok, "StructureInvalid"),
        (v.hash_ok, "HashMismatch"),
        (v.binding_ok, "BindingMismatch"),
        (v.sequence_ok, "BadSequence"),
    ] {
        if !ok {
            return Err(mismatch(reason, format!("asset {id} fails validation")));
        }
    }
    let mut r = Report::new();
    r.row("asset", id)
        .row("scheme", record.scheme)
        .row("transactions", record.txids.len())
        .row("structure_ok", v.structure_ok)
        .row("hash_ok", v.hash_ok)
        .row("binding_ok", v.binding_ok)
        .row("sequence_ok", v.sequence_ok);
    Ok(r.render(settings.format))
}

pub fn replay_annex(settings: &Settings, n: u8) -> Result<String, CliError> {
    let report = annex::replay(n).expect("annex number validated by the parser")?;
    if let Some(f) = report.failures().next() {
        return Err(CliError::AnnexMismatch {
            annex: n,
            label: f.label,
            expected: f.expected.clone(),
            actual: f.actual.clone(),
        });
    }
    let mut r = Report::new();
    r.row("annex", n).row("title", report.title);
    for c in &report.checks {
        r.row(&c.label.replace(' ', "_"), &c.actual);
    }
    r.row("checks_passed", report.checks.len());
    Ok(r.render(settings.format))
}

pub fn registry_init(settings: &Settings, force: bool) -> Result<String, CliError> {
    let path = settings.registry.clone().unwrap_or_else(|| "lockchain.registry".into());
    if path.exists() && !force {
        return Err(CliError::FileExists(path));
    }
    let registry = Registry::lockchain_default();
    registry.save(&path)?;
    let mut r = Report::new();
    r.row("registry", path.display()).row("entries", registry.len());
    Ok(r.render(settings.format))
}

pub fn registry_show(settings: &Settings) -> Result<String, CliError> {
    Ok(load_registry(settings)?.to_text())
}

pub fn synth(settings: &Settings, out: &Path, transactions: usize, seed: u64) -> Result<String, CliError> {
    let cfg = SynthConfig { transactions, seed, ..SynthConfig::default() };
    let s = synth_chain(&cfg).map_err(|e| match e {
        SynthError::TooSmall(_) => CliError::InvalidConfig(e.to_string()),
        SynthError::Asset(e) => e.into(),
        SynthError::Chain(e) => e.into(),
    })?;
    let bytes = s.chain.snapshot_bytes();
    write(out, &bytes)?;
    write(&signers_path(out), s.chain.signers().to_text().as_bytes())?;
    let snapshot = Snapshot::open(bytes.as_slice())?;
    let mut r = Report::new();
    r.row("chain", out.display())
        .row("transactions", snapshot.tx_count())
        .row("blocks", snapshot.block_count())
        .row("bytes", bytes.len())
        .row("planted_assets", s.planted.len())
        .row("protocol_transactions", s.protocol_txs.len())
        .row("decoys", s.decoys.len());
    for t in &s.planted {
        r.row("planted", t);
    }
    Ok(r.render(settings.format))
}
