// SPDX-License-Identifier: Apache-2.0

//! Two-stage asset discovery over chain snapshots.
//!
//! The prefilter reads the 4-byte locktime of every transaction and keeps those in the
//! protocol band whose `(magic, type)` pair is registered. Deep validation then parses
//! only the candidates and groups them into assets. Candidates that fit no asset are
//! counted as collisions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::assets::{binding_hash, Scheme, VARIANT_GENESIS, VARIANT_SINGLE, VARIANT_TOKENIZATION, VARIANT_TRANSFER, VARIANT_TWO_TX};
use crate::header::{in_protocol_range, LockchainHeader, MAX_SAFE_FIRST_BYTE, MIN_SAFE_FIRST_BYTE};
use crate::merkle::Hash32;
use crate::snapshot::{ByteSource, CountingSource, Snapshot, SnapshotError};
use crate::tx::{OutPoint, ScriptKind, Transaction, Txid};

// ---------------------------------------------------------------------------
// registry

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("duplicate entry {magic:02X} {typ:02X}")]
    DuplicateEntry { magic: u8, typ: u8 },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("magic {0:#04x} is outside the protocol band")]
    MagicOutOfBand(u8),
    #[error("{0}")]
    Io(String),
}

/// How deep validation treats a registered `(magic, type)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegistryScheme {
    Sharding,
    Static,
    Bound,
}

impl RegistryScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            RegistryScheme::Sharding => "sharding",
            RegistryScheme::Static => "static",
            RegistryScheme::Bound => "bound",
        }
    }
}

impl FromStr for RegistryScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sharding" => Ok(RegistryScheme::Sharding),
            "static" => Ok(RegistryScheme::Static),
            "bound" => Ok(RegistryScheme::Bound),
            other => Err(format!("unknown scheme {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub name: String,
    pub scheme: RegistryScheme,
    /// Accepted variant bytes; empty accepts any.
    pub variants: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<(u8, u8), RegistryEntry>,
}

pub const DEFAULT_REGISTRY: &str = "\
# magic type name scheme [variants]
4C 01 lockchain-poc1 sharding
4C 02 lockchain-poc2 static 73
4C 03 lockchain-poc3 bound 67 74 78
";

fn hex_byte(s: &str) -> Option<u8> {
    (s.len() == 2).then(|| u8::from_str_radix(s, 16).ok()).flatten()
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lockchain_default() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("default registry parses")
    }

    pub fn insert(&mut self, magic: u8, typ: u8, entry: RegistryEntry) -> Result<(), RegistryError> {
        if !(MIN_SAFE_FIRST_BYTE..=MAX_SAFE_FIRST_BYTE).contains(&magic) {
            return Err(RegistryError::MagicOutOfBand(magic));
        }
        if self.entries.contains_key(&(magic, typ)) {
            return Err(RegistryError::DuplicateEntry { magic, typ });
        }
        self.entries.insert((magic, typ), entry);
        Ok(())
    }

    pub fn get(&self, magic: u8, typ: u8) -> Option<&RegistryEntry> {
        self.entries.get(&(magic, typ))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u8, u8), &RegistryEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Registry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: &str| RegistryError::MalformedLine { line: i + 1, reason: reason.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 4 {
                return Err(malformed("expected MAGIC TYPE NAME SCHEME [VARIANTS]"));
            }
            let magic = hex_byte(parts[0]).ok_or_else(|| malformed("bad magic"))?;
            let typ = hex_byte(parts[1]).ok_or_else(|| malformed("bad type"))?;
            let scheme = parts[3].parse().map_err(|e: String| malformed(&e))?;
            let variants = parts[4..]
                .iter()
                .map(|v| hex_byte(v).ok_or_else(|| malformed("bad variant")))
                .collect::<Result<_, _>>()?;
            reg.insert(magic, typ, RegistryEntry { name: parts[2].to_string(), scheme, variants })?;
        }
        Ok(reg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# magic type name scheme [variants]\n");
        for ((m, t), e) in &self.entries {
            let _ = write!(out, "{m:02X} {t:02X} {} {}", e.name, e.scheme.as_str());
            for v in &e.variants {
                let _ = write!(out, " {v:02X}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_text()).map_err(|e| RegistryError::Io(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// scanning

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub index: usize,
    pub header: LockchainHeader,
    pub scheme: RegistryScheme,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Validation {
    pub structure_ok: bool,
    pub hash_ok: bool,
    pub binding_ok: bool,
    pub sequence_ok: bool,
}

impl Validation {
    pub fn all(&self) -> bool {
        self.structure_ok && self.hash_ok && self.binding_ok && self.sequence_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveredToken {
    pub outpoint: OutPoint,
    pub value: u64,
    pub transfer_count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetRecord {
    pub scheme: Scheme,
    pub header: LockchainHeader,
    /// Genesis first, then tokenization or shards, then transfers in chain order.
    pub txids: Vec<Txid>,
    /// Merkle root, or the embedded content hash for sharded data.
    pub commitment: Option<Hash32>,
    pub binding_hash: Option<Hash32>,
    pub tokens: Vec<DiscoveredToken>,
    pub validation: Validation,
}

impl AssetRecord {
    pub fn genesis_txid(&self) -> Txid {
        self.txids[0]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub transactions: usize,
    pub candidates: usize,
    pub confirmed_assets: Vec<AssetRecord>,
    /// Assets whose transactions were found but failed at least one check.
    pub unconfirmed_assets: Vec<AssetRecord>,
    pub collisions_rejected: usize,
    pub bytes_prefilter: u64,
    pub bytes_deep: u64,
    pub total_chain_bytes: u64,
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

/// Stage 1: one 4-byte read per transaction.
pub fn prefilter<S: ByteSource>(
    snapshot: &Snapshot<S>,
    registry: &Registry,
) -> Result<Vec<Candidate>, SnapshotError> {
    let mut out = Vec::new();
    for index in 0..snapshot.tx_count() {
        let lt = snapshot.locktime(index)?;
        if !in_protocol_range(lt, snapshot.clock()) {
            continue;
        }
        let header = LockchainHeader::from_locktime(lt);
        if let Some(e) = registry.get(header.magic, header.typ) {
            out.push(Candidate { index, header, scheme: e.scheme });
        }
    }
    Ok(out)
}

struct Loaded {
    cand: Candidate,
    tx: Transaction,
    txid: Txid,
}

fn op_return_at(tx: &Transaction, vout: usize) -> Option<&[u8]> {
    tx.outputs.get(vout).and_then(|o| o.script.op_return_payload())
}

fn root_at_zero(tx: &Transaction) -> Option<Hash32> {
    op_return_at(tx, 0).and_then(|p| p.try_into().ok())
}

/// Stage 2: parse candidates and group them into assets.
pub fn deep_validate<S: ByteSource>(
    snapshot: &Snapshot<S>,
    registry: &Registry,
    candidates: &[Candidate],
) -> Result<(Vec<AssetRecord>, usize), SnapshotError> {
    let mut loaded = Vec::with_capacity(candidates.len());
    let mut unparsable = 0;
    for c in candidates {
        let variant_ok = registry
            .get(c.header.magic, c.header.typ)
            .is_some_and(|e| e.variants.is_empty() || e.variants.contains(&c.header.variant));
        if !variant_ok {
            unparsable += 1;
            continue;
        }
        match snapshot.transaction(c.index) {
            Ok(tx) => {
                let txid = tx.txid();
                loaded.push(Loaded { cand: *c, tx, txid });
            }
            Err(SnapshotError::BadTransaction { .. }) => unparsable += 1,
            Err(e) => return Err(e),
        }
    }
    let mut v = Validator::new(&loaded);
    v.run();
    let collisions = unparsable + loaded.len() - v.attributed.len();
    Ok((v.records.into_iter().map(|(_, r)| r).collect(), collisions))
}

struct Validator<'a> {
    txs: &'a [Loaded],
    /// First-input spends among candidates.
    spender: HashMap<OutPoint, usize>,
    /// Any-input spends of a txid among candidates.
    children: HashMap<Txid, Vec<usize>>,
    attributed: BTreeSet<usize>,
    records: Vec<(usize, AssetRecord)>,
}

impl<'a> Validator<'a> {
    fn new(txs: &'a [Loaded]) -> Self {
        let mut spender = HashMap::new();
        let mut children: HashMap<Txid, Vec<usize>> = HashMap::new();
        for (i, l) in txs.iter().enumerate() {
            if let Some(inp) = l.tx.inputs.first() {
                spender.entry(inp.previous_output).or_insert(i);
            }
            for inp in &l.tx.inputs {
                let kids = children.entry(inp.previous_output.txid).or_default();
                if kids.last() != Some(&i) {
                    kids.push(i);
                }
            }
        }
        Validator { txs, spender, children, attributed: BTreeSet::new(), records: Vec::new() }
    }

    fn header(&self, i: usize) -> LockchainHeader {
        self.txs[i].cand.header
    }

    fn run(&mut self) {
        for i in 0..self.txs.len() {
            let h = self.header(i);
            match (self.txs[i].cand.scheme, h.variant, h.sequence) {
                (RegistryScheme::Sharding, _, 0) => self.sharded(i),
                (RegistryScheme::Static, VARIANT_SINGLE, _) => self.single(i),
                (RegistryScheme::Bound, VARIANT_TWO_TX, 0) => self.two_tx(i),
                (RegistryScheme::Bound, VARIANT_GENESIS, 0) => self.multisig(i),
                _ => {}
            }
        }
        // genesis order follows snapshot order
        let txs = self.txs;
        self.records.sort_by_key(|(i, _)| txs[*i].cand.index);
    }

    fn push(&mut self, genesis: usize, members: &[usize], record: AssetRecord) {
        self.attributed.extend(members.iter().copied());
        self.records.push((genesis, record));
    }

    fn sharded(&mut self, g: usize) {
        let txs = self.txs;
        let funding = &txs[g];
        let Some(hash) = op_return_at(&funding.tx, 0).filter(|p| p.len() > 32).map(|p| -> Hash32 { p[..32].try_into().unwrap() }) else {
            return;
        };
        let mut members = vec![g];
        let mut seqs = BTreeSet::from([0u8]);
        let mut sequence_ok = true;
        let mut structure_ok = true;
        let mut hash_ok = true;
        for &c in self.children.get(&funding.txid).into_iter().flatten() {
            let l = &txs[c];
            let h = l.cand.header;
            if l.cand.scheme != RegistryScheme::Sharding || h.sequence == 0 || self.attributed.contains(&c) {
                continue;
            }
            members.push(c);
            sequence_ok &= seqs.insert(h.sequence);
            structure_ok &= l.tx.inputs.len() == 1 && l.tx.inputs[0].previous_output.vout == h.sequence as u32;
            match op_return_at(&l.tx, 0).filter(|p| p.len() > 32) {
                Some(p) => hash_ok &= p[..32] == hash,
                None => structure_ok = false,
            }
        }
        let n = seqs.len();
        sequence_ok &= seqs.iter().enumerate().all(|(k, &s)| s as usize == k);
        structure_ok &= funding.tx.outputs.len() > n && funding.tx.outputs[1..n].iter().all(|o| !o.script.is_op_return());
        members[1..].sort_by_key(|&c| self.header(c).sequence);
        let txids = members.iter().map(|&i| txs[i].txid).collect();
        let record = AssetRecord {
            scheme: Scheme::Sharding,
            header: funding.cand.header,
            txids,
            commitment: Some(hash),
            binding_hash: None,
            tokens: Vec::new(),
            validation: Validation { structure_ok, hash_ok, binding_ok: true, sequence_ok },
        };
        self.push(g, &members, record);
    }

    /// Tokens are the run of identical outputs starting at vout 1.
    fn dust_run(tx: &Transaction) -> Vec<DiscoveredToken> {
        let Some(first) = tx.outputs.get(1).filter(|o| !o.script.is_op_return()) else { return Vec::new() };
        tx.outputs[1..]
            .iter()
            .take_while(|o| o.value == first.value && o.script == first.script)
            .enumerate()
            .map(|(k, o)| DiscoveredToken { outpoint: OutPoint::new(tx.txid(), k as u32 + 1), value: o.value, transfer_count: 0 })
            .collect()
    }

    fn single(&mut self, g: usize) {
        let l = &self.txs[g];
        let Some(root) = root_at_zero(&l.tx) else { return };
        let tokens = Self::dust_run(&l.tx);
        if tokens.is_empty() {
            return;
        }
        let record = AssetRecord {
            scheme: Scheme::Single,
            header: l.cand.header,
            txids: vec![l.txid],
            commitment: Some(root),
            binding_hash: None,
            tokens,
            validation: Validation {
                structure_ok: true,
                hash_ok: true,
                binding_ok: true,
                sequence_ok: l.cand.header.sequence == 1,
            },
        };
        self.push(g, &[g], record);
    }

    fn is_tokenization(&self, i: usize) -> bool {
        let h = self.header(i);
        h.variant == VARIANT_TOKENIZATION && h.sequence == 1 && !self.attributed.contains(&i)
    }

    fn two_tx(&mut self, g: usize) {
        let txs = self.txs;
        let l = &txs[g];
        let Some(root) = root_at_zero(&l.tx) else { return };
        let binding = binding_hash(&l.txid, &root);
        let partner = (0..self.txs.len()).find(|&i| {
            self.is_tokenization(i) && root_at_zero(&txs[i].tx) == Some(binding)
        });
        let mut members = vec![g];
        let mut tokens = Vec::new();
        if let Some(p) = partner {
            members.push(p);
            tokens = Self::dust_run(&txs[p].tx);
        }
        let record = AssetRecord {
            scheme: Scheme::TwoTx,
            header: l.cand.header,
            txids: members.iter().map(|&i| txs[i].txid).collect(),
            commitment: Some(root),
            binding_hash: Some(binding),
            tokens: tokens.clone(),
            validation: Validation {
                structure_ok: !tokens.is_empty(),
                hash_ok: true,
                binding_ok: partner.is_some(),
                sequence_ok: partner.is_some(),
            },
        };
        self.push(g, &members, record);
    }

    fn multisig(&mut self, g: usize) {
        let txs = self.txs;
        let l = &txs[g];
        let Some(root) = root_at_zero(&l.tx) else { return };
        let partner = self
            .children
            .get(&l.txid)
            .into_iter()
            .flatten()
            .copied()
            .find(|&i| self.is_tokenization(i) && root_at_zero(&txs[i].tx).is_none());
        let mut members = vec![g];
        let mut record = AssetRecord {
            scheme: Scheme::Multisig,
            header: l.cand.header,
            txids: vec![l.txid],
            commitment: Some(root),
            binding_hash: Some(binding_hash(&l.txid, &root)),
            tokens: Vec::new(),
            validation: Validation { structure_ok: false, hash_ok: true, binding_ok: partner.is_some(), sequence_ok: true },
        };
        if let Some(p) = partner {
            let tx2 = &txs[p];
            members.push(p);
            record.txids.push(tx2.txid);
            let tokens: Vec<_> = tx2
                .tx
                .outputs
                .iter()
                .enumerate()
                .filter(|(_, o)| matches!(o.script, ScriptKind::P2wsh(_)))
                .map(|(v, o)| DiscoveredToken { outpoint: OutPoint::new(tx2.txid, v as u32), value: o.value, transfer_count: 0 })
                .collect();
            record.validation.structure_ok = !tokens.is_empty() && tokens.iter().all(|t| t.value == tokens[0].value);
            let mut transfers = Vec::new();
            for mut token in tokens {
                while let Some(&t) = self.spender.get(&token.outpoint) {
                    let l = &txs[t];
                    let h = l.cand.header;
                    if h.variant != VARIANT_TRANSFER || members.contains(&t) {
                        break;
                    }
                    members.push(t);
                    transfers.push(t);
                    let out0 = l.tx.outputs.first();
                    let intact = out0.is_some_and(|o| matches!(o.script, ScriptKind::P2wsh(_)) && o.value == token.value);
                    record.validation.structure_ok &= intact;
                    record.validation.sequence_ok &= token.transfer_count.checked_add(1) == Some(h.sequence);
                    token.outpoint = OutPoint::new(l.txid, 0);
                    token.transfer_count = h.sequence;
                }
                record.tokens.push(token);
            }
            transfers.sort_by_key(|&t| txs[t].cand.index);
            record.txids.extend(transfers.iter().map(|&t| txs[t].txid));
        }
        self.push(g, &members, record);
    }
}

fn split_records(records: Vec<AssetRecord>) -> (Vec<AssetRecord>, Vec<AssetRecord>) {
    records.into_iter().partition(|r| r.validation.all())
}

/// Prefilter plus deep validation, with byte accounting through a counting reader.
pub fn scan<S: ByteSource>(source: S, registry: &Registry) -> Result<ScanReport, ScanError> {
    let snapshot = Snapshot::open(CountingSource::new(source))?;
    let opened = snapshot.source().bytes_read();
    let candidates = prefilter(&snapshot, registry)?;
    let after_prefilter = snapshot.source().bytes_read();
    let (records, collisions) = deep_validate(&snapshot, registry, &candidates)?;
    let after_deep = snapshot.source().bytes_read();
    let (confirmed, unconfirmed) = split_records(records);
    Ok(ScanReport {
        transactions: snapshot.tx_count(),
        candidates: candidates.len(),
        confirmed_assets: confirmed,
        unconfirmed_assets: unconfirmed,
        collisions_rejected: collisions,
        bytes_prefilter: after_prefilter - opened,
        bytes_deep: after_deep - after_prefilter,
        total_chain_bytes: snapshot.total_tx_bytes(),
    })
}

/// Baseline without the header stage: every transaction is read and parsed.
pub fn scan_deep_all<S: ByteSource>(source: S, registry: &Registry) -> Result<ScanReport, ScanError> {
    let snapshot = Snapshot::open(CountingSource::new(source))?;
    let opened = snapshot.source().bytes_read();
    let mut candidates = Vec::new();
    for index in 0..snapshot.tx_count() {
        let tx = match snapshot.transaction(index) {
            Ok(tx) => tx,
            Err(SnapshotError::BadTransaction { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let lt = tx.locktime;
        let header = LockchainHeader::from_locktime(lt);
        if in_protocol_range(lt, snapshot.clock()) {
            if let Some(e) = registry.get(header.magic, header.typ) {
                candidates.push(Candidate { index, header, scheme: e.scheme });
            }
        }
    }
    // the full pass already read every body; deep validation re-reads candidates
    let full_pass = snapshot.source().bytes_read() - opened;
    let (records, collisions) = deep_validate(&snapshot, registry, &candidates)?;
    let (confirmed, unconfirmed) = split_records(records);
    Ok(ScanReport {
        transactions: snapshot.tx_count(),
        candidates: candidates.len(),
        confirmed_assets: confirmed,
        unconfirmed_assets: unconfirmed,
        collisions_rejected: collisions,
        bytes_prefilter: 0,
        bytes_deep: full_pass,
        total_chain_bytes: snapshot.total_tx_bytes(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanStats {
    pub bytes_prefilter: u64,
    pub bytes_deep: u64,
    pub total_chain_bytes: u64,
    pub ratio: f64,
    pub recall: Option<f64>,
}

/// `ratio = (prefilter + deep) / total`; recall over planted genesis txids when given.
pub fn scan_stats(report: &ScanReport, planted: Option<&[Txid]>) -> ScanStats {
    let inspected = report.bytes_prefilter + report.bytes_deep;
    let ratio = if report.total_chain_bytes == 0 { 0.0 } else { inspected as f64 / report.total_chain_bytes as f64 };
    let recall = planted.map(|p| {
        if p.is_empty() {
            return 1.0;
        }
        let found: BTreeSet<Txid> = report.confirmed_assets.iter().map(AssetRecord::genesis_txid).collect();
        p.iter().filter(|t| found.contains(t)).count() as f64 / p.len() as f64
    });
    ScanStats {
        bytes_prefilter: report.bytes_prefilter,
        bytes_deep: report.bytes_deep,
        total_chain_bytes: report.total_chain_bytes,
        ratio,
        recall,
    }
}

// ---------------------------------------------------------------------------
// index file

/// Confirmed assets as `key: value` blocks separated by blank lines, keyed by genesis txid.
pub fn index_text(records: &[AssetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "asset: {}", r.genesis_txid());
        let _ = writeln!(out, "scheme: {}", r.scheme);
        let _ = writeln!(out, "header: {:08x}", r.header.to_locktime());
        for t in &r.txids[1..] {
            let _ = writeln!(out, "txid: {t}");
        }
        if let Some(c) = r.commitment {
            let _ = writeln!(out, "commitment: {}", hex::encode(c));
        }
        if let Some(b) = r.binding_hash {
            let _ = writeln!(out, "binding_hash: {}", hex::encode(b));
        }
        for t in &r.tokens {
            let _ = writeln!(out, "token: {} {} {}", t.outpoint, t.value, t.transfer_count);
        }
        out.push('\n');
    }
    out
}

pub fn write_index(records: &[AssetRecord], path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, index_text(records))
}

#[cfg(test)]
mod tests;
