// SPDX-License-Identifier: Apache-2.0

//! Builders and verifiers for the four asset schemes.
//!
//! | scheme   | transactions                          | locktimes                     |
//! |----------|---------------------------------------|-------------------------------|
//! | sharding | funding + one tx per extra shard      | `4C 01 00 kk`                 |
//! | single   | one genesis tx with dust tokens       | `4C 02 73 01`                 |
//! | two-tx   | genesis (root) + tokenization (bind)  | `4C 03 74 00`, `4C 03 74 01`  |
//! | multisig | genesis + 2-of-2 tokens + transfers   | `4C 03 67 00`, `4C 03 74 01`, `4C 03 78 tt` |
//!
//! All builders spend with replace-by-fee sequences and past-valued locktimes, so every
//! protocol transaction is enforced yet immediately minable.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::chain::{ChainError, OwnedUtxo, SimChain};
use crate::hash::{hash_from_hex, sha256};
use crate::header::LockchainHeader;
use crate::merkle::{timestamp_proof, ChunkPlan, Hash32, MerkleCommitment, MerkleError};
use crate::tx::{
    parse_multisig_redeem_script, OutPoint, ScriptKind, Transaction, TxInput, TxOutput, Txid, SEQUENCE_RBF,
};

pub const MAGIC: u8 = 0x4C;
pub const TYPE_SHARDING: u8 = 0x01;
pub const TYPE_STATIC: u8 = 0x02;
pub const TYPE_BOUND: u8 = 0x03;
pub const VARIANT_SINGLE: u8 = 0x73;
pub const VARIANT_TWO_TX: u8 = 0x74;
pub const VARIANT_GENESIS: u8 = 0x67;
pub const VARIANT_TOKENIZATION: u8 = 0x74;
pub const VARIANT_TRANSFER: u8 = 0x78;

pub const HEADER_SHARD_FUNDING: LockchainHeader = LockchainHeader::new(MAGIC, TYPE_SHARDING, 0x00, 0x00);
pub const HEADER_SINGLE: LockchainHeader = LockchainHeader::new(MAGIC, TYPE_STATIC, VARIANT_SINGLE, 0x01);
pub const HEADER_TWO_TX_GENESIS: LockchainHeader = LockchainHeader::new(MAGIC, TYPE_BOUND, VARIANT_TWO_TX, 0x00);
pub const HEADER_TWO_TX_TOKENS: LockchainHeader = LockchainHeader::new(MAGIC, TYPE_BOUND, VARIANT_TWO_TX, 0x01);
pub const HEADER_MULTISIG_GENESIS: LockchainHeader = LockchainHeader::new(MAGIC, TYPE_BOUND, VARIANT_GENESIS, 0x00);
pub const HEADER_MULTISIG_TOKENS: LockchainHeader =
    LockchainHeader::new(MAGIC, TYPE_BOUND, VARIANT_TOKENIZATION, 0x01);

pub fn shard_header(sequence: u8) -> LockchainHeader {
    LockchainHeader::new(MAGIC, TYPE_SHARDING, 0x00, sequence)
}

pub fn transfer_header(count: u8) -> LockchainHeader {
    LockchainHeader::new(MAGIC, TYPE_BOUND, VARIANT_TRANSFER, count)
}

const HASH_LEN: usize = 32;

/// Tunable protocol parameters. Header bytes are fixed and live in the constants above.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConstants {
    pub dust_value: u64,
    pub op_return_limit: usize,
    /// Flat network fee paid by each non-shard transaction unless a stage override is set.
    pub network_fee: u64,
    pub genesis_fee: Option<u64>,
    pub transfer_fee: Option<u64>,
    /// Fee assumed while selecting inputs, when it differs from the fee finally paid.
    pub selection_fee: Option<u64>,
    /// Value of each funding output consumed as the fee of one shard transaction.
    pub shard_fee_budget: u64,
    pub protocol_fee_bps: u64,
    pub protocol_fee_min: u64,
    /// Only outputs strictly above this value are used for funding.
    pub min_usable_utxo: u64,
    pub fee_recipient: String,
}

impl Default for ProtocolConstants {
    fn default() -> Self {
        ProtocolConstants {
            dust_value: 546,
            op_return_limit: 80,
            network_fee: 2_000,
            genesis_fee: None,
            transfer_fee: None,
            selection_fee: None,
            shard_fee_budget: 1_200,
            protocol_fee_bps: 1_000,
            protocol_fee_min: 546,
            min_usable_utxo: 1_000,
            fee_recipient: "protocol".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeeStage {
    /// Funding, single-tx and root-commitment transactions.
    Genesis,
    Tokenization,
    Transfer,
}

impl ProtocolConstants {
    pub fn fee(&self, stage: FeeStage) -> u64 {
        let over = match stage {
            FeeStage::Genesis => self.genesis_fee,
            FeeStage::Tokenization => None,
            FeeStage::Transfer => self.transfer_fee,
        };
        over.unwrap_or(self.network_fee)
    }

    pub fn selection(&self, stage: FeeStage) -> u64 {
        self.selection_fee.unwrap_or(self.fee(stage))
    }

    pub fn percent_of(&self, amount: u64) -> u64 {
        amount * self.protocol_fee_bps / 10_000
    }

    pub fn clamp_fee(&self, fee: u64) -> u64 {
        fee.max(self.protocol_fee_min)
    }

    /// Protocol fee for a scheme whose tokens all live in one transaction.
    pub fn token_protocol_fee(&self, n_tokens: usize) -> u64 {
        self.clamp_fee(self.percent_of(n_tokens as u64 * self.dust_value))
    }

    /// Two-transaction fee, collected up front: a share of the network fee plus a share of token value.
    pub fn two_tx_protocol_fee(&self, n_tokens: usize) -> u64 {
        self.clamp_fee(self.percent_of(self.network_fee) + self.percent_of(n_tokens as u64 * self.dust_value))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssetError {
    #[error("no data")]
    DataEmpty,
    #[error("need {needed} sats, {available} usable")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("{0} shards exceed the 8-bit sequence space")]
    TooManyShards(usize),
    #[error("op_return limit {0} leaves no room after the 32-byte hash")]
    OpReturnTooSmall(usize),
    #[error("genesis transaction {0} has not been accepted")]
    Tx1NotAccepted(Txid),
    #[error("shard {0} missing")]
    MissingShard(u8),
    #[error("shard {0} appears twice")]
    DuplicateSequence(u8),
    #[error("shard {0} has no hash-prefixed payload")]
    MalformedShard(u8),
    #[error("hash mismatch")]
    HashMismatch,
    #[error("hex value must be 64 characters: {0}")]
    BadHexLength(String),
    #[error("token {0} is already spent")]
    TokenSpent(OutPoint),
    #[error("transfer count is already 255")]
    SequenceOverflow,
    #[error("locktime {0:#010x} is not a transfer header")]
    WrongVariant(u32),
    #[error("transfer sequence {got}, expected {expected}")]
    BadSequence { got: u8, expected: u8 },
    #[error("output 0 is not a 2-of-2 with the service key")]
    NotServiceMultisig,
    #[error("token value changed from {expected} to {got}")]
    ValueChanged { expected: u64, got: u64 },
    #[error("input 0 carries no owner attestation")]
    MissingOwnerAttestation,
    #[error("unknown signer {0}")]
    UnknownSigner(String),
    #[error("no token {0}")]
    NoSuchToken(usize),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl AssetError {
    pub fn reason(&self) -> &'static str {
        match self {
            AssetError::DataEmpty => "DataEmpty",
            AssetError::InsufficientFunds { .. } => "InsufficientFunds",
            AssetError::TooManyShards(_) => "TooManyShards",
            AssetError::OpReturnTooSmall(_) => "OpReturnTooSmall",
            AssetError::Tx1NotAccepted(_) => "Tx1NotAccepted",
            AssetError::MissingShard(_) => "MissingShard",
            AssetError::DuplicateSequence(_) => "DuplicateSequence",
            AssetError::MalformedShard(_) => "MalformedShard",
            AssetError::HashMismatch => "HashMismatch",
            AssetError::BadHexLength(_) => "BadHexLength",
            AssetError::TokenSpent(_) => "TokenSpent",
            AssetError::SequenceOverflow => "SequenceOverflow",
            AssetError::WrongVariant(_) => "WrongVariant",
            AssetError::BadSequence { .. } => "BadSequence",
            AssetError::NotServiceMultisig => "NotServiceMultisig",
            AssetError::ValueChanged { .. } => "ValueChanged",
            AssetError::MissingOwnerAttestation => "MissingOwnerAttestation",
            AssetError::UnknownSigner(_) => "UnknownSigner",
            AssetError::NoSuchToken(_) => "NoSuchToken",
            AssetError::Merkle(MerkleError::TooManyChunks { .. }) => "TooManyChunks",
            AssetError::Merkle(_) => "BadChunking",
            AssetError::Chain(e) => e.reason(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Sharding,
    Single,
    TwoTx,
    Multisig,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Sharding => "sharding",
            Scheme::Single => "single",
            Scheme::TwoTx => "two-tx",
            Scheme::Multisig => "multisig",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sharding" => Ok(Scheme::Sharding),
            "single" => Ok(Scheme::Single),
            "two-tx" => Ok(Scheme::TwoTx),
            "multisig" => Ok(Scheme::Multisig),
            other => Err(format!("unknown scheme {other}")),
        }
    }
}

// ---------------------------------------------------------------------------
// binding

/// Display-order txid bytes followed by the raw root.
pub fn binding_preimage(genesis: &Txid, root: &Hash32) -> [u8; 64] {
    let mut out = [0u8; 64];
    out[..32].copy_from_slice(&genesis.display_bytes());
    out[32..].copy_from_slice(root);
    out
}

pub fn binding_preimage_hex(genesis_txid_hex: &str, merkle_root_hex: &str) -> Result<[u8; 64], AssetError> {
    let txid = hash_from_hex(genesis_txid_hex).ok_or_else(|| AssetError::BadHexLength(genesis_txid_hex.into()))?;
    let root = hash_from_hex(merkle_root_hex).ok_or_else(|| AssetError::BadHexLength(merkle_root_hex.into()))?;
    Ok(binding_preimage(&Txid::from_display_bytes(txid), &root))
}

pub fn binding_hash(genesis: &Txid, root: &Hash32) -> Hash32 {
    sha256(&binding_preimage(genesis, root))
}

// ---------------------------------------------------------------------------
// funding helpers

/// Largest-first over outputs above `min_usable_utxo`, ties by outpoint. `preferred`
/// outputs are taken first regardless of size.
fn select_inputs(
    chain: &SimChain,
    owner: &str,
    needed: u64,
    preferred: &[OutPoint],
    params: &ProtocolConstants,
) -> Result<Vec<OwnedUtxo>, AssetError> {
    let spendable = chain.spendable_by(owner);
    let (mut first, rest): (Vec<_>, Vec<_>) = spendable.into_iter().partition(|u| preferred.contains(&u.outpoint));
    let mut usable: Vec<_> = rest.into_iter().filter(|u| u.value > params.min_usable_utxo).collect();
    usable.sort_by(|a, b| b.value.cmp(&a.value).then(a.outpoint.cmp(&b.outpoint)));
    first.extend(usable);

    let mut selected = Vec::new();
    let mut total = 0u64;
    for u in first {
        if total >= needed {
            break;
        }
        total += u.value;
        selected.push(u);
    }
    if total < needed {
        return Err(AssetError::InsufficientFunds { needed, available: total });
    }
    Ok(selected)
}

fn script_for(chain: &SimChain, id: &str) -> Result<ScriptKind, AssetError> {
    chain.signers().p2wpkh(id).ok_or_else(|| AssetError::UnknownSigner(id.to_string()))
}

/// Appends change when it clears the dust limit; otherwise it stays with the fee.
fn push_change(
    chain: &SimChain,
    outputs: &mut Vec<TxOutput>,
    inputs: &[OwnedUtxo],
    network_fee: u64,
    owner: &str,
) -> Result<Option<u32>, AssetError> {
    let total_in: u64 = inputs.iter().map(|u| u.value).sum();
    let total_out: u64 = outputs.iter().map(|o| o.value).sum();
    let change = total_in.saturating_sub(total_out + network_fee);
    if change >= chain.config().dust_limit {
        outputs.push(TxOutput::new(change, script_for(chain, owner)?));
        return Ok(Some(outputs.len() as u32 - 1));
    }
    Ok(None)
}

fn signed_tx(chain: &SimChain, inputs: &[OwnedUtxo], outputs: Vec<TxOutput>, locktime: u32, signer: &str) -> Transaction {
    let mut tx = Transaction::new(
        inputs.iter().map(|u| TxInput::new(u.outpoint, SEQUENCE_RBF)).collect(),
        outputs,
        locktime,
    );
    chain.signers().attest_all(&mut tx, signer);
    tx
}

// ---------------------------------------------------------------------------
// sharding

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardedAsset {
    pub funding_txid: Txid,
    /// Index `k` holds the transaction carrying sequence `k`; index 0 is the funding tx.
    pub shard_txids: Vec<Txid>,
    pub data_hash: Hash32,
    pub timestamp: u32,
    pub data_len: usize,
    pub network_fee: u64,
    pub protocol_fee: u64,
}

impl ShardedAsset {
    pub fn n_shards(&self) -> usize {
        self.shard_txids.len()
    }

    pub fn locktimes(&self) -> Vec<u32> {
        (0..self.n_shards()).map(|k| shard_header(k as u8).to_locktime()).collect()
    }
}

/// Splits `data` across OP_RETURN outputs, one shard per transaction, each prefixed by
/// the timestamped content hash.
pub fn poc1_issue(
    chain: &mut SimChain,
    data: &[u8],
    issuer: &str,
    params: &ProtocolConstants,
) -> Result<ShardedAsset, AssetError> {
    if data.is_empty() {
        return Err(AssetError::DataEmpty);
    }
    if params.op_return_limit <= HASH_LEN {
        return Err(AssetError::OpReturnTooSmall(params.op_return_limit));
    }
    let plan = ChunkPlan::by_size(data.len(), params.op_return_limit - HASH_LEN)?;
    let n = plan.n_chunks;
    if n > 256 {
        return Err(AssetError::TooManyShards(n));
    }
    let chunks = plan.split(data);
    let proof = timestamp_proof(data, chain.now());
    let shard_payload = |k: usize| [&proof.digest[..], chunks[k]].concat();

    let issuer_script = script_for(chain, issuer)?;
    let network_fee = n as u64 * params.shard_fee_budget;
    let protocol_fee = params.clamp_fee(params.percent_of(network_fee));

    let mut outputs = vec![TxOutput::op_return(shard_payload(0))];
    outputs.extend((1..n).map(|_| TxOutput::new(params.shard_fee_budget, issuer_script.clone())));
    outputs.push(TxOutput::new(protocol_fee, script_for(chain, &params.fee_recipient)?));
    let needed = (n as u64 - 1) * params.shard_fee_budget + protocol_fee + params.selection(FeeStage::Genesis);
    let inputs = select_inputs(chain, issuer, needed, &[], params)?;
    push_change(chain, &mut outputs, &inputs, params.fee(FeeStage::Genesis), issuer)?;
    let funding = signed_tx(chain, &inputs, outputs, HEADER_SHARD_FUNDING.to_locktime(), issuer);
    let funding_txid = chain.broadcast(funding)?;

    let mut shard_txids = vec![funding_txid];
    for k in 1..n {
        let mut tx = Transaction::new(
            vec![TxInput::new(OutPoint::new(funding_txid, k as u32), SEQUENCE_RBF)],
            vec![TxOutput::op_return(shard_payload(k))],
            shard_header(k as u8).to_locktime(),
        );
        chain.signers().attest_all(&mut tx, issuer);
        shard_txids.push(chain.broadcast(tx)?);
    }
    Ok(ShardedAsset {
        funding_txid,
        shard_txids,
        data_hash: proof.digest,
        timestamp: proof.timestamp,
        data_len: data.len(),
        network_fee,
        protocol_fee,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reassembled {
    pub data: Vec<u8>,
    pub data_hash: Hash32,
}

/// Orders shards by their locktime sequence byte and concatenates payloads. When a
/// timestamp is given the embedded hash must equal `SHA256(data || timestamp)`.
pub fn poc1_reassemble(txs: &[Transaction], timestamp: Option<u32>) -> Result<Reassembled, AssetError> {
    let mut by_seq: BTreeMap<u8, &[u8]> = BTreeMap::new();
    for tx in txs {
        let h = LockchainHeader::from_locktime(tx.locktime);
        if h.magic != MAGIC || h.typ != TYPE_SHARDING {
            continue;
        }
        let payload = tx
            .outputs
            .first()
            .and_then(|o| o.script.op_return_payload())
            .filter(|p| p.len() > HASH_LEN)
            .ok_or(AssetError::MalformedShard(h.sequence))?;
        if by_seq.insert(h.sequence, payload).is_some() {
            return Err(AssetError::DuplicateSequence(h.sequence));
        }
    }
    let Some((&last, _)) = by_seq.last_key_value() else { return Err(AssetError::DataEmpty) };
    if let Some(gap) = (0..=last).find(|s| !by_seq.contains_key(s)) {
        return Err(AssetError::MissingShard(gap));
    }
    let data_hash: Hash32 = by_seq[&0][..HASH_LEN].try_into().unwrap();
    if by_seq.values().any(|p| p[..HASH_LEN] != data_hash) {
        return Err(AssetError::HashMismatch);
    }
    let data: Vec<u8> = by_seq.values().flat_map(|p| p[HASH_LEN..].iter().copied()).collect();
    if let Some(ts) = timestamp {
        if !(crate::merkle::TimestampProof { timestamp: ts, digest: data_hash }).verify(&data) {
            return Err(AssetError::HashMismatch);
        }
    }
    Ok(Reassembled { data, data_hash })
}

// ---------------------------------------------------------------------------
// static assets

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub outpoint: OutPoint,
    pub value: u64,
    pub owner: String,
    pub transfer_count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub token: usize,
    pub txid: Txid,
    pub locktime: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticAsset {
    pub scheme: Scheme,
    pub genesis_txid: Txid,
    pub genesis_locktime: u32,
    pub tokenization_txid: Option<Txid>,
    pub tokenization_locktime: Option<u32>,
    pub merkle_root: Hash32,
    pub binding_hash: Option<Hash32>,
    pub plan: ChunkPlan,
    pub issuer: String,
    pub service: Option<String>,
    pub protocol_fee: u64,
    pub tokens: Vec<Token>,
    pub history: Vec<TransferRecord>,
}

impl StaticAsset {
    /// The transaction holding the tokens.
    pub fn token_txid(&self) -> Txid {
        self.tokenization_txid.unwrap_or(self.genesis_txid)
    }

    pub fn token_outpoints(&self) -> Vec<OutPoint> {
        self.tokens.iter().map(|t| t.outpoint).collect()
    }

    pub fn binding_is_valid(&self) -> bool {
        match self.binding_hash {
            Some(b) => b == binding_hash(&self.genesis_txid, &self.merkle_root),
            None => self.scheme == Scheme::Single,
        }
    }
}

fn dust_tokens(n: usize, params: &ProtocolConstants, script: &ScriptKind) -> Vec<TxOutput> {
    (0..n).map(|_| TxOutput::new(params.dust_value, script.clone())).collect()
}

fn make_tokens(txid: Txid, vouts: impl Iterator<Item = u32>, value: u64, owner: &str) -> Vec<Token> {
    vouts
        .map(|v| Token { outpoint: OutPoint::new(txid, v), value, owner: owner.to_string(), transfer_count: 0 })
        .collect()
}

/// Single transaction: root commitment, `n_chunks` dust tokens, protocol fee, change.
pub fn poc2_issue(
    chain: &mut SimChain,
    data: &[u8],
    n_chunks: usize,
    issuer: &str,
    params: &ProtocolConstants,
) -> Result<StaticAsset, AssetError> {
    let commitment = MerkleCommitment::build(data, n_chunks)?;
    let issuer_script = script_for(chain, issuer)?;
    let protocol_fee = params.token_protocol_fee(n_chunks);

    let mut outputs = vec![TxOutput::op_return(commitment.root.to_vec())];
    outputs.extend(dust_tokens(n_chunks, params, &issuer_script));
    outputs.push(TxOutput::new(protocol_fee, script_for(chain, &params.fee_recipient)?));
    let needed = n_chunks as u64 * params.dust_value + protocol_fee + params.selection(FeeStage::Genesis);
    let inputs = select_inputs(chain, issuer, needed, &[], params)?;
    push_change(chain, &mut outputs, &inputs, params.fee(FeeStage::Genesis), issuer)?;
    let tx = signed_tx(chain, &inputs, outputs, HEADER_SINGLE.to_locktime(), issuer);
    let txid = chain.broadcast(tx)?;

    Ok(StaticAsset {
        scheme: Scheme::Single,
        genesis_txid: txid,
        genesis_locktime: HEADER_SINGLE.to_locktime(),
        tokenization_txid: None,
        tokenization_locktime: None,
        merkle_root: commitment.root,
        binding_hash: None,
        plan: commitment.plan,
        issuer: issuer.to_string(),
        service: None,
        protocol_fee,
        tokens: make_tokens(txid, 1..=n_chunks as u32, params.dust_value, issuer),
        history: Vec::new(),
    })
}

/// Builds and broadcasts the root-commitment transaction of the two-transaction scheme.
pub fn poc25_genesis(
    chain: &mut SimChain,
    commitment: &MerkleCommitment,
    issuer: &str,
    params: &ProtocolConstants,
) -> Result<(Txid, u64), AssetError> {
    let protocol_fee = params.two_tx_protocol_fee(commitment.plan.n_chunks);
    let mut outputs = vec![
        TxOutput::op_return(commitment.root.to_vec()),
        TxOutput::new(protocol_fee, script_for(chain, &params.fee_recipient)?),
    ];
    let inputs = select_inputs(chain, issuer, protocol_fee + params.selection(FeeStage::Genesis), &[], params)?;
    push_change(chain, &mut outputs, &inputs, params.fee(FeeStage::Genesis), issuer)?;
    let tx = signed_tx(chain, &inputs, outputs, HEADER_TWO_TX_GENESIS.to_locktime(), issuer);
    Ok((chain.broadcast(tx)?, protocol_fee))
}

/// Second transaction: binding hash commitment plus tokens. Requires the genesis
/// transaction to be known to the chain, since its txid enters the binding.
pub fn poc25_tokenize(
    chain: &mut SimChain,
    genesis_txid: Txid,
    merkle_root: &Hash32,
    n_tokens: usize,
    issuer: &str,
    params: &ProtocolConstants,
) -> Result<(Txid, Hash32), AssetError> {
    let genesis = chain.transaction(&genesis_txid).ok_or(AssetError::Tx1NotAccepted(genesis_txid))?;
    let change: Vec<OutPoint> = (0..genesis.outputs.len() as u32).map(|v| OutPoint::new(genesis_txid, v)).collect();
    let binding = binding_hash(&genesis_txid, merkle_root);
    let issuer_script = script_for(chain, issuer)?;

    let mut outputs = vec![TxOutput::op_return(binding.to_vec())];
    outputs.extend(dust_tokens(n_tokens, params, &issuer_script));
    let needed = n_tokens as u64 * params.dust_value + params.selection(FeeStage::Tokenization);
    let inputs = select_inputs(chain, issuer, needed, &change, params)?;
    push_change(chain, &mut outputs, &inputs, params.fee(FeeStage::Tokenization), issuer)?;
    let tx = signed_tx(chain, &inputs, outputs, HEADER_TWO_TX_TOKENS.to_locktime(), issuer);
    Ok((chain.broadcast(tx)?, binding))
}

pub fn poc25_issue(
    chain: &mut SimChain,
    data: &[u8],
    n_chunks: usize,
    issuer: &str,
    params: &ProtocolConstants,
) -> Result<StaticAsset, AssetError> {
    let commitment = MerkleCommitment::build(data, n_chunks)?;
    let (genesis_txid, protocol_fee) = poc25_genesis(chain, &commitment, issuer, params)?;
    let (tokenization_txid, binding) =
        poc25_tokenize(chain, genesis_txid, &commitment.root, n_chunks, issuer, params)?;
    Ok(StaticAsset {
        scheme: Scheme::TwoTx,
        genesis_txid,
        genesis_locktime: HEADER_TWO_TX_GENESIS.to_locktime(),
        tokenization_txid: Some(tokenization_txid),
        tokenization_locktime: Some(HEADER_TWO_TX_TOKENS.to_locktime()),
        merkle_root: commitment.root,
        binding_hash: Some(binding),
        plan: commitment.plan,
        issuer: issuer.to_string(),
        service: None,
        protocol_fee,
        tokens: make_tokens(tokenization_txid, 1..=n_chunks as u32, params.dust_value, issuer),
        history: Vec::new(),
    })
}

/// Genesis plus 2-of-2 (owner, service) tokens. The genesis change funds the
/// tokenization transaction, which links the two on-chain.
pub fn poc3_issue(
    chain: &mut SimChain,
    data: &[u8],
    n_chunks: usize,
    issuer: &str,
    service: &str,
    params: &ProtocolConstants,
) -> Result<StaticAsset, AssetError> {
    let commitment = MerkleCommitment::build(data, n_chunks)?;
    let multisig = chain
        .signers_mut()
        .register_multisig(issuer, service)
        .ok_or_else(|| AssetError::UnknownSigner(format!("{issuer}/{service}")))?;
    let protocol_fee = params.token_protocol_fee(n_chunks);
    let token_budget = n_chunks as u64 * params.dust_value + params.fee(FeeStage::Tokenization);

    let mut outputs = vec![
        TxOutput::op_return(commitment.root.to_vec()),
        TxOutput::new(protocol_fee, script_for(chain, &params.fee_recipient)?),
    ];
    let needed = protocol_fee + params.selection(FeeStage::Genesis) + token_budget;
    let inputs = select_inputs(chain, issuer, needed, &[], params)?;
    let change_vout = push_change(chain, &mut outputs, &inputs, params.fee(FeeStage::Genesis), issuer)?
        .expect("change covers the tokenization budget");
    let genesis = signed_tx(chain, &inputs, outputs, HEADER_MULTISIG_GENESIS.to_locktime(), issuer);
    let genesis_txid = chain.broadcast(genesis)?;

    let change = OutPoint::new(genesis_txid, change_vout);
    let change_utxo = OwnedUtxo {
        outpoint: change,
        value: chain.utxo(&change).map(|u| u.value).unwrap_or_default(),
        script: script_for(chain, issuer)?,
    };
    let token_script = ScriptKind::p2wsh(&multisig);
    let mut outputs = dust_tokens(n_chunks, params, &token_script);
    let funding = [change_utxo];
    push_change(chain, &mut outputs, &funding, params.fee(FeeStage::Tokenization), issuer)?;
    let tokenization = signed_tx(chain, &funding, outputs, HEADER_MULTISIG_TOKENS.to_locktime(), issuer);
    let tokenization_txid = chain.broadcast(tokenization)?;

    Ok(StaticAsset {
        scheme: Scheme::Multisig,
        genesis_txid,
        genesis_locktime: HEADER_MULTISIG_GENESIS.to_locktime(),
        tokenization_txid: Some(tokenization_txid),
        tokenization_locktime: Some(HEADER_MULTISIG_TOKENS.to_locktime()),
        merkle_root: commitment.root,
        binding_hash: Some(binding_hash(&genesis_txid, &commitment.root)),
        plan: commitment.plan,
        issuer: issuer.to_string(),
        service: Some(service.to_string()),
        protocol_fee,
        tokens: make_tokens(tokenization_txid, 0..n_chunks as u32, params.dust_value, issuer),
        history: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// transfers

/// An owner-attested transfer awaiting the service co-signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferProposal {
    pub tx: Transaction,
    /// Witness script of output 0, needed by the service to check the new lock.
    pub new_owner_script: Vec<u8>,
}

pub fn poc3_build_transfer(
    chain: &mut SimChain,
    token: &Token,
    new_owner: &str,
    service: &str,
    fee_source: Option<OutPoint>,
    params: &ProtocolConstants,
) -> Result<TransferProposal, AssetError> {
    if chain.utxo(&token.outpoint).is_none() {
        return Err(AssetError::TokenSpent(token.outpoint));
    }
    let count = token.transfer_count.checked_add(1).ok_or(AssetError::SequenceOverflow)?;
    let script = chain
        .signers_mut()
        .register_multisig(new_owner, service)
        .ok_or_else(|| AssetError::UnknownSigner(format!("{new_owner}/{service}")))?;

    let fee_inputs = match fee_source {
        Some(op) => {
            let u = chain.utxo(&op).ok_or(AssetError::Chain(ChainError::UnknownInput(op)))?;
            vec![OwnedUtxo { outpoint: op, value: u.value, script: u.script.clone() }]
        }
        None => select_inputs(chain, &token.owner, params.selection(FeeStage::Transfer), &[], params)?,
    };
    let mut outputs = Vec::with_capacity(2);
    push_change(chain, &mut outputs, &fee_inputs, params.fee(FeeStage::Transfer), &token.owner)?;
    outputs.insert(0, TxOutput::new(token.value, ScriptKind::p2wsh(&script)));
    let mut inputs = vec![TxInput::new(token.outpoint, SEQUENCE_RBF)];
    inputs.extend(fee_inputs.iter().map(|u| TxInput::new(u.outpoint, SEQUENCE_RBF)));
    let mut tx = Transaction::new(inputs, outputs, transfer_header(count).to_locktime());
    chain.signers().attest_all(&mut tx, &token.owner);
    Ok(TransferProposal { tx, new_owner_script: script })
}

/// Service-side checks before co-signing the token input.
pub fn poc3_service_cosign(
    chain: &SimChain,
    proposal: &TransferProposal,
    expected_prev_count: u8,
    service: &str,
) -> Result<Transaction, AssetError> {
    let tx = &proposal.tx;
    let service_key = chain.signers().pubkey(service).ok_or_else(|| AssetError::UnknownSigner(service.into()))?;
    let owner_attested = chain.signers().valid_attesters(tx, 0).iter().any(|s| s != service);
    if !owner_attested {
        return Err(AssetError::MissingOwnerAttestation);
    }
    let header = LockchainHeader::from_locktime(tx.locktime);
    if header.magic != MAGIC || header.typ != TYPE_BOUND || header.variant != VARIANT_TRANSFER {
        return Err(AssetError::WrongVariant(tx.locktime));
    }
    let expected = expected_prev_count.checked_add(1).ok_or(AssetError::SequenceOverflow)?;
    if header.sequence != expected {
        return Err(AssetError::BadSequence { got: header.sequence, expected });
    }
    let out0 = tx.outputs.first().ok_or(AssetError::NotServiceMultisig)?;
    let locks_script = out0.script == ScriptKind::p2wsh(&proposal.new_owner_script);
    let keys_ok = parse_multisig_redeem_script(&proposal.new_owner_script)
        .is_some_and(|(a, b)| (a == service_key) != (b == service_key));
    if !locks_script || !keys_ok {
        return Err(AssetError::NotServiceMultisig);
    }
    let token_in = tx.inputs.first().map(|i| i.previous_output).ok_or(AssetError::NotServiceMultisig)?;
    let token_value = chain.utxo(&token_in).ok_or(AssetError::TokenSpent(token_in))?.value;
    if out0.value != token_value {
        return Err(AssetError::ValueChanged { expected: token_value, got: out0.value });
    }
    let mut signed = tx.clone();
    chain.signers().attest(&mut signed, 0, service);
    Ok(signed)
}

/// Build, co-sign and broadcast one transfer, updating the asset record on success.
pub fn poc3_transfer(
    chain: &mut SimChain,
    asset: &mut StaticAsset,
    token_index: usize,
    new_owner: &str,
    fee_source: Option<OutPoint>,
    params: &ProtocolConstants,
) -> Result<Txid, AssetError> {
    let service = asset.service.clone().ok_or(AssetError::NotServiceMultisig)?;
    let token = asset.tokens.get(token_index).cloned().ok_or(AssetError::NoSuchToken(token_index))?;
    let proposal = poc3_build_transfer(chain, &token, new_owner, &service, fee_source, params)?;
    let signed = poc3_service_cosign(chain, &proposal, token.transfer_count, &service)?;
    let locktime = signed.locktime;
    let txid = chain.broadcast(signed)?;
    let t = &mut asset.tokens[token_index];
    t.outpoint = OutPoint::new(txid, 0);
    t.owner = new_owner.to_string();
    t.transfer_count += 1;
    asset.history.push(TransferRecord { token: token_index, txid, locktime });
    Ok(txid)
}

/// Hash of the tokens' script for a (owner, service) pair, for callers holding only labels.
pub fn multisig_script_hash(chain: &SimChain, owner: &str, service: &str) -> Option<Hash32> {
    let a = chain.signers().pubkey(owner)?;
    let b = chain.signers().pubkey(service)?;
    Some(sha256(&crate::tx::multisig_redeem_script(&a, &b)))
}

/// Recomputes a binding from display hex inputs.
pub fn binding_hash_hex(genesis_txid_hex: &str, merkle_root_hex: &str) -> Result<Hash32, AssetError> {
    Ok(sha256(&binding_preimage_hex(genesis_txid_hex, merkle_root_hex)?))
}
