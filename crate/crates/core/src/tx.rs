// SPDX-License-Identifier: Apache-2.0

//! Minimal consensus-shaped transactions.
//!
//! Serialization follows the legacy (non-witness) Bitcoin layout with CompactSize
//! counts and empty script sigs. Input attestations stand in for witness data and are
//! never serialized, so they do not affect the txid.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::hash::{hash160, hash_from_hex, sha256, sha256d};
use crate::header::{is_timestamp, LOCKTIME_THRESHOLD};

pub const SEQUENCE_FINAL: u32 = 0xFFFF_FFFF;
/// Highest sequence that still signals opt-in replace-by-fee.
pub const SEQUENCE_RBF: u32 = 0xFFFF_FFFD;

const OP_RETURN: u8 = 0x6a;
const OP_PUSHDATA1: u8 = 0x4c;
const OP_PUSHDATA2: u8 = 0x4d;
const OP_PUSHDATA4: u8 = 0x4e;
const OP_2: u8 = 0x52;
const OP_CHECKMULTISIG: u8 = 0xae;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("malformed transaction: {0}")]
    MalformedTransaction(String),
    #[error("public key must be 33 bytes, got {0}")]
    BadKeyLength(usize),
    #[error("outputs {outputs} exceed inputs {inputs}")]
    NegativeFee { inputs: u64, outputs: u64 },
    #[error("output {0} is below the dust limit")]
    DustOutput(usize),
    #[error("unexpected end of data")]
    Truncated,
    #[error("{0} trailing bytes after transaction")]
    TrailingBytes(usize),
    #[error("unsupported script {0}")]
    UnsupportedScript(String),
    #[error("invalid hex: {0}")]
    BadHex(String),
}

/// Transaction id, stored in internal (hash output) byte order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Txid(pub [u8; 32]);

impl Txid {
    pub const ZERO: Txid = Txid([0; 32]);

    /// Bytes in the order they appear in the conventional hex display.
    pub fn display_bytes(&self) -> [u8; 32] {
        let mut b = self.0;
        b.reverse();
        b
    }

    pub fn from_display_bytes(mut bytes: [u8; 32]) -> Self {
        bytes.reverse();
        Txid(bytes)
    }
}

impl fmt::Display for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.display_bytes()))
    }
}

impl fmt::Debug for Txid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Txid({self})")
    }
}

impl FromStr for Txid {
    type Err = TxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        hash_from_hex(s)
            .map(Txid::from_display_bytes)
            .ok_or_else(|| TxError::BadHex(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutPoint {
    pub txid: Txid,
    pub vout: u32,
}

impl OutPoint {
    pub const fn new(txid: Txid, vout: u32) -> Self {
        OutPoint { txid, vout }
    }

    pub fn null(nonce: u32) -> Self {
        OutPoint { txid: Txid::ZERO, vout: nonce }
    }

    pub fn is_null(&self) -> bool {
        self.txid == Txid::ZERO
    }
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

impl FromStr for OutPoint {
    type Err = TxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (txid, vout) = s.split_once(':').ok_or_else(|| TxError::BadHex(s.to_string()))?;
        let vout = vout.parse().map_err(|_| TxError::BadHex(s.to_string()))?;
        Ok(OutPoint { txid: txid.parse()?, vout })
    }
}

/// Compressed secp256k1-shaped public key. Only the byte length is checked.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; 33]);

impl PublicKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, TxError> {
        let arr: [u8; 33] = bytes.try_into().map_err(|_| TxError::BadKeyLength(bytes.len()))?;
        Ok(PublicKey(arr))
    }

    pub fn key_hash(&self) -> [u8; 20] {
        hash160(&self.0)
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({self})")
    }
}

impl FromStr for PublicKey {
    type Err = TxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|_| TxError::BadHex(s.to_string()))?;
        PublicKey::from_slice(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScriptKind {
    OpReturn(Vec<u8>),
    P2wpkh([u8; 20]),
    P2wsh([u8; 32]),
}

impl ScriptKind {
    pub fn p2wpkh(key: &PublicKey) -> Self {
        ScriptKind::P2wpkh(key.key_hash())
    }

    pub fn p2wsh(witness_script: &[u8]) -> Self {
        ScriptKind::P2wsh(sha256(witness_script))
    }

    pub fn is_op_return(&self) -> bool {
        matches!(self, ScriptKind::OpReturn(_))
    }

    pub fn op_return_payload(&self) -> Option<&[u8]> {
        match self {
            ScriptKind::OpReturn(p) => Some(p),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ScriptKind::OpReturn(payload) => {
                let mut s = Vec::with_capacity(payload.len() + 6);
                s.push(OP_RETURN);
                if !payload.is_empty() {
                    push_data(&mut s, payload);
                }
                s
            }
            ScriptKind::P2wpkh(h) => [&[0x00, 0x14][..], h].concat(),
            ScriptKind::P2wsh(h) => [&[0x00, 0x20][..], h].concat(),
        }
    }

    pub fn from_bytes(script: &[u8]) -> Result<Self, TxError> {
        let unsupported = || TxError::UnsupportedScript(hex::encode(script));
        match script {
            [0x00, 0x14, rest @ ..] if rest.len() == 20 => Ok(ScriptKind::P2wpkh(rest.try_into().unwrap())),
            [0x00, 0x20, rest @ ..] if rest.len() == 32 => Ok(ScriptKind::P2wsh(rest.try_into().unwrap())),
            [OP_RETURN] => Ok(ScriptKind::OpReturn(Vec::new())),
            [OP_RETURN, rest @ ..] => {
                let (payload, used) = read_push(rest).ok_or_else(unsupported)?;
                if used != rest.len() || payload.is_empty() {
                    return Err(unsupported());
                }
                let op = ScriptKind::OpReturn(payload.to_vec());
                // only minimal pushes, so that encoding is a bijection
                if op.to_bytes() != script {
                    return Err(unsupported());
                }
                Ok(op)
            }
            _ => Err(unsupported()),
        }
    }
}

fn push_data(s: &mut Vec<u8>, data: &[u8]) {
    let n = data.len();
    if n <= 75 {
        s.push(n as u8);
    } else if n <= 0xff {
        s.extend_from_slice(&[OP_PUSHDATA1, n as u8]);
    } else if n <= 0xffff {
        s.push(OP_PUSHDATA2);
        s.extend_from_slice(&(n as u16).to_le_bytes());
    } else {
        s.push(OP_PUSHDATA4);
        s.extend_from_slice(&(n as u32).to_le_bytes());
    }
    s.extend_from_slice(data);
}

fn read_push(s: &[u8]) -> Option<(&[u8], usize)> {
    let (&op, rest) = s.split_first()?;
    let (len, hdr) = match op {
        1..=75 => (op as usize, 1),
        OP_PUSHDATA1 => (*rest.first()? as usize, 2),
        OP_PUSHDATA2 => (u16::from_le_bytes(rest.get(..2)?.try_into().ok()?) as usize, 3),
        OP_PUSHDATA4 => (u32::from_le_bytes(rest.get(..4)?.try_into().ok()?) as usize, 5),
        _ => return None,
    };
    let data = s.get(hdr..hdr + len)?;
    Some((data, hdr + len))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInput {
    pub previous_output: OutPoint,
    pub sequence: u32,
    /// Opaque authorization data; excluded from serialization and the txid.
    pub attestation: Vec<u8>,
}

impl TxInput {
    pub fn new(previous_output: OutPoint, sequence: u32) -> Self {
        TxInput { previous_output, sequence, attestation: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutput {
    pub value: u64,
    pub script: ScriptKind,
}

impl TxOutput {
    pub fn new(value: u64, script: ScriptKind) -> Self {
        TxOutput { value, script }
    }

    pub fn op_return(payload: Vec<u8>) -> Self {
        TxOutput { value: 0, script: ScriptKind::OpReturn(payload) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub version: u32,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub locktime: u32,
}

impl Transaction {
    pub fn new(inputs: Vec<TxInput>, outputs: Vec<TxOutput>, locktime: u32) -> Self {
        Transaction { version: 2, inputs, outputs, locktime }
    }

    /// Serializes without checking well-formedness.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.inputs.len() * 41 + self.outputs.len() * 40);
        out.extend_from_slice(&self.version.to_le_bytes());
        write_compact_size(&mut out, self.inputs.len() as u64);
        for input in &self.inputs {
            out.extend_from_slice(&input.previous_output.txid.0);
            out.extend_from_slice(&input.previous_output.vout.to_le_bytes());
            out.push(0); // empty script sig
            out.extend_from_slice(&input.sequence.to_le_bytes());
        }
        write_compact_size(&mut out, self.outputs.len() as u64);
        for output in &self.outputs {
            out.extend_from_slice(&output.value.to_le_bytes());
            let script = output.script.to_bytes();
            write_compact_size(&mut out, script.len() as u64);
            out.extend_from_slice(&script);
        }
        out.extend_from_slice(&self.locktime.to_le_bytes());
        out
    }

    pub fn serialize(&self) -> Result<Vec<u8>, TxError> {
        self.check_shape()?;
        Ok(self.encode())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, TxError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let version = r.u32()?;
        let n_in = r.compact_size()?;
        let mut inputs = Vec::with_capacity(n_in.min(1024) as usize);
        for _ in 0..n_in {
            let txid = Txid(r.take(32)?.try_into().unwrap());
            let vout = r.u32()?;
            let script_len = r.compact_size()?;
            if script_len != 0 {
                return Err(TxError::MalformedTransaction("non-empty script sig".into()));
            }
            let sequence = r.u32()?;
            inputs.push(TxInput::new(OutPoint { txid, vout }, sequence));
        }
        let n_out = r.compact_size()?;
        let mut outputs = Vec::with_capacity(n_out.min(1024) as usize);
        for _ in 0..n_out {
            let value = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let len = r.compact_size()? as usize;
            let script = ScriptKind::from_bytes(r.take(len)?)?;
            outputs.push(TxOutput { value, script });
        }
        let locktime = r.u32()?;
        if r.pos != bytes.len() {
            return Err(TxError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Transaction { version, inputs, outputs, locktime })
    }

    pub fn txid(&self) -> Txid {
        Txid(sha256d(&self.encode()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Self, TxError> {
        let bytes = hex::decode(s.trim()).map_err(|e| TxError::BadHex(e.to_string()))?;
        Self::parse(&bytes)
    }

    pub fn size(&self) -> usize {
        self.encode().len()
    }

    pub fn total_output_value(&self) -> u64 {
        self.outputs.iter().map(|o| o.value).sum()
    }

    fn check_shape(&self) -> Result<(), TxError> {
        if self.inputs.is_empty() {
            return Err(TxError::MalformedTransaction("no inputs".into()));
        }
        if self.outputs.is_empty() {
            return Err(TxError::MalformedTransaction("no outputs".into()));
        }
        Ok(())
    }

    /// Structural checks that do not need a UTXO set.
    pub fn check_well_formed(&self, op_return_limit: usize) -> Result<(), TxError> {
        self.check_shape()?;
        let mut seen = BTreeSet::new();
        for input in &self.inputs {
            if !seen.insert(input.previous_output) {
                return Err(TxError::MalformedTransaction(format!(
                    "input {} spent twice",
                    input.previous_output
                )));
            }
        }
        for (i, output) in self.outputs.iter().enumerate() {
            if let ScriptKind::OpReturn(payload) = &output.script {
                if output.value != 0 {
                    return Err(TxError::MalformedTransaction(format!("op_return output {i} carries value")));
                }
                if payload.len() > op_return_limit {
                    return Err(TxError::MalformedTransaction(format!(
                        "op_return output {i} is {} bytes, limit {op_return_limit}",
                        payload.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TxError> {
        let end = self.pos.checked_add(n).ok_or(TxError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(TxError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TxError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn compact_size(&mut self) -> Result<u64, TxError> {
        let first = self.take(1)?[0];
        let (v, min) = match first {
            0xfd => (u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as u64, 0xfd),
            0xfe => (u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as u64, 0x1_0000),
            0xff => (u64::from_le_bytes(self.take(8)?.try_into().unwrap()), 0x1_0000_0000),
            n => return Ok(n as u64),
        };
        if v < min {
            return Err(TxError::MalformedTransaction("non-canonical compact size".into()));
        }
        Ok(v)
    }
}

pub fn write_compact_size(out: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xfc => out.push(n as u8),
        0xfd..=0xffff => {
            out.push(0xfd);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xffff_ffff => {
            out.push(0xfe);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            out.push(0xff);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

/// 2-of-2 `OP_CHECKMULTISIG` script: `52 21 <owner> 21 <service> 52 ae`.
pub fn multisig_redeem_script(owner: &PublicKey, service: &PublicKey) -> Vec<u8> {
    let mut s = Vec::with_capacity(71);
    s.push(OP_2);
    s.push(33);
    s.extend_from_slice(&owner.0);
    s.push(33);
    s.extend_from_slice(&service.0);
    s.push(OP_2);
    s.push(OP_CHECKMULTISIG);
    s
}

/// Inverse of [`multisig_redeem_script`].
pub fn parse_multisig_redeem_script(script: &[u8]) -> Option<(PublicKey, PublicKey)> {
    match script {
        [OP_2, 33, rest @ .., OP_2, OP_CHECKMULTISIG] if rest.len() == 67 && rest[33] == 33 => {
            let a = PublicKey::from_slice(&rest[..33]).ok()?;
            let b = PublicKey::from_slice(&rest[34..]).ok()?;
            Some((a, b))
        }
        _ => None,
    }
}

/// Returns the fee, or the first fee/dust violation.
pub fn fee_and_dust_check(tx: &Transaction, input_values: &[u64], dust_limit: u64) -> Result<u64, TxError> {
    let inputs: u64 = input_values.iter().sum();
    let outputs = tx.total_output_value();
    if outputs > inputs {
        return Err(TxError::NegativeFee { inputs, outputs });
    }
    if let Some(i) = tx.outputs.iter().position(|o| !o.script.is_op_return() && o.value < dust_limit) {
        return Err(TxError::DustOutput(i));
    }
    Ok(inputs - outputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocktimePolicy {
    pub enforced: bool,
    pub rbf_signaled: bool,
    pub immediately_minable: bool,
}

/// Evaluates nLockTime/nSequence rules against the current chain height and time.
pub fn locktime_policy(tx: &Transaction, height: u32, now: u32) -> LocktimePolicy {
    let enforced = tx.inputs.iter().any(|i| i.sequence < SEQUENCE_FINAL);
    let rbf_signaled = tx.inputs.iter().any(|i| i.sequence < SEQUENCE_FINAL - 1);
    let satisfied = if is_timestamp(tx.locktime) {
        tx.locktime <= now
    } else {
        debug_assert!(tx.locktime < LOCKTIME_THRESHOLD);
        tx.locktime <= height
    };
    LocktimePolicy { enforced, rbf_signaled, immediately_minable: !enforced || satisfied }
}
