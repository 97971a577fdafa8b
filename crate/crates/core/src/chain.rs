// SPDX-License-Identifier: Apache-2.0

//! In-memory ledger used in place of a real network.
//!
//! Accepted transactions are applied to the UTXO set immediately, so later
//! transactions may spend unconfirmed outputs. Mining moves the mempool into a block
//! in insertion order and advances the clock.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::signers::SignerRegistry;
use crate::snapshot::{encode_snapshot, ByteSource, Snapshot, SnapshotError};
use crate::tx::{
    fee_and_dust_check, locktime_policy, OutPoint, ScriptKind, Transaction, TxError, TxInput, TxOutput, Txid,
    SEQUENCE_FINAL,
};

pub const DEFAULT_DUST_LIMIT: u64 = 546;
pub const DEFAULT_OP_RETURN_LIMIT: usize = 80;
pub const DEFAULT_BLOCK_INTERVAL: u32 = 600;
/// Roughly late 2025.
pub const DEFAULT_GENESIS_TIME: u32 = 1_763_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("malformed transaction: {0}")]
    Malformed(String),
    #[error("input {0} does not exist")]
    UnknownInput(OutPoint),
    #[error("input {0} is already spent")]
    DoubleSpend(OutPoint),
    #[error("outputs {outputs} exceed inputs {inputs}")]
    NegativeFee { inputs: u64, outputs: u64 },
    #[error("fee {fee} below minimum {min}")]
    FeeTooLow { fee: u64, min: u64 },
    #[error("output {0} is below the dust limit")]
    DustOutput(usize),
    #[error("locktime {locktime:#010x} not satisfied at height {height}, time {now}")]
    LocktimeNotSatisfied { locktime: u32, height: u32, now: u32 },
    #[error("input {input} spends an output with no registered owner")]
    UnownedOutput { input: usize },
    #[error("input {input} lacks an attestation from {signer}")]
    MissingAttestation { input: usize, signer: String },
    #[error("unknown signer {0}")]
    UnknownSigner(String),
    #[error("clock cannot move backwards")]
    ClockBackwards,
    #[error(transparent)]
    Snapshot(#[from] SnapshotErrorMessage),
}

/// Snapshot failures flattened to text so `ChainError` stays `Clone + Eq`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct SnapshotErrorMessage(pub String);

impl From<SnapshotError> for ChainError {
    fn from(e: SnapshotError) -> Self {
        ChainError::Snapshot(SnapshotErrorMessage(e.to_string()))
    }
}

impl ChainError {
    /// Stable reason token for logs and the CLI.
    pub fn reason(&self) -> &'static str {
        match self {
            ChainError::Malformed(_) => "MalformedTransaction",
            ChainError::UnknownInput(_) => "UnknownInput",
            ChainError::DoubleSpend(_) => "DoubleSpend",
            ChainError::NegativeFee { .. } => "NegativeFee",
            ChainError::FeeTooLow { .. } => "FeeTooLow",
            ChainError::DustOutput(_) => "DustOutput",
            ChainError::LocktimeNotSatisfied { .. } => "LocktimeNotSatisfied",
            ChainError::UnownedOutput { .. } => "UnownedOutput",
            ChainError::MissingAttestation { .. } => "MissingAttestation",
            ChainError::UnknownSigner(_) => "UnknownSigner",
            ChainError::ClockBackwards => "ClockBackwards",
            ChainError::Snapshot(_) => "SnapshotCorrupt",
        }
    }
}

impl From<TxError> for ChainError {
    fn from(e: TxError) -> Self {
        match e {
            TxError::NegativeFee { inputs, outputs } => ChainError::NegativeFee { inputs, outputs },
            TxError::DustOutput(i) => ChainError::DustOutput(i),
            other => ChainError::Malformed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainConfig {
    pub dust_limit: u64,
    pub op_return_limit: usize,
    pub min_fee: u64,
    pub block_interval: u32,
    pub genesis_time: u32,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            dust_limit: DEFAULT_DUST_LIMIT,
            op_return_limit: DEFAULT_OP_RETURN_LIMIT,
            min_fee: 0,
            block_interval: DEFAULT_BLOCK_INTERVAL,
            genesis_time: DEFAULT_GENESIS_TIME,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utxo {
    pub value: u64,
    pub script: ScriptKind,
    pub confirmed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnedUtxo {
    pub outpoint: OutPoint,
    pub value: u64,
    pub script: ScriptKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Mempool,
    Confirmed { height: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimChain {
    config: ChainConfig,
    signers: SignerRegistry,
    blocks: Vec<Vec<Transaction>>,
    mempool: Vec<Transaction>,
    utxos: BTreeMap<OutPoint, Utxo>,
    spent: BTreeMap<OutPoint, Txid>,
    txs: BTreeMap<Txid, (Transaction, TxStatus)>,
    clock: u32,
    minted: u64,
    fees: u64,
    mint_nonce: u32,
}

impl SimChain {
    pub fn new(config: ChainConfig) -> Self {
        SimChain {
            clock: config.genesis_time,
            config,
            signers: SignerRegistry::new(),
            blocks: Vec::new(),
            mempool: Vec::new(),
            utxos: BTreeMap::new(),
            spent: BTreeMap::new(),
            txs: BTreeMap::new(),
            minted: 0,
            fees: 0,
            mint_nonce: 0,
        }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn signers(&self) -> &SignerRegistry {
        &self.signers
    }

    pub fn signers_mut(&mut self) -> &mut SignerRegistry {
        &mut self.signers
    }

    pub fn now(&self) -> u32 {
        self.clock
    }

    /// Number of mined blocks.
    pub fn height(&self) -> u32 {
        self.blocks.len() as u32
    }

    pub fn set_clock(&mut self, t: u32) -> Result<(), ChainError> {
        if t < self.clock {
            return Err(ChainError::ClockBackwards);
        }
        self.clock = t;
        Ok(())
    }

    pub fn blocks(&self) -> &[Vec<Transaction>] {
        &self.blocks
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn transaction(&self, txid: &Txid) -> Option<&Transaction> {
        self.txs.get(txid).map(|(tx, _)| tx)
    }

    pub fn status(&self, txid: &Txid) -> Option<TxStatus> {
        self.txs.get(txid).map(|(_, s)| *s)
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&Utxo> {
        self.utxos.get(outpoint)
    }

    pub fn spender(&self, outpoint: &OutPoint) -> Option<Txid> {
        self.spent.get(outpoint).copied()
    }

    pub fn total_minted(&self) -> u64 {
        self.minted
    }

    pub fn total_fees(&self) -> u64 {
        self.fees
    }

    pub fn total_unspent(&self) -> u64 {
        self.utxos.values().map(|u| u.value).sum()
    }

    /// Minted value equals unspent value plus collected fees.
    pub fn is_conserved(&self) -> bool {
        self.minted == self.total_unspent() + self.fees
    }

    /// Creates funds for a registered signer out of thin air, one output per value.
    pub fn mint(&mut self, owner: &str, values: &[u64]) -> Result<Vec<OutPoint>, ChainError> {
        let script = self.signers.p2wpkh(owner).ok_or_else(|| ChainError::UnknownSigner(owner.to_string()))?;
        let nonce = self.mint_nonce;
        self.mint_nonce += 1;
        let tx = Transaction {
            version: 1,
            inputs: vec![TxInput::new(OutPoint::null(nonce), SEQUENCE_FINAL)],
            outputs: values.iter().map(|&v| TxOutput::new(v, script.clone())).collect(),
            locktime: 0,
        };
        let txid = tx.txid();
        self.minted += tx.total_output_value();
        let outpoints = self.add_outputs(&tx, txid, false);
        self.txs.insert(txid, (tx.clone(), TxStatus::Mempool));
        self.mempool.push(tx);
        Ok(outpoints)
    }

    fn add_outputs(&mut self, tx: &Transaction, txid: Txid, confirmed: bool) -> Vec<OutPoint> {
        let mut out = Vec::new();
        for (vout, o) in tx.outputs.iter().enumerate() {
            if o.script.is_op_return() {
                continue;
            }
            let op = OutPoint::new(txid, vout as u32);
            self.utxos.insert(op, Utxo { value: o.value, script: o.script.clone(), confirmed });
            out.push(op);
        }
        out
    }

    /// Resolves input values or reports the first missing/spent input.
    pub fn input_values(&self, tx: &Transaction) -> Result<Vec<u64>, ChainError> {
        tx.inputs
            .iter()
            .map(|i| {
                let op = i.previous_output;
                match self.utxos.get(&op) {
                    Some(u) => Ok(u.value),
                    None if self.spent.contains_key(&op) => Err(ChainError::DoubleSpend(op)),
                    None => Err(ChainError::UnknownInput(op)),
                }
            })
            .collect()
    }

    /// Runs every acceptance check without changing state; returns the fee.
    pub fn check(&self, tx: &Transaction) -> Result<u64, ChainError> {
        tx.check_well_formed(self.config.op_return_limit)?;
        if let Some(i) = tx.inputs.iter().find(|i| i.previous_output.is_null()) {
            return Err(ChainError::UnknownInput(i.previous_output));
        }
        let values = self.input_values(tx)?;
        let fee = fee_and_dust_check(tx, &values, self.config.dust_limit)?;
        if fee < self.config.min_fee {
            return Err(ChainError::FeeTooLow { fee, min: self.config.min_fee });
        }
        let policy = locktime_policy(tx, self.height(), self.clock);
        if !policy.immediately_minable {
            return Err(ChainError::LocktimeNotSatisfied { locktime: tx.locktime, height: self.height(), now: self.clock });
        }
        for (index, input) in tx.inputs.iter().enumerate() {
            let utxo = &self.utxos[&input.previous_output];
            let required = self.signers.owners_of(&utxo.script);
            if required.is_empty() {
                return Err(ChainError::UnownedOutput { input: index });
            }
            let present = self.signers.valid_attesters(tx, index);
            if let Some(signer) = required.into_iter().find(|r| !present.contains(r)) {
                return Err(ChainError::MissingAttestation { input: index, signer });
            }
        }
        Ok(fee)
    }

    pub fn broadcast(&mut self, tx: Transaction) -> Result<Txid, ChainError> {
        let fee = self.check(&tx)?;
        let txid = tx.txid();
        for input in &tx.inputs {
            self.utxos.remove(&input.previous_output);
            self.spent.insert(input.previous_output, txid);
        }
        self.add_outputs(&tx, txid, false);
        self.fees += fee;
        self.txs.insert(txid, (tx.clone(), TxStatus::Mempool));
        self.mempool.push(tx);
        Ok(txid)
    }

    pub fn mine_block(&mut self) -> u32 {
        let block = std::mem::take(&mut self.mempool);
        let height = self.height() + 1;
        for tx in &block {
            let txid = tx.txid();
            if let Some(entry) = self.txs.get_mut(&txid) {
                entry.1 = TxStatus::Confirmed { height };
            }
            for vout in 0..tx.outputs.len() as u32 {
                if let Some(u) = self.utxos.get_mut(&OutPoint::new(txid, vout)) {
                    u.confirmed = true;
                }
            }
        }
        self.blocks.push(block);
        self.clock = self.clock.saturating_add(self.config.block_interval);
        height
    }

    /// Unspent outputs `owner` can co-sign, ordered by outpoint.
    pub fn utxos_for(&self, owner: &str) -> Vec<OwnedUtxo> {
        self.utxos
            .iter()
            .filter(|(_, u)| self.signers.owners_of(&u.script).iter().any(|o| o == owner))
            .map(|(op, u)| OwnedUtxo { outpoint: *op, value: u.value, script: u.script.clone() })
            .collect()
    }

    /// P2WPKH outputs spendable by `owner` alone.
    pub fn spendable_by(&self, owner: &str) -> Vec<OwnedUtxo> {
        let Some(script) = self.signers.p2wpkh(owner) else { return Vec::new() };
        self.utxos_for(owner).into_iter().filter(|u| u.script == script).collect()
    }

    /// Snapshot of confirmed blocks.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        encode_snapshot(self.blocks.iter().map(Vec::as_slice), self.clock)
    }

    /// Rebuilds ledger state from a snapshot. Transactions are trusted: only UTXO
    /// consistency is checked, since attestations are not part of the serialization.
    pub fn from_snapshot<S: ByteSource>(
        snapshot: &Snapshot<S>,
        config: ChainConfig,
        signers: SignerRegistry,
    ) -> Result<Self, ChainError> {
        let mut chain = SimChain::new(config);
        chain.signers = signers;
        for block in snapshot.blocks()? {
            for tx in block {
                chain.import(tx)?;
            }
            chain.mine_block();
        }
        chain.clock = chain.clock.max(snapshot.clock());
        Ok(chain)
    }

    fn import(&mut self, tx: Transaction) -> Result<(), ChainError> {
        let txid = tx.txid();
        let is_mint = tx.inputs.len() == 1 && tx.inputs[0].previous_output.is_null();
        if is_mint {
            self.mint_nonce = self.mint_nonce.max(tx.inputs[0].previous_output.vout + 1);
            self.minted += tx.total_output_value();
        } else {
            let values = self.input_values(&tx)?;
            let fee = fee_and_dust_check(&tx, &values, 0)?;
            for input in &tx.inputs {
                self.utxos.remove(&input.previous_output);
                self.spent.insert(input.previous_output, txid);
            }
            self.fees += fee;
        }
        self.add_outputs(&tx, txid, false);
        self.txs.insert(txid, (tx.clone(), TxStatus::Mempool));
        self.mempool.push(tx);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tx::{SEQUENCE_RBF, Transaction};

    fn funded() -> (SimChain, OutPoint) {
        let mut chain = SimChain::new(ChainConfig::default());
        chain.signers_mut().register("alice");
        chain.signers_mut().register("bob");
        let op = chain.mint("alice", &[10_000]).unwrap()[0];
        chain.mine_block();
        (chain, op)
    }

    fn pay(chain: &SimChain, from: OutPoint, to: &str, value: u64, signer: &str) -> Transaction {
        let mut tx = Transaction::new(
            vec![TxInput::new(from, SEQUENCE_RBF)],
            vec![TxOutput::new(value, chain.signers().p2wpkh(to).unwrap())],
            0x4C01_0000,
        );
        chain.signers().attest_all(&mut tx, signer);
        tx
    }

    #[test]
    fn accepts_and_tracks_utxos() {
        let (mut chain, op) = funded();
        let tx = pay(&chain, op, "bob", 9_000, "alice");
        let txid = chain.broadcast(tx).unwrap();
        assert_eq!(chain.total_fees(), 1_000);
        assert_eq!(chain.utxos_for("bob").len(), 1);
        assert!(chain.utxos_for("alice").is_empty());
        assert_eq!(chain.status(&txid), Some(TxStatus::Mempool));
        assert!(chain.is_conserved());
        let h = chain.mine_block();
        assert_eq!(h, 2);
        assert!(chain.mempool().is_empty());
        assert_eq!(chain.status(&txid), Some(TxStatus::Confirmed { height: 2 }));
    }

    #[test]
    fn rejections() {
        let (mut chain, op) = funded();
        let unsigned = {
            let mut t = pay(&chain, op, "bob", 9_000, "alice");
            t.inputs[0].attestation.clear();
            t
        };
        assert_eq!(
            chain.broadcast(unsigned).unwrap_err(),
            ChainError::MissingAttestation { input: 0, signer: "alice".into() }
        );
        let wrong_signer = pay(&chain, op, "bob", 9_000, "bob");
        assert_eq!(chain.broadcast(wrong_signer).unwrap_err().reason(), "MissingAttestation");

        assert!(matches!(chain.broadcast(pay(&chain, op, "bob", 10_001, "alice")), Err(ChainError::NegativeFee { .. })));
        assert_eq!(chain.broadcast(pay(&chain, op, "bob", 545, "alice")), Err(ChainError::DustOutput(0)));

        let mut future = pay(&chain, op, "bob", 9_000, "alice");
        future.locktime = chain.now() + 1_000;
        chain.signers().attest_all(&mut future, "alice");
        assert!(matches!(chain.broadcast(future), Err(ChainError::LocktimeNotSatisfied { .. })));

        let ok = pay(&chain, op, "bob", 9_000, "alice");
        chain.broadcast(ok).unwrap();
        chain.mine_block();
        let again = pay(&chain, op, "bob", 8_000, "alice");
        assert_eq!(chain.broadcast(again), Err(ChainError::DoubleSpend(op)));

        let ghost = OutPoint::new(Txid([9; 32]), 0);
        assert_eq!(chain.broadcast(pay(&chain, ghost, "bob", 600, "alice")), Err(ChainError::UnknownInput(ghost)));
        assert!(chain.is_conserved());
    }

    #[test]
    fn future_timestamp_ignored_without_enforcement() {
        let (mut chain, op) = funded();
        let mut tx = pay(&chain, op, "bob", 9_000, "alice");
        tx.locktime = u32::MAX;
        tx.inputs[0].sequence = SEQUENCE_FINAL;
        tx.inputs[0].attestation.clear();
        chain.signers().attest_all(&mut tx, "alice");
        assert!(chain.broadcast(tx).is_ok());
    }

    #[test]
    fn empty_block_and_clock() {
        let mut chain = SimChain::new(ChainConfig::default());
        let t0 = chain.now();
        assert_eq!(chain.mine_block(), 1);
        assert_eq!(chain.now(), t0 + DEFAULT_BLOCK_INTERVAL);
        assert!(chain.blocks()[0].is_empty());
        assert_eq!(chain.set_clock(t0), Err(ChainError::ClockBackwards));
    }

    #[test]
    fn unknown_owner_has_no_utxos() {
        let (chain, _) = funded();
        assert!(chain.utxos_for("nobody").is_empty());
        let mut c = chain.clone();
        assert_eq!(c.mint("nobody", &[1]), Err(ChainError::UnknownSigner("nobody".into())));
    }

    #[test]
    fn snapshot_replay_matches() {
        let (mut chain, op) = funded();
        let tx = pay(&chain, op, "bob", 9_000, "alice");
        chain.broadcast(tx).unwrap();
        chain.mine_block();
        let bytes = chain.snapshot_bytes();
        let snap = Snapshot::open(bytes.as_slice()).unwrap();
        let replayed = SimChain::from_snapshot(&snap, ChainConfig::default(), chain.signers().clone()).unwrap();
        assert_eq!(replayed.utxos_for("bob"), chain.utxos_for("bob"));
        assert_eq!(replayed.total_fees(), chain.total_fees());
        assert_eq!(replayed.height(), chain.height());
        assert_eq!(replayed.now(), chain.now());
        assert!(replayed.is_conserved());
    }

    #[test]
    fn identical_histories_are_identical() {
        let build = || {
            let (mut chain, op) = funded();
            let tx = pay(&chain, op, "bob", 9_000, "alice");
            chain.broadcast(tx).unwrap();
            chain.mine_block();
            chain
        };
        assert_eq!(build(), build());
    }
}
