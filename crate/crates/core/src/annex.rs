// SPDX-License-Identifier: Apache-2.0

//! Replays of the four logged issuance runs on the simulated chain.
//!
//! Network-dependent values (txids, wallet contents) cannot be reproduced, so each
//! replay funds the simulated wallet to match the logged UTXO selection and then checks
//! structure, locktimes, fees, change and the binding hash against the logged numbers.

use crate::assets::{
    binding_hash, binding_hash_hex, poc1_issue, poc1_reassemble, poc25_issue, poc2_issue, poc3_issue,
    poc3_transfer, AssetError, ProtocolConstants,
};
use crate::chain::{ChainConfig, SimChain};
use crate::hash::sha256;
use crate::header::LockchainHeader;
use crate::merkle::ChunkPlan;
use crate::synth::sample_file;
use crate::tx::{multisig_redeem_script, OutPoint, PublicKey, ScriptKind, Transaction, Txid};

/// The 1,120-byte sharding fixture.
pub const ANNEX_A_FILE: &[u8] = include_bytes!("../fixtures/annex_a_1120.txt");
pub const ANNEX_A_SEED: u64 = 0x4C01;
pub const ANNEX_A_TIMESTAMP: u32 = 1_765_721_995;
pub const ANNEX_A_SHUFFLE: [usize; 24] =
    [14, 11, 10, 21, 1, 12, 5, 9, 0, 6, 19, 15, 23, 16, 17, 4, 3, 13, 18, 7, 2, 22, 8, 20];

pub const STATIC_FILE_SEED: u64 = 0x4C02;
pub const STATIC_FILE_LEN: usize = 184_292;

pub const ANNEX_C_GENESIS: &str = "7d6b5dc9165e43ca7202b43d3d1499e173b2720b8efdf693835a66f3d4fff535";
pub const ANNEX_C_BINDING: &str = "edd84e2a7ff067d5735d8e923c984f882b3c136e718bc83bac1fdd12c7aa75c8";
pub const ANNEX_D_GENESIS: &str = "e78c935ace261d1f987c451264e4934982d13eec9f02f9c7db918326cec34176";
pub const ANNEX_D_BINDING: &str = "72a83572bbe654e6c4fa836527e2c4287f25c3308961184b3178e6108beca936";
pub const ANNEX_MERKLE_ROOT: &str = "8d75277f6f4a80338fd7046eb83a39dee6a5fcfc3ee4dd7449a05d22c48e1218";
pub const ANNEX_D_OWNER: &str = "0229b891c842e92514cd8782b5c03cd48eb01703d0fd1c2a9e36577e4b70793a3b";
pub const ANNEX_D_SERVICE: &str = "038ca054840e4bb0124b9bb7569e4653d35aeb74c01ee1a5631a76e947fb904eb7";
pub const ANNEX_D_REDEEM_SCRIPT: &str = "52210229b891c842e92514cd8782b5c03cd48eb01703d0fd1c2a9e36577e4b70793a3b21038ca054840e4bb0124b9bb7569e4653d35aeb74c01ee1a5631a76e947fb904eb752ae";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnexCheck {
    pub label: &'static str,
    pub expected: String,
    pub actual: String,
}

impl AnnexCheck {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnexReport {
    pub annex: u8,
    pub title: &'static str,
    pub checks: Vec<AnnexCheck>,
}

impl AnnexReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(AnnexCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AnnexCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

struct Checks(Vec<AnnexCheck>);

impl Checks {
    fn eq(&mut self, label: &'static str, expected: impl ToString, actual: impl ToString) {
        self.0.push(AnnexCheck { label, expected: expected.to_string(), actual: actual.to_string() });
    }

    fn lt(&mut self, label: &'static str, expected: u32, actual: u32) {
        self.eq(label, format!("{expected:#010x}"), format!("{actual:#010x}"));
    }
}

fn lt_of(chain: &SimChain, txid: &Txid) -> u32 {
    chain.transaction(txid).map(|t| t.locktime).unwrap_or_default()
}

fn tx<'a>(chain: &'a SimChain, txid: &Txid) -> &'a Transaction {
    chain.transaction(txid).expect("replayed transaction is on chain")
}

fn fee_of(chain: &SimChain, t: &Transaction) -> u64 {
    let inputs: u64 = chain_input_total(chain, t);
    inputs - t.total_output_value()
}

fn chain_input_total(chain: &SimChain, t: &Transaction) -> u64 {
    t.inputs
        .iter()
        .map(|i| tx(chain, &i.previous_output.txid).outputs[i.previous_output.vout as usize].value)
        .sum()
}

fn setup(dust_limit: u64, signers: &[&str]) -> SimChain {
    let mut chain = SimChain::new(ChainConfig { dust_limit, ..ChainConfig::default() });
    for id in signers {
        chain.signers_mut().register(id);
    }
    chain
}

pub fn static_file() -> Vec<u8> {
    sample_file(STATIC_FILE_SEED, STATIC_FILE_LEN)
}

/// Sharding: 24 shards, out-of-order reassembly, timestamped hash.
pub fn replay_a() -> Result<AnnexReport, AssetError> {
    let mut chain = setup(546, &["issuer", "protocol"]);
    chain.mint("issuer", &[132_356])?;
    chain.set_clock(ANNEX_A_TIMESTAMP)?;
    let params = ProtocolConstants { genesis_fee: Some(1_621), ..ProtocolConstants::default() };
    let asset = poc1_issue(&mut chain, ANNEX_A_FILE, "issuer", &params)?;

    let mut c = Checks(Vec::new());
    c.eq("file size", 1_120, ANNEX_A_FILE.len());
    c.eq("shard payload", 48, params.op_return_limit - 32);
    c.eq("shards", 24, asset.n_shards());
    let funding = tx(&chain, &asset.funding_txid);
    c.eq("funding outputs", 26, funding.outputs.len());
    c.eq("shard 0 op_return bytes", 80, funding.outputs[0].script.op_return_payload().map_or(0, <[u8]>::len));
    c.eq("funding output value", 1_200, funding.outputs[1].value);
    c.eq("protocol fee", 2_880, funding.outputs[24].value);
    c.eq("change", 100_255, funding.outputs[25].value);
    c.eq("funding fee", 1_621, fee_of(&chain, funding));
    c.eq("total network fee", 28_800, asset.network_fee);
    c.lt("shard 0 locktime", 0x4C01_0000, lt_of(&chain, &asset.shard_txids[0]));
    c.lt("shard 1 locktime", 0x4C01_0001, lt_of(&chain, &asset.shard_txids[1]));
    c.lt("shard 23 locktime", 0x4C01_0017, lt_of(&chain, &asset.shard_txids[23]));
    let seqs: Vec<u8> = asset.shard_txids.iter().map(|t| LockchainHeader::from_locktime(lt_of(&chain, t)).sequence).collect();
    c.eq("sequences complete", true, seqs.iter().enumerate().all(|(k, &s)| s as usize == k));
    let hashes_agree = asset.shard_txids.iter().all(|t| {
        tx(&chain, t).outputs[0].script.op_return_payload().is_some_and(|p| p[..32] == asset.data_hash)
    });
    c.eq("shards share one hash", true, hashes_agree);

    let shuffled: Vec<Transaction> = ANNEX_A_SHUFFLE.iter().map(|&k| tx(&chain, &asset.shard_txids[k]).clone()).collect();
    let out = poc1_reassemble(&shuffled, Some(ANNEX_A_TIMESTAMP))?;
    c.eq("reassembled bytes", 1_120, out.data.len());
    c.eq("byte-identical", true, out.data == ANNEX_A_FILE);
    c.eq("timestamp hash", hex::encode(sha256(&[ANNEX_A_FILE, b"1765721995"].concat())), hex::encode(out.data_hash));
    Ok(AnnexReport { annex: 1, title: "sharding", checks: c.0 })
}

/// Single-transaction static asset with 650-sat tokens and a 1,200-sat network fee.
pub fn replay_b() -> Result<AnnexReport, AssetError> {
    let mut chain = setup(546, &["issuer", "protocol"]);
    chain.mint("issuer", &[3_000; 4])?;
    let params = ProtocolConstants {
        dust_value: 650,
        network_fee: 1_200,
        selection_fee: Some(2_000),
        ..ProtocolConstants::default()
    };
    let file = static_file();
    let asset = poc2_issue(&mut chain, &file, 10, "issuer", &params)?;
    let t = tx(&chain, &asset.genesis_txid);

    let mut c = Checks(Vec::new());
    let plan = ChunkPlan::by_count(file.len(), 10)?;
    c.eq("file size", 184_292, file.len());
    c.eq("chunk size", 18_430, plan.chunk_size);
    c.eq("last chunk size", 18_422, plan.last_chunk_size);
    c.lt("locktime", 0x4C02_7301, t.locktime);
    c.eq("inputs", 4, t.inputs.len());
    c.eq("input total", 12_000, chain_input_total(&chain, t));
    c.eq("outputs", 13, t.outputs.len());
    c.eq("root in output 0", true, t.outputs[0].script.op_return_payload() == Some(&asset.merkle_root[..]));
    c.eq("tokens", "10 x 650", format!("{} x {}", asset.tokens.len(), t.outputs[1].value));
    c.eq("protocol fee", 650, t.outputs[11].value);
    c.eq("change", 3_650, t.outputs[12].value);
    c.eq("output total", 10_800, t.total_output_value());
    c.eq("network fee", 1_200, fee_of(&chain, t));
    c.eq("total cost", 1_850, fee_of(&chain, t) + asset.protocol_fee);
    Ok(AnnexReport { annex: 2, title: "single-transaction static asset", checks: c.0 })
}

/// Two-transaction asset: fees, locktimes and the binding hash.
pub fn replay_c() -> Result<AnnexReport, AssetError> {
    let mut chain = setup(650, &["issuer", "protocol"]);
    chain.mint("issuer", &[3_000; 4])?;
    let params = ProtocolConstants { dust_value: 650, ..ProtocolConstants::default() };
    let asset = poc25_issue(&mut chain, &static_file(), 10, "issuer", &params)?;
    let tx1 = tx(&chain, &asset.genesis_txid);
    let tx2 = tx(&chain, &asset.tokenization_txid.expect("two-tx asset"));

    let mut c = Checks(Vec::new());
    c.eq("protocol fee", 850, tx1.outputs[1].value);
    c.eq("tx1 inputs", 3_000, chain_input_total(&chain, tx1));
    c.eq("tx1 outputs", 850, tx1.total_output_value());
    c.eq("tx1 fee", 2_150, fee_of(&chain, tx1));
    c.lt("tx1 locktime", 0x4C03_7400, tx1.locktime);
    c.eq("tx2 inputs", 9_000, chain_input_total(&chain, tx2));
    c.eq("tx2 outputs", 6_500, tx2.total_output_value());
    c.eq("tx2 fee", 2_500, fee_of(&chain, tx2));
    c.lt("tx2 locktime", 0x4C03_7401, tx2.locktime);
    c.eq("total cost", 5_500, fee_of(&chain, tx1) + fee_of(&chain, tx2) + asset.protocol_fee);
    let on_chain = tx2.outputs[0].script.op_return_payload().map(hex::encode).unwrap_or_default();
    c.eq("binding on chain", hex::encode(binding_hash(&asset.genesis_txid, &asset.merkle_root)), on_chain);
    c.eq("logged binding", ANNEX_C_BINDING, hex::encode(binding_hash_hex(ANNEX_C_GENESIS, ANNEX_MERKLE_ROOT)?));
    Ok(AnnexReport { annex: 3, title: "two-transaction static asset", checks: c.0 })
}

/// Multisig asset with the logged keys, then three transfers.
pub fn replay_d() -> Result<AnnexReport, AssetError> {
    let mut chain = setup(546, &["protocol", "recipient"]);
    let owner: PublicKey = ANNEX_D_OWNER.parse().expect("annex key");
    let service: PublicKey = ANNEX_D_SERVICE.parse().expect("annex key");
    chain.signers_mut().register_with_pubkey("issuer", owner);
    chain.signers_mut().register_with_pubkey("service", service);
    chain.mint("issuer", &[114_246])?;
    chain.mint("recipient", &[50_000])?;
    let params = ProtocolConstants {
        dust_value: 650,
        genesis_fee: Some(219),
        transfer_fee: Some(337),
        ..ProtocolConstants::default()
    };
    let mut asset = poc3_issue(&mut chain, &static_file(), 10, "issuer", "service", &params)?;
    let tx1 = tx(&chain, &asset.genesis_txid).clone();
    let token_txid = asset.token_txid();
    let tx2 = tx(&chain, &token_txid).clone();

    let mut c = Checks(Vec::new());
    c.lt("genesis locktime", 0x4C03_6700, tx1.locktime);
    c.eq("tx1 outputs", 3, tx1.outputs.len());
    c.eq("protocol fee", 650, tx1.outputs[1].value);
    c.eq("tx1 change", 113_377, tx1.outputs[2].value);
    c.eq("tx1 fee", 219, fee_of(&chain, &tx1));
    c.lt("tokenization locktime", 0x4C03_7401, tx2.locktime);
    c.eq("tx2 spends tx1 change", OutPoint::new(asset.genesis_txid, 2), tx2.inputs[0].previous_output);
    c.eq("tx2 outputs", 11, tx2.outputs.len());
    c.eq("tx2 change", 104_877, tx2.outputs[10].value);
    c.eq("tx2 fee", 2_000, fee_of(&chain, &tx2));
    c.eq("total cost", 2_869, fee_of(&chain, &tx1) + fee_of(&chain, &tx2) + asset.protocol_fee);
    let script = multisig_redeem_script(&owner, &service);
    c.eq("redeem script", ANNEX_D_REDEEM_SCRIPT, hex::encode(&script));
    c.eq("token script", ScriptKind::p2wsh(&script).to_bytes().len(), tx2.outputs[0].script.to_bytes().len());
    c.eq("tokens are 2-of-2", true, tx2.outputs[..10].iter().all(|o| o.script == ScriptKind::p2wsh(&script) && o.value == 650));
    c.eq("logged binding", ANNEX_D_BINDING, hex::encode(binding_hash_hex(ANNEX_D_GENESIS, ANNEX_MERKLE_ROOT)?));

    let fee_source = OutPoint::new(token_txid, 10);
    let t1 = poc3_transfer(&mut chain, &mut asset, 0, "recipient", Some(fee_source), &params)?;
    let transfer = tx(&chain, &t1);
    c.lt("1st transfer", 0x4C03_7801, transfer.locktime);
    c.eq("transfer inputs", 2, transfer.inputs.len());
    c.eq("transfer token value", 650, transfer.outputs[0].value);
    c.eq("transfer change", 104_540, transfer.outputs[1].value);
    c.eq("transfer fee", 337, fee_of(&chain, transfer));
    let t2 = poc3_transfer(&mut chain, &mut asset, 0, "issuer", None, &params)?;
    let t3 = poc3_transfer(&mut chain, &mut asset, 0, "recipient", None, &params)?;
    c.lt("2nd transfer", 0x4C03_7802, lt_of(&chain, &t2));
    c.lt("3rd transfer", 0x4C03_7803, lt_of(&chain, &t3));
    c.eq("transfer count", 3, asset.tokens[0].transfer_count);
    Ok(AnnexReport { annex: 4, title: "multisig-protected asset", checks: c.0 })
}

pub fn replay(annex: u8) -> Option<Result<AnnexReport, AssetError>> {
    match annex {
        1 => Some(replay_a()),
        2 => Some(replay_b()),
        3 => Some(replay_c()),
        4 => Some(replay_d()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_matches_generator() {
        assert_eq!(ANNEX_A_FILE, &sample_file(ANNEX_A_SEED, 1_120)[..]);
    }

    #[test]
    fn all_annexes_replay() {
        for n in 1..=4 {
            let report = replay(n).unwrap().unwrap();
            let failures: Vec<_> = report.failures().collect();
            assert!(failures.is_empty(), "annex {n}: {failures:#?}");
        }
        assert!(replay(5).is_none());
    }
}
