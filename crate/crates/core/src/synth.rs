// SPDX-License-Identifier: Apache-2.0

//! Deterministic sample files and synthetic chains for discovery experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assets::{
    poc1_issue, poc25_issue, poc2_issue, poc3_issue, poc3_transfer, AssetError, ProtocolConstants,
};
use crate::chain::{ChainConfig, ChainError, SimChain};
use crate::header::{MAX_SAFE_FIRST_BYTE, MIN_SAFE_FIRST_BYTE};
use crate::tx::{OutPoint, ScriptKind, Transaction, TxInput, TxOutput, Txid, SEQUENCE_FINAL, SEQUENCE_RBF};

const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz      eeettaaoinshr.,\n";

/// Text-like bytes from a seeded stream.
pub fn sample_file(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub transactions: usize,
    pub single_assets: usize,
    pub two_tx_assets: usize,
    /// Each multisig asset gets one transfer.
    pub multisig_assets: usize,
    pub shards: usize,
    pub decoys: usize,
    /// Noise outputs per transaction are drawn from this range.
    pub noise_outputs: (usize, usize),
    pub block_size: usize,
}

impl Default for SynthConfig {
    /// 10,000 transactions: 100 protocol (1%), 50 decoys (0.5%), the rest noise.
    fn default() -> Self {
        SynthConfig {
            seed: 0x4C,
            transactions: 10_000,
            single_assets: 40,
            two_tx_assets: 12,
            multisig_assets: 8,
            shards: 12,
            decoys: 50,
            noise_outputs: (6, 16),
            block_size: 500,
        }
    }
}

impl SynthConfig {
    pub fn protocol_transactions(&self) -> usize {
        self.single_assets + 2 * self.two_tx_assets + 3 * self.multisig_assets + self.shards
    }
}

#[derive(Debug, Clone)]
pub struct SynthChain {
    pub chain: SimChain,
    /// Genesis (or funding) txids of every planted asset.
    pub planted: Vec<Txid>,
    pub decoys: Vec<Txid>,
    pub protocol_txs: Vec<Txid>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{0} transactions cannot hold the planted assets, decoys and funding")]
    TooSmall(usize),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

const NOISE: &str = "noise";
const ISSUER: &str = "issuer";
const SERVICE: &str = "service";
const BUYER: &str = "buyer";

struct NoiseWallet {
    coins: Vec<(OutPoint, u64)>,
    script: ScriptKind,
}

impl NoiseWallet {
    fn spend(&mut self, chain: &mut SimChain, outputs_n: usize, locktime: u32, payload: Option<Vec<u8>>) -> Result<Txid, ChainError> {
        let (outpoint, value) = self.coins.pop().expect("noise wallet funded");
        let mut outputs = Vec::with_capacity(outputs_n + 1);
        if let Some(p) = payload {
            outputs.push(TxOutput::op_return(p));
        }
        let each = (value - 1_000) / outputs_n as u64;
        outputs.extend((0..outputs_n).map(|_| TxOutput::new(each, self.script.clone())));
        let sequence = if locktime == 0 { SEQUENCE_FINAL } else { SEQUENCE_RBF };
        let mut tx = Transaction::new(vec![TxInput::new(outpoint, sequence)], outputs, locktime);
        chain.signers().attest_all(&mut tx, NOISE);
        chain.broadcast(tx)
    }
}

/// Builds a chain with exactly `transactions` transactions, planted assets spread
/// through the noise, and decoys whose locktimes decode as registered headers.
pub fn synth_chain(cfg: &SynthConfig) -> Result<SynthChain, SynthError> {
    const MINTS: usize = 2;
    let fixed = cfg.protocol_transactions() + cfg.decoys + MINTS;
    if cfg.transactions < fixed {
        return Err(SynthError::TooSmall(cfg.transactions));
    }
    let noise_count = cfg.transactions - fixed;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chain = SimChain::new(ChainConfig::default());
    for id in [NOISE, ISSUER, SERVICE, BUYER, "protocol"] {
        chain.signers_mut().register(id);
    }
    let p = ProtocolConstants::default();
    chain.mint(ISSUER, &vec![1_000_000; 8 + cfg.multisig_assets])?;
    let coins: Vec<u64> = vec![1_000_000; noise_count + cfg.decoys];
    let outpoints = chain.mint(NOISE, &coins)?;
    let mut wallet = NoiseWallet {
        coins: outpoints.into_iter().zip(coins).rev().collect(),
        script: chain.signers().p2wpkh(NOISE).expect("registered"),
    };
    chain.mine_block();

    // interleave: schedule[i] says which kind of work happens at step i
    #[derive(Clone, Copy)]
    enum Step {
        Noise,
        Decoy(usize),
        Single(usize),
        TwoTx(usize),
        Multisig(usize),
        Shards,
    }
    let mut schedule = vec![Step::Noise; noise_count];
    let plant = |step: Step, rng: &mut ChaCha8Rng, schedule: &mut Vec<Step>| {
        let at = rng.gen_range(0..=schedule.len());
        schedule.insert(at, step);
    };
    for i in 0..cfg.decoys {
        plant(Step::Decoy(i), &mut rng, &mut schedule);
    }
    for i in 0..cfg.single_assets {
        plant(Step::Single(i), &mut rng, &mut schedule);
    }
    for i in 0..cfg.two_tx_assets {
        plant(Step::TwoTx(i), &mut rng, &mut schedule);
    }
    for i in 0..cfg.multisig_assets {
        plant(Step::Multisig(i), &mut rng, &mut schedule);
    }
    if cfg.shards > 0 {
        plant(Step::Shards, &mut rng, &mut schedule);
    }

    let decoy_headers = [0x4C03_7400u32, 0x4C03_7401, 0x4C02_7301, 0x4C01_0000, 0x4C01_0003, 0x4C03_6700, 0x4C03_7801];
    let mut planted = Vec::new();
    let mut decoys = Vec::new();
    let mut since_block = 0;
    let mut protocol_txs = Vec::new();
    let track = |chain: &SimChain, from: usize, protocol_txs: &mut Vec<Txid>| {
        protocol_txs.extend(chain.mempool()[from..].iter().map(Transaction::txid));
    };

    for step in schedule {
        let from = chain.mempool().len();
        match step {
            Step::Noise => {
                let n = rng.gen_range(cfg.noise_outputs.0..=cfg.noise_outputs.1);
                let locktime = noise_locktime(&mut rng, chain.height(), chain.now());
                let payload = rng.gen_bool(0.3).then(|| (0..rng.gen_range(8..=80)).map(|_| rng.gen()).collect());
                wallet.spend(&mut chain, n, locktime, payload)?;
            }
            Step::Decoy(i) => {
                let lt = decoy_headers[i % decoy_headers.len()];
                let payload = match i % 3 {
                    0 => Some(Vec::new()),
                    1 => Some((0..31).map(|_| rng.gen()).collect()),
                    _ => None,
                };
                let payload = if lt == 0x4C03_7401 { Some((0..32).map(|_| rng.gen()).collect()) } else { payload };
                decoys.push(wallet.spend(&mut chain, rng.gen_range(1..=4), lt, payload)?);
            }
            Step::Single(i) => {
                let data = sample_file(cfg.seed ^ ((i as u64) << 8), rng.gen_range(1_000..20_000));
                planted.push(poc2_issue(&mut chain, &data, rng.gen_range(1..=10), ISSUER, &p)?.genesis_txid);
                track(&chain, from, &mut protocol_txs);
            }
            Step::TwoTx(i) => {
                let data = sample_file(cfg.seed ^ ((i as u64) << 16), rng.gen_range(1_000..20_000));
                planted.push(poc25_issue(&mut chain, &data, rng.gen_range(1..=10), ISSUER, &p)?.genesis_txid);
                track(&chain, from, &mut protocol_txs);
            }
            Step::Multisig(i) => {
                let data = sample_file(cfg.seed ^ ((i as u64) << 24), rng.gen_range(1_000..20_000));
                let n = rng.gen_range(1..=10);
                let mut asset = poc3_issue(&mut chain, &data, n, ISSUER, SERVICE, &p)?;
                poc3_transfer(&mut chain, &mut asset, rng.gen_range(0..n), BUYER, None, &p)?;
                planted.push(asset.genesis_txid);
                track(&chain, from, &mut protocol_txs);
            }
            Step::Shards => {
                let payload = p.op_return_limit - 32;
                let data = sample_file(cfg.seed ^ 0x5A5A, cfg.shards * payload);
                planted.push(poc1_issue(&mut chain, &data, ISSUER, &p)?.funding_txid);
                track(&chain, from, &mut protocol_txs);
            }
        }
        since_block += 1;
        if since_block >= cfg.block_size {
            chain.mine_block();
            since_block = 0;
        }
    }
    chain.mine_block();
    Ok(SynthChain { chain, planted, decoys, protocol_txs })
}

/// Mostly zero, otherwise a past height, a pre-band timestamp or an in-band timestamp.
fn noise_locktime(rng: &mut ChaCha8Rng, height: u32, now: u32) -> u32 {
    match rng.gen_range(0..100) {
        0..=79 => 0,
        80..=89 => rng.gen_range(0..=height),
        90..=94 => rng.gen_range(500_000_000..(MIN_SAFE_FIRST_BYTE as u32) << 24),
        _ => {
            let hi = (((MAX_SAFE_FIRST_BYTE as u32) << 24) | 0x00FF_FFFF).min(now - 1);
            rng.gen_range((MIN_SAFE_FIRST_BYTE as u32) << 24..=hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_files_are_stable() {
        assert_eq!(sample_file(1, 64), sample_file(1, 64));
        assert_ne!(sample_file(1, 64), sample_file(2, 64));
        assert!(sample_file(3, 500).iter().all(|b| ALPHABET.contains(b)));
    }

    #[test]
    fn small_synthetic_chain() {
        let cfg = SynthConfig {
            transactions: 400,
            single_assets: 3,
            two_tx_assets: 2,
            multisig_assets: 2,
            shards: 3,
            decoys: 5,
            block_size: 50,
            ..SynthConfig::default()
        };
        let s = synth_chain(&cfg).unwrap();
        let total: usize = s.chain.blocks().iter().map(Vec::len).sum();
        assert_eq!(total, 400);
        assert_eq!(s.planted.len(), 3 + 2 + 2 + 1);
        assert_eq!(s.protocol_txs.len(), cfg.protocol_transactions());
        assert_eq!(s.decoys.len(), 5);
        assert!(s.chain.is_conserved());
        assert!(matches!(synth_chain(&SynthConfig { transactions: 10, ..cfg }), Err(SynthError::TooSmall(10))));
    }
}
