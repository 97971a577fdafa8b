// SPDX-License-Identifier: Apache-2.0

//! Line-oriented `key: value` asset manifests.
//!
//! Hashes and locktimes are lowercase hex, txids use display order. Repeated keys
//! (`shard`, `token`, `transfer`) keep their order. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::assets::{Scheme, ShardedAsset, StaticAsset, Token, TransferRecord};
use crate::hash::hash_from_hex;
use crate::merkle::{ChunkPlan, Hash32};
use crate::tx::{OutPoint, Txid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("line {line}: expected `key: value`")]
    MalformedLine { line: usize },
    #[error("missing key {0}")]
    MissingKey(&'static str),
    #[error("bad value for {key}: {value}")]
    BadValue { key: String, value: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Manifest {
    Sharded(ShardedAsset),
    Static(StaticAsset),
}

impl Manifest {
    pub fn scheme(&self) -> Scheme {
        match self {
            Manifest::Sharded(_) => Scheme::Sharding,
            Manifest::Static(a) => a.scheme,
        }
    }

    pub fn asset_id(&self) -> Txid {
        match self {
            Manifest::Sharded(a) => a.funding_txid,
            Manifest::Static(a) => a.genesis_txid,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}: {v}");
        };
        kv("scheme", &self.scheme());
        match self {
            Manifest::Sharded(a) => {
                kv("funding_txid", &a.funding_txid);
                kv("data_hash", &hex::encode(a.data_hash));
                kv("timestamp", &a.timestamp);
                kv("data_len", &a.data_len);
                kv("network_fee", &a.network_fee);
                kv("protocol_fee", &a.protocol_fee);
                for (t, lt) in a.shard_txids.iter().zip(a.locktimes()) {
                    kv("shard", &format!("{t} {lt:08x}"));
                }
            }
            Manifest::Static(a) => {
                kv("genesis_txid", &a.genesis_txid);
                kv("genesis_locktime", &format!("{:08x}", a.genesis_locktime));
                if let (Some(t), Some(lt)) = (a.tokenization_txid, a.tokenization_locktime) {
                    kv("tokenization_txid", &t);
                    kv("tokenization_locktime", &format!("{lt:08x}"));
                }
                kv("merkle_root", &hex::encode(a.merkle_root));
                if let Some(b) = a.binding_hash {
                    kv("binding_hash", &hex::encode(b));
                }
                kv("file_size", &a.plan.file_size);
                kv("n_chunks", &a.plan.n_chunks);
                kv("chunk_size", &a.plan.chunk_size);
                kv("issuer", &a.issuer);
                if let Some(s) = &a.service {
                    kv("service", s);
                }
                kv("protocol_fee", &a.protocol_fee);
                for t in &a.tokens {
                    kv("token", &format!("{} {} {} {}", t.outpoint, t.value, t.owner, t.transfer_count));
                }
                for h in &a.history {
                    kv("transfer", &format!("{} {} {:08x}", h.token, h.txid, h.locktime));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let fields = Fields::parse(text)?;
        let scheme: Scheme = fields.value("scheme")?;
        let m = if scheme == Scheme::Sharding {
            fields.only(&["scheme", "funding_txid", "data_hash", "timestamp", "data_len", "network_fee", "protocol_fee", "shard"])?;
            let shard_txids = fields
                .all("shard")
                .map(|v| {
                    let (txid, _) = v.split_once(' ').unwrap_or((v, ""));
                    parse_value::<Txid>("shard", txid)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Manifest::Sharded(ShardedAsset {
                funding_txid: fields.value("funding_txid")?,
                shard_txids,
                data_hash: fields.hash("data_hash")?,
                timestamp: fields.value("timestamp")?,
                data_len: fields.value("data_len")?,
                network_fee: fields.value("network_fee")?,
                protocol_fee: fields.value("protocol_fee")?,
            })
        } else {
            fields.only(&[
                "scheme", "genesis_txid", "genesis_locktime", "tokenization_txid", "tokenization_locktime",
                "merkle_root", "binding_hash", "file_size", "n_chunks", "chunk_size", "issuer", "service",
                "protocol_fee", "token", "transfer",
            ])?;
            let file_size: usize = fields.value("file_size")?;
            let n_chunks: usize = fields.value("n_chunks")?;
            let chunk_size: usize = fields.value("chunk_size")?;
            let plan = ChunkPlan::by_count(file_size, n_chunks)
                .ok()
                .filter(|p| p.chunk_size == chunk_size)
                .ok_or_else(|| bad("chunk_size", &chunk_size.to_string()))?;
            Manifest::Static(StaticAsset {
                scheme,
                genesis_txid: fields.value("genesis_txid")?,
                genesis_locktime: fields.locktime("genesis_locktime")?,
                tokenization_txid: fields.optional("tokenization_txid")?,
                tokenization_locktime: fields.get("tokenization_locktime").map(|_| fields.locktime("tokenization_locktime")).transpose()?,
                merkle_root: fields.hash("merkle_root")?,
                binding_hash: fields.get("binding_hash").map(|_| fields.hash("binding_hash")).transpose()?,
                plan,
                issuer: fields.value("issuer")?,
                service: fields.optional("service")?,
                protocol_fee: fields.value("protocol_fee")?,
                tokens: fields.all("token").map(parse_token).collect::<Result<_, _>>()?,
                history: fields.all("transfer").map(parse_transfer).collect::<Result<_, _>>()?,
            })
        };
        Ok(m)
    }
}

fn bad(key: &str, value: &str) -> ManifestError {
    ManifestError::BadValue { key: key.to_string(), value: value.to_string() }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ManifestError> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_token(v: &str) -> Result<Token, ManifestError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    let [outpoint, value, owner, count] = parts[..] else { return Err(bad("token", v)) };
    Ok(Token {
        outpoint: parse_value::<OutPoint>("token", outpoint)?,
        value: parse_value("token", value)?,
        owner: owner.to_string(),
        transfer_count: parse_value("token", count)?,
    })
}

fn parse_transfer(v: &str) -> Result<TransferRecord, ManifestError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    let [token, txid, locktime] = parts[..] else { return Err(bad("transfer", v)) };
    Ok(TransferRecord {
        token: parse_value("transfer", token)?,
        txid: parse_value("transfer", txid)?,
        locktime: u32::from_str_radix(locktime, 16).map_err(|_| bad("transfer", v))?,
    })
}

struct Fields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

const REPEATED: [&str; 3] = ["shard", "token", "transfer"];

impl<'a> Fields<'a> {
    fn parse(text: &'a str) -> Result<Self, ManifestError> {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once(':').ok_or(ManifestError::MalformedLine { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if !REPEATED.contains(&k) && pairs.iter().any(|(pk, _)| *pk == k) {
                return Err(ManifestError::DuplicateKey(k.to_string()));
            }
            pairs.push((k, v));
        }
        Ok(Fields { pairs })
    }

    fn only(&self, allowed: &[&str]) -> Result<(), ManifestError> {
        match self.pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            Some((k, _)) => Err(ManifestError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        self.pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn all<'s>(&'s self, key: &'s str) -> impl Iterator<Item = &'a str> + 's {
        self.pairs.iter().filter(move |(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn value<T: FromStr>(&self, key: &'static str) -> Result<T, ManifestError> {
        parse_value(key, self.get(key).ok_or(ManifestError::MissingKey(key))?)
    }

    fn optional<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ManifestError> {
        self.get(key).map(|v| parse_value(key, v)).transpose()
    }

    fn hash(&self, key: &'static str) -> Result<Hash32, ManifestError> {
        let v = self.get(key).ok_or(ManifestError::MissingKey(key))?;
        hash_from_hex(v).ok_or_else(|| bad(key, v))
    }

    fn locktime(&self, key: &'static str) -> Result<u32, ManifestError> {
        let v = self.get(key).ok_or(ManifestError::MissingKey(key))?;
        match v.len() {
            8 => u32::from_str_radix(v, 16).map_err(|_| bad(key, v)),
            _ => Err(bad(key, v)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{poc1_issue, poc25_issue, poc3_issue, poc3_transfer, ProtocolConstants};
    use crate::chain::{ChainConfig, SimChain};

    fn chain() -> SimChain {
        let mut c = SimChain::new(ChainConfig::default());
        for id in ["issuer", "service", "bob", "protocol"] {
            c.signers_mut().register(id);
        }
        c.mint("issuer", &[100_000, 100_000]).unwrap();
        c
    }

    #[test]
    fn static_round_trip() {
        let mut c = chain();
        let p = ProtocolConstants::default();
        let mut a = poc3_issue(&mut c, &[7u8; 5_000], 4, "issuer", "service", &p).unwrap();
        poc3_transfer(&mut c, &mut a, 2, "bob", None, &p).unwrap();
        let m = Manifest::Static(a);
        let text = m.to_text();
        assert!(text.contains("genesis_locktime: 4c036700\n"));
        assert!(text.contains("scheme: multisig\n"));
        assert_eq!(text.lines().filter(|l| l.starts_with("token:")).count(), 4);
        assert_eq!(Manifest::parse(&text).unwrap(), m);

        let b = poc25_issue(&mut c, &[1u8; 100], 3, "issuer", &p).unwrap();
        let m = Manifest::Static(b);
        assert_eq!(Manifest::parse(&format!("# two-tx\n\n{}", m.to_text())).unwrap(), m);
    }

    #[test]
    fn sharded_round_trip() {
        let mut c = chain();
        let a = poc1_issue(&mut c, &[3u8; 200], "issuer", &ProtocolConstants::default()).unwrap();
        let m = Manifest::Sharded(a);
        let text = m.to_text();
        assert!(text.contains(" 4c010004\n"));
        assert_eq!(Manifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(Manifest::parse("scheme single"), Err(ManifestError::MalformedLine { line: 1 }));
        assert_eq!(Manifest::parse("scheme: single\n"), Err(ManifestError::MissingKey("file_size")));
        assert!(matches!(Manifest::parse("scheme: nope"), Err(ManifestError::BadValue { .. })));
        assert!(matches!(Manifest::parse("scheme: single\nscheme: single"), Err(ManifestError::DuplicateKey(_))));
        assert!(matches!(Manifest::parse("scheme: single\ncolour: red"), Err(ManifestError::UnknownKey(_))));
    }
}
