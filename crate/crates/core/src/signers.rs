// SPDX-License-Identifier: Apache-2.0

//! Deterministic stand-in for signatures.
//!
//! Each signer owns a secret derived from its label. An attestation for input `i` of a
//! transaction is `SHA256(tag || secret || txid || i)`, carried in the input's opaque
//! attestation bytes next to the signer label. Because the txid excludes attestations,
//! co-signers can append theirs in any order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::hash::sha256_concat;
use crate::tx::{multisig_redeem_script, parse_multisig_redeem_script, PublicKey, ScriptKind, Transaction};

const ATTESTATION_TAG: &[u8] = b"lockchain/attestation/v1";
const SECRET_TAG: &[u8] = b"lockchain/test-secret/v1";
const PUBKEY_TAG: &[u8] = b"lockchain/test-pubkey/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignerFileError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signer {
    pub id: String,
    pub pubkey: PublicKey,
    secret: [u8; 32],
}

/// One `(signer, tag)` pair inside an input's attestation bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attestation {
    pub signer: String,
    pub tag: [u8; 32],
}

impl Attestation {
    pub fn encode_all(list: &[Attestation]) -> Vec<u8> {
        let mut out = Vec::new();
        for a in list {
            let id = a.signer.as_bytes();
            out.push(id.len() as u8);
            out.extend_from_slice(id);
            out.extend_from_slice(&a.tag);
        }
        out
    }

    /// Malformed trailing data is ignored; it can only make attestations go missing.
    pub fn decode_all(mut bytes: &[u8]) -> Vec<Attestation> {
        let mut out = Vec::new();
        while let Some((&len, rest)) = bytes.split_first() {
            let len = len as usize;
            if rest.len() < len + 32 {
                break;
            }
            let Ok(signer) = std::str::from_utf8(&rest[..len]) else { break };
            out.push(Attestation { signer: signer.to_string(), tag: rest[len..len + 32].try_into().unwrap() });
            bytes = &rest[len + 32..];
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignerRegistry {
    signers: BTreeMap<String, Signer>,
    by_key_hash: BTreeMap<[u8; 20], String>,
    by_pubkey: BTreeMap<PublicKey, String>,
    multisig: BTreeMap<[u8; 32], [String; 2]>,
}

fn derive_secret(id: &str) -> [u8; 32] {
    sha256_concat(&[SECRET_TAG, id.as_bytes()])
}

/// Deterministic test key for a label.
pub fn test_pubkey(id: &str) -> PublicKey {
    let digest = sha256_concat(&[PUBKEY_TAG, &derive_secret(id)]);
    let mut key = [0u8; 33];
    key[0] = 0x02 | (digest[31] & 1);
    key[1..].copy_from_slice(&digest);
    PublicKey(key)
}

impl SignerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `id` with its deterministic test key. Idempotent.
    pub fn register(&mut self, id: &str) -> PublicKey {
        if let Some(s) = self.signers.get(id) {
            return s.pubkey;
        }
        self.register_with_pubkey(id, test_pubkey(id))
    }

    pub fn register_with_pubkey(&mut self, id: &str, pubkey: PublicKey) -> PublicKey {
        if let Some(old) = self.signers.get(id) {
            self.by_key_hash.remove(&old.pubkey.key_hash());
            self.by_pubkey.remove(&old.pubkey);
        }
        let signer = Signer { id: id.to_string(), pubkey, secret: derive_secret(id) };
        self.by_key_hash.insert(pubkey.key_hash(), id.to_string());
        self.by_pubkey.insert(pubkey, id.to_string());
        self.signers.insert(id.to_string(), signer);
        pubkey
    }

    pub fn contains(&self, id: &str) -> bool {
        self.signers.contains_key(id)
    }

    pub fn pubkey(&self, id: &str) -> Option<PublicKey> {
        self.signers.get(id).map(|s| s.pubkey)
    }

    pub fn id_for_pubkey(&self, key: &PublicKey) -> Option<&str> {
        self.by_pubkey.get(key).map(String::as_str)
    }

    pub fn p2wpkh(&self, id: &str) -> Option<ScriptKind> {
        self.pubkey(id).map(|k| ScriptKind::p2wpkh(&k))
    }

    /// Registers the 2-of-2 script `(owner, service)` and returns it.
    pub fn register_multisig(&mut self, owner: &str, service: &str) -> Option<Vec<u8>> {
        let script = multisig_redeem_script(&self.pubkey(owner)?, &self.pubkey(service)?);
        self.register_script(&script)?;
        Some(script)
    }

    /// Registers an existing 2-of-2 script whose keys both belong to known signers.
    pub fn register_script(&mut self, script: &[u8]) -> Option<[String; 2]> {
        let (a, b) = parse_multisig_redeem_script(script)?;
        let owners = [self.id_for_pubkey(&a)?.to_string(), self.id_for_pubkey(&b)?.to_string()];
        self.multisig.insert(crate::hash::sha256(script), owners.clone());
        Some(owners)
    }

    /// Signers whose attestations are all required to spend an output with `script`.
    pub fn owners_of(&self, script: &ScriptKind) -> Vec<String> {
        match script {
            ScriptKind::P2wpkh(h) => self.by_key_hash.get(h).cloned().into_iter().collect(),
            ScriptKind::P2wsh(h) => self.multisig.get(h).map(|o| o.to_vec()).unwrap_or_default(),
            ScriptKind::OpReturn(_) => Vec::new(),
        }
    }

    fn tag(secret: &[u8; 32], tx: &Transaction, input: usize) -> [u8; 32] {
        sha256_concat(&[ATTESTATION_TAG, secret, &tx.txid().0, &(input as u32).to_le_bytes()])
    }

    /// Appends `id`'s attestation to input `input`. Returns false for unknown signers.
    pub fn attest(&self, tx: &mut Transaction, input: usize, id: &str) -> bool {
        let Some(signer) = self.signers.get(id) else { return false };
        let Some(_) = tx.inputs.get(input) else { return false };
        let tag = Self::tag(&signer.secret, tx, input);
        let mut list = Attestation::decode_all(&tx.inputs[input].attestation);
        if list.iter().any(|a| a.signer == id && a.tag == tag) {
            return true;
        }
        list.push(Attestation { signer: id.to_string(), tag });
        tx.inputs[input].attestation = Attestation::encode_all(&list);
        true
    }

    /// Attests every input with `id`.
    pub fn attest_all(&self, tx: &mut Transaction, id: &str) -> bool {
        (0..tx.inputs.len()).all(|i| self.attest(tx, i, id))
    }

    /// Labels with a valid attestation on `input`.
    pub fn valid_attesters(&self, tx: &Transaction, input: usize) -> Vec<String> {
        let Some(inp) = tx.inputs.get(input) else { return Vec::new() };
        Attestation::decode_all(&inp.attestation)
            .into_iter()
            .filter(|a| self.signers.get(&a.signer).is_some_and(|s| Self::tag(&s.secret, tx, input) == a.tag))
            .map(|a| a.signer)
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.signers.keys().map(String::as_str)
    }

    /// `signer <id> <pubkey>` lines, then `multisig <first> <second>` in script key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in self.signers.values() {
            let _ = writeln!(out, "signer {} {}", s.id, s.pubkey);
        }
        let mut pairs: Vec<_> = self.multisig.values().collect();
        pairs.sort();
        for [a, b] in pairs {
            let _ = writeln!(out, "multisig {a} {b}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SignerFileError> {
        let mut reg = SignerRegistry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |reason: &str| SignerFileError::MalformedLine { line, reason: reason.to_string() };
            let words: Vec<&str> = raw.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                [first, ..] if first.starts_with('#') => {}
                ["signer", id, key] => {
                    let key: PublicKey = key.parse().map_err(|_| err("bad public key"))?;
                    reg.register_with_pubkey(id, key);
                }
                ["multisig", a, b] => {
                    reg.register_multisig(a, b).ok_or_else(|| err("multisig names an unknown signer"))?;
                }
                _ => return Err(err("expected `signer <id> <pubkey>` or `multisig <id> <id>`")),
            }
        }
        Ok(reg)
    }
}
