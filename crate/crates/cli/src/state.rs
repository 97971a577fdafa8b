// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use lockchain::assets::ProtocolConstants;
use lockchain::chain::SimChain;
use lockchain::indexer::Registry;
use lockchain::manifest::Manifest;
use lockchain::signers::SignerRegistry;
use lockchain::snapshot::Snapshot;

use crate::config::{signers_path, Settings};
use crate::error::CliError;

/// Loads the chain, or starts an empty one when the snapshot does not exist yet.
pub fn load_chain(settings: &Settings) -> Result<SimChain, CliError> {
    let mut chain = if settings.chain.exists() {
        let bytes = std::fs::read(&settings.chain).map_err(CliError::io(&settings.chain))?;
        let signers = match std::fs::read_to_string(settings.signers_path()) {
            Ok(text) => SignerRegistry::parse(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => SignerRegistry::new(),
            Err(e) => return Err(CliError::Io { path: settings.signers_path(), source: e }),
        };
        let snapshot = Snapshot::open(bytes)?;
        SimChain::from_snapshot(&snapshot, settings.chain_config(), signers)?
    } else {
        SimChain::new(settings.chain_config())
    };
    chain.signers_mut().register(&ProtocolConstants::default().fee_recipient);
    if let Some(t) = settings.clock.filter(|&t| t > chain.now()) {
        chain.set_clock(t)?;
    }
    Ok(chain)
}

/// Mines pending transactions and writes the snapshot and signer list.
pub fn save_chain(chain: &mut SimChain, path: &Path) -> Result<(), CliError> {
    if !chain.mempool().is_empty() {
        chain.mine_block();
    }
    write(path, &chain.snapshot_bytes())?;
    write(&signers_path(path), chain.signers().to_text().as_bytes())
}

pub fn load_registry(settings: &Settings) -> Result<Registry, CliError> {
    match &settings.registry {
        Some(path) => Ok(Registry::load(path)?),
        None => Ok(Registry::lockchain_default()),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(Manifest::parse(&text)?)
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(CliError::io(path))
}
