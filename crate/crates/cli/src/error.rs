// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use lockchain::assets::AssetError;
use lockchain::chain::ChainError;
use lockchain::indexer::{RegistryError, ScanError};
use lockchain::manifest::ManifestError;
use lockchain::signers::SignerFileError;
use lockchain::snapshot::SnapshotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Asset(#[from] AssetError),
    #[error("{0}")]
    Chain(#[from] ChainError),
    #[error("{0}")]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Snapshot(#[from] SnapshotError),
    #[error("{0}")]
    Signers(#[from] SignerFileError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{} already exists", .0.display())]
    FileExists(PathBuf),
    #[error("{detail}")]
    Verify { reason: &'static str, detail: String },
    #[error("annex {annex}: {label} expected {expected}, got {actual}")]
    AnnexMismatch { annex: u8, label: &'static str, expected: String, actual: String },
    #[error("manifest describes a {0} asset, transfers need multisig")]
    NotTransferable(String),
}

impl From<ScanError> for CliError {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Snapshot(s) => CliError::Snapshot(s),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Stable single-token reason printed before the message.
    pub fn reason(&self) -> &'static str {
        match self {
            CliError::Asset(e) => e.reason(),
            CliError::Chain(e) => e.reason(),
            CliError::Manifest(_) => "MalformedManifest",
            CliError::Registry(RegistryError::Io(_)) => "Io",
            CliError::Registry(_) => "MalformedRegistry",
            CliError::Snapshot(_) => "MalformedChain",
            CliError::Signers(_) => "MalformedSigners",
            CliError::Io { .. } => "Io",
            CliError::InvalidConfig(_) => "InvalidConfig",
            CliError::FileExists(_) => "FileExists",
            CliError::Verify { reason, .. } => reason,
            CliError::AnnexMismatch { .. } => "AnnexMismatch",
            CliError::NotTransferable(_) => "NotTransferable",
        }
    }
}
