// SPDX-License-Identifier: Apache-2.0

//! Global options, optionally backed by a `key: value` config file. Flags win over the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use lockchain::assets::ProtocolConstants;
use lockchain::chain::{ChainConfig, DEFAULT_DUST_LIMIT};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Kv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Chain snapshot; signers live beside it in `<chain>.signers`.
    #[arg(long, global = true)]
    pub chain: Option<PathBuf>,
    /// Magic/type registry file. The built-in registry is used when absent.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// Value of each dust token.
    #[arg(long, global = true)]
    pub dust: Option<u64>,
    #[arg(long, global = true)]
    pub op_return_limit: Option<usize>,
    #[arg(long, global = true)]
    pub network_fee: Option<u64>,
    /// Advance the chain clock to at least this Unix time before running.
    #[arg(long, global = true)]
    pub clock: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Config file with the same keys as the flags above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub chain: PathBuf,
    pub registry: Option<PathBuf>,
    pub dust: u64,
    pub op_return_limit: usize,
    pub network_fee: u64,
    pub clock: Option<u32>,
    pub format: Format,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let mut merged = args.clone();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            apply_file(&mut merged, &text)?;
        }
        let s = Settings {
            chain: merged.chain.unwrap_or_else(|| PathBuf::from("lockchain.chain")),
            registry: merged.registry,
            dust: merged.dust.unwrap_or(546),
            op_return_limit: merged.op_return_limit.unwrap_or(80),
            network_fee: merged.network_fee.unwrap_or(2_000),
            clock: merged.clock,
            format: merged.format.unwrap_or(Format::Text),
        };
        if s.dust < 1 {
            return Err(CliError::InvalidConfig("dust must be at least 1".into()));
        }
        if s.op_return_limit < 33 {
            return Err(CliError::InvalidConfig("op_return_limit must be at least 33".into()));
        }
        Ok(s)
    }

    pub fn params(&self) -> ProtocolConstants {
        ProtocolConstants {
            dust_value: self.dust,
            op_return_limit: self.op_return_limit,
            network_fee: self.network_fee,
            ..ProtocolConstants::default()
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            dust_limit: self.dust.min(DEFAULT_DUST_LIMIT),
            op_return_limit: self.op_return_limit,
            ..ChainConfig::default()
        }
    }

    pub fn signers_path(&self) -> PathBuf {
        signers_path(&self.chain)
    }
}

pub fn signers_path(chain: &Path) -> PathBuf {
    let mut name = chain.as_os_str().to_owned();
    name.push(".signers");
    PathBuf::from(name)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::InvalidConfig(format!("bad value for {key}: {value}")))
}

fn apply_file(args: &mut GlobalArgs, text: &str) -> Result<(), CliError> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::InvalidConfig(format!("line {}: expected `key: value`", i + 1)))?;
        match key {
            "chain" => {
                args.chain.get_or_insert_with(|| value.into());
            }
            "registry" => {
                args.registry.get_or_insert_with(|| value.into());
            }
            "dust" => set(&mut args.dust, key, value)?,
            "op_return_limit" => set(&mut args.op_return_limit, key, value)?,
            "network_fee" => set(&mut args.network_fee, key, value)?,
            "clock" => set(&mut args.clock, key, value)?,
            "format" => {
                if args.format.is_none() {
                    args.format = Some(
                        Format::from_str(value, true)
                            .map_err(|_| CliError::InvalidConfig(format!("bad value for format: {value}")))?,
                    );
                }
            }
            other => return Err(CliError::InvalidConfig(format!("unknown key {other}"))),
        }
    }
    Ok(())
}

fn set<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), CliError> {
    if slot.is_none() {
        *slot = Some(parse(key, value)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut args = GlobalArgs { dust: Some(700), ..GlobalArgs::default() };
        apply_file(&mut args, "# c\ndust: 650\nnetwork_fee: 1200\nformat: kv\n").unwrap();
        assert_eq!(args.dust, Some(700));
        assert_eq!(args.network_fee, Some(1_200));
        assert_eq!(args.format, Some(Format::Kv));
    }

    #[test]
    fn rejects_bad_files_and_limits() {
        let mut args = GlobalArgs::default();
        assert_eq!(apply_file(&mut args, "colour: red").unwrap_err().reason(), "InvalidConfig");
        assert_eq!(apply_file(&mut args, "dust = 5").unwrap_err().reason(), "InvalidConfig");
        let tight = GlobalArgs { op_return_limit: Some(32), ..GlobalArgs::default() };
        assert_eq!(Settings::resolve(&tight).unwrap_err().reason(), "InvalidConfig");
        let zero = GlobalArgs { dust: Some(0), ..GlobalArgs::default() };
        assert_eq!(Settings::resolve(&zero).unwrap_err().reason(), "InvalidConfig");
    }

    #[test]
    fn signer_file_sits_beside_chain() {
        assert_eq!(signers_path(Path::new("a/b.chain")), PathBuf::from("a/b.chain.signers"));
    }
}
