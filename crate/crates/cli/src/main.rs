// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lockchain::tx::OutPoint;

mod commands;
mod config;
mod error;
mod output;
mod state;

use config::{GlobalArgs, Settings};

/// Issue, transfer, scan and verify Lockchain assets on a simulated chain.
#[derive(Debug, Parser)]
#[command(name = "lockchain", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create coins for an owner and confirm them.
    Mint {
        owner: String,
        #[arg(required = true)]
        values: Vec<u64>,
    },
    /// Spread a file across locktime-sequenced shard transactions.
    IssueShard {
        file: PathBuf,
        #[arg(long, default_value = "issuer")]
        issuer: String,
        /// Also write the manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commit a file's Merkle root and issue dust tokens.
    IssueStatic {
        file: PathBuf,
        #[arg(long)]
        chunks: usize,
        #[arg(long, conflicts_with = "multisig")]
        two_tx: bool,
        #[arg(long)]
        multisig: bool,
        #[arg(long, default_value = "issuer")]
        issuer: String,
        #[arg(long, default_value = "service")]
        service: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Move a multisig token to a new owner. The manifest is updated in place.
    Transfer {
        manifest: PathBuf,
        #[arg(long)]
        token: usize,
        #[arg(long)]
        to: String,
        /// Outpoint (`txid:vout`) paying the fee instead of the owner's wallet.
        #[arg(long)]
        fee_source: Option<OutPoint>,
    },
    /// Discover assets with the header prefilter and report bytes inspected.
    Scan {
        /// Defaults to --chain.
        chain_file: Option<PathBuf>,
        /// Deserialize every transaction instead of prefiltering.
        #[arg(long)]
        baseline: bool,
        /// Write one line per discovered asset.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Check a manifest against the chain. Exit 0 only when every check holds.
    Verify {
        manifest: PathBuf,
        chain_file: Option<PathBuf>,
        /// Original file, to recompute the commitment.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replay one of the four logged issuance runs.
    ReplayAnnex {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        annex: u8,
    },
    /// Manage the magic/type registry file.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
    /// Write a synthetic chain with planted assets and decoys.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        transactions: usize,
        #[arg(long, default_value_t = 0x4C)]
        seed: u64,
    },
}

#[derive(Debug, Subcommand)]
enum RegistryAction {
    /// Write the default registry to --registry (or `lockchain.registry`).
    Init {
        #[arg(long)]
        force: bool,
    },
    /// Print the active registry.
    Show,
}

fn run(cli: Cli) -> Result<String, error::CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Mint { owner, values } => commands::mint(&settings, &owner, &values),
        Command::IssueShard { file, issuer, out } => commands::issue_shard(&settings, &file, &issuer, out.as_deref()),
        Command::IssueStatic { file, chunks, two_tx, multisig, issuer, service, out } => {
            let scheme = match (two_tx, multisig) {
                (true, _) => lockchain::assets::Scheme::TwoTx,
                (_, true) => lockchain::assets::Scheme::Multisig,
                _ => lockchain::assets::Scheme::Single,
            };
            commands::issue_static(&settings, &file, chunks, scheme, &issuer, &service, out.as_deref())
        }
        Command::Transfer { manifest, token, to, fee_source } => {
            commands::transfer(&settings, &manifest, token, &to, fee_source)
        }
        Command::Scan { chain_file, baseline, index } => {
            commands::scan(&settings, chain_file.as_deref(), baseline, index.as_deref())
        }
        Command::Verify { manifest, chain_file, data } => {
            commands::verify(&settings, &manifest, chain_file.as_deref(), data.as_deref())
        }
        Command::ReplayAnnex { annex } => commands::replay_annex(&settings, annex),
        Command::Registry { action: RegistryAction::Init { force } } => commands::registry_init(&settings, force),
        Command::Registry { action: RegistryAction::Show } => commands::registry_show(&settings),
        Command::Synth { out, transactions, seed } => commands::synth(&settings, &out, transactions, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("Usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {}", e.reason(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
