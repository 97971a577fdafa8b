// SPDX-License-Identifier: Apache-2.0

pub mod annex;
pub mod assets;
pub mod chain;
pub mod hash;
pub mod header;
pub mod indexer;
pub mod manifest;
pub mod merkle;
pub mod signers;
pub mod snapshot;
pub mod synth;
pub mod tx;
