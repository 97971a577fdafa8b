// SPDX-License-Identifier: Apache-2.0

//! File chunking, SHA256 Merkle trees and timestamped content digests.
//!
//! Leaves are single SHA256 of each chunk. Interior nodes hash `left || right`; a level
//! with an odd number of nodes pairs its last node with itself.

use thiserror::Error;

use crate::hash::{sha256, sha256_concat};
use crate::header::LOCKTIME_THRESHOLD;

pub type Hash32 = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("no data to chunk")]
    EmptyData,
    #[error("chunk count must be at least 1")]
    ZeroChunks,
    #[error("{n_chunks} chunks requested for {file_size} bytes")]
    TooManyChunks { file_size: usize, n_chunks: usize },
    #[error("{file_size} bytes cannot be split into {n_chunks} chunks of {chunk_size} with a non-empty last chunk")]
    UnevenChunks { file_size: usize, n_chunks: usize, chunk_size: usize },
    #[error("merkle tree needs at least one leaf")]
    EmptyLeaves,
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkPlan {
    pub file_size: usize,
    pub n_chunks: usize,
    pub chunk_size: usize,
    pub last_chunk_size: usize,
}

impl ChunkPlan {
    /// `n_chunks` pieces of `ceil(file_size / n_chunks)` bytes, the last one shorter.
    pub fn by_count(file_size: usize, n_chunks: usize) -> Result<Self, MerkleError> {
        if file_size == 0 {
            return Err(MerkleError::EmptyData);
        }
        if n_chunks == 0 {
            return Err(MerkleError::ZeroChunks);
        }
        if n_chunks > file_size {
            return Err(MerkleError::TooManyChunks { file_size, n_chunks });
        }
        let chunk_size = file_size.div_ceil(n_chunks);
        let before_last = (n_chunks - 1) * chunk_size;
        if before_last >= file_size {
            return Err(MerkleError::UnevenChunks { file_size, n_chunks, chunk_size });
        }
        Ok(ChunkPlan { file_size, n_chunks, chunk_size, last_chunk_size: file_size - before_last })
    }

    /// Fixed-size pieces; the count follows from the size.
    pub fn by_size(file_size: usize, chunk_size: usize) -> Result<Self, MerkleError> {
        if file_size == 0 {
            return Err(MerkleError::EmptyData);
        }
        if chunk_size == 0 {
            return Err(MerkleError::ZeroChunks);
        }
        let n_chunks = file_size.div_ceil(chunk_size);
        Ok(ChunkPlan {
            file_size,
            n_chunks,
            chunk_size,
            last_chunk_size: file_size - (n_chunks - 1) * chunk_size,
        })
    }

    pub fn split<'a>(&self, data: &'a [u8]) -> Vec<&'a [u8]> {
        debug_assert_eq!(data.len(), self.file_size);
        data.chunks(self.chunk_size).collect()
    }
}

/// Splits `data` into `n_chunks` pieces.
pub fn chunk(data: &[u8], n_chunks: usize) -> Result<(Vec<&[u8]>, ChunkPlan), MerkleError> {
    let plan = ChunkPlan::by_count(data.len(), n_chunks)?;
    Ok((plan.split(data), plan))
}

pub fn leaf_hashes(chunks: &[&[u8]]) -> Vec<Hash32> {
    chunks.iter().map(|c| sha256(c)).collect()
}

fn next_level(level: &[Hash32]) -> Vec<Hash32> {
    level
        .chunks(2)
        .map(|pair| {
            let right = pair.get(1).unwrap_or(&pair[0]);
            sha256_concat(&[&pair[0], right])
        })
        .collect()
}

pub fn merkle_root(leaves: &[Hash32]) -> Result<Hash32, MerkleError> {
    if leaves.is_empty() {
        return Err(MerkleError::EmptyLeaves);
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

/// Sibling hashes from leaf to root. Direction at each level comes from the index bits.
pub fn inclusion_proof(leaves: &[Hash32], index: usize) -> Result<Vec<Hash32>, MerkleError> {
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange { index, len: leaves.len() });
    }
    let mut path = Vec::new();
    let mut level = leaves.to_vec();
    let mut i = index;
    while level.len() > 1 {
        let sibling = if i.is_multiple_of(2) { level.get(i + 1).unwrap_or(&level[i]) } else { &level[i - 1] };
        path.push(*sibling);
        level = next_level(&level);
        i /= 2;
    }
    Ok(path)
}

pub fn verify_proof(leaf: &Hash32, index: usize, path: &[Hash32], root: &Hash32) -> bool {
    if path.len() < usize::BITS as usize && index >> path.len() != 0 {
        return false;
    }
    let mut acc = *leaf;
    for (level, sibling) in path.iter().enumerate() {
        acc = if (index >> level) & 1 == 0 {
            sha256_concat(&[&acc, sibling])
        } else {
            sha256_concat(&[sibling, &acc])
        };
    }
    acc == *root
}

/// Leaves, root and plan for one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleCommitment {
    pub leaves: Vec<Hash32>,
    pub root: Hash32,
    pub plan: ChunkPlan,
}

impl MerkleCommitment {
    pub fn build(data: &[u8], n_chunks: usize) -> Result<Self, MerkleError> {
        let (chunks, plan) = chunk(data, n_chunks)?;
        let leaves = leaf_hashes(&chunks);
        let root = merkle_root(&leaves)?;
        Ok(MerkleCommitment { leaves, root, plan })
    }

    pub fn proof(&self, index: usize) -> Result<Vec<Hash32>, MerkleError> {
        inclusion_proof(&self.leaves, index)
    }

    pub fn is_consistent(&self) -> bool {
        merkle_root(&self.leaves).is_ok_and(|r| r == self.root)
    }
}

/// `SHA256(data || decimal(timestamp))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestampProof {
    pub timestamp: u32,
    pub digest: Hash32,
}

impl TimestampProof {
    pub fn verify(&self, data: &[u8]) -> bool {
        timestamp_digest(data, self.timestamp) == self.digest
    }
}

pub fn timestamp_digest(data: &[u8], timestamp: u32) -> Hash32 {
    sha256_concat(&[data, timestamp.to_string().as_bytes()])
}

pub fn timestamp_proof(data: &[u8], timestamp: u32) -> TimestampProof {
    debug_assert!(timestamp >= LOCKTIME_THRESHOLD);
    TimestampProof { timestamp, digest: timestamp_digest(data, timestamp) }
}
