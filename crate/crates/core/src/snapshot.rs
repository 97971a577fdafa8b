// SPDX-License-Identifier: Apache-2.0

//! Chain snapshot files.
//!
//! ```text
//! "LCSIM1"                         6 bytes
//! block_count   u32 LE
//! clock         u32 LE             chain time when the snapshot was taken
//! tx_count      u32 LE
//! block table   block_count x u32 LE   transactions per block
//! offset table  tx_count x (u64 LE offset, u32 LE length)
//! bodies        tx_count x (u32 LE length, serialized transaction)
//! ```
//!
//! Offsets point at the first byte of each serialized transaction, so the trailing
//! 4-byte locktime of any transaction can be read without touching its body.

use std::cell::{Cell, RefCell};
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::Path;

use thiserror::Error;

use crate::tx::{Transaction, TxError};

pub const SNAPSHOT_MAGIC: &[u8; 6] = b"LCSIM1";
const HEADER_LEN: u64 = 18;
const ENTRY_LEN: u64 = 12;
/// version + two empty counts + locktime.
const MIN_TX_LEN: u32 = 10;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot corrupt: {0}")]
    SnapshotCorrupt(String),
    #[error("transaction {index}: {source}")]
    BadTransaction { index: usize, source: TxError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::SnapshotCorrupt(msg.into())
}

/// Random-access bytes.
pub trait ByteSource {
    fn len(&self) -> u64;
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ByteSource for [u8] {
    fn len(&self) -> u64 {
        <[u8]>::len(self) as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let start = usize::try_from(offset).map_err(|_| io::Error::from(io::ErrorKind::UnexpectedEof))?;
        let src = self
            .get(start..start.saturating_add(buf.len()))
            .filter(|s| <[u8]>::len(s) == buf.len())
            .ok_or(io::Error::from(io::ErrorKind::UnexpectedEof))?;
        buf.copy_from_slice(src);
        Ok(())
    }
}

impl ByteSource for Vec<u8> {
    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.as_slice().read_at(offset, buf)
    }
}

impl<S: ByteSource + ?Sized> ByteSource for &S {
    fn len(&self) -> u64 {
        (**self).len()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        (**self).read_at(offset, buf)
    }
}

/// Reads from a file with seeks, so only the requested ranges are pulled in.
pub struct FileSource {
    file: RefCell<File>,
    len: u64,
}

impl FileSource {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(FileSource { file: RefCell::new(file), len })
    }
}

impl ByteSource for FileSource {
    fn len(&self) -> u64 {
        self.len
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        let mut f = self.file.borrow_mut();
        f.seek(SeekFrom::Start(offset))?;
        f.read_exact(buf)
    }
}

/// Counts every byte read through it.
pub struct CountingSource<S> {
    inner: S,
    read: Cell<u64>,
}

impl<S: ByteSource> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        CountingSource { inner, read: Cell::new(0) }
    }

    pub fn bytes_read(&self) -> u64 {
        self.read.get()
    }
}

impl<S: ByteSource> ByteSource for CountingSource<S> {
    fn len(&self) -> u64 {
        self.inner.len()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.read.set(self.read.get() + buf.len() as u64);
        self.inner.read_at(offset, buf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxEntry {
    pub block: u32,
    pub offset: u64,
    pub len: u32,
}

/// An opened snapshot: tables in memory, bodies left in the source.
pub struct Snapshot<S> {
    source: S,
    clock: u32,
    block_sizes: Vec<u32>,
    entries: Vec<TxEntry>,
}

impl<S: ByteSource> Snapshot<S> {
    pub fn open(source: S) -> Result<Self, SnapshotError> {
        let total = source.len();
        if total < HEADER_LEN {
            return Err(corrupt("shorter than header"));
        }
        let mut header = [0u8; HEADER_LEN as usize];
        source.read_at(0, &mut header)?;
        if &header[..6] != SNAPSHOT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |b: &[u8], i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let block_count = u32_at(&header, 6) as u64;
        let clock = u32_at(&header, 10);
        let tx_count = u32_at(&header, 14) as u64;

        let tables_len = block_count * 4 + tx_count * ENTRY_LEN;
        let bodies_start = HEADER_LEN + tables_len;
        if bodies_start > total {
            return Err(corrupt("tables run past end of file"));
        }
        let mut tables = vec![0u8; tables_len as usize];
        source.read_at(HEADER_LEN, &mut tables)?;
        let block_sizes: Vec<u32> = (0..block_count as usize).map(|i| u32_at(&tables, i * 4)).collect();
        if block_sizes.iter().map(|&n| n as u64).sum::<u64>() != tx_count {
            return Err(corrupt("block table does not add up to transaction count"));
        }

        let mut entries = Vec::with_capacity(tx_count as usize);
        let mut expected = bodies_start;
        let base = block_count as usize * 4;
        let mut blocks = block_sizes.iter().enumerate().flat_map(|(b, &n)| std::iter::repeat_n(b as u32, n as usize));
        for i in 0..tx_count as usize {
            let at = base + i * ENTRY_LEN as usize;
            let offset = u64::from_le_bytes(tables[at..at + 8].try_into().unwrap());
            let len = u32_at(&tables, at + 8);
            // each body is preceded by its own length prefix
            if offset != expected + 4 || len < MIN_TX_LEN || offset + len as u64 > total {
                return Err(corrupt(format!("bad offset entry {i}")));
            }
            expected = offset + len as u64;
            entries.push(TxEntry { block: blocks.next().unwrap(), offset, len });
        }
        if expected != total {
            return Err(corrupt("trailing bytes after last transaction"));
        }
        Ok(Snapshot { source, clock, block_sizes, entries })
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn block_count(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn tx_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[TxEntry] {
        &self.entries
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    /// Sum of serialized transaction sizes, excluding framing.
    pub fn total_tx_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.len as u64).sum()
    }

    /// Reads only the trailing four bytes of transaction `index`.
    pub fn locktime(&self, index: usize) -> Result<u32, SnapshotError> {
        let e = self.entries.get(index).ok_or_else(|| corrupt(format!("no transaction {index}")))?;
        let mut buf = [0u8; 4];
        self.source.read_at(e.offset + e.len as u64 - 4, &mut buf)?;
        Ok(u32::from_le_bytes(buf))
    }

    pub fn raw_transaction(&self, index: usize) -> Result<Vec<u8>, SnapshotError> {
        let e = self.entries.get(index).ok_or_else(|| corrupt(format!("no transaction {index}")))?;
        let mut buf = vec![0u8; e.len as usize];
        self.source.read_at(e.offset, &mut buf)?;
        Ok(buf)
    }

    pub fn transaction(&self, index: usize) -> Result<Transaction, SnapshotError> {
        let raw = self.raw_transaction(index)?;
        Transaction::parse(&raw).map_err(|source| SnapshotError::BadTransaction { index, source })
    }

    /// All transactions grouped by block.
    pub fn blocks(&self) -> Result<Vec<Vec<Transaction>>, SnapshotError> {
        let mut out: Vec<Vec<Transaction>> = self.block_sizes.iter().map(|&n| Vec::with_capacity(n as usize)).collect();
        for (i, e) in self.entries.iter().enumerate() {
            out[e.block as usize].push(self.transaction(i)?);
        }
        Ok(out)
    }
}

pub fn encode_snapshot<'a, I>(blocks: I, clock: u32) -> Vec<u8>
where
    I: IntoIterator<Item = &'a [Transaction]>,
{
    let bodies: Vec<Vec<Vec<u8>>> = blocks.into_iter().map(|b| b.iter().map(Transaction::encode).collect()).collect();
    let tx_count: usize = bodies.iter().map(Vec::len).sum();
    let mut out = Vec::new();
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(bodies.len() as u32).to_le_bytes());
    out.extend_from_slice(&clock.to_le_bytes());
    out.extend_from_slice(&(tx_count as u32).to_le_bytes());
    for b in &bodies {
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    }
    let mut offset = HEADER_LEN + bodies.len() as u64 * 4 + tx_count as u64 * ENTRY_LEN;
    for body in bodies.iter().flatten() {
        out.extend_from_slice(&(offset + 4).to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        offset += 4 + body.len() as u64;
    }
    for body in bodies.iter().flatten() {
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
    }
    out
}
