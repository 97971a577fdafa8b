// SPDX-License-Identifier: Apache-2.0

//! Packing of protocol metadata into the 32-bit nLockTime field.
//!
//! The canonical layout splits the field into four bytes: magic, type, variant and
//! sequence, most significant first. Other byte-aligned splits and arbitrary bit-level
//! layouts are supported through [`HeaderLayout`]; every layout packs its fields
//! big-endian, so the first field always lands in the most significant bits.

use std::fmt;

use thiserror::Error;

/// Values at or above this threshold are Unix timestamps, below it block heights.
pub const LOCKTIME_THRESHOLD: u32 = 500_000_000;

/// Lowest first byte that keeps every suffix inside the timestamp interpretation.
pub const MIN_SAFE_FIRST_BYTE: u8 = 0x1F;

/// Highest first byte that stays in the past as of late 2025.
pub const MAX_SAFE_FIRST_BYTE: u8 = 0x68;

/// `MIN_SAFE_FIRST_BYTE << 24`.
pub const MIN_SAFE_LOCKTIME: u32 = (MIN_SAFE_FIRST_BYTE as u32) << 24;

/// `(MAX_SAFE_FIRST_BYTE << 24) | 0x00FF_FFFF`.
pub const MAX_SAFE_LOCKTIME: u32 = ((MAX_SAFE_FIRST_BYTE as u32) << 24) | 0x00FF_FFFF;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeaderError {
    #[error("field {index} value {value} does not fit in {width} bits")]
    FieldOverflow { index: usize, value: u32, width: u32 },
    #[error("layout expects {expected} fields, got {got}")]
    FieldCount { expected: usize, got: usize },
    #[error("invalid bit layout {0:?}: widths must be >= 1 and sum to 32")]
    BadWidths(Vec<u32>),
}

/// How the 32 bits of the locktime are split into fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum HeaderLayout {
    /// magic, type, variant, sequence.
    #[default]
    Bytes1111,
    /// 16-bit protocol id, 16-bit sequence.
    Bytes22,
    /// 24-bit identifier, 8-bit sequence.
    Bytes31,
    /// 16-bit protocol id, 8-bit type, 8-bit sequence.
    Bytes211,
    /// Arbitrary bit widths, most significant first. Build with [`HeaderLayout::bits`].
    Bits(Vec<u32>),
}

impl HeaderLayout {
    pub fn bits(widths: Vec<u32>) -> Result<Self, HeaderError> {
        if widths.is_empty() || widths.contains(&0) || widths.iter().sum::<u32>() != 32 {
            return Err(HeaderError::BadWidths(widths));
        }
        Ok(HeaderLayout::Bits(widths))
    }

    pub fn widths(&self) -> &[u32] {
        match self {
            HeaderLayout::Bytes1111 => &[8, 8, 8, 8],
            HeaderLayout::Bytes22 => &[16, 16],
            HeaderLayout::Bytes31 => &[24, 8],
            HeaderLayout::Bytes211 => &[16, 8, 8],
            HeaderLayout::Bits(w) => w,
        }
    }

    /// Packs `fields` big-endian according to this layout.
    pub fn encode(&self, fields: &[u32]) -> Result<u32, HeaderError> {
        let widths = self.widths();
        if fields.len() != widths.len() {
            return Err(HeaderError::FieldCount { expected: widths.len(), got: fields.len() });
        }
        let mut out: u64 = 0;
        for (index, (&value, &width)) in fields.iter().zip(widths).enumerate() {
            if u64::from(value) >= 1u64 << width {
                return Err(HeaderError::FieldOverflow { index, value, width });
            }
            out = (out << width) | u64::from(value);
        }
        Ok(out as u32)
    }

    pub fn decode(&self, locktime: u32) -> Vec<u32> {
        let widths = self.widths();
        let mut shift = 32u32;
        widths
            .iter()
            .map(|&width| {
                shift -= width;
                let mask = ((1u64 << width) - 1) as u32;
                (((locktime as u64) >> shift) as u32) & mask
            })
            .collect()
    }

    /// Decodes only when `locktime` lies in the protocol band at time `now`.
    pub fn decode_validated(&self, locktime: u32, now: u32) -> Option<Vec<u32>> {
        in_protocol_range(locktime, now).then(|| self.decode(locktime))
    }
}

/// Four-byte header under the canonical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LockchainHeader {
    pub magic: u8,
    pub typ: u8,
    pub variant: u8,
    pub sequence: u8,
}

impl LockchainHeader {
    pub const fn new(magic: u8, typ: u8, variant: u8, sequence: u8) -> Self {
        LockchainHeader { magic, typ, variant, sequence }
    }

    pub const fn to_locktime(self) -> u32 {
        u32::from_be_bytes([self.magic, self.typ, self.variant, self.sequence])
    }

    pub const fn from_locktime(locktime: u32) -> Self {
        let [magic, typ, variant, sequence] = locktime.to_be_bytes();
        LockchainHeader { magic, typ, variant, sequence }
    }

    /// Decodes only when `locktime` lies in the protocol band at time `now`.
    pub fn from_locktime_validated(locktime: u32, now: u32) -> Option<Self> {
        in_protocol_range(locktime, now).then(|| Self::from_locktime(locktime))
    }

    pub fn fields(self) -> [u32; 4] {
        [self.magic, self.typ, self.variant, self.sequence].map(u32::from)
    }

    /// Re-encodes the four header bytes as fields of an arbitrary layout.
    pub fn encode_with(self, layout: &HeaderLayout) -> u32 {
        match layout {
            HeaderLayout::Bytes1111 => self.to_locktime(),
            // every layout covers all 32 bits, so the packed value is the same bit string
            other => {
                let fields = other.decode(self.to_locktime());
                other.encode(&fields).expect("decoded fields fit their widths")
            }
        }
    }

    pub fn is_protocol_safe(self) -> bool {
        (MIN_SAFE_FIRST_BYTE..=MAX_SAFE_FIRST_BYTE).contains(&self.magic)
    }
}

impl fmt::Display for LockchainHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:08X}", self.to_locktime())
    }
}

/// Encodes a header under `layout`; see [`HeaderLayout::encode`].
pub fn encode_header(fields: &[u32], layout: &HeaderLayout) -> Result<u32, HeaderError> {
    layout.encode(fields)
}

pub fn decode_header(locktime: u32, layout: &HeaderLayout) -> Vec<u32> {
    layout.decode(locktime)
}

pub fn is_timestamp(locktime: u32) -> bool {
    locktime >= LOCKTIME_THRESHOLD
}

/// True when the first byte is in `[0x1F, 0x68]` and the value is already in the past.
pub fn in_protocol_range(locktime: u32, now: u32) -> bool {
    let first = (locktime >> 24) as u8;
    (MIN_SAFE_FIRST_BYTE..=MAX_SAFE_FIRST_BYTE).contains(&first) && locktime < now
}

/// Printable ASCII rendering of a header byte, used for hex-dump annotations.
pub fn magic_printable(byte: u8) -> Option<char> {
    (0x20..=0x7E).contains(&byte).then_some(byte as char)
}

/// The protocol band plus an injected "now".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PragmaticRange {
    pub min_timestamp: u32,
    pub min_safe_first_byte: u8,
    pub max_safe_first_byte: u8,
    pub now: u32,
}

impl PragmaticRange {
    pub fn at(now: u32) -> Self {
        PragmaticRange {
            min_timestamp: LOCKTIME_THRESHOLD,
            min_safe_first_byte: MIN_SAFE_FIRST_BYTE,
            max_safe_first_byte: MAX_SAFE_FIRST_BYTE,
            now,
        }
    }

    pub fn contains(&self, locktime: u32) -> bool {
        let first = (locktime >> 24) as u8;
        (self.min_safe_first_byte..=self.max_safe_first_byte).contains(&first) && locktime < self.now
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NOW: u32 = 1_763_000_000;

    #[test]
    fn encodes_known_headers() {
        assert_eq!(LockchainHeader::new(0x4C, 0x01, 0x00, 0x00).to_locktime(), 0x4C01_0000);
        assert_eq!(LockchainHeader::new(0x4C, 0x03, 0x74, 0x01).to_locktime(), 0x4C03_7401);
        assert_eq!(LockchainHeader::new(0, 0, 0, 0).to_locktime(), 0);
        assert_eq!(encode_header(&[0x4C, 0x01, 0x00, 0x17], &HeaderLayout::Bytes1111), Ok(0x4C01_0017));
    }

    #[test]
    fn decodes_known_headers() {
        assert_eq!(LockchainHeader::from_locktime(0x4C01_0017), LockchainHeader::new(0x4C, 0x01, 0x00, 0x17));
        assert_eq!(LockchainHeader::from_locktime(0x4C03_6700), LockchainHeader::new(0x4C, 0x03, 0x67, 0x00));
    }

    #[test]
    fn layout_fields() {
        assert_eq!(HeaderLayout::Bytes22.decode(0x4C01_0017), vec![0x4C01, 0x0017]);
        assert_eq!(HeaderLayout::Bytes31.decode(0x4C01_0017), vec![0x4C_0100, 0x17]);
        assert_eq!(HeaderLayout::Bytes211.decode(0x4C01_0017), vec![0x4C01, 0x00, 0x17]);
        assert_eq!(HeaderLayout::Bytes31.encode(&[0x4C_0374, 0x01]), Ok(0x4C03_7401));
    }

    #[test]
    fn overflow_is_rejected() {
        assert_eq!(
            HeaderLayout::Bytes1111.encode(&[0x100, 0, 0, 0]),
            Err(HeaderError::FieldOverflow { index: 0, value: 0x100, width: 8 })
        );
        assert!(HeaderLayout::Bytes31.encode(&[1 << 24, 0]).is_err());
        assert!(matches!(HeaderLayout::Bytes22.encode(&[1]), Err(HeaderError::FieldCount { .. })));
    }

    #[test]
    fn bit_layout_validation() {
        assert!(HeaderLayout::bits(vec![1, 31]).is_ok());
        assert!(HeaderLayout::bits(vec![32]).is_ok());
        assert!(HeaderLayout::bits(vec![0, 32]).is_err());
        assert!(HeaderLayout::bits(vec![8, 8, 8]).is_err());
        assert!(HeaderLayout::bits(vec![]).is_err());
        let l = HeaderLayout::bits(vec![4, 4, 12, 12]).unwrap();
        assert_eq!(l.decode(0x4C03_7401), vec![0x4, 0xC, 0x037, 0x401]);
    }

    #[test]
    fn timestamp_threshold() {
        assert!(is_timestamp(500_000_000));
        assert!(!is_timestamp(499_999_999));
        assert!(!is_timestamp(0));
    }

    #[test]
    fn protocol_band_endpoints() {
        assert_eq!(MIN_SAFE_LOCKTIME, 520_093_696);
        assert_eq!(MAX_SAFE_LOCKTIME, 1_761_607_679);
        assert!(in_protocol_range(0x1F00_0000, NOW));
        assert!(in_protocol_range(0x68FF_FFFF, NOW));
        assert!(!in_protocol_range(0x6900_0000, NOW));
        assert!(!in_protocol_range(0x1EFF_FFFF, NOW));
        // in band but not yet in the past
        assert!(!in_protocol_range(0x68FF_FFFF, 0x68FF_FFFF));
        assert!(PragmaticRange::at(NOW).contains(0x4C01_0000));
    }

    #[test]
    fn band_arithmetic_oracle() {
        // independent check: every suffix of the band endpoints stays on the right side
        for suffix in [0u32, 1, 0x7F_FFFF, 0xFF_FFFF].map(std::hint::black_box) {
            assert!((u32::from(MIN_SAFE_FIRST_BYTE) << 24 | suffix) >= LOCKTIME_THRESHOLD);
            assert!((u32::from(MAX_SAFE_FIRST_BYTE) << 24 | suffix) <= 1_761_607_679);
        }
        assert!(u32::from(MAX_SAFE_FIRST_BYTE + 1) << 24 > 1_761_607_679);
    }

    #[test]
    fn printable_bytes() {
        assert_eq!(magic_printable(0x4C), Some('L'));
        assert_eq!(magic_printable(0x73), Some('s'));
        assert_eq!(magic_printable(0x20), Some(' '));
        assert_eq!(magic_printable(0x1F), None);
        assert_eq!(magic_printable(0x7F), None);
    }

    #[test]
    fn display_is_hex() {
        assert_eq!(LockchainHeader::new(0x4C, 0x02, 0x73, 0x01).to_string(), "0x4C027301");
    }

    proptest! {
        #[test]
        fn canonical_matches_bit_layout(v in any::<u32>()) {
            let bits = HeaderLayout::bits(vec![8, 8, 8, 8]).unwrap();
            prop_assert_eq!(HeaderLayout::Bytes1111.decode(v), bits.decode(v));
            prop_assert_eq!(LockchainHeader::from_locktime(v).fields().to_vec(), bits.decode(v));
        }

        #[test]
        fn header_roundtrip(m in any::<u8>(), t in any::<u8>(), va in any::<u8>(), s in any::<u8>()) {
            let h = LockchainHeader::new(m, t, va, s);
            prop_assert_eq!(LockchainHeader::from_locktime(h.to_locktime()), h);
            prop_assert_eq!((h.to_locktime() >> 24) as u8, m);
        }

        #[test]
        fn band_grows_with_time(v in any::<u32>(), t in 520_093_697u32.., dt in 0u32..1_000_000) {
            if in_protocol_range(v, t) {
                prop_assert!(in_protocol_range(v, t.saturating_add(dt)));
            }
        }

        #[test]
        fn safe_magic_iff_band(v in any::<u32>()) {
            let h = LockchainHeader::from_locktime(v);
            prop_assert_eq!(h.is_protocol_safe(), in_protocol_range(v, u32::MAX));
        }
    }
}
