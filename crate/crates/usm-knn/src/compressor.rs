//! Deterministic loss-less compression used as a computable stand-in for
//! sequence complexity.
//!
//! The complexity of a byte sequence is approximated by the length of its
//! compressed form: a sequence that compresses well is simple, one that
//! resists compression is complex. Everything downstream (the normalized
//! distance, the K-NN learner) only ever looks at compressed *sizes*, so the
//! one hard requirement here is bit-exact determinism: the same
//! `(scheme, level, input)` must always produce the identical output stream.
//!
//! The default and currently only scheme is a raw DEFLATE stream per
//! RFC 1951 (no gzip/zlib container, so no header or checksum bytes dilute
//! the size ratios). The scheme and effort level are carried in
//! [`CompressorConfig`] so alternative codecs can be added behind the same
//! interface.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use flate2::write::DeflateEncoder;
use flate2::{Compression, Decompress, FlushDecompress, Status};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dictionary window of raw DEFLATE, in bytes. Matches on the stream can
/// only reference the previous 32 KiB, so for longer sequences the size
/// estimate stops seeing redundancy across the whole input.
pub const DEFLATE_WINDOW: usize = 32 * 1024;

/// Highest DEFLATE effort level accepted by the encoder.
pub const MAX_LEVEL: u32 = 9;

/// Identifier of a compression scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[non_exhaustive]
pub enum Scheme {
    /// Raw DEFLATE stream, RFC 1951.
    DeflateRaw,
}

impl Scheme {
    /// Dictionary window size of the scheme in bytes.
    pub fn window(self) -> usize {
        match self {
            Scheme::DeflateRaw => DEFLATE_WINDOW,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::DeflateRaw => write!(f, "deflate-raw"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deflate-raw" => Ok(Scheme::DeflateRaw),
            other => Err(Error::Config(format!(
                "unsupported compression scheme `{other}` (supported: deflate-raw)"
            ))),
        }
    }
}

/// Compression scheme plus effort level.
///
/// `window_note` records the scheme's dictionary window size; it is carried
/// for documentation in run metadata only and never influences the output.
/// Sequences longer than the window still compress, but the codec cannot
/// exploit redundancy further apart than the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCompressorConfig")]
pub struct CompressorConfig {
    scheme: Scheme,
    level: u32,
    window_note: usize,
}

#[derive(Deserialize)]
struct RawCompressorConfig {
    scheme: Scheme,
    level: u32,
}

impl TryFrom<RawCompressorConfig> for CompressorConfig {
    type Error = Error;

    fn try_from(raw: RawCompressorConfig) -> Result<Self> {
        CompressorConfig::new(raw.scheme, raw.level)
    }
}

impl CompressorConfig {
    /// Builds a config, rejecting effort levels outside `0..=9`.
    pub fn new(scheme: Scheme, level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Config(format!(
                "compression level {level} out of range 0..={MAX_LEVEL} for {scheme}"
            )));
        }
        Ok(CompressorConfig {
            scheme,
            level,
            window_note: scheme.window(),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Scheme dictionary window size in bytes (documentation only).
    pub fn window_note(&self) -> usize {
        self.window_note
    }

    /// Upper bound on `compressed_size(payload) - payload.len()`.
    ///
    /// DEFLATE can always fall back to stored blocks: 5 bytes of framing per
    /// started 64 KiB block, plus a small constant for stream termination
    /// and bit padding.
    pub fn overhead_bound(&self, input_len: usize) -> usize {
        match self.scheme {
            Scheme::DeflateRaw => 16 + 5 * (input_len / 65_535 + 1),
        }
    }
}

impl Default for CompressorConfig {
    /// Raw DEFLATE at maximum effort.
    fn default() -> Self {
        CompressorConfig::new(Scheme::DeflateRaw, MAX_LEVEL).expect("valid default")
    }
}

impl fmt::Display for CompressorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.scheme, self.level)
    }
}

fn encode(parts: &[&[u8]], config: &CompressorConfig) -> Vec<u8> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let mut encoder = DeflateEncoder::new(
        Vec::with_capacity(total / 2 + 64),
        Compression::new(config.level),
    );
    for part in parts {
        encoder
            .write_all(part)
            .expect("writing to an in-memory encoder cannot fail");
    }
    encoder
        .finish()
        .expect("finishing an in-memory encoder cannot fail")
}

/// Compresses `payload` and returns the raw compressed stream.
pub fn compress(payload: &[u8], config: &CompressorConfig) -> Vec<u8> {
    encode(&[payload], config)
}

/// Inverse of [`compress`]; fails on corrupt streams.
pub fn decompress(stream: &[u8], config: &CompressorConfig) -> Result<Vec<u8>> {
    match config.scheme {
        Scheme::DeflateRaw => {
            let mut inflater = Decompress::new(false);
            let mut out = Vec::with_capacity(2 * stream.len() + 64);
            loop {
                let consumed = inflater.total_in() as usize;
                if out.len() == out.capacity() {
                    out.reserve(64 * 1024);
                }
                let status = inflater
                    .decompress_vec(&stream[consumed..], &mut out, FlushDecompress::None)
                    .map_err(|e| Error::Data(format!("invalid deflate stream: {e}")))?;
                match status {
                    Status::StreamEnd => return Ok(out),
                    Status::Ok | Status::BufError => {
                        let progressed =
                            inflater.total_in() as usize != consumed || out.len() == out.capacity();
                        if !progressed {
                            return Err(Error::Data(
                                "truncated or corrupt deflate stream".to_string(),
                            ));
                        }
                    }
                }
            }
        }
    }
}

/// Size in bytes of the compressed form of `payload`.
///
/// Always positive (even the empty input costs a couple of bytes of block
/// framing) and never exceeds `payload.len() + overhead_bound`.
pub fn compressed_size(payload: &[u8], config: &CompressorConfig) -> usize {
    encode(&[payload], config).len()
}

/// Size in bytes of the compressed form of `x ‖ y` (raw concatenation, no
/// separator).
pub fn concat_size(x: &[u8], y: &[u8], config: &CompressorConfig) -> usize {
    encode(&[x, y], config).len()
}
