//! The episode file container.
//!
//! ```text
//! "RMBE" | version u16 | header_len u32 | header JSON
//! per channel, per 64-row chunk:
//!     raw_len u32 | stored_len u32 | codec u8 (0 raw, 1 deflate) | payload | crc32(payload) u32
//! footer: u64 start offset of every channel, in header order
//! ```
//!
//! All integers are little-endian. Actions are stored as the last channel,
//! named `action`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::env::{DType, EnvSpec, Encoding, Tensor};

use super::{DataError, Episode, Source, ACTION_KEY};

pub const MAGIC: &[u8; 4] = b"RMBE";
pub const FORMAT_VERSION: u16 = 1;
pub const CHUNK_ROWS: usize = 64;

const CODEC_RAW: u8 = 0;
const CODEC_DEFLATE: u8 = 1;
const CHUNK_OVERHEAD: u64 = 4 + 4 + 1 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChannelEntry {
    name: String,
    dtype: DType,
    /// Per-step shape (without the leading time axis).
    shape: Vec<usize>,
    encoding: Encoding,
    /// Whether any chunk of the channel is deflated.
    compressed: bool,
}

impl ChannelEntry {
    fn row_bytes(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    env_spec: EnvSpec,
    channels: Vec<ChannelEntry>,
    length: usize,
    seed: u64,
    source: Source,
    success: bool,
}

fn encode_chunk(raw: &[u8], out: &mut Vec<u8>) -> bool {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(raw).expect("in-memory write");
    let deflated = enc.finish().expect("in-memory write");
    // deflate only when it saves at least 10 %
    let use_deflate = deflated.len() * 10 <= raw.len() * 9;
    let payload: &[u8] = if use_deflate { &deflated } else { raw };
    out.extend_from_slice(&(raw.len() as u32).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(if use_deflate { CODEC_DEFLATE } else { CODEC_RAW });
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    use_deflate
}

/// Writes `ep` to `path`, choosing raw or deflate per chunk.
pub fn write_episode(ep: &Episode, path: impl AsRef<Path>) -> Result<(), DataError> {
    ep.check()?;
    let t = ep.len();
    let mut entries = Vec::new();
    let mut bodies = Vec::new();
    let all = ep.channels.iter().map(|(n, v)| (n.as_str(), v)).chain([(ACTION_KEY, &ep.actions)]);
    for (name, tensor) in all {
        let bytes = tensor.to_le_bytes();
        let row_bytes = bytes.len() / t;
        let mut body = Vec::new();
        let mut compressed = false;
        for chunk in bytes.chunks((CHUNK_ROWS * row_bytes).max(1)) {
            compressed |= encode_chunk(chunk, &mut body);
        }
        if bytes.is_empty() {
            for _ in 0..t.div_ceil(CHUNK_ROWS) {
                encode_chunk(&[], &mut body);
            }
        }
        let encoding = ep
            .env_spec
            .channel(name)
            .map(|c| c.encoding)
            .unwrap_or_else(|| crate::env::ChannelSpec::new(name, tensor.dtype(), vec![1]).encoding);
        entries.push(ChannelEntry {
            name: name.to_string(),
            dtype: tensor.dtype(),
            shape: tensor.shape[1..].to_vec(),
            encoding,
            compressed,
        });
        bodies.push(body);
    }
    let header = Header {
        env_spec: ep.env_spec.clone(),
        channels: entries,
        length: t,
        seed: ep.seed,
        source: ep.source,
        success: ep.success,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut offset = (4 + 2 + 4 + json.len()) as u64;
    let mut offsets = Vec::with_capacity(bodies.len());
    for body in &bodies {
        offsets.push(offset);
        w.write_all(body)?;
        offset += body.len() as u64;
    }
    for o in offsets {
        w.write_all(&o.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Opened {
    file: BufReader<File>,
    header: Header,
    /// Byte range of every channel body.
    spans: Vec<(u64, u64)>,
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], channel: &str) -> Result<(), DataError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DataError::TruncatedFile { channel: channel.to_string() },
        _ => DataError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, channel: &str) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, channel)?;
    Ok(u32::from_le_bytes(b))
}

fn open(path: &Path) -> Result<Opened, DataError> {
    let mut file = BufReader::new(File::open(path)?);
    let file_len = file.get_ref().metadata()?.len();
    let mut magic = [0u8; 4];
    read_exact_or(&mut file, &mut magic, "header").map_err(|_| DataError::BadMagic)?;
    if &magic != MAGIC {
        return Err(DataError::BadMagic);
    }
    let mut v = [0u8; 2];
    read_exact_or(&mut file, &mut v, "header")?;
    let version = u16::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(DataError::VersionUnsupported(version));
    }
    let json_len = read_u32(&mut file, "header")? as usize;
    if json_len as u64 > file_len {
        return Err(DataError::TruncatedFile { channel: "header".into() });
    }
    let mut json = vec![0u8; json_len];
    read_exact_or(&mut file, &mut json, "header")?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| DataError::BadHeader(e.to_string()))?;
    let body_start = (4 + 2 + 4 + json_len) as u64;
    let spans = match footer_spans(&mut file, &header, body_start, file_len)? {
        Some(spans) => spans,
        None => scan_spans(&mut file, &header, body_start, file_len)?,
    };
    Ok(Opened { file, header, spans })
}

/// Channel spans from the footer, or `None` if the footer is not plausible.
fn footer_spans(
    file: &mut BufReader<File>,
    header: &Header,
    body_start: u64,
    file_len: u64,
) -> Result<Option<Vec<(u64, u64)>>, DataError> {
    let n = header.channels.len() as u64;
    let Some(footer_start) = file_len.checked_sub(8 * n) else { return Ok(None) };
    if footer_start < body_start {
        return Ok(None);
    }
    file.seek(SeekFrom::Start(footer_start))?;
    let mut buf = vec![0u8; 8 * n as usize];
    file.read_exact(&mut buf)?;
    let offsets: Vec<u64> = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    if offsets.first().is_some_and(|&o| o != body_start) || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Ok(None);
    }
    if offsets.last().is_some_and(|&o| o > footer_start) {
        return Ok(None);
    }
    let ends = offsets.iter().skip(1).copied().chain([footer_start]);
    Ok(Some(offsets.iter().copied().zip(ends).collect()))
}

/// Channel spans found by walking chunk headers; used when the footer is
/// damaged so the failing channel can be named.
fn scan_spans(
    file: &mut BufReader<File>,
    header: &Header,
    body_start: u64,
    file_len: u64,
) -> Result<Vec<(u64, u64)>, DataError> {
    let chunks = header.length.div_ceil(CHUNK_ROWS);
    let mut pos = body_start;
    let mut spans = Vec::new();
    for c in &header.channels {
        let start = pos;
        for _ in 0..chunks {
            file.seek(SeekFrom::Start(pos))?;
            let _raw = read_u32(file, &c.name)?;
            let stored = read_u32(file, &c.name)? as u64;
            pos += CHUNK_OVERHEAD + stored;
            if pos > file_len {
                return Err(DataError::TruncatedFile { channel: c.name.clone() });
            }
        }
        spans.push((start, pos));
    }
    // the channels parse but the footer does not
    let footer_len = 8 * header.channels.len() as u64;
    if pos + footer_len != file_len {
        return Err(DataError::TruncatedFile { channel: "footer".into() });
    }
    Ok(spans)
}

/// Per-chunk outcome while decoding a channel.
enum ChunkIssue {
    Crc(usize),
    Corrupt(usize, String),
}

/// Decodes one channel body, collecting chunk failures instead of stopping.
fn decode_span(
    file: &mut BufReader<File>,
    entry: &ChannelEntry,
    span: (u64, u64),
) -> Result<(Vec<u8>, Vec<ChunkIssue>), DataError> {
    file.seek(SeekFrom::Start(span.0))?;
    let mut remaining = span.1 - span.0;
    let mut out = Vec::new();
    let mut issues = Vec::new();
    let mut index = 0;
    while remaining > 0 {
        if remaining < CHUNK_OVERHEAD {
            return Err(DataError::TruncatedFile { channel: entry.name.clone() });
        }
        let raw_len = read_u32(file, &entry.name)? as usize;
        let stored = read_u32(file, &entry.name)? as u64;
        let mut codec = [0u8; 1];
        read_exact_or(file, &mut codec, &entry.name)?;
        if CHUNK_OVERHEAD + stored > remaining {
            return Err(DataError::TruncatedFile { channel: entry.name.clone() });
        }
        let mut payload = vec![0u8; stored as usize];
        read_exact_or(file, &mut payload, &entry.name)?;
        let crc = read_u32(file, &entry.name)?;
        remaining -= CHUNK_OVERHEAD + stored;
        if crc32fast::hash(&payload) != crc {
            issues.push(ChunkIssue::Crc(index));
            out.resize(out.len() + raw_len.min(CHUNK_ROWS * entry.row_bytes()), 0);
        } else {
            match codec[0] {
                CODEC_RAW if payload.len() == raw_len => out.extend_from_slice(&payload),
                CODEC_DEFLATE => {
                    let mut raw = Vec::with_capacity(raw_len);
                    let ok = DeflateDecoder::new(&payload[..]).read_to_end(&mut raw).is_ok();
                    if !ok || raw.len() != raw_len {
                        issues.push(ChunkIssue::Corrupt(index, "deflate payload does not decode".into()));
                    }
                    raw.resize(raw_len, 0);
                    out.extend_from_slice(&raw);
                }
                c => {
                    issues.push(ChunkIssue::Corrupt(index, format!("bad codec {c} or raw length")));
                    out.resize(out.len() + raw_len, 0);
                }
            }
        }
        index += 1;
    }
    Ok((out, issues))
}

fn decode_channel(
    file: &mut BufReader<File>,
    header: &Header,
    entry: &ChannelEntry,
    span: (u64, u64),
) -> Result<Tensor, DataError> {
    let (bytes, issues) = decode_span(file, entry, span)?;
    if let Some(issue) = issues.into_iter().next() {
        return Err(match issue {
            ChunkIssue::Crc(chunk) => DataError::CrcMismatch { channel: entry.name.clone(), chunk },
            ChunkIssue::Corrupt(chunk, reason) => DataError::CorruptChunk { channel: entry.name.clone(), chunk, reason },
        });
    }
    let mut shape = vec![header.length];
    shape.extend_from_slice(&entry.shape);
    Tensor::from_le_bytes(entry.dtype, shape, &bytes).ok_or_else(|| DataError::TruncatedFile { channel: entry.name.clone() })
}

/// Reads a whole episode.
pub fn read_episode(path: impl AsRef<Path>) -> Result<Episode, DataError> {
    let mut o = open(path.as_ref())?;
    let mut channels = BTreeMap::new();
    let mut actions = None;
    for (entry, &span) in o.header.channels.iter().zip(&o.spans) {
        let tensor = decode_channel(&mut o.file, &o.header, entry, span)?;
        if entry.name == ACTION_KEY {
            actions = Some(tensor);
        } else {
            channels.insert(entry.name.clone(), tensor);
        }
    }
    let actions = actions.ok_or_else(|| DataError::BadHeader("no action channel".into()))?;
    let h = o.header;
    Ok(Episode { env_spec: h.env_spec, channels, actions, seed: h.seed, source: h.source, success: h.success })
}

/// Reads only the named channels (`action` selects the actions), seeking
/// past everything else.
pub fn read_channels<S: AsRef<str>>(
    path: impl AsRef<Path>,
    names: &[S],
) -> Result<BTreeMap<String, Tensor>, DataError> {
    let mut o = open(path.as_ref())?;
    let wanted: BTreeSet<&str> = names.iter().map(|s| s.as_ref()).collect();
    for name in &wanted {
        if !o.header.channels.iter().any(|c| c.name == *name) {
            return Err(DataError::UnknownChannel(name.to_string()));
        }
    }
    let mut out = BTreeMap::new();
    for (entry, &span) in o.header.channels.iter().zip(&o.spans) {
        if wanted.contains(entry.name.as_str()) {
            out.insert(entry.name.clone(), decode_channel(&mut o.file, &o.header, entry, span)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub name: String,
    pub chunks: usize,
    pub crc_ok: bool,
    pub shape_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub length: usize,
    pub channels: Vec<ChannelReport>,
    /// Human-readable description of every failed check; empty when healthy.
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerance of the abs/rel cross-check.
const REL_TOLERANCE: f64 = 1e-9;

/// Checks every chunk CRC, every channel's row count and shape against the
/// header and spec, and that each `_rel` channel integrates to its `_abs`
/// partner.
pub fn validate(path: impl AsRef<Path>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut o = match open(path.as_ref()) {
        Ok(o) => o,
        Err(e) => {
            report.failures.push(e.to_string());
            return report;
        }
    };
    report.length = o.header.length;
    let mut decoded: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (entry, &span) in o.header.channels.iter().zip(&o.spans) {
        let mut ch = ChannelReport { name: entry.name.clone(), chunks: 0, crc_ok: true, shape_ok: true };
        match decode_span(&mut o.file, entry, span) {
            Ok((bytes, issues)) => {
                for issue in &issues {
                    ch.crc_ok = false;
                    report.failures.push(match issue {
                        ChunkIssue::Crc(i) => format!("channel {}: CRC mismatch in chunk {i}", entry.name),
                        ChunkIssue::Corrupt(i, r) => format!("channel {}: chunk {i} corrupt ({r})", entry.name),
                    });
                }
                let row = entry.row_bytes();
                ch.chunks = o.header.length.div_ceil(CHUNK_ROWS);
                let rows = if row == 0 { 0 } else { bytes.len() / row };
                if bytes.len() != o.header.length * row {
                    ch.shape_ok = false;
                    report.failures.push(format!(
                        "channel {}: holds {rows} rows, expected T = {}",
                        entry.name, o.header.length
                    ));
                } else if issues.is_empty() {
                    let mut shape = vec![o.header.length];
                    shape.extend_from_slice(&entry.shape);
                    if let Some(t) = Tensor::from_le_bytes(entry.dtype, shape, &bytes) {
                        decoded.insert(entry.name.clone(), t.to_f64_vec());
                    }
                }
                let expected = if entry.name == ACTION_KEY {
                    Some((DType::F32, vec![o.header.env_spec.action_dim]))
                } else {
                    o.header.env_spec.channel(&entry.name).map(|c| (c.dtype, c.shape.clone()))
                };
                match expected {
                    Some(exp) if exp != (entry.dtype, entry.shape.clone()) => {
                        ch.shape_ok = false;
                        report.failures.push(format!(
                            "channel {}: {:?} {:?} does not match spec {:?} {:?}",
                            entry.name, entry.dtype, entry.shape, exp.0, exp.1
                        ));
                    }
                    None => {
                        ch.shape_ok = false;
                        report.failures.push(format!("channel {}: not declared by the env spec", entry.name));
                    }
                    _ => {}
                }
            }
            Err(e) => {
                ch.crc_ok = false;
                report.failures.push(e.to_string());
            }
        }
        report.channels.push(ch);
    }
    for c in &o.header.env_spec.observation_channels {
        if !o.header.channels.iter().any(|e| e.name == c.name) {
            report.failures.push(format!("channel {}: declared by the env spec but missing", c.name));
        }
    }
    for (name, rel) in &decoded {
        let Some(stem) = name.strip_suffix("_rel") else { continue };
        let partner = format!("{stem}_abs");
        let Some(abs) = decoded.get(&partner) else {
            report.failures.push(format!("channel {name}: absolute partner {partner} missing"));
            continue;
        };
        if abs.len() != rel.len() || o.header.length == 0 {
            report.failures.push(format!("channel {name}: size differs from {partner}"));
            continue;
        }
        let dim = abs.len() / o.header.length;
        if let Some(i) = rel[..dim].iter().position(|&v| v != 0.0) {
            report.failures.push(format!("channel {name}: first row element {i} is not zero"));
            continue;
        }
        let rebuilt = super::to_absolute(rel, &abs[..dim]);
        if let Some(i) = rebuilt.iter().zip(abs).position(|(a, b)| (a - b).abs() > REL_TOLERANCE) {
            report.failures.push(format!(
                "channel {name}: cumulative sum disagrees with {partner} at t = {} (element {})",
                i / dim.max(1),
                i % dim.max(1)
            ));
        }
    }
    report
}
