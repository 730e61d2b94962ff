use std::io::Write;
use std::path::Path;

use super::NeuroError;

pub const MODEL_MAGIC: &[u8; 4] = b"RMBM";
pub const MODEL_VERSION: u16 = 1;

/// Writes `"RMBM" | version u16 | json_len u32 | JSON | f32 LE parameters |
/// crc32 u32` where the CRC covers every preceding byte.
pub fn write_model_file(path: impl AsRef<Path>, meta: &serde_json::Value, params: &[f32]) -> Result<(), NeuroError> {
    let json = serde_json::to_vec(meta).map_err(|e| NeuroError::BadModelFile(e.to_string()))?;
    let mut buf = Vec::with_capacity(14 + json.len() + 4 * params.len());
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<(serde_json::Value, Vec<f32>), NeuroError> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| NeuroError::BadModelFile(m.to_string());
    if bytes.len() < 14 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MODEL_VERSION {
        return Err(NeuroError::BadModelFile(format!("unsupported version {version}")));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(bad("checksum mismatch"));
    }
    let json_len = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let json_end = 10usize.checked_add(json_len).filter(|&e| e <= body.len()).ok_or_else(|| bad("truncated header"))?;
    let meta = serde_json::from_slice(&body[10..json_end]).map_err(|e| NeuroError::BadModelFile(e.to_string()))?;
    let blob = &body[json_end..];
    if blob.len() % 4 != 0 {
        return Err(bad("parameter blob is not a whole number of f32 values"));
    }
    let params = blob.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((meta, params))
}
