//! On-disk formats: DTOK token matrices, DATT attention maps, and a CSV
//! import path for hand-written fixtures.
//!
//! DTOK layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "DTOK"
//! version u32      1
//! n       u32      token count
//! d       u32      embedding dimension
//! flags   u32      bit0: modality tags present, bit1: grid present
//! [rows u32, cols u32]        when bit1
//! [n bytes modality: 0=visual, 1=text]  when bit0
//! n*d little-endian f32, row-major
//! ```
//!
//! DATT is `"DATT", version u32=1, n u32` followed by `n*n` little-endian
//! f32 row-major weights; rows must sum to 1 within 1e-4.
//!
//! Both readers require the byte length to match the header exactly, and
//! round-trips preserve every bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use dart_core::{AttentionMap, Modality, TokenMatrix};

use crate::CmdError;

pub const DTOK_MAGIC: &[u8; 4] = b"DTOK";
pub const DATT_MAGIC: &[u8; 4] = b"DATT";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_MODALITY: u32 = 1;
const FLAG_GRID: u32 = 2;

fn format_err(message: impl Into<String>) -> CmdError {
    CmdError {
        code: "FormatError".to_string(),
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, count: usize) -> Result<&'a [u8], CmdError> {
        if self.pos + count > self.bytes.len() {
            return Err(format_err(format!(
                "{} file truncated at byte {}",
                self.name, self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + count];
        self.pos += count;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CmdError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(&self) -> Result<(), CmdError> {
        if self.pos != self.bytes.len() {
            return Err(format_err(format!(
                "{} file has {} trailing bytes",
                self.name,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Serializes a token matrix to DTOK bytes.
pub fn write_dtok_bytes(tokens: &TokenMatrix) -> Vec<u8> {
    let n = tokens.n();
    let d = tokens.d();
    let mut flags = 0u32;
    if tokens.modality().is_some() {
        flags |= FLAG_MODALITY;
    }
    if tokens.grid().is_some() {
        flags |= FLAG_GRID;
    }
    let mut out = Vec::with_capacity(20 + n * d * 4 + n);
    out.extend_from_slice(DTOK_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    if let Some((rows, cols)) = tokens.grid() {
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
    }
    if let Some(tags) = tokens.modality() {
        out.extend(tags.iter().map(|m| match m {
            Modality::Visual => 0u8,
            Modality::Text => 1u8,
        }));
    }
    for &v in tokens.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses and validates DTOK bytes.
pub fn read_dtok_bytes(bytes: &[u8]) -> Result<TokenMatrix, CmdError> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        name: "DTOK",
    };
    if cur.take(4)? != DTOK_MAGIC {
        return Err(format_err("not a DTOK file (bad magic)"));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported DTOK version {version}")));
    }
    let n = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let flags = cur.u32()?;
    if flags & !(FLAG_MODALITY | FLAG_GRID) != 0 {
        return Err(format_err(format!("unknown DTOK flags {flags:#x}")));
    }
    let grid = if flags & FLAG_GRID != 0 {
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        Some((rows, cols))
    } else {
        None
    };
    let modality = if flags & FLAG_MODALITY != 0 {
        let raw = cur.take(n)?;
        let mut tags = Vec::with_capacity(n);
        for (i, &b) in raw.iter().enumerate() {
            tags.push(match b {
                0 => Modality::Visual,
                1 => Modality::Text,
                other => {
                    return Err(format_err(format!(
                        "bad modality byte {other} at token {i}"
                    )))
                }
            });
        }
        Some(tags)
    } else {
        None
    };
    let raw = cur.take(
        n.checked_mul(d)
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| format_err("DTOK dimensions overflow"))?,
    )?;
    cur.finish()?;
    let mut data = Vec::with_capacity(n * d);
    for chunk in raw.chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    TokenMatrix::with_tags(n, d, data, modality, grid).map_err(CmdError::from)
}

/// Serializes an attention map to DATT bytes.
pub fn write_datt_bytes(map: &AttentionMap) -> Vec<u8> {
    let n = map.n();
    let mut out = Vec::with_capacity(12 + n * n * 4);
    out.extend_from_slice(DATT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for i in 0..n {
        for &v in map.row(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses and validates DATT bytes (row-stochastic check included).
pub fn read_datt_bytes(bytes: &[u8]) -> Result<AttentionMap, CmdError> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        name: "DATT",
    };
    if cur.take(4)? != DATT_MAGIC {
        return Err(format_err("not a DATT file (bad magic)"));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported DATT version {version}")));
    }
    let n = cur.u32()? as usize;
    let raw = cur.take(
        n.checked_mul(n)
            .and_then(|x| x.checked_mul(4))
            .ok_or_else(|| format_err("DATT dimensions overflow"))?,
    )?;
    cur.finish()?;
    let mut weights = Vec::with_capacity(n * n);
    for chunk in raw.chunks_exact(4) {
        weights.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    AttentionMap::new(n, weights).map_err(CmdError::from)
}

/// CSV fixture import: first line `d=<int>`, then one comma-separated row
/// of floats per token.
pub fn read_csv_tokens(text: &str) -> Result<TokenMatrix, CmdError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| format_err("empty CSV token file"))?;
    let header = header.trim();
    let d: usize = header
        .strip_prefix("d=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| format_err(format!("CSV header must be 'd=<int>', got '{header}'")))?;
    let mut data = Vec::new();
    let mut n = 0usize;
    for (line_no, line) in lines.enumerate() {
        let values: Vec<&str> = line.split(',').map(str::trim).collect();
        if values.len() != d {
            return Err(format_err(format!(
                "CSV row {} has {} values, expected {}",
                line_no + 1,
                values.len(),
                d
            )));
        }
        for v in values {
            let parsed: f32 = v
                .parse()
                .map_err(|_| format_err(format!("CSV row {}: bad float '{v}'", line_no + 1)))?;
            data.push(parsed);
        }
        n += 1;
    }
    TokenMatrix::new(n, d, data).map_err(CmdError::from)
}

/// Loads tokens from a path, dispatching on the `.csv` extension.
pub fn load_tokens(path: &Path) -> Result<TokenMatrix, CmdError> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let text = fs::read_to_string(path)
            .map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
        read_csv_tokens(&text)
    } else {
        let bytes = fs::read(path)
            .map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
        read_dtok_bytes(&bytes)
    }
}

/// Loads an attention map from a DATT file.
pub fn load_attention(path: &Path) -> Result<AttentionMap, CmdError> {
    let bytes =
        fs::read(path).map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
    read_datt_bytes(&bytes)
}

/// Writes bytes atomically enough for this tool: straight create+write.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
    let mut file = fs::File::create(path)
        .map_err(|e| format_err(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| format_err(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtok_round_trip_plain() {
        let tokens = TokenMatrix::new(3, 2, vec![1.0, -2.5, 0.0, 4.25, -0.0, 3.75]).unwrap();
        let bytes = write_dtok_bytes(&tokens);
        let back = read_dtok_bytes(&bytes).unwrap();
        assert_eq!(back, tokens);
        // bit-exact: re-serialization reproduces the same bytes
        assert_eq!(write_dtok_bytes(&back), bytes);
    }

    #[test]
    fn dtok_round_trip_tagged_with_grid() {
        let tags = vec![
            Modality::Visual,
            Modality::Visual,
            Modality::Text,
            Modality::Visual,
            Modality::Visual,
        ];
        let tokens = TokenMatrix::with_tags(
            5,
            3,
            (0..15).map(|i| i as f32 * 0.5).collect(),
            Some(tags),
            Some((2, 2)),
        )
        .unwrap();
        let bytes = write_dtok_bytes(&tokens);
        let back = read_dtok_bytes(&bytes).unwrap();
        assert_eq!(back, tokens);
        assert_eq!(back.grid(), Some((2, 2)));
    }

    #[test]
    fn dtok_rejects_corruption() {
        let tokens = TokenMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        let mut bytes = write_dtok_bytes(&tokens);
        assert!(read_dtok_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(read_dtok_bytes(&bytes).is_err());
        let mut bad_magic = write_dtok_bytes(&tokens);
        bad_magic[0] = b'X';
        assert!(read_dtok_bytes(&bad_magic).is_err());
    }

    #[test]
    fn datt_round_trip_and_validation() {
        let map = AttentionMap::new(2, vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        let bytes = write_datt_bytes(&map);
        let back = read_datt_bytes(&bytes).unwrap();
        assert_eq!(back, map);

        // a non-stochastic payload fails on load
        let mut raw = Vec::new();
        raw.extend_from_slice(DATT_MAGIC);
        raw.extend_from_slice(&1u32.to_le_bytes());
        raw.extend_from_slice(&2u32.to_le_bytes());
        for v in [0.9f32, 0.9, 0.1, 0.9] {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        assert!(read_datt_bytes(&raw).is_err());
    }

    #[test]
    fn csv_import() {
        let text = "d=3\n1.0, 2.0, 3.0\n-1.5,0.25,0\n";
        let tokens = read_csv_tokens(text).unwrap();
        assert_eq!(tokens.n(), 2);
        assert_eq!(tokens.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(tokens.row(1), &[-1.5, 0.25, 0.0]);

        assert!(read_csv_tokens("d=2\n1.0\n").is_err());
        assert!(read_csv_tokens("x=2\n1.0,2.0\n").is_err());
        assert!(read_csv_tokens("d=1\nfoo\n").is_err());
    }
}
