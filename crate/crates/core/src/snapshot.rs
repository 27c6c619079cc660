//! Binary state snapshots.
//!
//! The format is deliberately trivial to parse from any language. All
//! multi-byte values are little-endian:
//!
//! ```text
//! offset  size            field
//! 0       8               magic  "KSFLOW1\0"
//! 8       4               version   (u32, currently 1)
//! 12      4               dim       (u32)
//! 16      4               n         (u32, points per axis)
//! 20      8               length    (f64, box side)
//! 28      8               time      (f64, frame time)
//! 36      4               rank      (u32)
//! 40      1               frame tag (u8: 0 = kappa, 1 = omega, 2 = nu)
//! 41      rank × 8        occupations (f64)
//! …       rank × nᵈ × 16  orbitals: interleaved re/im f64 pairs,
//!                         row-major grid order, orbital-major
//! ```
//!
//! Writing a state, reading it back, and writing it again produces
//! byte-identical files; nothing in the format depends on the platform or
//! the moment of writing. Structural corruption (wrong magic, unsupported
//! version, truncation, trailing bytes) is reported as a missing-snapshot
//! error carrying the file path; payloads that parse but violate state
//! invariants (negative occupations, non-finite values) surface as the
//! corresponding state-construction errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldFrame, SpectralGrid};
use crate::pseudoconformal::StateFrame;
use crate::state::OrbitalState;

/// Leading magic bytes.
pub const SNAPSHOT_MAGIC: [u8; 8] = *b"KSFLOW1\0";
/// Current format version.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Frame tag stored in the header.
pub fn frame_tag(frame: StateFrame) -> u8 {
    match frame {
        StateFrame::Kappa => 0,
        StateFrame::Omega => 1,
        StateFrame::Nu => 2,
    }
}

/// Inverse of [`frame_tag`].
pub fn tag_frame(tag: u8) -> Option<StateFrame> {
    match tag {
        0 => Some(StateFrame::Kappa),
        1 => Some(StateFrame::Omega),
        2 => Some(StateFrame::Nu),
        _ => None,
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::MissingSnapshot {
        path: PathBuf::from(path),
        detail: detail.into(),
    }
}

/// Serialize a state (with its frame label) into snapshot bytes.
pub fn snapshot_bytes(state: &OrbitalState<f64>, frame: StateFrame) -> Vec<u8> {
    let grid = state.grid();
    let volume = grid.total_points();
    let rank = state.rank();
    let mut bytes = Vec::with_capacity(41 + rank * 8 + rank * volume * 16);
    bytes.extend_from_slice(&SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    bytes.extend_from_slice(&grid.length().to_le_bytes());
    bytes.extend_from_slice(&state.time().to_le_bytes());
    bytes.extend_from_slice(&(rank as u32).to_le_bytes());
    bytes.push(frame_tag(frame));
    for &a in state.occupations() {
        bytes.extend_from_slice(&a.to_le_bytes());
    }
    for orbital in state.orbitals() {
        for value in orbital.values() {
            bytes.extend_from_slice(&value.re.to_le_bytes());
            bytes.extend_from_slice(&value.im.to_le_bytes());
        }
    }
    bytes
}

/// Write `state` to `path` in snapshot format.
pub fn write_snapshot(path: &Path, state: &OrbitalState<f64>, frame: StateFrame) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, snapshot_bytes(state, frame))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        if self.at + k > self.bytes.len() {
            return Err(corrupt(
                self.path,
                format!(
                    "truncated while reading {what}: need {k} bytes at offset {}, file has {}",
                    self.at,
                    self.bytes.len()
                ),
            ));
        }
        let slice = &self.bytes[self.at..self.at + k];
        self.at += k;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse snapshot bytes (as produced by [`snapshot_bytes`]).
pub fn parse_snapshot(bytes: &[u8], path: &Path) -> Result<(OrbitalState<f64>, StateFrame)> {
    let mut cursor = Cursor { bytes, at: 0, path };
    let magic = cursor.take(8, "magic")?;
    if magic != SNAPSHOT_MAGIC {
        return Err(corrupt(path, format!("bad magic {magic:?}")));
    }
    let version = cursor.u32("version")?;
    if version != SNAPSHOT_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported version {version} (expected {SNAPSHOT_VERSION})"),
        ));
    }
    let dim = cursor.u32("dim")? as usize;
    let n = cursor.u32("n")? as usize;
    let length = cursor.f64("length")?;
    let time = cursor.f64("time")?;
    let rank = cursor.u32("rank")? as usize;
    let tag = cursor.take(1, "frame tag")?[0];
    let frame = tag_frame(tag).ok_or_else(|| corrupt(path, format!("unknown frame tag {tag}")))?;
    if rank == 0 || rank > 64 {
        return Err(corrupt(path, format!("implausible rank {rank}")));
    }

    let grid = SpectralGrid::new(dim, n, length)?;
    let volume = grid.total_points();
    let mut occupations = Vec::with_capacity(rank);
    for j in 0..rank {
        occupations.push(cursor.f64(&format!("occupation {j}"))?);
    }
    let mut orbitals = Vec::with_capacity(rank);
    for j in 0..rank {
        let raw = cursor.take(volume * 16, &format!("orbital {j}"))?;
        let values: Vec<Complex<f64>> = raw
            .chunks_exact(16)
            .map(|pair| {
                Complex::new(
                    f64::from_le_bytes(pair[..8].try_into().unwrap()),
                    f64::from_le_bytes(pair[8..].try_into().unwrap()),
                )
            })
            .collect();
        orbitals.push(Field::from_values(
            Arc::clone(&grid),
            FieldFrame::Position,
            values,
        )?);
    }
    if cursor.at != bytes.len() {
        return Err(corrupt(
            path,
            format!("{} trailing bytes after payload", bytes.len() - cursor.at),
        ));
    }
    let state = OrbitalState::new(grid, occupations, orbitals, time)?;
    Ok((state, frame))
}

/// Read a snapshot file.
pub fn read_snapshot(path: &Path) -> Result<(OrbitalState<f64>, StateFrame)> {
    let bytes = std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            corrupt(path, "file not found")
        } else {
            Error::Io(e)
        }
    })?;
    parse_snapshot(&bytes, path)
}
