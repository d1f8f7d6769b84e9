//! `PHF1` binary field: magic, `u32 nx, ny`, `f64 x0, y0, hx, hy`, then
//! `nx * ny` `f64` values with `i` fastest, all little-endian.

use std::fs;
use std::path::Path;

use super::atomic_write;
use super::bytes::{Reader, Writer};
use crate::error::Result;
use crate::field::ScalarField;

const MAGIC: &[u8; 4] = b"PHF1";

pub fn encode_field(f: &ScalarField) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.grid(f.grid());
    w.f64s(f.values());
    w.buf
}

pub fn decode_field(data: &[u8], path: &Path) -> Result<ScalarField> {
    let mut r = Reader::new(data, path);
    if r.take(4)? != MAGIC {
        return Err(r.error("not a PHF1 file"));
    }
    let grid = r.grid()?;
    let values = r.f64s(grid.len())?;
    r.finish()?;
    ScalarField::new(grid, values).map_err(|e| r.error(e.to_string()))
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    atomic_write(path, &encode_field(f))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    decode_field(&fs::read(path)?, path)
}
