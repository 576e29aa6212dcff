use std::io::Write;

use crate::error::Result;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmKind {
    /// ASCII
    P2,
    /// Binary, 16-bit big-endian samples
    P5,
}

const PGM_MAX: u64 = 65535;

/// Portable graymap with the grid's maximum mapped to 65535.
pub fn write_pgm<W: Write>(mut out: W, grid: &Grid<u32>, kind: PgmKind) -> Result<()> {
    let max = grid.as_slice().iter().copied().max().unwrap_or(0) as u64;
    let scale = |v: u32| -> u16 {
        if max == 0 {
            0
        } else {
            ((v as u64 * PGM_MAX + max / 2) / max) as u16
        }
    };
    let (w, h) = grid.dims();
    match kind {
        PgmKind::P2 => {
            writeln!(out, "P2\n{w} {h}\n{PGM_MAX}")?;
            for y in 0..h {
                let line: Vec<String> = grid.row(y).iter().map(|&v| scale(v).to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        PgmKind::P5 => {
            write!(out, "P5\n{w} {h}\n{PGM_MAX}\n")?;
            let bytes: Vec<u8> = grid
                .as_slice()
                .iter()
                .flat_map(|&v| scale(v).to_be_bytes())
                .collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

/// Exact integer values, one comma-separated row per line.
pub fn write_csv_grid<W: Write>(mut out: W, grid: &Grid<u32>) -> Result<()> {
    for y in 0..grid.height() {
        let line: Vec<String> = grid.row(y).iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
