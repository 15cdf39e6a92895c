//! File formats: the frozen `χ_d` table, binary skeleton dumps and the
//! commented preamble written at the top of every CSV output.

use crate::error::{Error, Result};
use crate::skeleton::SkeletonPath;
use std::io::{Read, Write};
use std::path::Path;

/// Environment variable naming a replacement `χ_d` table.
pub const CHI_FIXTURE_ENV: &str = "CHI_FIXTURE_PATH";

const EMBEDDED_CHI: &str = include_str!("../data/chi_fixture.txt");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiRow {
    pub d: usize,
    pub estimate: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

/// Whitespace-separated `d estimate std_err n_samples` rows; `#` starts a
/// comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiTable {
    rows: Vec<ChiRow>,
}

impl ChiTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<ChiRow> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                line: i + 1,
                reason,
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(parse_err(format!(
                    "expected 4 columns, found {}",
                    parts.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(format!("cannot parse `{s}`")))
            };
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(format!("cannot parse `{s}`")))
            };
            let row = ChiRow {
                d: int(parts[0])?,
                estimate: num(parts[1])?,
                std_err: num(parts[2])?,
                n_samples: int(parts[3])?,
            };
            if row.d == 0 || !(row.estimate > 0.0) || !(row.std_err >= 0.0) {
                return Err(parse_err(
                    "d, estimate must be positive and std_err non-negative".into(),
                ));
            }
            if rows.iter().any(|r| r.d == row.d) {
                return Err(parse_err(format!("duplicate row for d = {}", row.d)));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 0,
                reason: "empty chi table".into(),
            });
        }
        Ok(Self { rows })
    }

    /// The table compiled into the crate.
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED_CHI).expect("embedded chi table is valid")
    }

    /// `path` if given, else `$CHI_FIXTURE_PATH` if set, else the embedded
    /// table.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            return Self::parse(&std::fs::read_to_string(p)?);
        }
        match std::env::var_os(CHI_FIXTURE_ENV) {
            Some(p) if !p.is_empty() => Self::parse(&std::fs::read_to_string(p)?),
            _ => Ok(Self::embedded()),
        }
    }

    pub fn rows(&self) -> &[ChiRow] {
        &self.rows
    }

    pub fn get(&self, d: usize) -> Result<ChiRow> {
        self.rows
            .iter()
            .find(|r| r.d == d)
            .copied()
            .ok_or_else(|| Error::UnknownName {
                kind: "chi table dimension",
                name: d.to_string(),
            })
    }
}

/// Little-endian dump of equal-length paths: `d: u64, ε: f64, n_steps: u64,
/// n_paths: u64`, then per path and step the row `ΔT, η¹, …, η^d` as `f64`.
pub fn write_skeleton_batch<W: Write>(mut w: W, paths: &[SkeletonPath]) -> Result<()> {
    let Some(first) = paths.first() else {
        return Err(Error::invalid("paths", "nothing to write"));
    };
    let (d, n) = (first.dimension(), first.len());
    if let Some(bad) = paths
        .iter()
        .position(|p| p.dimension() != d || p.len() != n || p.epsilon_k() != first.epsilon_k())
    {
        return Err(Error::invalid(
            "paths",
            format!("path {bad} differs in shape or ε from path 0"),
        ));
    }
    w.write_all(&(d as u64).to_le_bytes())?;
    w.write_all(&first.epsilon_k().to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(paths.len() as u64).to_le_bytes())?;
    for p in paths {
        for q in 1..=n {
            w.write_all(&p.delta_time(q).to_le_bytes())?;
            for x in p.increment(q) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_skeleton_batch<R: Read>(mut r: R) -> Result<Vec<SkeletonPath>> {
    let mut buf = [0u8; 8];
    let mut word = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut buf)?;
        Ok(buf)
    };
    let d = u64::from_le_bytes(word(&mut r)?) as usize;
    let eps = f64::from_le_bytes(word(&mut r)?);
    let n = u64::from_le_bytes(word(&mut r)?) as usize;
    let count = u64::from_le_bytes(word(&mut r)?) as usize;
    if d == 0 || d > 64 {
        return Err(Error::invalid(
            "dimension",
            format!("implausible dimension {d} in header"),
        ));
    }
    let mut paths = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut dts = Vec::with_capacity(n);
        let mut incs = Vec::with_capacity(n * d);
        for _ in 0..n {
            dts.push(f64::from_le_bytes(word(&mut r)?));
            for _ in 0..d {
                incs.push(f64::from_le_bytes(word(&mut r)?));
            }
        }
        paths.push(SkeletonPath::from_parts(d, eps, dts, incs)?);
    }
    Ok(paths)
}

/// `# <tool> <version>` followed by one `# key = value` line per entry.
pub fn write_preamble<W: Write>(
    mut w: W,
    tool: &str,
    entries: &[(String, String)],
) -> std::io::Result<()> {
    writeln!(w, "# {tool} {}", env!("CARGO_PKG_VERSION"))?;
    for (k, v) in entries {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{simulate_batch, SkeletonConfig};

    #[test]
    fn embedded_table_covers_small_dimensions() {
        let t = ChiTable::embedded();
        assert_eq!(t.get(1).unwrap().n_samples, 10_000_000);
        assert!((t.get(2).unwrap().estimate - 0.5894).abs() < 1e-3);
        assert!(t.get(9).is_err());
    }

    #[test]
    fn table_parse_errors_carry_line_numbers() {
        assert!(matches!(
            ChiTable::parse("# c\n1 1.0 0.1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            ChiTable::parse("1 1 0 5\n1 1 0 5\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(ChiTable::parse("# nothing\n").is_err());
        let t = ChiTable::parse("2 0.6 0.001 100 # trailing\n").unwrap();
        assert_eq!(t.rows().len(), 1);
    }

    #[test]
    fn skeleton_dump_round_trips() {
        let cfg = SkeletonConfig::dyadic(2, 3, 1.0, 0.6, 5).unwrap();
        let paths = simulate_batch(&cfg, 7, 4);
        let mut bytes = Vec::new();
        write_skeleton_batch(&mut bytes, &paths).unwrap();
        assert_eq!(bytes.len(), 8 * (4 + 4 * 7 * 3));
        let back = read_skeleton_batch(bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 4);
        for (a, b) in paths.iter().zip(&back) {
            assert_eq!(a.delta_times(), b.delta_times());
            assert_eq!(a.increments_flat(), b.increments_flat());
        }
        assert!(read_skeleton_batch(&bytes[..bytes.len() - 3]).is_err());
    }
}
