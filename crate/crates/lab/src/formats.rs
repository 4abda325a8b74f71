//! On-disk formats: LLF1 snapshots, the ledger CSV, the snapshot index and
//! JSON reports.

use llflow_core::ledger::{EnergyLedger, LedgerRow};
use llflow_core::{Field, Grid, Point, SpinField, Target};
use serde::Serialize;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::LabError;

pub const SCHEMA_VERSION: u32 = 1;

/// Parsed LLF1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct Llf1 {
    pub grid: Grid,
    pub m: usize,
    pub t: f64,
    pub data: Vec<f64>,
}

impl Llf1 {
    pub fn from_field(field: &Field, t: f64) -> Self {
        Self { grid: *field.grid(), m: field.comps(), t, data: field.values().to_vec() }
    }

    /// Target from the component count, ghost value the target default.
    pub fn into_spin_field(self) -> Result<SpinField, LabError> {
        let target = match self.m {
            3 => Target::Sphere,
            4 => Target::CliffordTorus,
            m => return Err(LabError::Format(format!("no target with {m} components"))),
        };
        let field = Field::from_values(self.grid, self.m, self.data, &target.default_boundary())?;
        Ok(SpinField::project(field, target)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = format!(
            "LLF1 n={} L={} m={} t={}\n",
            self.grid.n(),
            fmt_decimal(self.grid.half_extent()),
            self.m,
            fmt_decimal(self.t)
        );
        let mut out = Vec::with_capacity(header.len() + 8 * self.data.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, LabError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| LabError::Format("LLF1 header line missing".into()))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| LabError::Format("LLF1 header is not ASCII".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some("LLF1") {
            return Err(LabError::Format("missing LLF1 magic".into()));
        }
        let (mut n, mut l, mut m, mut t) = (None, None, None, None);
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| LabError::Format(format!("bad header token `{p}`")))?;
            let bad = || LabError::Format(format!("bad header value `{p}`"));
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
                "L" => l = Some(v.parse::<f64>().map_err(|_| bad())?),
                "m" => m = Some(v.parse::<usize>().map_err(|_| bad())?),
                "t" => t = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(LabError::Format(format!("unknown header key `{k}`"))),
            }
        }
        let missing = |k: &str| LabError::Format(format!("header lacks `{k}`"));
        let (n, l, m, t) =
            (n.ok_or(missing("n"))?, l.ok_or(missing("L"))?, m.ok_or(missing("m"))?, t.ok_or(missing("t"))?);
        let grid = Grid::new(n, l)?;
        let payload = &bytes[nl + 1..];
        let expected = n * n * m * 8;
        if payload.len() != expected {
            return Err(LabError::Format(format!("payload holds {} bytes, header implies {expected}", payload.len())));
        }
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        Ok(Self { grid, m, t, data })
    }

    pub fn write(&self, path: &Path) -> Result<(), LabError> {
        fs::write(path, self.encode()).map_err(|e| LabError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, LabError> {
        let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_decimal(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

pub fn ledger_header(radii: &[f64]) -> String {
    let mut h = String::from("t,E,diss_cum,l4_cum,unit_drift");
    for r in radii {
        h.push_str(&format!(",sup_local_R={}", fmt_decimal(*r)));
    }
    h.push_str(",argmax_x,argmax_y");
    h
}

pub fn ledger_line(row: &LedgerRow) -> String {
    let mut s = [row.t, row.energy, row.diss_cum, row.l4_cum, row.unit_drift]
        .iter()
        .map(|v| fmt17(*v))
        .collect::<Vec<_>>()
        .join(",");
    for v in &row.sup_local {
        s.push(',');
        s.push_str(&fmt17(*v));
    }
    s.push_str(&format!(",{},{}", fmt17(row.argmax.x), fmt17(row.argmax.y)));
    s
}

pub fn write_ledger(path: &Path, ledger: &EnergyLedger) -> Result<(), LabError> {
    let file = fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| LabError::io(path, e);
    writeln!(w, "{}", ledger_header(ledger.radii())).map_err(io)?;
    for row in ledger.rows() {
        writeln!(w, "{}", ledger_line(row)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_ledger(path: &Path) -> Result<EnergyLedger, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| LabError::Format("empty ledger".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 7
        || cols[..5] != ["t", "E", "diss_cum", "l4_cum", "unit_drift"]
        || cols[cols.len() - 2..] != ["argmax_x", "argmax_y"]
    {
        return Err(LabError::Format(format!("unexpected ledger header `{header}`")));
    }
    let radii = cols[5..cols.len() - 2]
        .iter()
        .map(|c| {
            c.strip_prefix("sup_local_R=")
                .and_then(|r| r.parse::<f64>().ok())
                .ok_or_else(|| LabError::Format(format!("bad radius column `{c}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut ledger = EnergyLedger::new(radii);
    for (i, line) in lines.enumerate() {
        let v = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| LabError::Format(format!("ledger row {} is not numeric", i + 1)))?;
        if v.len() != cols.len() {
            return Err(LabError::Format(format!("ledger row {} has {} fields", i + 1, v.len())));
        }
        let k = v.len();
        ledger.push(LedgerRow {
            t: v[0],
            energy: v[1],
            diss_cum: v[2],
            l4_cum: v[3],
            unit_drift: v[4],
            sup_local: v[5..k - 2].to_vec(),
            argmax: Point::new(v[k - 2], v[k - 1]),
        });
    }
    Ok(ledger)
}

/// `file,t,dissipated` lines naming the LLF1 snapshots of a run.
pub fn write_snapshot_index(path: &Path, entries: &[(String, f64, f64)]) -> Result<(), LabError> {
    let mut s = String::from("file,t,dissipated\n");
    for (f, t, d) in entries {
        s.push_str(&format!("{f},{},{}\n", fmt17(*t), fmt17(*d)));
    }
    fs::write(path, s).map_err(|e| LabError::io(path, e))
}

pub fn read_snapshot_index(path: &Path) -> Result<Vec<(PathBuf, f64, f64)>, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let p: Vec<&str> = line.split(',').collect();
        let bad = || LabError::Format(format!("snapshot index line {} malformed", i + 1));
        if p.len() != 3 {
            return Err(bad());
        }
        out.push((dir.join(p[0]), p[1].parse().map_err(|_| bad())?, p[2].parse().map_err(|_| bad())?));
    }
    Ok(out)
}

/// Writes `value` with a leading `schema_version` key.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), LabError> {
    let text = to_json(value)?;
    fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, LabError> {
    let mut obj = serde_json::Map::new();
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    match serde_json::to_value(value)? {
        serde_json::Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("value".into(), other);
        }
    }
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(obj))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn llf1_roundtrip_and_length_check() {
        let g = Grid::new(16, 2.5).unwrap();
        let f = Field::from_fn(g, &[0.0, 0.0, 1.0], |p, o| o.copy_from_slice(&[p.x, p.y, 0.5]));
        let s = Llf1::from_field(&f, 0.125);
        let bytes = s.encode();
        assert!(bytes.starts_with(b"LLF1 n=16 L=2.5 m=3 t=0.125\n"));
        assert_eq!(Llf1::decode(&bytes).unwrap(), s);
        assert!(Llf1::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0; 8]);
        assert!(Llf1::decode(&longer).is_err());
        assert!(Llf1::decode(b"LLF2 n=4 L=1 m=3 t=0\n").is_err());
    }

    #[test]
    fn ledger_header_format() {
        assert_eq!(
            ledger_header(&[1.0, 0.5]),
            "t,E,diss_cum,l4_cum,unit_drift,sup_local_R=1,sup_local_R=0.5,argmax_x,argmax_y"
        );
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
