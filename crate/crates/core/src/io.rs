//! File formats: CSV tables, TOML sidecars and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::DetectorSetting;
use crate::qops::CMatrix;
use crate::transmission::SweepRow;
use crate::twophoton::{CoincidenceTable, TableMeta, TableMode};
use crate::units::mhz;

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, msg: format!("{other:?}") },
    }
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

/// `dir/name.csv` → `dir/name.meta.toml`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    csv_path.with_file_name(format!("{stem}.meta.toml"))
}

pub const SWEEP_HEADER: [&str; 12] = [
    "kappa_f_over_kappa_i",
    "p_overlap",
    "survival",
    "t2_H",
    "t2_V",
    "t2_P",
    "t2_M",
    "t2_H_empty",
    "t2_V_empty",
    "t2_P_empty",
    "t2_M_empty",
    "kappa_f_mhz",
];

pub fn write_sweep(path: &Path, rows: &[SweepRow], kappa_i: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        let vals = [
            r.kappa_f_over_kappa_i,
            r.p_overlap,
            r.survival,
            r.t2_h,
            r.t2_v,
            r.t2_p,
            r.t2_m,
            r.t2_h_empty,
            r.t2_v_empty,
            r.t2_p_empty,
            r.t2_m_empty,
            mhz(r.kappa_f_over_kappa_i * kappa_i),
        ];
        w.write_record(vals.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableSidecar {
    mode: TableMode,
    bin_width_ns: f64,
    #[serde(flatten)]
    meta: TableMeta,
}

/// CSV with columns setting, delay_ns, value (and baseline when known), plus a
/// `.meta.toml` sidecar with the mode, bin width and acquisition metadata.
pub fn write_table(path: &Path, table: &CoincidenceTable) -> Result<()> {
    table.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let with_base = table.baseline.is_some();
    if with_base {
        w.write_record(["setting", "delay_ns", "value", "baseline"]).map_err(csv_err)?;
    } else {
        w.write_record(["setting", "delay_ns", "value"]).map_err(csv_err)?;
    }
    for (s, row) in &table.values {
        for (k, v) in row.iter().enumerate() {
            let mut rec = vec![s.to_string(), table.delays_ns[k].to_string(), v.to_string()];
            if let Some(b) = &table.baseline {
                rec.push(b[s][k].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    write_toml(
        &sidecar_path(path),
        &TableSidecar { mode: table.mode, bin_width_ns: table.bin_width_ns, meta: table.meta.clone() },
    )
}

/// Reads a table written by [`write_table`] or an external three-column CSV.
/// Without a sidecar the mode is inferred (integers → counts) and the bin
/// width is the smallest delay spacing.
pub fn read_table(path: &Path) -> Result<CoincidenceTable> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(cs), Some(cd), Some(cv)) = (col("setting"), col("delay_ns"), col("value")) else {
        return Err(Error::Parse { line: 1, msg: "header must contain setting, delay_ns, value".into() });
    };
    let cb = col("baseline");

    let mut rows: BTreeMap<DetectorSetting, Vec<(f64, f64, Option<f64>)>> = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing column {i}") });
        let num = |i: usize| -> Result<f64> {
            let f = field(i)?;
            f.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: {f:?}") })
        };
        let setting: DetectorSetting =
            field(cs)?.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?;
        let base = match cb {
            Some(i) => Some(num(i)?),
            None => None,
        };
        rows.entry(setting).or_default().push((num(cd)?, num(cv)?, base));
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no data rows".into() });
    }

    let mut delays: Option<Vec<f64>> = None;
    let mut values = BTreeMap::new();
    let mut baseline = BTreeMap::new();
    for (s, mut list) in rows {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<f64> = list.iter().map(|x| x.0).collect();
        match &delays {
            None => delays = Some(d),
            Some(prev) if *prev != d => {
                return Err(Error::Parse { line: 0, msg: format!("setting {s} uses a different delay grid") })
            }
            _ => {}
        }
        values.insert(s, list.iter().map(|x| x.1).collect::<Vec<_>>());
        if cb.is_some() {
            baseline.insert(s, list.iter().map(|x| x.2.unwrap_or(0.0)).collect::<Vec<_>>());
        }
    }
    let delays_ns = delays.unwrap_or_default();

    let side = sidecar_path(path);
    let (mode, bin_width_ns, meta) = if side.exists() {
        let sc: TableSidecar = read_toml(&side)?;
        (sc.mode, sc.bin_width_ns, sc.meta)
    } else {
        let integral = values.values().flatten().all(|v: &f64| v.fract() == 0.0);
        let width = delays_ns.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let width = if width.is_finite() && width > 0.0 { width } else { 1.0 };
        (if integral { TableMode::Count } else { TableMode::Rate }, width, TableMeta::default())
    };
    let table = CoincidenceTable {
        mode,
        bin_width_ns,
        delays_ns,
        values,
        baseline: cb.map(|_| baseline),
        meta,
    };
    table.validate()?;
    Ok(table)
}

/// Real and imaginary parts of a complex matrix, row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { re: rows(|z| z.re), im: rows(|z| z.im) }
    }
}

/// Record of a run: exact configuration, seeds, code version and the γ assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub gamma_mhz: f64,
    pub gamma_assumed: bool,
    pub circular_convention: String,
    pub config: crate::config::RunConfig,
}

impl Manifest {
    pub fn new(command: &str, config: &crate::config::RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            gamma_mhz: config.system.gamma_mhz,
            gamma_assumed: config.system.gamma_mhz == crate::params::DEFAULT_GAMMA_MHZ,
            circular_convention: crate::polarization::CIRCULAR_CONVENTION.to_string(),
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_toml(&dir.join("manifest.toml"), self)
    }
}
