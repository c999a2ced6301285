//! CSV artifacts: one header row, 17 significant digits, `.` decimal point.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sigma_core::grid::{RadialField, RadialGrid};
use sigma_core::solver::{OriginTrace, TimeSlice};

pub const TRACE_FILE: &str = "trace.csv";
pub const SLICES_FILE: &str = "slices.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FIT_FILE: &str = "fit.csv";
pub const HYPERBOLA_FILE: &str = "hyperbola.csv";
pub const PREDICTED_FILE: &str = "predicted.csv";
pub const OVERLAY_FILE: &str = "overlay.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_TEXT_FILE: &str = "sweep.txt";
pub const RINV_FILE: &str = "rinv.csv";
pub const RINV_FIT_FILE: &str = "rinv_fit.csv";

/// Lossless, locale-independent float text.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)
        .with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.write_record(row)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A parsed CSV file addressed by column name.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let headers = r
            .headers()
            .with_context(|| format!("reading header of {}", path.display()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(|s| s.trim().to_string()).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no column '{name}'", self.path.display()))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(n, row)| {
                let cell = row.get(i).ok_or_else(|| anyhow!("short row {} in {}", n + 2, self.path.display()))?;
                cell.parse::<f64>()
                    .with_context(|| format!("{}: row {}, column '{name}': '{cell}'", self.path.display(), n + 2))
            })
            .collect()
    }

    /// Single-row value.
    pub fn scalar(&self, name: &str) -> Result<f64> {
        let col = self.column(name)?;
        match col.as_slice() {
            [v] => Ok(*v),
            _ => bail!("{} should hold one row, found {}", self.path.display(), col.len()),
        }
    }
}

pub fn write_trace(path: &Path, trace: &OriginTrace) -> Result<()> {
    write_csv(
        path,
        &["t", "f_origin"],
        trace.samples.iter().map(|s| [fmt_float(s.t), fmt_float(s.f)]),
    )
}

pub fn read_trace(path: &Path) -> Result<OriginTrace> {
    let table = Table::read(path)?;
    let t = table.column("t")?;
    let f = table.column("f_origin")?;
    Ok(t.into_iter().zip(f).collect())
}

pub fn write_slices(path: &Path, slices: &[TimeSlice], grid: &RadialGrid) -> Result<()> {
    write_csv(
        path,
        &["t", "r", "f"],
        slices.iter().flat_map(|s| {
            s.values
                .iter()
                .enumerate()
                .map(move |(j, &f)| [fmt_float(s.t), fmt_float(grid.r(j)), fmt_float(f)])
        }),
    )
}

/// Slices plus the uniform grid they were sampled on.
pub fn read_slices(path: &Path) -> Result<(RadialGrid, Vec<TimeSlice>)> {
    let table = Table::read(path)?;
    let t = table.column("t")?;
    let r = table.column("r")?;
    let f = table.column("f")?;
    let mut slices: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for ((t, r), f) in t.into_iter().zip(r).zip(f) {
        match slices.last_mut() {
            Some((last_t, rs, fs)) if *last_t == t => {
                rs.push(r);
                fs.push(f);
            }
            _ => slices.push((t, vec![r], vec![f])),
        }
    }
    let (_, radii, _) = slices
        .first()
        .ok_or_else(|| anyhow!("{} holds no slices", path.display()))?;
    if radii.len() < 2 {
        bail!("{}: slices need at least two radii", path.display());
    }
    let grid = RadialGrid::new(radii[1] - radii[0], radii.len()).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let out = slices
        .into_iter()
        .map(|(t, rs, fs)| {
            if rs.len() != grid.n_points() {
                bail!("{}: slice at t = {t} has {} points, expected {}", path.display(), rs.len(), grid.n_points());
            }
            Ok(TimeSlice {
                t,
                values: RadialField(fs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, out))
}

/// Ordered key/value pairs written as a two-column CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            &["key", "value"],
            self.entries.iter().map(|(k, v)| [k.clone(), v.clone()]),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        let table = Table::read(path)?;
        let (k, v) = (table.index("key")?, table.index("value")?);
        Ok(Self {
            entries: table
                .rows
                .iter()
                .map(|row| (row[k].clone(), row.get(v).cloned().unwrap_or_default()))
                .collect(),
        })
    }

    /// Manifest sitting next to `file`, if any.
    pub fn beside(file: &Path) -> Option<Self> {
        let dir = file.parent()?;
        Self::read(&dir.join(MANIFEST_FILE)).ok()
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}

/// Creates `dir` and removes any manifest left from an earlier run, so an
/// interrupted rerun cannot leave a stale completeness marker.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        fs::remove_file(&manifest).with_context(|| format!("removing {}", manifest.display()))?;
    }
    Ok(())
}
