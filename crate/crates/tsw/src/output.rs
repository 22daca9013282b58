//! Run artifacts on disk: the diagnostics CSV stream, coefficient
//! snapshots, sampled-grid exports and the run manifest.
//!
//! All numbers are written with explicit scientific formatting so reruns of
//! the same configuration produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::conservation::DiagnosticsRecord;
use crate::error::Result;
use crate::fespace::{Field, SpaceFamily};

pub const DIAGNOSTICS_COLUMNS: &str = "step,time,mass_err_abs,mass_err_rel,vort_err_abs,buoy_err_abs,buoy_err_rel,energy_m,energy_f,energy_err_rel,entropy,entropy_alt,entropy_err_rel,energy_rate,entropy_rate,min_h,max_cfl";

pub struct DiagnosticsWriter {
    w: BufWriter<File>,
    pub path: PathBuf,
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{DIAGNOSTICS_COLUMNS}")?;
        Ok(DiagnosticsWriter {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, r: &DiagnosticsRecord<f64>) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.time),
            fmt(r.mass_err_abs),
            fmt(r.mass_err_rel),
            fmt(r.vort_err_abs),
            fmt(r.buoy_err_abs),
            fmt(r.buoy_err_rel),
            fmt(r.energy_m),
            fmt(r.energy_f),
            fmt(r.energy_err_rel),
            fmt(r.entropy),
            fmt(r.entropy_alt),
            fmt(r.entropy_err_rel),
            fmt(r.energy_rate),
            fmt(r.entropy_rate),
            fmt(r.min_h),
            fmt(r.max_cfl),
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Text,
    Binary,
}

fn family_name(f: SpaceFamily) -> &'static str {
    match f {
        SpaceFamily::V0 => "V0",
        SpaceFamily::V1 => "V1",
        SpaceFamily::V2 => "V2",
    }
}

/// Write one field snapshot: a text header followed by the coefficient
/// vector, either one value per line or as little-endian f64.
pub fn write_snapshot(
    path: &Path,
    name: &str,
    field: &Field<f64>,
    time: f64,
    format: SnapshotFormat,
) -> Result<()> {
    let mesh = &field.space.mesh;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "field {name}")?;
    writeln!(w, "family {}", family_name(field.space.family))?;
    writeln!(w, "order {}", field.space.order)?;
    writeln!(w, "mesh {} {}", mesh.nx, mesh.ny)?;
    writeln!(w, "extent {} {}", fmt(mesh.lx), fmt(mesh.ly))?;
    writeln!(w, "time {}", fmt(time))?;
    writeln!(
        w,
        "data {} {}",
        field.coeffs.len(),
        match format {
            SnapshotFormat::Text => "text",
            SnapshotFormat::Binary => "binary",
        }
    )?;
    match format {
        SnapshotFormat::Text => {
            for &c in &field.coeffs {
                writeln!(w, "{}", fmt(c))?;
            }
        }
        SnapshotFormat::Binary => {
            for &c in &field.coeffs {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read back a text-or-binary snapshot coefficient vector (used by tests
/// and external tooling).
pub fn read_snapshot_coeffs(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    let header_end = {
        let mut pos = 0;
        let mut lines = 0;
        while lines < 7 && pos < bytes.len() {
            if bytes[pos] == b'\n' {
                lines += 1;
            }
            pos += 1;
        }
        pos
    };
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let data_line = header
        .lines()
        .last()
        .ok_or_else(|| crate::error::Error::invalid("empty snapshot"))?;
    let mut parts = data_line.split_whitespace();
    let tag = parts.next().unwrap_or("");
    if tag != "data" {
        return Err(crate::error::Error::invalid("malformed snapshot header"));
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| crate::error::Error::invalid("malformed snapshot size"))?;
    let kind = parts.next().unwrap_or("text");
    let body = &bytes[header_end..];
    let mut out = Vec::with_capacity(n);
    match kind {
        "text" => {
            for line in String::from_utf8_lossy(body).lines().take(n) {
                out.push(line.trim().parse().map_err(|_| {
                    crate::error::Error::invalid(format!("bad value `{line}`"))
                })?);
            }
        }
        "binary" => {
            for chunk in body.chunks_exact(8).take(n) {
                out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        other => {
            return Err(crate::error::Error::invalid(format!(
                "unknown snapshot data kind `{other}`"
            )))
        }
    }
    if out.len() != n {
        return Err(crate::error::Error::invalid(format!(
            "snapshot truncated: {} of {n} values",
            out.len()
        )));
    }
    Ok(out)
}

/// Sample a scalar field on an m-by-m uniform lattice and write a raster
/// text file (row-major, y varying slowest).
pub fn write_sampled_grid(path: &Path, field: &Field<f64>, m: usize) -> Result<()> {
    let mesh = &field.space.mesh;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "grid {m} {m}")?;
    writeln!(w, "extent {} {}", fmt(mesh.lx), fmt(mesh.ly))?;
    for j in 0..m {
        let y = mesh.ly * (j as f64 + 0.5) / m as f64;
        let mut row = String::new();
        for i in 0..m {
            let x = mesh.lx * (i as f64 + 0.5) / m as f64;
            if i > 0 {
                row.push(' ');
            }
            row.push_str(&fmt(field.eval_scalar_at((x, y))));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Write the run manifest: the resolved configuration plus provenance.
pub fn write_manifest(path: &Path, resolved_config_toml: &str, version: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# resolved run configuration")?;
    writeln!(w, "# program: tsw {version}")?;
    w.write_all(resolved_config_toml.as_bytes())?;
    w.flush()?;
    Ok(())
}
