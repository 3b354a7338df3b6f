use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;
use vmmma::simulate::{FieldKind, FieldSample, LatticeKind, Provenance};
use vmmma::grid::GridSpec;

use crate::error::Result;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// CSV with a header row; -0.0 is written as 0.
pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        let row: Vec<f64> = row.into_iter().map(|v| v + 0.0).collect();
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("{prefix}{j}")).collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    kind: FieldKind,
    lattice: LatticeKind,
    grid: &'a GridSpec,
    columns: Vec<String>,
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    hurst: Option<&'a Vec<f64>>,
    model_hash: &'a str,
}

/// `<stem>.csv` with columns x1..xd, value (t1..td on exponential
/// lattices) and `<stem>.json` with the grid, seed, model hash and, for
/// transformed fields, H.
pub fn write_field(dir: &Path, stem: &str, field: &FieldSample, model_hash: &str) -> Result<()> {
    let d = field.grid.dim();
    let prefix = if field.lattice == LatticeKind::Exponential { "t" } else { "x" };
    let mut header = coord_header(prefix, d);
    header.push("value".into());
    let rows = (0..field.values.len()).map(|i| {
        let mut r = field.coords(i);
        r.push(field.values[i]);
        r
    });
    write_csv(&dir.join(format!("{stem}.csv")), &header, rows)?;
    let sidecar = Sidecar {
        kind: field.kind,
        lattice: field.lattice,
        grid: &field.grid,
        columns: header,
        provenance: field.provenance,
        hurst: field.hurst.as_ref(),
        model_hash,
    };
    write_json(&dir.join(format!("{stem}.json")), &sidecar)
}
