//! Plain-text artifact formats.
//!
//! Every file is CSV preceded by one comment line `# {json}` holding its
//! metadata. Floats are written with 17 significant digits, which round-trips
//! every f64 and keeps outputs byte-stable.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cloud::{Labels, PointCloud, Provenance, ScaledMetric};
use crate::dmap::DiffusionEmbedding;
use crate::error::{Error, Result};
use crate::kinetics::Trajectory;
use crate::reduced::ReducedTable;

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Raw contents of an artifact file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDocument {
    pub meta: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvDocument {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn meta_field<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self.meta.get(key).ok_or_else(|| Error::Format(format!("metadata lacks `{key}`")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

pub fn write_document<W: Write>(mut out: W, meta: &Value, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "# {}", serde_json::to_string(meta)?)?;
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_document<R: Read>(input: R) -> Result<CsvDocument> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let meta_text = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing metadata line".into()))?;
    let meta: Value = serde_json::from_str(meta_text.trim())?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Format(format!("row {}: `{s}` is not a number", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Format(format!("row {} has {} fields, header {}", i + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok(CsvDocument { meta, header, rows })
}

fn merged(mut meta: Value, extra: Value) -> Value {
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    meta
}

/// Columns: coordinates, then `trajectory,time` when the cloud carries
/// provenance, then one `label:NAME` column per label.
pub fn write_cloud<W: Write>(out: W, cloud: &PointCloud, meta: Value) -> Result<()> {
    let meta = merged(
        meta,
        serde_json::json!({ "kind": "cloud", "dim": cloud.dim(), "metric": cloud.metric().diag() }),
    );
    let mut header: Vec<String> = cloud.names().to_vec();
    if cloud.provenance().is_some() {
        header.extend(["trajectory".to_string(), "time".to_string()]);
    }
    if let Some(l) = cloud.labels() {
        header.extend(l.names.iter().map(|n| format!("label:{n}")));
    }
    let rows: Vec<Vec<String>> = (0..cloud.len())
        .map(|i| {
            let mut r: Vec<String> = cloud.row(i).iter().map(|v| format_float(*v)).collect();
            if let Some(p) = cloud.provenance() {
                r.push(p[i].trajectory.to_string());
                r.push(format_float(p[i].time));
            }
            if let Some(l) = cloud.labels() {
                r.extend(l.row(i).iter().map(|v| format_float(*v)));
            }
            r
        })
        .collect();
    write_document(out, &meta, &header, &rows)
}

pub fn read_cloud<R: Read>(input: R) -> Result<(PointCloud, Value)> {
    let doc = read_document(input)?;
    let dim: usize = doc.meta_field("dim")?;
    let metric: Vec<f64> = doc.meta_field("metric")?;
    if doc.header.len() < dim {
        return Err(Error::Format(format!("cloud file has {} columns, dimension {dim}", doc.header.len())));
    }
    if doc.rows.is_empty() {
        return Err(Error::Format("cloud file holds no points".into()));
    }
    let points: Vec<f64> = doc.rows.iter().flat_map(|r| r[..dim].iter().copied()).collect();
    let mut cloud = PointCloud::with_metric(points, dim, ScaledMetric::new(metric)?)?
        .with_names(doc.header[..dim].to_vec())?;
    if let (Some(tj), Some(tm)) = (doc.column_index("trajectory"), doc.column_index("time")) {
        let prov = doc.rows.iter().map(|r| Provenance { trajectory: r[tj] as usize, time: r[tm] }).collect();
        cloud = cloud.with_provenance(prov)?;
    }
    let label_cols: Vec<(usize, String)> = doc
        .header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("label:").map(|n| (i, n.to_string())))
        .collect();
    if !label_cols.is_empty() {
        let values = doc.rows.iter().flat_map(|r| label_cols.iter().map(move |(i, _)| r[*i])).collect();
        cloud = cloud.with_labels(Labels { names: label_cols.into_iter().map(|(_, n)| n).collect(), values })?;
    }
    Ok((cloud, doc.meta))
}

/// Columns: `t`, then one per state coordinate.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory, names: &[String], meta: Value) -> Result<()> {
    if names.len() != traj.dim() {
        return Err(Error::DimensionMismatch(format!("{} names for dimension {}", names.len(), traj.dim())));
    }
    let meta = merged(meta, serde_json::json!({ "kind": "trajectory", "dim": traj.dim() }));
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    let rows: Vec<Vec<String>> = (0..traj.len())
        .map(|i| std::iter::once(traj.times()[i]).chain(traj.state(i).iter().copied()).map(format_float).collect())
        .collect();
    write_document(out, &meta, &header, &rows)
}

pub fn read_trajectory<R: Read>(input: R) -> Result<(Trajectory, Vec<String>, Value)> {
    let doc = read_document(input)?;
    if doc.header.first().map(String::as_str) != Some("t") {
        return Err(Error::Format("trajectory file must start with a `t` column".into()));
    }
    let dim = doc.header.len() - 1;
    let times = doc.rows.iter().map(|r| r[0]).collect();
    let states = doc.rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Ok((Trajectory::from_parts(times, states, dim)?, doc.header[1..].to_vec(), doc.meta))
}

/// Everything about an embedding except the eigenvector matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
    pub selected: Vec<usize>,
    pub t: u32,
    #[serde(default)]
    pub extra: Value,
}

/// Columns `phi_1 .. phi_k`, every computed eigenvector; the sidecar
/// carries eigenvalues, kernel scale and the selection.
pub fn write_embedding<W: Write, S: Write>(out: W, sidecar: S, embedding: &DiffusionEmbedding, meta: Value) -> Result<()> {
    let k = embedding.eigenvalues.len();
    let header: Vec<String> = (1..=k).map(|l| format!("phi_{l}")).collect();
    let rows: Vec<Vec<String>> = (0..embedding.len())
        .map(|i| embedding.eigenvectors.row(i).iter().map(|v| format_float(*v)).collect())
        .collect();
    let doc_meta = merged(meta.clone(), serde_json::json!({ "kind": "embedding" }));
    write_document(out, &doc_meta, &header, &rows)?;
    let car = EmbeddingSidecar {
        eigenvalues: embedding.eigenvalues.clone(),
        epsilon: embedding.epsilon,
        selected: embedding.selected.clone(),
        t: embedding.t,
        extra: meta,
    };
    let mut s = sidecar;
    serde_json::to_writer_pretty(&mut s, &car)?;
    writeln!(s)?;
    Ok(())
}

pub fn read_embedding<R: Read, S: Read>(input: R, sidecar: S) -> Result<(DiffusionEmbedding, EmbeddingSidecar)> {
    let doc = read_document(input)?;
    let car: EmbeddingSidecar = serde_json::from_reader(sidecar)?;
    let k = doc.header.len();
    if k != car.eigenvalues.len() {
        return Err(Error::Format(format!("{k} eigenvector columns but {} eigenvalues", car.eigenvalues.len())));
    }
    let vectors = DMatrix::from_fn(doc.rows.len(), k, |i, j| doc.rows[i][j]);
    let e = DiffusionEmbedding::from_parts(car.eigenvalues.clone(), vectors, car.epsilon, car.selected.clone(), car.t)?;
    Ok((e, car))
}

/// Columns: one index per axis, the rate components, and `mask` (1 valid).
pub fn write_table<W: Write>(out: W, table: &ReducedTable, meta: Value) -> Result<()> {
    let m = table.grid.dim();
    let meta = merged(
        meta,
        serde_json::json!({
            "kind": "table",
            "format_version": table.format_version,
            "grid": table.grid,
            "provenance": table.provenance,
        }),
    );
    let mut header: Vec<String> = ["i", "j", "k", "l"].iter().take(m).map(|s| s.to_string()).collect();
    if m > 4 {
        return Err(Error::param("tables of more than four dimensions are not supported"));
    }
    header.extend((1..=m).map(|a| format!("du{a}")));
    header.push("mask".into());
    let rows: Vec<Vec<String>> = (0..table.grid.n_nodes())
        .map(|k| {
            let mut r: Vec<String> = table.grid.multi_index(k).iter().map(|i| i.to_string()).collect();
            r.extend(table.values[k * m..(k + 1) * m].iter().map(|v| format_float(*v)));
            r.push(if table.mask[k] { "1" } else { "0" }.into());
            r
        })
        .collect();
    write_document(out, &meta, &header, &rows)
}

pub fn read_table<R: Read>(input: R) -> Result<(ReducedTable, Value)> {
    let doc = read_document(input)?;
    let version: u32 = doc.meta_field("format_version")?;
    if version != crate::reduced::TABLE_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported table format version {version}")));
    }
    let grid: crate::reduced::GridSpec = doc.meta_field("grid")?;
    let provenance = doc.meta_field("provenance")?;
    let m = grid.dim();
    if doc.header.len() != 2 * m + 1 || doc.rows.len() != grid.n_nodes() {
        return Err(Error::Format("table body does not match its grid".into()));
    }
    let mut values = vec![f64::NAN; grid.n_nodes() * m];
    let mut mask = vec![false; grid.n_nodes()];
    for r in &doc.rows {
        let idx: Vec<usize> = r[..m].iter().map(|v| *v as usize).collect();
        let k = grid.flat_index(&idx);
        values[k * m..(k + 1) * m].copy_from_slice(&r[m..2 * m]);
        mask[k] = r[2 * m] != 0.0;
    }
    let table = ReducedTable { format_version: version, grid, values, mask, provenance };
    Ok((table, doc.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduced::{Axis, GridSpec};

    #[test]
    fn cloud_round_trip() {
        let cloud = PointCloud::with_metric(vec![0.1, 0.2, 1.0 / 3.0, -4.5], 2, ScaledMetric::new(vec![2.0, 0.5]).unwrap())
            .unwrap()
            .with_provenance(vec![Provenance { trajectory: 0, time: 0.0 }, Provenance { trajectory: 3, time: 0.25 }])
            .unwrap();
        let mut buf = Vec::new();
        write_cloud(&mut buf, &cloud, serde_json::json!({ "config_hash": "abc" })).unwrap();
        let (back, meta) = read_cloud(buf.as_slice()).unwrap();
        assert_eq!(back, cloud);
        assert_eq!(meta["config_hash"], "abc");
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let t = Trajectory::from_parts(vec![0.0, 0.1, 0.7], vec![1.0, 2.0, 1.0 / 7.0, 3.0, 1e-300, -0.0], 2).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &t, &["a".into(), "b".into()], serde_json::json!({})).unwrap();
        let (back, names, _) = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back.as_flat(), t.as_flat());
        assert_eq!(back.times(), t.times());
        assert_eq!(names, vec!["a", "b"]);
    }

    #[test]
    fn table_round_trip_keeps_mask() {
        let grid = GridSpec::new(vec![Axis::new(0.0, 1.0, 3).unwrap(), Axis::new(-1.0, 1.0, 2).unwrap()]).unwrap();
        let mut values: Vec<f64> = (0..12).map(|v| v as f64 * 0.1).collect();
        values[4] = f64::NAN;
        let table = ReducedTable::from_values(grid, values, None).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &table, serde_json::json!({})).unwrap();
        let (back, _) = read_table(buf.as_slice()).unwrap();
        assert_eq!(back.mask, table.mask);
        assert_eq!(back.values[0..4], table.values[0..4]);
        assert!(back.values[4].is_nan());
    }

    #[test]
    fn floats_use_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
