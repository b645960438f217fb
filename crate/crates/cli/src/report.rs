use std::fmt::Write as _;

use birkhoff::bench::BenchReport;
use birkhoff::container::{EntryKind, Manifest};
use birkhoff::model::{ModelReport, TensorReport};
use birkhoff::search::Preset;
use birkhoff::Error;
use serde::Serialize;

use crate::config::Format;

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn kind_str(kind: EntryKind) -> &'static str {
    match kind {
        EntryKind::Compressed => "compressed",
        EntryKind::PassThrough => "pass_through",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:e}"))
}

fn json<T: Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Format(e.to_string()))
}

fn csv_of<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Serialize)]
struct TensorCsv<'a> {
    name: &'a str,
    kind: &'static str,
    shape: String,
    dtype: &'a str,
    mae: String,
    max_abs_error: String,
    bits_per_param: f64,
    original_bytes: u64,
    stored_bytes: u64,
    ratio: f64,
    l: String,
    #[serde(rename = "U")]
    codebook_size: String,
    #[serde(rename = "M")]
    categories: String,
    seconds: f64,
    note: &'a str,
}

impl<'a> From<&'a TensorReport> for TensorCsv<'a> {
    fn from(t: &'a TensorReport) -> Self {
        Self {
            name: &t.name,
            kind: kind_str(t.kind),
            shape: shape_str(&t.shape),
            dtype: t.dtype.name(),
            mae: opt(t.mae),
            max_abs_error: opt(t.max_abs_error),
            bits_per_param: t.bits_per_param,
            original_bytes: t.original_bytes,
            stored_bytes: t.stored_bytes,
            ratio: t.ratio,
            l: t.params.map_or_else(String::new, |p| p.l.to_string()),
            codebook_size: t.params.map_or_else(String::new, |p| p.codebook_size.to_string()),
            categories: t.params.map_or_else(String::new, |p| p.categories.to_string()),
            seconds: t.seconds,
            note: t.note.as_deref().unwrap_or(""),
        }
    }
}

pub fn model(r: &ModelReport, format: Format) -> Result<String, Error> {
    match format {
        Format::Json => json(r),
        Format::Csv => csv_of(r.tensors.iter().map(TensorCsv::from)),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<48} {:<12} {:>12} {:>5} {:>11} {:>11} {:>7} {:>7} {:>16}",
                "tensor", "kind", "shape", "dtype", "mae", "max_err", "bits/p", "ratio", "l/U/M"
            );
            for t in &r.tensors {
                let params = t.params.map_or_else(|| "-".into(), |p| format!("{}/{}/{}", p.l, p.codebook_size, p.categories));
                let _ = writeln!(
                    s,
                    "{:<48} {:<12} {:>12} {:>5} {:>11} {:>11} {:>7.3} {:>6.2}x {:>16}",
                    t.name,
                    kind_str(t.kind),
                    shape_str(&t.shape),
                    t.dtype.name(),
                    t.mae.map_or_else(|| "-".into(), |v| format!("{v:.4e}")),
                    t.max_abs_error.map_or_else(|| "-".into(), |v| format!("{v:.4e}")),
                    t.bits_per_param,
                    t.ratio,
                    params
                );
            }
            let _ = writeln!(
                s,
                "total: {} tensors ({} compressed), {} -> {} bytes, ratio {:.3}x, {:.2} s",
                r.tensors.len(),
                r.compressed_tensors,
                r.totals.original_bytes,
                r.totals.stored_bytes,
                r.totals.ratio,
                r.seconds
            );
            if let Some(b) = r.mae_budget {
                if r.budget_violations.is_empty() {
                    let _ = writeln!(s, "all compressed tensors within MAE budget {b:e}");
                } else {
                    let _ = writeln!(s, "MAE budget {b:e} exceeded by: {}", r.budget_violations.join(", "));
                }
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
pub struct InspectRow {
    pub name: String,
    pub kind: &'static str,
    pub shape: String,
    pub dtype: String,
    pub bits_per_param: f64,
    pub stored_bytes: u64,
    pub params: String,
}

#[derive(Serialize)]
struct InspectJson<'a> {
    entries: &'a [InspectRow],
    totals: birkhoff::container::Totals,
    metadata: &'a std::collections::BTreeMap<String, String>,
}

pub fn inspect(m: &Manifest, format: Format) -> Result<String, Error> {
    let rows: Vec<InspectRow> = m
        .entries
        .iter()
        .map(|e| {
            let elements: usize = e.shape.iter().product();
            let bits = match (e.bit_width, e.code_count) {
                (Some(b), Some(n)) => (b as usize * n) as f64,
                _ => (e.length * 8) as f64,
            };
            InspectRow {
                name: e.name.clone(),
                kind: kind_str(e.kind),
                shape: shape_str(&e.shape),
                dtype: e.dtype.name().to_string(),
                bits_per_param: bits / elements.max(1) as f64,
                stored_bytes: e.length,
                params: e
                    .aux
                    .map_or_else(String::new, |a| format!("{}/{}/{}", a.box_len, a.codebook_size, a.categories)),
            }
        })
        .collect();
    match format {
        Format::Json => json(&InspectJson { entries: &rows, totals: m.totals, metadata: &m.metadata }),
        Format::Csv => csv_of(&rows),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<48} {:<12} {:>12} {:>5} {:>7} {:>12} {:>16}",
                "tensor", "kind", "shape", "dtype", "bits/p", "bytes", "l/U/M"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<48} {:<12} {:>12} {:>5} {:>7.3} {:>12} {:>16}",
                    r.name, r.kind, r.shape, r.dtype, r.bits_per_param, r.stored_bytes, r.params
                );
            }
            let t = m.totals;
            let _ = writeln!(
                s,
                "total: {} entries, {} -> {} bytes, ratio {:.3}x",
                rows.len(),
                t.original_bytes,
                t.stored_bytes,
                t.ratio
            );
            Ok(s)
        }
    }
}

pub fn bench(r: &BenchReport, format: Format) -> Result<String, Error> {
    match format {
        Format::Json => r.to_json().map(|s| s + "\n"),
        Format::Csv => r.to_csv(),
        Format::Text => {
            let mut s = format!("machine: {}\nworkers: {}\n", r.machine, r.workers);
            let _ = writeln!(
                s,
                "{:<16} {:<22} {:>16} {:>11} {:>11}",
                "label", "strategy", "MxKxN", "median_ms", "min_ms"
            );
            for row in &r.rows {
                let _ = writeln!(
                    s,
                    "{:<16} {:<22} {:>16} {:>11.3} {:>11.3}",
                    row.label,
                    row.strategy.name(),
                    format!("{}x{}x{}", row.m, row.k, row.n),
                    row.median_ms,
                    row.min_ms
                );
            }
            for c in &r.cases {
                let _ = writeln!(
                    s,
                    "{}: fused/dense {:.2}x, ratio {:.3}x at {} bits, mae {:.4e}, outputs verified (max rel diff {:e})",
                    c.label, c.slowdown, c.ratio, c.bit_width, c.mae, c.max_rel_diff
                );
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct PresetRow {
    name: String,
    l: String,
    #[serde(rename = "U")]
    codebook_size: String,
    #[serde(rename = "M")]
    categories: String,
    reference_mae: String,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn presets(list: &[&Preset], format: Format) -> Result<String, Error> {
    let rows: Vec<PresetRow> = list
        .iter()
        .map(|p| PresetRow {
            name: p.name.clone(),
            l: join(&p.space.box_lens),
            codebook_size: join(&p.space.codebook_sizes),
            categories: join(&p.space.categories),
            reference_mae: opt(p.reference_mae),
        })
        .collect();
    match format {
        Format::Json => json(&rows),
        Format::Csv => csv_of(&rows),
        Format::Text => {
            let mut s = String::new();
            for r in &rows {
                let _ = writeln!(s, "{:<16} l=[{}] U=[{}] M=[{}] mae={}", r.name, r.l, r.codebook_size, r.categories, r.reference_mae);
            }
            Ok(s)
        }
    }
}
