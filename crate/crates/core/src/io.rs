//! CSV interchange: signal matrices, subject labels, edge lists and dense
//! adjacency dumps.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{dim, invalid, Result};
use crate::graph::{Edge, SignalMatrix, SparseGraph};
use crate::training::Dataset;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn is_number(s: &str) -> bool {
    s.parse::<f64>().is_ok()
}

/// Reads a node-by-subject signal CSV.
///
/// A header row (subject ids) is detected when any of its value cells is
/// non-numeric; a node-label column when the first cell of the last row is
/// non-numeric. Error messages give 1-based file line and column.
pub fn read_signals(path: &Path) -> Result<SignalMatrix> {
    let records: Vec<csv::StringRecord> = reader(path)?.records().collect::<std::result::Result<_, _>>()?;
    let records: Vec<&csv::StringRecord> = records.iter().filter(|r| !(r.len() == 1 && r[0].is_empty())).collect();
    if records.is_empty() {
        return Err(invalid(format!("{}: no rows", path.display())));
    }
    let label_col = !is_number(&records[records.len() - 1][0]);
    let first_value = usize::from(label_col);
    let has_header = records.len() > 1 && records[0].iter().skip(first_value).any(|c| !is_number(c));

    let data = if has_header { &records[1..] } else { &records[..] };
    if data.is_empty() {
        return Err(invalid(format!("{}: header but no data rows", path.display())));
    }
    let width = data[0].len() - first_value;
    let line_offset = usize::from(has_header) + 1;

    let mut values = Vec::with_capacity(data.len() * width);
    let mut node_ids = Vec::with_capacity(data.len());
    for (r, rec) in data.iter().enumerate() {
        if rec.len() - first_value != width {
            return Err(dim(format!(
                "{}: line {} has {} values, expected {width}",
                path.display(),
                r + line_offset,
                rec.len() - first_value
            )));
        }
        node_ids.push(if label_col { rec[0].to_string() } else { format!("n{r}") });
        for (c, cell) in rec.iter().enumerate().skip(first_value) {
            let v: f64 = cell.parse().map_err(|_| {
                invalid(format!(
                    "{}: non-numeric cell '{cell}' at line {}, column {}",
                    path.display(),
                    r + line_offset,
                    c + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(invalid(format!(
                    "{}: non-finite value '{cell}' at line {}, column {}",
                    path.display(),
                    r + line_offset,
                    c + 1
                )));
            }
            values.push(v);
        }
    }
    let subject_ids = if has_header {
        let header = records[0];
        if header.len() - first_value != width {
            return Err(dim(format!(
                "{}: header names {} subjects, rows have {width} values",
                path.display(),
                header.len() - first_value
            )));
        }
        header.iter().skip(first_value).map(str::to_string).collect()
    } else {
        (0..width).map(|j| format!("s{j}")).collect()
    };
    let values = DMatrix::from_row_slice(data.len(), width, &values);
    SignalMatrix::new(values, node_ids, subject_ids)
}

/// Writes signals with a `node,<subject ids>` header and a node-label column.
pub fn write_signals(signals: &SignalMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend(signals.subject_ids().iter().cloned());
    w.write_record(&header)?;
    for (i, id) in signals.node_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(signals.values().row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `subject_id,label` rows in file order.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "subject_id" || &headers[1] != "label" {
        return Err(invalid(format!(
            "{}: expected header 'subject_id,label', got '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 || rec[0].is_empty() || rec[1].is_empty() {
            return Err(invalid(format!("{}: incomplete row at line {}", path.display(), i + 2)));
        }
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}

/// Loads signals and labels into a [`Dataset`].
///
/// Class indices follow first appearance in the labels file unless
/// `classes` fixes the mapping, in which case any other label is an error.
/// When the signals carry a subject header, columns are matched to label
/// rows by subject id; otherwise by position.
pub fn load_dataset(signals_path: &Path, labels_path: &Path, classes: Option<&[String]>) -> Result<Dataset> {
    let signals = read_signals(signals_path)?;
    let rows = read_labels(labels_path)?;
    if rows.len() != signals.n_subjects() {
        return Err(dim(format!(
            "signals have {} subject columns but labels list {} subjects",
            signals.n_subjects(),
            rows.len()
        )));
    }

    let mut seen = HashMap::new();
    for (i, (id, _)) in rows.iter().enumerate() {
        if let Some(prev) = seen.insert(id.as_str(), i) {
            return Err(invalid(format!(
                "duplicate subject_id '{id}' at label lines {} and {}",
                prev + 2,
                i + 2
            )));
        }
    }

    let mut class_names: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut labels = Vec::with_capacity(rows.len());
    for (i, (_, label)) in rows.iter().enumerate() {
        let idx = match class_names.iter().position(|c| c == label) {
            Some(idx) => idx,
            None if classes.is_some() => {
                return Err(invalid(format!("unknown label '{label}' at label line {}", i + 2)));
            }
            None => {
                class_names.push(label.clone());
                class_names.len() - 1
            }
        };
        labels.push(idx);
    }

    let header_ids = signals.subject_ids().iter().any(|s| !is_default_subject(s));
    let signals = if header_ids {
        let column: HashMap<&str, usize> = signals
            .subject_ids()
            .iter()
            .enumerate()
            .map(|(j, s)| (s.as_str(), j))
            .collect();
        let mut order = Vec::with_capacity(rows.len());
        for (id, _) in &rows {
            match column.get(id.as_str()) {
                Some(&j) => order.push(j),
                None => return Err(invalid(format!("subject '{id}' has a label but no signal column"))),
            }
        }
        signals.select_subjects(&order)
    } else {
        SignalMatrix::new(
            signals.values().clone(),
            signals.node_ids().to_vec(),
            rows.iter().map(|(id, _)| id.clone()).collect(),
        )?
    };
    Dataset::new(signals, labels, class_names)
}

fn is_default_subject(s: &str) -> bool {
    s.strip_prefix('s').is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

pub fn write_labels(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "label"])?;
    for (id, &y) in ds.signals().subject_ids().iter().zip(ds.labels()) {
        w.write_record([id.as_str(), ds.class_names()[y].as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, signals_path: &Path, labels_path: &Path) -> Result<()> {
    write_signals(ds.signals(), signals_path)?;
    write_labels(ds, labels_path)
}

/// `src,dst,weight` with 0-based nodes and `src < dst`.
pub fn write_edge_list(g: &SparseGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["src", "dst", "weight"])?;
    for e in g.edges() {
        w.write_record([e.src.to_string(), e.dst.to_string(), e.weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list. `n` defaults to one past the largest node index.
pub fn read_edge_list(path: &Path, n: Option<usize>) -> Result<SparseGraph> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["src", "dst", "weight"] {
        return Err(invalid(format!("{}: expected header 'src,dst,weight'", path.display())));
    }
    let mut edges = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |c: usize| -> Result<&str> {
            rec.get(c)
                .ok_or_else(|| invalid(format!("{}: line {line} is missing column {}", path.display(), c + 1)))
        };
        let src: usize = field(0)?
            .parse()
            .map_err(|_| invalid(format!("{}: bad src at line {line}", path.display())))?;
        let dst: usize = field(1)?
            .parse()
            .map_err(|_| invalid(format!("{}: bad dst at line {line}", path.display())))?;
        let weight: f64 = field(2)?
            .parse()
            .map_err(|_| invalid(format!("{}: bad weight at line {line}", path.display())))?;
        edges.push(Edge::new(src, dst, weight));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0));
    SparseGraph::new(n, edges)
}

/// Plain numeric CSV, no header.
pub fn write_dense_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}
