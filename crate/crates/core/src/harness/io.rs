//! Dataset files: a node table `id,<feature...>` with one row per node in
//! id order, and an edge table `source,target`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn load_dataset(node_file: &Path, edge_file: &Path) -> Result<Graph> {
    let mut nodes = reader(node_file)?;
    let header = nodes.headers()?.clone();
    if header.is_empty() || &header[0] != "id" {
        return Err(parse_err(node_file, 1, "first column must be `id`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let d = names.len();
    if d == 0 {
        return Err(parse_err(node_file, 1, "no feature columns"));
    }

    let mut values = Vec::new();
    let mut n = 0usize;
    for rec in nodes.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != d + 1 {
            return Err(parse_err(
                node_file,
                line,
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(node_file, line, format!("bad node id {:?}", &rec[0])))?;
        if id != n {
            return Err(parse_err(node_file, line, format!("expected node id {n}, found {id}")));
        }
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(node_file, line, format!("bad value {field:?} for {}", names[j]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(node_file, line, format!("non-finite value for {}", names[j])));
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(node_file, 2, "no nodes"));
    }
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Format(e.to_string()))?;

    let mut edges_in = reader(edge_file)?;
    let eh = edges_in.headers()?.clone();
    if eh.len() != 2 || &eh[0] != "source" || &eh[1] != "target" {
        return Err(parse_err(edge_file, 1, "header must be `source,target`"));
    }
    let mut edges = Vec::new();
    for rec in edges_in.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 2 {
            return Err(parse_err(edge_file, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse()
                .map_err(|_| parse_err(edge_file, line, format!("bad node id {field:?}")))?;
            if *slot >= n {
                return Err(parse_err(
                    edge_file,
                    line,
                    format!("unknown node id {slot} ({n} nodes)"),
                ));
            }
        }
        edges.push((ends[0], ends[1]));
    }
    Graph::new(n, &edges, features, names)
}

pub fn export_dataset(graph: &Graph, node_file: &Path, edge_file: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(node_file)?);
    write!(w, "id")?;
    for name in graph.feature_names() {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, row) in graph.features().rows().into_iter().enumerate() {
        write!(w, "{i}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(edge_file)?);
    writeln!(w, "source,target")?;
    for &(s, t) in graph.edges() {
        writeln!(w, "{s},{t}")?;
    }
    w.flush()?;
    Ok(())
}
