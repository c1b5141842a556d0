//! Dataset directory format: `features.csv`, `edges.csv`, `labels.csv` and an
//! optional `splits.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gnn2mlp_core::graph::{make_splits, Graph, SplitSpec, Splits};
use gnn2mlp_core::Matrix;
use serde::{Deserialize, Serialize};

pub const FEATURES: &str = "features.csv";
pub const EDGES: &str = "edges.csv";
pub const LABELS: &str = "labels.csv";
pub const SPLITS: &str = "splits.json";

/// Seed for splits generated when a dataset ships without `splits.json`.
pub const DEFAULT_SPLIT_SEED: u64 = 0;

#[derive(Debug, Serialize, Deserialize)]
struct SplitsFile {
    labeled: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn records(path: &Path) -> Result<Vec<(u64, Vec<String>)>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => anyhow!("{}: line {}: {e}", path.display(), p.line()),
            None => anyhow!("{}: {e}", path.display()),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse<V: std::str::FromStr>(path: &Path, line: u64, field: &str) -> Result<V> {
    field
        .parse()
        .map_err(|_| anyhow!("{}: line {line}: cannot parse {field:?}", path.display()))
}

/// Read a headerless CSV of decimal values into a dense matrix.
pub fn read_matrix(path: &Path) -> Result<Matrix<f64>> {
    let rows = records(path)?;
    let cols = rows.first().map_or(0, |r| r.1.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, fields) in &rows {
        for f in fields {
            data.push(parse::<f64>(path, *line, f)?);
        }
    }
    Ok(Matrix::new(rows.len(), cols, data)?)
}

/// Write a matrix with the shortest decimal representation that round-trips.
pub fn write_matrix(path: &Path, m: &Matrix<f64>) -> Result<()> {
    write_rows(path, m, |w, v| write!(w, "{v}"))
}

pub fn write_rows<F>(path: &Path, m: &Matrix<f64>, mut fmt: F) -> Result<()>
where
    F: FnMut(&mut BufWriter<File>, f64) -> std::io::Result<()>,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for row in m.row_iter() {
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                w.write_all(b",")?;
            }
            fmt(&mut w, v)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn load_dataset(dir: &Path) -> Result<Graph<f64>> {
    let features = read_matrix(&dir.join(FEATURES))?;
    let n = features.rows();

    let labels_path = dir.join(LABELS);
    let mut classes = Vec::new();
    for (line, fields) in records(&labels_path)? {
        if fields.len() != 1 {
            bail!(
                "{}: line {line}: expected one class id, found {} fields",
                labels_path.display(),
                fields.len()
            );
        }
        classes.push(parse::<usize>(&labels_path, line, &fields[0])?);
    }
    if classes.len() != n {
        bail!(
            "{} has {} rows but {} has {n}",
            labels_path.display(),
            classes.len(),
            dir.join(FEATURES).display()
        );
    }
    let n_classes = classes.iter().max().map_or(0, |c| c + 1);

    let edges_path = dir.join(EDGES);
    let mut edges = Vec::new();
    for (line, fields) in records(&edges_path)? {
        if fields.len() != 2 {
            bail!(
                "{}: line {line}: expected `src,dst`, found {} fields",
                edges_path.display(),
                fields.len()
            );
        }
        let (i, j) = (
            parse::<usize>(&edges_path, line, &fields[0])?,
            parse::<usize>(&edges_path, line, &fields[1])?,
        );
        if i >= n || j >= n {
            bail!("{}: line {line}: edge ({i}, {j}) outside 0..{n}", edges_path.display());
        }
        edges.push((i, j));
    }

    let splits_path = dir.join(SPLITS);
    let splits = if splits_path.exists() {
        let text =
            fs::read_to_string(&splits_path).with_context(|| format!("cannot read {}", splits_path.display()))?;
        let s: SplitsFile =
            serde_json::from_str(&text).with_context(|| format!("cannot parse {}", splits_path.display()))?;
        Splits::new(n, s.labeled, s.validation, s.test).with_context(|| format!("invalid {}", splits_path.display()))?
    } else {
        default_splits(&classes, n_classes)?
    };
    Ok(Graph::new(features, &edges, classes, n_classes, splits)?)
}

/// Planetoid sizes when the graph is large enough, otherwise the scaled sizes
/// used for generated graphs.
pub fn default_splits(classes: &[usize], n_classes: usize) -> Result<Splits> {
    let p = SplitSpec::PLANETOID;
    let n = classes.len();
    let fits = n >= p.per_class * n_classes + p.validation + p.test
        && (0..n_classes).all(|c| classes.iter().filter(|&&k| k == c).count() >= p.per_class);
    let spec = if fits { p } else { SplitSpec::scaled(n, n_classes) };
    Ok(make_splits(classes, n_classes, spec, DEFAULT_SPLIT_SEED)?)
}

pub fn save_dataset(dir: &Path, g: &Graph<f64>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_matrix(&dir.join(FEATURES), g.features())?;
    let mut edges = String::new();
    for (i, j) in g.undirected_edges() {
        edges.push_str(&format!("{i},{j}\n"));
    }
    write_text(&dir.join(EDGES), &edges)?;
    let labels: String = g.classes().iter().map(|c| format!("{c}\n")).collect();
    write_text(&dir.join(LABELS), &labels)?;
    let s = g.splits();
    let splits = SplitsFile {
        labeled: s.labeled.clone(),
        validation: s.validation.clone(),
        test: s.test.clone(),
    };
    write_text(&dir.join(SPLITS), &serde_json::to_string(&splits)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
