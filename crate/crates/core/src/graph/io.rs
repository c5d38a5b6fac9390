//! Dataset directory format:
//!
//! ```text
//! meta.json     {"n": .., "k": .., "c": .., "directed": ..}
//! edges.tsv     source<TAB>target per line, 0-based
//! features.csv  n lines of k comma-separated reals
//! labels.csv    n lines, one class index each
//! splits.csv    optional, n lines of 0 (train) / 1 (val) / 2 (test)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledGraph, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const META: &str = "meta.json";
const EDGES: &str = "edges.tsv";
const FEATURES: &str = "features.csv";
const LABELS: &str = "labels.csv";
const SPLITS: &str = "splits.csv";

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n: usize,
    k: usize,
    c: usize,
    directed: bool,
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_index(file: &str, line: usize, token: &str, bound: usize, what: &str) -> Result<usize> {
    let v: usize = token
        .parse()
        .map_err(|_| Error::parse(file, line, format!("cannot parse {what} {token:?}")))?;
    if v >= bound {
        return Err(Error::parse(
            file,
            line,
            format!("{what} {v} out of range (must be < {bound})"),
        ));
    }
    Ok(v)
}

fn check_rows(file: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::RowCount {
            file: file.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<LabeledGraph> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&read(dir, META)?)
        .map_err(|e| Error::parse(META, e.line(), e.to_string()))?;
    let Meta { n, k, c, directed } = meta;
    if n == 0 || k == 0 || c < 2 {
        return Err(Error::parse(META, 1, "need n >= 1, k >= 1, c >= 2"));
    }

    let mut out_neighbors = vec![Vec::new(); n];
    let mut last_seen = vec![usize::MAX; n];
    let mut edge_lines: Vec<(usize, usize, usize)> = Vec::new();
    for (line, text) in lines(&read(dir, EDGES)?) {
        let mut parts = text.split_whitespace();
        let (Some(s), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(EDGES, line, "expected two fields"));
        };
        let s = parse_index(EDGES, line, s, n, "node index")?;
        let t = parse_index(EDGES, line, t, n, "node index")?;
        edge_lines.push((s, t, line));
    }
    // Duplicate detection wants all of a source's targets together.
    let mut order: Vec<usize> = (0..edge_lines.len()).collect();
    order.sort_by_key(|&e| (edge_lines[e].0, edge_lines[e].2));
    for e in order {
        let (s, t, line) = edge_lines[e];
        if last_seen[t] == s {
            return Err(Error::parse(EDGES, line, format!("duplicate edge {s}->{t}")));
        }
        last_seen[t] = s;
        out_neighbors[s].push(t);
    }
    for list in &mut out_neighbors {
        list.sort_unstable();
    }

    let mut data = Vec::with_capacity(n * k);
    let mut rows = 0;
    for (line, text) in lines(&read(dir, FEATURES)?) {
        let before = data.len();
        for token in text.split(',') {
            let v: f64 = token.trim().parse().map_err(|_| {
                Error::parse(FEATURES, line, format!("cannot parse feature {token:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(FEATURES, line, "non-finite feature"));
            }
            data.push(v);
        }
        if data.len() - before != k {
            return Err(Error::parse(
                FEATURES,
                line,
                format!("expected {k} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    check_rows(FEATURES, n, rows)?;

    let mut labels = Vec::with_capacity(n);
    for (line, text) in lines(&read(dir, LABELS)?) {
        labels.push(parse_index(LABELS, line, text, c, "label")?);
    }
    check_rows(LABELS, n, labels.len())?;

    let split = match read(dir, SPLITS) {
        Ok(text) => {
            let mut split = Vec::with_capacity(n);
            for (line, t) in lines(&text) {
                let code = parse_index(SPLITS, line, t, 3, "split code")?;
                split.push(Split::from_code(code as u8).expect("code < 3"));
            }
            check_rows(SPLITS, n, split.len())?;
            Some(split)
        }
        Err(Error::MissingFile(_)) => None,
        Err(e) => return Err(e),
    };

    LabeledGraph::new(
        c,
        out_neighbors,
        Matrix::from_vec(n, k, data),
        labels,
        split,
        directed,
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `g` in the dataset format. Neighbor lists are written sorted;
/// feature values use the shortest representation that parses back to the
/// same `f64`.
pub fn save_graph(g: &LabeledGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = Meta {
        n: g.n(),
        k: g.k(),
        c: g.c(),
        directed: g.is_directed(),
    };
    write(dir, META, &(serde_json::to_string_pretty(&meta)? + "\n"))?;

    let mut edges = String::new();
    for (i, list) in g.out_neighbors().iter().enumerate() {
        let mut sorted = list.clone();
        sorted.sort_unstable();
        for j in sorted {
            writeln!(edges, "{i}\t{j}").unwrap();
        }
    }
    write(dir, EDGES, &edges)?;

    let mut features = String::new();
    for row in g.features().iter_rows() {
        for (t, v) in row.iter().enumerate() {
            if t > 0 {
                features.push(',');
            }
            write!(features, "{v}").unwrap();
        }
        features.push('\n');
    }
    write(dir, FEATURES, &features)?;

    let mut labels = String::new();
    for y in g.labels() {
        writeln!(labels, "{y}").unwrap();
    }
    write(dir, LABELS, &labels)?;

    let splits_path = dir.join(SPLITS);
    match g.split() {
        Some(split) => {
            let mut text = String::new();
            for s in split {
                writeln!(text, "{}", s.code()).unwrap();
            }
            write(dir, SPLITS, &text)?;
        }
        None if splits_path.exists() => {
            fs::remove_file(&splits_path).map_err(|e| Error::io(splits_path, e))?;
        }
        None => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> LabeledGraph {
        LabeledGraph::new(
            2,
            vec![vec![1], vec![]],
            Matrix::column(&[0.5, -1.25]),
            vec![0, 1],
            None,
            true,
        )
        .unwrap()
    }

    fn write_dataset(dir: &Path, edges: &str) {
        fs::write(dir.join(META), r#"{"n": 2, "k": 1, "c": 2, "directed": true}"#).unwrap();
        fs::write(dir.join(EDGES), edges).unwrap();
        fs::write(dir.join(FEATURES), "0\n1\n").unwrap();
        fs::write(dir.join(LABELS), "0\n1\n").unwrap();
    }

    #[test]
    fn loads_minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "0\t1\n");
        let g = load_graph(dir.path()).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.out_neighbors(), &[vec![1], vec![]]);
        assert!(g.split().is_none());
    }

    #[test]
    fn out_of_range_edge_names_line() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "0 5\n");
        match load_graph(dir.path()) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, EDGES);
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_edge_is_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "0\t1\n1\t0\n0\t1\n");
        match load_graph(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rows_and_values() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "");
        fs::write(dir.path().join(FEATURES), "0\nNaN\n").unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::Parse { line: 2, .. })));
        fs::write(dir.path().join(FEATURES), "0\n").unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::RowCount { .. })));
        fs::write(dir.path().join(FEATURES), "0\n1\n").unwrap();
        fs::write(dir.path().join(LABELS), "0\n2\n").unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::Parse { line: 2, .. })));
        fs::remove_file(dir.path().join(LABELS)).unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn save_writes_exact_files() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&minimal(), dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(EDGES)).unwrap(), "0\t1\n");
        assert_eq!(fs::read_to_string(dir.path().join(FEATURES)).unwrap(), "0.5\n-1.25\n");
        assert!(!dir.path().join(SPLITS).exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 4);

        let with_split = minimal()
            .with_split(Some(vec![Split::Train, Split::Test]))
            .unwrap();
        save_graph(&with_split, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(SPLITS)).unwrap(), "0\n2\n");
        assert_eq!(load_graph(dir.path()).unwrap(), with_split);
    }
}
