use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{component_count, ComparisonGraph};
use crate::model::{ComparisonDataset, Edge};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, column: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| parse_err(path, line, format!("column `{column}`: cannot parse `{raw}`")))
}

/// Covariates CSV `item_id,x1,...,xd`; ids must be exactly `0..n` in any
/// row order.
pub fn load_covariates(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.get(0) != Some("item_id") {
        return Err(parse_err(path, 1, "first column must be `item_id`"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let d = names.len();
    let mut rows: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != d + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", d + 1, record.len())));
        }
        let id: usize = parse_field(path, line, "item_id", &record[0])?;
        let values = names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let v: f64 = parse_field(path, line, name, &record[c + 1])?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(path, line, format!("column `{name}`: non-finite value")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some((first, _)) = rows.insert(id, (line, values)) {
            return Err(parse_err(path, line, format!("duplicate item_id {id} (first seen on line {first})")));
        }
    }
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(path, 1, "no items"));
    }
    if let Some(missing) = (0..n).find(|i| !rows.contains_key(i)) {
        let max = rows.keys().next_back().copied().unwrap_or(0);
        return Err(parse_err(
            path,
            0,
            format!("item ids must be contiguous from 0; id {missing} is missing (largest id {max})"),
        ));
    }
    let mut x = DMatrix::zeros(n, d);
    for (i, (_, values)) in rows {
        for (c, v) in values.into_iter().enumerate() {
            x[(i, c)] = v;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonFormat {
    /// `item_i,item_j,wins_j,trials`, `wins_j` counting wins of `item_j`.
    Aggregated,
    /// `winner,loser`, one row per trial.
    PerTrial,
}

/// Comparisons CSV in either format, validated against `n` items.
pub fn load_comparisons(path: &Path, n: usize) -> Result<(Vec<Edge>, ComparisonFormat)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let format = match cols.as_slice() {
        ["item_i", "item_j", "wins_j", "trials"] => ComparisonFormat::Aggregated,
        ["winner", "loser"] => ComparisonFormat::PerTrial,
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("header `{}` is neither `item_i,item_j,wins_j,trials` nor `winner,loser`", cols.join(",")),
            ))
        }
    };
    let item = |line: usize, column: &str, raw: &str| -> Result<usize> {
        let id: usize = parse_field(path, line, column, raw)?;
        if id >= n {
            return Err(parse_err(path, line, format!("item {id} has no covariate row (n = {n})")));
        }
        Ok(id)
    };
    // (larger, smaller) -> (line first seen, wins of larger, trials)
    let mut pairs: BTreeMap<(usize, usize), (usize, u64, u64)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", cols.len(), record.len())));
        }
        let a = item(line, cols[0], &record[0])?;
        let b = item(line, cols[1], &record[1])?;
        if a == b {
            return Err(parse_err(path, line, format!("self-pair ({a}, {a})")));
        }
        let key = (a.max(b), a.min(b));
        match format {
            ComparisonFormat::Aggregated => {
                let wins_b: u64 = parse_field(path, line, "wins_j", &record[2])?;
                let trials: u64 = parse_field(path, line, "trials", &record[3])?;
                if trials == 0 {
                    return Err(parse_err(path, line, "trials must be positive"));
                }
                if wins_b > trials {
                    return Err(parse_err(path, line, format!("wins_j = {wins_b} exceeds trials = {trials}")));
                }
                let wins_larger = if b == key.0 { wins_b } else { trials - wins_b };
                if let Some((first, _, _)) = pairs.insert(key, (line, wins_larger, trials)) {
                    return Err(parse_err(
                        path,
                        line,
                        format!("duplicate pair ({}, {}) (first seen on line {first})", key.0, key.1),
                    ));
                }
            }
            ComparisonFormat::PerTrial => {
                let entry = pairs.entry(key).or_insert((line, 0, 0));
                entry.2 += 1;
                if a == key.0 {
                    entry.1 += 1;
                }
            }
        }
    }
    let edges = pairs.into_iter().map(|((i, j), (_, wins, trials))| Edge { i, j, wins, trials }).collect();
    Ok((edges, format))
}

/// Summary of a load, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub covariates: PathBuf,
    pub comparisons: PathBuf,
    pub format: ComparisonFormat,
    pub n: usize,
    pub d: usize,
    pub edges: usize,
    pub total_trials: u64,
    pub components: usize,
    pub connected: bool,
    pub covariate_scale: f64,
}

pub fn load_dataset(covariates: &Path, comparisons: &Path) -> Result<(ComparisonDataset, LoadReport)> {
    let x = load_covariates(covariates)?;
    let n = x.nrows();
    let (edges, format) = load_comparisons(comparisons, n)?;
    let ds = ComparisonDataset::new(x, edges, None)?;
    let components = component_count(&ComparisonGraph::of_dataset(&ds));
    let report = LoadReport {
        covariates: covariates.to_path_buf(),
        comparisons: comparisons.to_path_buf(),
        format,
        n,
        d: ds.d(),
        edges: ds.edges().len(),
        total_trials: ds.edges().iter().map(|e| e.trials).sum(),
        components,
        connected: components == 1,
        covariate_scale: ds.covariate_scale(),
    };
    Ok((ds, report))
}

/// Writes the dataset in the aggregated format, rows `i > j`. Covariates
/// are written on the internal scale, so reloading reproduces them exactly
/// with scale 1.
pub fn write_dataset(dataset: &ComparisonDataset, covariates: &Path, comparisons: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(covariates).map_err(|e| csv_err(covariates, e))?;
    let mut header = vec!["item_id".to_string()];
    header.extend((1..=dataset.d()).map(|c| format!("x{c}")));
    w.write_record(&header).map_err(|e| csv_err(covariates, e))?;
    for (i, row) in dataset.covariates().row_iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(covariates, e))?;
    }
    w.flush().map_err(io_err(covariates))?;

    let mut w = csv::Writer::from_path(comparisons).map_err(|e| csv_err(comparisons, e))?;
    w.write_record(["item_i", "item_j", "wins_j", "trials"]).map_err(|e| csv_err(comparisons, e))?;
    for e in dataset.edges() {
        let rec = [e.i.to_string(), e.j.to_string(), (e.trials - e.wins).to_string(), e.trials.to_string()];
        w.write_record(&rec).map_err(|e| csv_err(comparisons, e))?;
    }
    w.flush().map_err(io_err(comparisons))
}

/// Tidy CSV with a header taken from the row type's field names.
pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn toy_files() {
        let dir = tempfile::tempdir().unwrap();
        let x = file(&dir, "x.csv", "item_id,x1\n2,0.1\n0,-0.2\n1,0.1\n");
        let c = file(&dir, "c.csv", "item_i,item_j,wins_j,trials\n0,1,3,5\n2,1,1,4\n");
        let (ds, report) = load_dataset(&x, &c).unwrap();
        assert_eq!((report.n, report.d, report.edges, report.total_trials), (3, 1, 2, 9));
        assert!(report.connected);
        // Row `0,1,3,5`: item 1 beat item 0 three times.
        assert_eq!(ds.edges()[0], Edge { i: 1, j: 0, wins: 3, trials: 5 });
        // Row `2,1,1,4`: item 1 beat item 2 once, so item 2 won three.
        assert_eq!(ds.edges()[1], Edge { i: 2, j: 1, wins: 3, trials: 4 });
        assert_eq!(ds.covariates()[(0, 0)], -0.2);
    }

    #[test]
    fn long_format_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let x = file(&dir, "x.csv", "item_id,x1\n0,0\n1,0.1\n2,-0.1\n");
        let c = file(&dir, "c.csv", "winner,loser\n2,1\n2,1\n2,1\n0,2\n");
        let (edges, format) = load_comparisons(&c, 3).unwrap();
        assert_eq!(format, ComparisonFormat::PerTrial);
        assert_eq!(edges, vec![Edge { i: 2, j: 0, wins: 0, trials: 1 }, Edge { i: 2, j: 1, wins: 3, trials: 3 }]);
        assert!(load_dataset(&x, &c).is_ok());
    }

    #[test]
    fn rejections_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("item_i,item_j,wins_j,trials\n0,1,1,2\n1,0,1,2\n", 3, "duplicate pair"),
            ("item_i,item_j,wins_j,trials\n0,1,1,2\n2,2,1,2\n", 3, "self-pair"),
            ("item_i,item_j,wins_j,trials\n0,1,3,2\n", 2, "exceeds"),
            ("item_i,item_j,wins_j,trials\n0,7,1,2\n", 2, "no covariate row"),
            ("winner,loser\n0,1\n1,x\n", 3, "cannot parse"),
            ("a,b,c\n", 1, "header"),
        ];
        for (k, (body, line, needle)) in cases.iter().enumerate() {
            let c = file(&dir, &format!("c{k}.csv"), body);
            match load_comparisons(&c, 3) {
                Err(Error::Parse { line: l, message, .. }) => {
                    assert_eq!(l, *line, "{body}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{body}: {other:?}"),
            }
        }
        let x = file(&dir, "gap.csv", "item_id,x1\n0,1\n2,1\n");
        assert!(matches!(load_covariates(&x), Err(Error::Parse { .. })));
        let x = file(&dir, "dup.csv", "item_id,x1\n0,1\n0,1\n");
        assert!(matches!(load_covariates(&x), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(load_covariates(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = file(&dir, "x.csv", "item_id,x1,x2\n0,1.5,-2\n1,0.3,0.1\n2,-1.8,1.9\n3,0.0,0.7\n");
        let c = file(&dir, "c.csv", "item_i,item_j,wins_j,trials\n0,1,1,3\n2,1,2,2\n3,0,5,9\n");
        let (first, _) = load_dataset(&x, &c).unwrap();
        let (x2, c2) = (dir.path().join("x2.csv"), dir.path().join("c2.csv"));
        write_dataset(&first, &x2, &c2).unwrap();
        let (second, _) = load_dataset(&x2, &c2).unwrap();
        assert_eq!(second.covariates(), first.covariates());
        assert_eq!(second.edges(), first.edges());
        assert_eq!(second.l_ref(), first.l_ref());
        let (x3, c3) = (dir.path().join("x3.csv"), dir.path().join("c3.csv"));
        write_dataset(&second, &x3, &c3).unwrap();
        assert_eq!(load_dataset(&x3, &c3).unwrap().0, second);
    }
}
