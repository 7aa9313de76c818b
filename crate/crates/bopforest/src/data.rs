//! Dataset ingestion and encoding: delimited text loading, categorical
//! encoding with rare-level grouping, and deterministic train/test splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for the merged rare levels of an unordered categorical column.
pub const COMBINED_LEVEL: &str = "combinedLevels";

/// Default minimum level frequency before a level is grouped into [`COMBINED_LEVEL`].
pub const DEFAULT_RARE_MIN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    OrderedCategorical,
    UnorderedCategorical,
}

/// Per-column metadata. Categorical columns store their level dictionary;
/// values in the feature matrix are indices into it (0-based) until encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub levels: Vec<String>,
}

impl ColumnMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnMeta {
            name: name.into(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
        }
    }
}

/// Numeric feature matrix plus response vector and column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>, // row-major, n * p
    response: Vec<f64>,
    columns: Vec<ColumnMeta>,
    response_name: String,
}

impl Dataset {
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        response: Vec<f64>,
        columns: Vec<ColumnMeta>,
        response_name: impl Into<String>,
    ) -> Result<Dataset> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != response.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature rows but {} response values",
                rows.len(),
                response.len()
            )));
        }
        let p = columns.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for row in &rows {
            if row.len() != p {
                return Err(Error::InvalidInput(format!(
                    "row has {} values, expected {p}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        for (j, col) in columns.iter().enumerate() {
            if col.kind != ColumnKind::Numeric {
                for i in 0..rows.len() {
                    let v = features[i * p + j];
                    if v.fract() != 0.0 || v < 0.0 || v as usize >= col.levels.len() {
                        return Err(Error::InvalidInput(format!(
                            "value {v} in categorical column '{}' is not a level index",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            features,
            response,
            columns,
            response_name: response_name.into(),
        })
    }

    /// All-numeric dataset with generated column names `x1..xp` and response `y`.
    pub fn from_numeric(rows: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Dataset> {
        let p = rows.first().map_or(0, Vec::len);
        let columns = (1..=p).map(|j| ColumnMeta::numeric(format!("x{j}"))).collect();
        Dataset::from_rows(rows, response, columns, "y")
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn x(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.columns.len() + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.columns.len();
        &self.features[row * p..(row + 1) * p]
    }

    pub fn y(&self) -> &[f64] {
        &self.response
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Same features with a replaced response (e.g. residuals as the target).
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        if response.len() != self.n() {
            return Err(Error::InvalidInput(format!(
                "replacement response has {} values, expected {}",
                response.len(),
                self.n()
            )));
        }
        Ok(Dataset {
            features: self.features.clone(),
            response,
            columns: self.columns.clone(),
            response_name: self.response_name.clone(),
        })
    }

    /// Row subset in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.columns.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        let mut response = Vec::with_capacity(rows.len());
        for &i in rows {
            features.extend_from_slice(self.row(i));
            response.push(self.response[i]);
        }
        Dataset {
            features,
            response,
            columns: self.columns.clone(),
            response_name: self.response_name.clone(),
        }
    }

    /// Write as delimited text with a header row.
    pub fn write_csv(&self, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path.as_ref())?;
        let mut header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        header.push(&self.response_name);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut record: Vec<String> = Vec::with_capacity(self.p() + 1);
            for j in 0..self.p() {
                let v = self.x(i, j);
                let col = &self.columns[j];
                if col.kind == ColumnKind::Numeric {
                    record.push(format!("{v}"));
                } else {
                    record.push(col.levels[v as usize].clone());
                }
            }
            record.push(format!("{}", self.response[i]));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ingestion summary: how many rows survived the missing-value drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "?" | "NULL" | "null"
    )
}

/// Load a delimited text file with a header row. Rows with any missing cell
/// are dropped. Columns where every kept value parses as a real become
/// numeric; all others are registered as unordered categoricals with a
/// sorted level dictionary.
pub fn load_csv(
    path: impl AsRef<Path>,
    target: &str,
    delimiter: u8,
) -> Result<(Dataset, LoadReport)> {
    let (ds, report, has_target) = load_csv_optional_target(path, target, delimiter)?;
    if !has_target {
        return Err(Error::MissingTarget(target.to_owned()));
    }
    Ok((ds, report))
}

/// Like [`load_csv`], but tolerates a file without the target column: the
/// response is filled with NaN and the returned flag is false. Used for test
/// sets that carry features only.
pub fn load_csv_optional_target(
    path: impl AsRef<Path>,
    target: &str,
    delimiter: u8,
) -> Result<(Dataset, LoadReport, bool)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let target_idx = headers.iter().position(|h| h == target);

    let mut rows_read = 0usize;
    let mut kept: Vec<(usize, Vec<String>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows_read += 1;
        let cells: Vec<String> = record.iter().map(str::to_owned).collect();
        if cells.iter().any(|c| is_missing(c)) {
            continue;
        }
        kept.push((rows_read, cells));
    }
    if kept.is_empty() {
        return Err(Error::EmptyAfterDrop);
    }

    let mut response = Vec::with_capacity(kept.len());
    if let Some(target_idx) = target_idx {
        for (row_no, cells) in &kept {
            let raw = cells[target_idx].trim();
            let v: f64 = raw.parse().map_err(|_| Error::UnparseableTarget {
                row: *row_no,
                value: raw.to_owned(),
            })?;
            response.push(v);
        }
    } else {
        response.resize(kept.len(), f64::NAN);
    }

    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| Some(j) != target_idx)
        .collect();
    let mut columns = Vec::with_capacity(feature_idx.len());
    let mut encoded: Vec<Vec<f64>> = vec![Vec::with_capacity(kept.len()); feature_idx.len()];
    for (c, &j) in feature_idx.iter().enumerate() {
        let all_numeric = kept
            .iter()
            .all(|(_, cells)| cells[j].trim().parse::<f64>().is_ok());
        if all_numeric {
            for (_, cells) in &kept {
                encoded[c].push(cells[j].trim().parse().expect("checked numeric"));
            }
            columns.push(ColumnMeta::numeric(headers[j].clone()));
        } else {
            let mut levels: Vec<String> =
                kept.iter().map(|(_, cells)| cells[j].trim().to_owned()).collect();
            levels.sort_unstable();
            levels.dedup();
            for (_, cells) in &kept {
                let idx = levels
                    .binary_search_by(|l| l.as_str().cmp(cells[j].trim()))
                    .expect("level present");
                encoded[c].push(idx as f64);
            }
            columns.push(ColumnMeta {
                name: headers[j].clone(),
                kind: ColumnKind::UnorderedCategorical,
                levels,
            });
        }
    }

    let n = kept.len();
    let p = columns.len();
    let mut features = Vec::with_capacity(n * p);
    for i in 0..n {
        for column in encoded.iter() {
            features.push(column[i]);
        }
    }
    let report = LoadReport {
        rows_read,
        rows_kept: n,
        rows_dropped: rows_read - n,
    };
    Ok((
        Dataset {
            features,
            response,
            columns,
            response_name: target.to_owned(),
        },
        report,
        target_idx.is_some(),
    ))
}

/// Encode a train/test pair consistently: level dictionaries are unioned,
/// rare levels are grouped by combined frequency, and both sides receive the
/// same one-hot columns. Column names and kinds must match.
pub fn encode_consistently(
    train: &Dataset,
    test: &Dataset,
    rare_min: usize,
) -> Result<(Dataset, Dataset)> {
    if train.p() != test.p() {
        return Err(Error::InvalidInput(format!(
            "train has {} feature columns, test has {}",
            train.p(),
            test.p()
        )));
    }
    let mut columns = Vec::with_capacity(train.p());
    // Per column: remap tables from each side's level index to the union's.
    let mut remap_train: Vec<Option<Vec<f64>>> = Vec::with_capacity(train.p());
    let mut remap_test: Vec<Option<Vec<f64>>> = Vec::with_capacity(train.p());
    for (a, b) in train.columns().iter().zip(test.columns()) {
        if a.name != b.name || a.kind != b.kind {
            return Err(Error::InvalidInput(format!(
                "column mismatch: train '{}' ({:?}) vs test '{}' ({:?})",
                a.name, a.kind, b.name, b.kind
            )));
        }
        match a.kind {
            ColumnKind::Numeric => {
                columns.push(a.clone());
                remap_train.push(None);
                remap_test.push(None);
            }
            ColumnKind::OrderedCategorical => {
                // Order is semantic; both sides must declare the same levels.
                if a.levels != b.levels {
                    return Err(Error::InvalidInput(format!(
                        "ordered column '{}' has different level sets in train and test",
                        a.name
                    )));
                }
                columns.push(a.clone());
                remap_train.push(None);
                remap_test.push(None);
            }
            ColumnKind::UnorderedCategorical => {
                let mut union: Vec<String> = a.levels.iter().chain(&b.levels).cloned().collect();
                union.sort_unstable();
                union.dedup();
                let to_union = |levels: &[String]| -> Vec<f64> {
                    levels
                        .iter()
                        .map(|l| union.binary_search(l).expect("level in union") as f64)
                        .collect()
                };
                remap_train.push(Some(to_union(&a.levels)));
                remap_test.push(Some(to_union(&b.levels)));
                columns.push(ColumnMeta {
                    name: a.name.clone(),
                    kind: ColumnKind::UnorderedCategorical,
                    levels: union,
                });
            }
        }
    }

    let combine = |ds: &Dataset, remaps: &[Option<Vec<f64>>]| -> Vec<f64> {
        let mut out = Vec::with_capacity(ds.n() * ds.p());
        for i in 0..ds.n() {
            for (j, remap) in remaps.iter().enumerate() {
                let v = ds.x(i, j);
                out.push(match remap {
                    Some(map) => map[v as usize],
                    None => v,
                });
            }
        }
        out
    };
    let mut features = combine(train, &remap_train);
    features.extend(combine(test, &remap_test));
    let mut response = train.y().to_vec();
    response.extend_from_slice(test.y());
    let combined = Dataset {
        features,
        response,
        columns,
        response_name: train.response_name.clone(),
    };
    let encoded = encode_categoricals(&combined, rare_min);
    let train_rows: Vec<usize> = (0..train.n()).collect();
    let test_rows: Vec<usize> = (train.n()..train.n() + test.n()).collect();
    Ok((encoded.subset(&train_rows), encoded.subset(&test_rows)))
}

/// Encode categorical columns to numeric features.
///
/// Ordered categoricals map to consecutive integers `1..=k` preserving level
/// order. Unordered levels seen fewer than `rare_min` times are merged into a
/// single [`COMBINED_LEVEL`], then the column is one-hot expanded into 0/1
/// columns named `column=level`. All-numeric datasets pass through unchanged,
/// so encoding is idempotent.
pub fn encode_categoricals(ds: &Dataset, rare_min: usize) -> Dataset {
    let n = ds.n();
    let mut columns = Vec::new();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    for (j, col) in ds.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                columns.push(col.clone());
                encoded.push((0..n).map(|i| ds.x(i, j)).collect());
            }
            ColumnKind::OrderedCategorical => {
                // Level index 0..k-1 becomes rank 1..k; order is the level order.
                columns.push(ColumnMeta {
                    name: col.name.clone(),
                    kind: ColumnKind::Numeric,
                    levels: col.levels.clone(),
                });
                encoded.push((0..n).map(|i| ds.x(i, j) + 1.0).collect());
            }
            ColumnKind::UnorderedCategorical => {
                let mut freq = vec![0usize; col.levels.len()];
                for i in 0..n {
                    freq[ds.x(i, j) as usize] += 1;
                }
                let rare: Vec<bool> = freq.iter().map(|&f| f < rare_min).collect();
                let mut new_levels: Vec<String> = col
                    .levels
                    .iter()
                    .zip(&rare)
                    .filter(|(_, &r)| !r)
                    .map(|(l, _)| l.clone())
                    .collect();
                let combined_idx = if rare.iter().any(|&r| r) {
                    new_levels.push(COMBINED_LEVEL.to_owned());
                    Some(new_levels.len() - 1)
                } else {
                    None
                };
                // Old level index -> new level index after grouping.
                let remap: Vec<usize> = {
                    let mut next = 0usize;
                    col.levels
                        .iter()
                        .zip(&rare)
                        .map(|(_, &r)| {
                            if r {
                                combined_idx.expect("rare level implies combined level")
                            } else {
                                let idx = next;
                                next += 1;
                                idx
                            }
                        })
                        .collect()
                };
                for (new_idx, level) in new_levels.iter().enumerate() {
                    columns.push(ColumnMeta {
                        name: format!("{}={}", col.name, level),
                        kind: ColumnKind::Numeric,
                        levels: Vec::new(),
                    });
                    encoded.push(
                        (0..n)
                            .map(|i| {
                                let v = remap[ds.x(i, j) as usize];
                                if v == new_idx {
                                    1.0
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                }
            }
        }
    }
    let p = columns.len();
    let mut features = Vec::with_capacity(n * p);
    for i in 0..n {
        for column in encoded.iter() {
            features.push(column[i]);
        }
    }
    Dataset {
        features,
        response: ds.response.clone(),
        columns,
        response_name: ds.response_name.clone(),
    }
}

/// Deterministic disjoint train/test partition with `round(fraction*n)`
/// training rows. The same seed always yields the same partition.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    if !(0.0 < fraction && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must be in (0,1), got {fraction}"
        )));
    }
    let train_size = (fraction * n as f64).round() as usize;
    if train_size == 0 || train_size == n {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} leaves an empty side for n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train_idx: Vec<usize> = order[..train_size].to_vec();
    let mut test_idx: Vec<usize> = order[train_size..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_basic() {
        let f = write_temp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let (ds, report) = load_csv(f.path(), "y", b',').unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.y(), &[3.0, 6.0, 9.0]);
        assert_eq!(report.rows_dropped, 0);
    }

    #[test]
    fn load_csv_drops_missing_rows() {
        let f = write_temp("a,b,y\n1,2,3\n4,,6\n7,8,9\n");
        let (ds, report) = load_csv(f.path(), "y", b',').unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(report.rows_dropped, 1);
        assert_eq!(report.rows_kept, 2);
    }

    #[test]
    fn load_csv_unparseable_target_errors() {
        let f = write_temp("a,y\n1,abc\n2,3\n");
        let err = load_csv(f.path(), "y", b',').unwrap_err();
        assert!(matches!(err, Error::UnparseableTarget { .. }));
    }

    #[test]
    fn load_csv_missing_target_column_errors() {
        let f = write_temp("a,b\n1,2\n");
        let err = load_csv(f.path(), "y", b',').unwrap_err();
        assert!(matches!(err, Error::MissingTarget(_)));
    }

    #[test]
    fn load_csv_all_rows_missing_errors() {
        let f = write_temp("a,y\n,1\nNA,2\n");
        let err = load_csv(f.path(), "y", b',').unwrap_err();
        assert!(matches!(err, Error::EmptyAfterDrop));
    }

    #[test]
    fn load_csv_detects_categorical_column() {
        let f = write_temp("color,y\nred,1\nblue,2\nred,3\n");
        let (ds, _) = load_csv(f.path(), "y", b',').unwrap();
        assert_eq!(ds.columns()[0].kind, ColumnKind::UnorderedCategorical);
        assert_eq!(ds.columns()[0].levels, vec!["blue", "red"]);
        assert_eq!(ds.x(0, 0), 1.0); // red
        assert_eq!(ds.x(1, 0), 0.0); // blue
    }

    fn categorical_dataset() -> Dataset {
        // Levels A:50, B:40, C:10.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            let level = if i < 50 {
                0.0
            } else if i < 90 {
                1.0
            } else {
                2.0
            };
            rows.push(vec![level]);
            y.push(i as f64);
        }
        Dataset::from_rows(
            rows,
            y,
            vec![ColumnMeta {
                name: "g".into(),
                kind: ColumnKind::UnorderedCategorical,
                levels: vec!["A".into(), "B".into(), "C".into()],
            }],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn encode_groups_rare_levels_then_one_hot() {
        let ds = categorical_dataset();
        let enc = encode_categoricals(&ds, 30);
        // A and B survive; C is merged into the combined level.
        let names: Vec<&str> = enc.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["g=A", "g=B", "g=combinedLevels"]);
        assert_eq!(enc.x(0, 0), 1.0);
        assert_eq!(enc.x(55, 1), 1.0);
        assert_eq!(enc.x(95, 2), 1.0);
        assert_eq!(enc.x(95, 0), 0.0);
        // Exactly one indicator fires per row.
        for i in 0..enc.n() {
            let total: f64 = (0..enc.p()).map(|j| enc.x(i, j)).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn encode_is_noop_on_numeric_and_idempotent() {
        let ds = Dataset::from_numeric(vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![0.0, 1.0])
            .unwrap();
        let enc = encode_categoricals(&ds, 30);
        assert_eq!(enc, ds);

        let cat = categorical_dataset();
        let once = encode_categoricals(&cat, 30);
        let twice = encode_categoricals(&once, 30);
        assert_eq!(once, twice);
    }

    #[test]
    fn encode_ordered_preserves_order() {
        let ds = Dataset::from_rows(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![0.0]],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![ColumnMeta {
                name: "grade".into(),
                kind: ColumnKind::OrderedCategorical,
                levels: vec!["Low".into(), "Mid".into(), "High".into()],
            }],
            "y",
        )
        .unwrap();
        let enc = encode_categoricals(&ds, 30);
        assert_eq!(enc.columns()[0].kind, ColumnKind::Numeric);
        assert_eq!(
            (0..4).map(|i| enc.x(i, 0)).collect::<Vec<_>>(),
            vec![1.0, 2.0, 3.0, 1.0]
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = Dataset::from_numeric(rows, y).unwrap();
        let (train, test) = split_train_test(&ds, 0.7, 1).unwrap();
        assert_eq!((train.n(), test.n()), (7, 3));

        let (train2, test2) = split_train_test(&ds, 0.7, 1).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);

        // Union of the two sides restores the original index set.
        let mut ys: Vec<f64> = train.y().iter().chain(test.y()).cloned().collect();
        ys.sort_unstable_by(f64::total_cmp);
        assert_eq!(ys, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_matches_rounding_rule_at_scale() {
        let n = 2929;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ds = Dataset::from_numeric(rows, y).unwrap();
        let (train, test) = split_train_test(&ds, 0.7, 3456).unwrap();
        assert_eq!(train.n(), 2050);
        assert_eq!(test.n(), n - 2050);
    }

    #[test]
    fn optional_target_loading() {
        let f = write_temp("a,color\n1,red\n2,blue\n");
        let (ds, _, has_target) = load_csv_optional_target(f.path(), "y", b',').unwrap();
        assert!(!has_target);
        assert_eq!(ds.p(), 2);
        assert!(ds.y().iter().all(|v| v.is_nan()));

        let f = write_temp("a,y\n1,5\n");
        let (ds, _, has_target) = load_csv_optional_target(f.path(), "y", b',').unwrap();
        assert!(has_target);
        assert_eq!(ds.y(), &[5.0]);
    }

    #[test]
    fn consistent_encoding_unions_levels() {
        // Train sees A/B; test also carries C. Counts: A 40, B 25, C 10.
        let make = |levels: &[(usize, usize)], dict: Vec<&str>| {
            let mut rows = Vec::new();
            let mut y = Vec::new();
            for &(level, count) in levels {
                for _ in 0..count {
                    rows.push(vec![level as f64]);
                    y.push(1.0);
                }
            }
            Dataset::from_rows(
                rows,
                y,
                vec![ColumnMeta {
                    name: "g".into(),
                    kind: ColumnKind::UnorderedCategorical,
                    levels: dict.into_iter().map(String::from).collect(),
                }],
                "y",
            )
            .unwrap()
        };
        let train = make(&[(0, 30), (1, 20)], vec!["A", "B"]);
        let test = make(&[(0, 10), (1, 5), (2, 10)], vec!["A", "B", "C"]);
        let (tr, te) = encode_consistently(&train, &test, 30).unwrap();
        // Combined counts: A=40 stays, B=25 and C=10 are grouped.
        let names: Vec<&str> = tr.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["g=A", "g=combinedLevels"]);
        assert_eq!(te.columns(), tr.columns());
        // Test rows with level C light up the combined column.
        assert_eq!(te.x(te.n() - 1, 1), 1.0);
        assert_eq!(te.x(0, 0), 1.0);
    }

    #[test]
    fn consistent_encoding_rejects_mismatched_columns() {
        let a = Dataset::from_numeric(vec![vec![1.0]], vec![0.0]).unwrap();
        let b = Dataset::from_numeric(vec![vec![1.0, 2.0]], vec![0.0]).unwrap();
        assert!(encode_consistently(&a, &b, 30).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = categorical_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.write_csv(&path, b',').unwrap();
        let (back, _) = load_csv(&path, "y", b',').unwrap();
        assert_eq!(back.n(), ds.n());
        assert_eq!(back.columns()[0].levels, ds.columns()[0].levels);
        assert_eq!(back.y(), ds.y());
    }
}
