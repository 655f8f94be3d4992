use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use super::{
    DataError, Dataset, FeatureKind, FeatureMeta, Result, Schema, Target, Task, TaskKind,
};

/// First-appearance dictionary encoder.
#[derive(Default)]
struct Codebook {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Codebook {
    fn code(&mut self, token: &str) -> usize {
        if let Some(&c) = self.index.get(token) {
            return c;
        }
        let c = self.labels.len();
        self.labels.push(token.to_owned());
        self.index.insert(token.to_owned(), c);
        c
    }
}

enum Role {
    Feature(usize),
    Target,
    Ignored,
}

/// Reads a headered, comma-separated file into an encoded [`Dataset`].
///
/// Numeric columns are parsed as `f64`; categorical columns and
/// classification targets get dense codes in first-appearance order. Empty
/// feature cells are flagged in the missing mask and stored as `0.0`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })?;
    let csv_err = |source| DataError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(csv_err)?.clone();

    if !header.iter().any(|h| h == schema.target) {
        return Err(DataError::MissingTarget(schema.target.clone()));
    }
    for name in schema.categorical.iter().chain(&schema.ignore) {
        if !header.iter().any(|h| h == name) {
            return Err(DataError::UnknownColumn(name.clone()));
        }
    }

    let mut meta = Vec::new();
    let roles: Vec<Role> = header
        .iter()
        .map(|name| {
            if name == schema.target {
                Role::Target
            } else if schema.ignore.iter().any(|c| c == name) {
                Role::Ignored
            } else {
                let kind = if schema.categorical.iter().any(|c| c == name) {
                    FeatureKind::Categorical
                } else {
                    FeatureKind::Numeric
                };
                meta.push(FeatureMeta {
                    name: name.to_owned(),
                    kind,
                    categories: Vec::new(),
                });
                Role::Feature(meta.len() - 1)
            }
        })
        .collect();

    let p = meta.len();
    let mut books: Vec<Codebook> = (0..p).map(|_| Codebook::default()).collect();
    let mut classes = Codebook::default();
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    let mut class_target = Vec::new();
    let mut value_target = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut row_cells = vec![0.0; p];
        let mut row_missing = vec![false; p];
        for (token, role) in record.iter().zip(&roles) {
            match *role {
                Role::Ignored => {}
                Role::Target => {
                    if token.is_empty() {
                        return Err(DataError::MissingTargetValue { row });
                    }
                    match schema.task {
                        TaskKind::Classification => class_target.push(classes.code(token)),
                        TaskKind::Regression => {
                            let v = token.trim().parse::<f64>().map_err(|_| {
                                DataError::NonNumeric {
                                    row,
                                    column: schema.target.clone(),
                                    token: token.to_owned(),
                                }
                            })?;
                            value_target.push(v);
                        }
                    }
                }
                Role::Feature(j) => {
                    if token.is_empty() {
                        row_missing[j] = true;
                        continue;
                    }
                    row_cells[j] = match meta[j].kind {
                        FeatureKind::Categorical => books[j].code(token) as f64,
                        FeatureKind::Numeric => {
                            token.trim().parse::<f64>().map_err(|_| DataError::NonNumeric {
                                row,
                                column: meta[j].name.clone(),
                                token: token.to_owned(),
                            })?
                        }
                    };
                }
            }
        }
        cells.extend(row_cells);
        missing.extend(row_missing);
    }

    let n = cells.len().checked_div(p).unwrap_or(class_target.len().max(value_target.len()));
    if n == 0 {
        return Err(DataError::NoRows(path.to_owned()));
    }
    for (m, book) in meta.iter_mut().zip(books) {
        m.categories = book.labels;
    }
    let (target, task) = match schema.task {
        TaskKind::Classification => {
            let k = classes.labels.len();
            (Target::Classes(class_target), Task::classification(k))
        }
        TaskKind::Regression => (Target::Values(value_target), Task::Regression),
    };
    let ds = Dataset {
        features: Array2::from_shape_vec((n, p), cells).expect("row-major cells"),
        target,
        task,
        feature_meta: meta,
        missing: Array2::from_shape_vec((n, p), missing).expect("row-major mask"),
        target_name: schema.target.clone(),
        class_labels: classes.labels,
    };
    Ok(ds)
}

/// Writes `dataset` back in the raw form [`load_csv`] reads: category and
/// class labels instead of codes, empty cells for missing values, target last.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_rows(dataset, path.as_ref(), true)
}

/// Like [`write_csv`] without the target column.
pub fn write_features_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_rows(dataset, path.as_ref(), false)
}

fn write_rows(dataset: &Dataset, path: &Path, with_target: bool) -> Result<()> {
    let csv_err = |source| DataError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = dataset.feature_meta.iter().map(|m| m.name.as_str()).collect();
    if with_target {
        header.push(&dataset.target_name);
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..dataset.n_samples() {
        let mut row: Vec<String> = dataset
            .feature_meta
            .iter()
            .enumerate()
            .map(|(j, m)| {
                if dataset.missing[[i, j]] {
                    String::new()
                } else {
                    let x = dataset.features[[i, j]];
                    match m.kind {
                        FeatureKind::Numeric => x.to_string(),
                        FeatureKind::Categorical => m.categories[x as usize].clone(),
                    }
                }
            })
            .collect();
        if with_target {
            row.push(match &dataset.target {
                Target::Classes(c) => dataset.class_labels[c[i]].clone(),
                Target::Values(v) => v[i].to_string(),
            });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(categorical: &[&str]) -> Schema {
        Schema {
            target: "y".into(),
            task: TaskKind::Classification,
            categorical: categorical.iter().map(|s| s.to_string()).collect(),
            ignore: vec![],
        }
    }

    #[test]
    fn parses_numeric_categorical_and_binary_target() {
        let f = write("f1,f2,y\n1,a,0\n2,b,1\n");
        let d = load_csv(f.path(), &schema(&["f2"])).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.feature_meta[0].kind, FeatureKind::Numeric);
        assert_eq!(d.feature_meta[1].categories, vec!["a", "b"]);
        assert_eq!(d.features.column(1).to_vec(), vec![0.0, 1.0]);
        assert_eq!(d.task, Task::Binary);
        assert_eq!(d.labels().unwrap(), &[0, 1]);
    }

    #[test]
    fn empty_cell_is_missing_with_zero_placeholder() {
        let f = write("f1,f2,y\n1,,0\n2,3,1\n");
        let d = load_csv(f.path(), &schema(&[])).unwrap();
        assert!(d.missing[[0, 1]]);
        assert_eq!(d.features[[0, 1]], 0.0);
        assert!(!d.missing[[1, 1]]);
    }

    #[test]
    fn class_labels_follow_first_appearance() {
        let f = write("x,y\n1,cat\n2,dog\n3,cat\n4,emu\n");
        let d = load_csv(f.path(), &schema(&[])).unwrap();
        assert_eq!(d.class_labels, vec!["cat", "dog", "emu"]);
        assert_eq!(d.labels().unwrap(), &[0, 1, 0, 2]);
        assert_eq!(d.task, Task::Multiclass(3));
    }

    #[test]
    fn ignored_columns_are_dropped() {
        let f = write("id,x,y\n10,1,0\n11,2,1\n");
        let mut s = schema(&[]);
        s.ignore = vec!["id".into()];
        let d = load_csv(f.path(), &s).unwrap();
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.feature_meta[0].name, "x");
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &schema(&[])),
            Err(DataError::Io { .. })
        ));
        let f = write("a,b\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &schema(&[])),
            Err(DataError::MissingTarget(_))
        ));
        let f = write("x,y\nabc,1\n");
        assert!(matches!(
            load_csv(f.path(), &schema(&[])),
            Err(DataError::NonNumeric { row: 0, .. })
        ));
        let f = write("x,y\n");
        assert!(matches!(load_csv(f.path(), &schema(&[])), Err(DataError::NoRows(_))));
    }

    #[test]
    fn regression_target_parses_reals() {
        let f = write("x,y\n1,2.5\n2,-1e3\n");
        let s = Schema {
            task: TaskKind::Regression,
            ..schema(&[])
        };
        let d = load_csv(f.path(), &s).unwrap();
        assert_eq!(d.values().unwrap(), &[2.5, -1000.0]);
        assert_eq!(d.task, Task::Regression);
    }

    #[test]
    fn write_back_then_reload_is_idempotent() {
        let f = write("f1,f2,y\n1.5,b,no\n,a,yes\n-2,,no\n");
        let s = schema(&["f2"]);
        let d = load_csv(f.path(), &s).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&d, out.path()).unwrap();
        let again = load_csv(out.path(), &s).unwrap();
        assert_eq!(d, again);
    }
}
