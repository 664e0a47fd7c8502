//! Plain-text file formats.
//!
//! * dataset: header line `n p K sigma2`, then one point per line with `p`
//!   whitespace-separated floats;
//! * labels: one 1-based integer per line;
//! * matrix: `n` lines of `n` floats;
//! * config: flat `key = value` lines, `#` starts a comment.
//!
//! Floats are written with 17 significant digits, which round-trips `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::membership::Partition;
use crate::model_gen::Dataset;

pub const DATA_FILE: &str = "data.txt";
pub const LABELS_FILE: &str = "labels.txt";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Header of a dataset dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataHeader {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub sigma2: f64,
}

/// Write `data.txt` and `labels.txt` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = DataHeader {
        n: data.n(),
        p: data.dim(),
        k: data.truth.k(),
        sigma2: data.spec.sigma2,
    };
    let data_path = dir.join(DATA_FILE);
    write_points(&data_path, &data.x, header)?;
    let labels_path = dir.join(LABELS_FILE);
    write_labels(&labels_path, &data.truth)?;
    Ok((data_path, labels_path))
}

pub fn write_points(path: &Path, x: &DMatrix<f64>, header: DataHeader) -> Result<()> {
    let mut out = format!(
        "{} {} {} {}\n",
        header.n,
        header.p,
        header.k,
        fmt_f64(header.sigma2)
    );
    for col in x.column_iter() {
        let line: Vec<String> = col.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read a dataset dump; `path` may be the file itself or its directory.
pub fn read_points(path: &Path) -> Result<(DMatrix<f64>, DataHeader)> {
    let path = if path.is_dir() {
        path.join(DATA_FILE)
    } else {
        path.to_path_buf()
    };
    let text = read_file(&path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines
        .next()
        .ok_or_else(|| parse_err(&path, 1, "missing header"))?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(parse_err(&path, 1, "header must be `n p K sigma2`"));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| parse_err(&path, 1, format!("{s:?}: {e}")))
    };
    let header = DataHeader {
        n: int(fields[0])?,
        p: int(fields[1])?,
        k: int(fields[2])?,
        sigma2: fields[3]
            .parse()
            .map_err(|e| parse_err(&path, 1, format!("sigma2: {e}")))?,
    };
    let mut x = DMatrix::zeros(header.p, header.n);
    let mut count = 0;
    for (lineno, line) in lines {
        if count == header.n {
            return Err(parse_err(&path, lineno + 1, "more points than the header declares"));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(&path, lineno + 1, e.to_string()))?;
        if vals.len() != header.p {
            return Err(parse_err(
                &path,
                lineno + 1,
                format!("expected {} values, found {}", header.p, vals.len()),
            ));
        }
        for (r, v) in vals.into_iter().enumerate() {
            x[(r, count)] = v;
        }
        count += 1;
    }
    if count != header.n {
        return Err(parse_err(&path, count + 1, format!("expected {} points, found {count}", header.n)));
    }
    Ok((x, header))
}

pub fn write_labels(path: &Path, part: &Partition) -> Result<()> {
    let mut out = String::with_capacity(part.n() * 3);
    for l in part.one_based() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_file(path, &out)
}

/// Read 1-based labels; `K` is the largest label unless given.
pub fn read_labels(path: &Path, k: Option<usize>) -> Result<Partition> {
    let text = read_file(path)?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let l: usize = t
            .parse()
            .map_err(|e| parse_err(path, lineno + 1, format!("{t:?}: {e}")))?;
        labels.push(l);
    }
    let k = k.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0));
    Partition::from_one_based(&labels, k)
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_file(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, lineno + 1, e.to_string()))?;
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(parse_err(path, lineno + 1, "ragged matrix row"));
            }
        }
        rows.push(vals);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parse flat `key = value` text. Later keys override earlier ones.
pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(origin, lineno + 1, format!("expected key=value, got {line:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(parse_err(origin, lineno + 1, "empty key"));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_gen::{place_centers, sample_dataset, MixtureSpec, PlacementMode};

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = place_centers(PlacementMode::Orthogonal, 3, 4, 5.0, 0).unwrap();
        let d = sample_dataset(&c, &MixtureSpec::new(vec![3, 2, 4], 0.3, 9).unwrap()).unwrap();
        let (dp, lp) = write_dataset(dir.path(), &d).unwrap();
        let (x, h) = read_points(&dp).unwrap();
        assert_eq!(h, DataHeader { n: 9, p: 4, k: 3, sigma2: 0.3 });
        assert_eq!(x, d.x);
        assert_eq!(read_labels(&lp, None).unwrap(), d.truth);
        let text = fs::read_to_string(&dp).unwrap();
        assert!(text.starts_with("9 4 3 "));
        assert_eq!(text.lines().count(), 10);
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let path = dir.path().join("z.txt");
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "2 2 2 1.0\n1 2\n3\n").unwrap();
        assert!(matches!(read_points(&path), Err(Error::Parse { line: 3, .. })));
        fs::write(&path, "1\n0\n").unwrap();
        assert!(read_labels(&path, None).is_err());
        let missing = dir.path().join("nope.txt");
        match read_matrix(&missing) {
            Err(Error::Io { path, .. }) => assert_eq!(path, missing),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config("# grid\nn = 100\n\nratios=0.3, 2.0 # tail\n", Path::new("g")).unwrap();
        assert_eq!(cfg["n"], "100");
        assert_eq!(cfg["ratios"], "0.3, 2.0");
        assert!(parse_config("novalue\n", Path::new("g")).is_err());
    }
}
