//! CSV ingestion and export of subject records.
//!
//! The layout is one row per subject with a header naming the columns
//! `t, a1, …, ap, v, d`; `d` is left empty for unverified subjects.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use vusni_core::data::{Dataset, SubjectRecord};

use crate::{Error, Result};

/// Which header names hold the test result, covariates, verification flag
/// and disease class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub t: String,
    pub a: Vec<String>,
    pub v: String,
    pub d: String,
}

impl ColumnMap {
    /// `t, a1..ap, v, d`.
    pub fn standard(p: usize) -> Self {
        ColumnMap {
            t: "t".into(),
            a: (1..=p).map(|j| format!("a{j}")).collect(),
            v: "v".into(),
            d: "d".into(),
        }
    }

    /// The standard map with `p` set to the number of consecutive `a1, a2, …`
    /// columns present in `headers`.
    pub fn detect<'a>(headers: impl IntoIterator<Item = &'a str>) -> Self {
        let names: Vec<&str> = headers.into_iter().collect();
        let p = (1..).take_while(|j| names.contains(&format!("a{j}").as_str())).count();
        ColumnMap::standard(p)
    }

    fn positions(&self, headers: &csv::StringRecord, source: &str) -> Result<(usize, Vec<usize>, usize, usize)> {
        let find = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
                source_name: source.into(),
                message: format!("missing column `{name}`"),
            })
        };
        let a = self.a.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
        Ok((find(&self.t)?, a, find(&self.v)?, find(&self.d)?))
    }
}

fn parse_f64(field: &str, name: &str) -> std::result::Result<f64, String> {
    let x: f64 = field.parse().map_err(|_| format!("column `{name}`: `{field}` is not a number"))?;
    if !x.is_finite() {
        return Err(format!("column `{name}`: non-finite value `{field}`"));
    }
    Ok(x)
}

/// Reads subject records from any CSV source. `source_name` is used in error
/// messages. Without a column map the covariate count is taken from the
/// header.
pub fn read_csv<R: Read>(reader: R, map: Option<&ColumnMap>, source_name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let row_err = |line: u64, message: String| Error::Row { source_name: source_name.into(), line, message };
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format { source_name: source_name.into(), message: e.to_string() })?
        .clone();
    let map = map.cloned().unwrap_or_else(|| ColumnMap::detect(headers.iter()));
    let (it, ia, iv, id) = map.positions(&headers, source_name)?;

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let t = parse_f64(field(it), &map.t).map_err(|m| row_err(line, m))?;
        let a = ia
            .iter()
            .zip(&map.a)
            .map(|(&i, name)| parse_f64(field(i), name))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| row_err(line, m))?;
        let v: u8 = match field(iv) {
            "0" => 0,
            "1" => 1,
            other => return Err(row_err(line, format!("column `{}`: expected 0 or 1, found `{other}`", map.v))),
        };
        let d = match field(id) {
            "" => None,
            s => Some(s.parse::<u8>().map_err(|_| row_err(line, format!("column `{}`: `{s}` is not a class label", map.d)))?),
        };
        let rec = SubjectRecord::new(t, a, v, d).map_err(|e| row_err(line, e.to_string()))?;
        records.push(rec);
    }
    Ok(Dataset::new(records, map.a.len())?)
}

/// Loads a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, map: Option<&ColumnMap>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, map, &path.display().to_string())
}

/// Writes the standard layout. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let map = ColumnMap::standard(data.p());
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Format { source_name: "csv output".into(), message: e.to_string() };
    let mut header = vec![map.t.clone()];
    header.extend(map.a.iter().cloned());
    header.extend([map.v.clone(), map.d.clone()]);
    w.write_record(&header).map_err(csv_err)?;
    for r in data.records() {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(r.t.to_string());
        row.extend(r.a.iter().map(f64::to_string));
        row.push(r.v().to_string());
        row.push(r.d.map(|c| c.label().to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}
