use std::io::Read;
use std::path::Path;

use super::interp::{Station, StationSet};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

fn parse_cell(raw: &str, line: usize, column: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("column {column}: `{raw}` is not a number"),
    })
}

/// Square matrix CSV: a header of `P` node ids then `P` rows of `P` numbers.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(Vec<String>, Tensor)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let ids: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let p = ids.len();
    if p == 0 {
        return Err(Error::Parse { line: 1, msg: "empty header".into() });
    }
    let mut data = Vec::with_capacity(p * p);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|pos| pos.line() as usize).unwrap_or(0);
        if rec.len() != p {
            return Err(Error::Parse { line, msg: format!("expected {p} columns, found {}", rec.len()) });
        }
        for (c, raw) in rec.iter().enumerate() {
            data.push(parse_cell(raw, line, c)?);
        }
        rows += 1;
    }
    if rows != p {
        return Err(Error::Parse { line: rows + 1, msg: format!("expected {p} rows, found {rows}") });
    }
    Ok((ids, Tensor::matrix(p, p, data)?))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Tensor)> {
    read_matrix_csv(std::fs::File::open(path)?)
}

/// Station CSV: header `id,x,y,value...`, one station per row.
pub fn read_stations_csv<R: Read>(reader: R) -> Result<(Vec<String>, StationSet)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let width = rdr.headers()?.len();
    if width < 4 {
        return Err(Error::Parse { line: 1, msg: "station header needs id, x, y and at least one value".into() });
    }
    let mut ids = Vec::new();
    let mut stations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|pos| pos.line() as usize).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse { line, msg: format!("expected {width} columns, found {}", rec.len()) });
        }
        ids.push(rec[0].trim().to_string());
        let x = parse_cell(&rec[1], line, 1)?;
        let y = parse_cell(&rec[2], line, 2)?;
        let values = (3..width).map(|c| parse_cell(&rec[c], line, c)).collect::<Result<Vec<_>>>()?;
        stations.push(Station { position: [x, y], values });
    }
    Ok((ids, StationSet::new(stations)?))
}

pub fn load_stations_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, StationSet)> {
    read_stations_csv(std::fs::File::open(path)?)
}
