use std::path::Path;

use crate::error::{Error, Result};

use super::SeriesRaw;

const MONTH_COLUMN: &str = "month";

/// Reads one series per column. A `month` column, when present, supplies the
/// timestamps; otherwise months count from zero. An empty `columns` selects
/// every non-month column. Missing or non-numeric cells are rejected.
pub fn ingest_csv(path: &Path, columns: &[String]) -> Result<Vec<SeriesRaw>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, path))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, path))?
        .iter()
        .map(str::to_owned)
        .collect();
    let month_col = header.iter().position(|h| h == MONTH_COLUMN);
    let selected: Vec<usize> = if columns.is_empty() {
        (0..header.len()).filter(|&i| Some(i) != month_col).collect()
    } else {
        columns
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| Error::Data(format!("column {c:?} not found in {}", path.display())))
            })
            .collect::<Result<_>>()?
    };
    if selected.is_empty() {
        return Err(Error::Data(format!("{} has no series columns", path.display())));
    }

    let mut values = vec![Vec::new(); selected.len()];
    let mut months = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, path))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        if let Some(mc) = month_col {
            let cell = &record[mc];
            let m = cell.parse::<i64>().map_err(|_| Error::Csv {
                line,
                message: format!("column {MONTH_COLUMN:?}: {cell:?} is not an integer month"),
            })?;
            months.push(m);
        } else {
            months.push(months.len() as i64);
        }
        for (slot, &col) in values.iter_mut().zip(&selected) {
            let cell = &record[col];
            let v = parse_cell(cell).ok_or_else(|| Error::Csv {
                line,
                message: format!("row {}, column {:?}: invalid value {cell:?}", months.len(), header[col]),
            })?;
            slot.push(v);
        }
    }
    if months.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(selected
        .iter()
        .zip(values)
        .map(|(&col, v)| SeriesRaw {
            name: header[col].clone(),
            values: v,
            months: months.clone(),
        })
        .collect())
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.is_empty() {
        return None;
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
        other => Error::Csv {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes aligned series as `month,<name>...` with round-trip float formatting.
pub fn write_series_csv(series: &[SeriesRaw]) -> Result<String> {
    let first = series.first().ok_or_else(|| Error::Data("nothing to write".into()))?;
    if series.iter().any(|s| s.months != first.months || s.values.len() != first.months.len()) {
        return Err(Error::Data("series are not aligned on the same months".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec![MONTH_COLUMN.to_string()];
    head.extend(series.iter().map(|s| s.name.clone()));
    w.write_record(&head).map_err(|e| Error::Serde(e.to_string()))?;
    for (t, m) in first.months.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(series.iter().map(|s| s.values[t].to_string()));
        w.write_record(&rec).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_columns() {
        let f = file("a,b\n1,2\n3,4.5\n5,6\n");
        let s = ingest_csv(f.path(), &[]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].values, vec![1.0, 3.0, 5.0]);
        assert_eq!(s[1].values, vec![2.0, 4.5, 6.0]);
        assert_eq!(s[1].months, vec![0, 1, 2]);
    }

    #[test]
    fn month_column_and_selection() {
        let f = file("month,x,y\n5,1,2\n6,3,4\n");
        let s = ingest_csv(f.path(), &["y".to_string()]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].name, "y");
        assert_eq!(s[0].months, vec![5, 6]);
        assert!(ingest_csv(f.path(), &["z".to_string()]).is_err());
    }

    #[test]
    fn empty_file() {
        let f = file("a,b\n");
        let err = ingest_csv(f.path(), &[]).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
        let f = file("");
        assert!(ingest_csv(f.path(), &[]).is_err());
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let f = file("a,b\n1,2\n3,NaN\n");
        let err = ingest_csv(f.path(), &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("row 2") && msg.contains("\"b\""), "{msg}");
        let f = file("a,b\n1,\n");
        assert!(ingest_csv(f.path(), &[]).is_err());
        let f = file("a,b\n1,abc\n");
        assert!(ingest_csv(f.path(), &[]).is_err());
    }

    #[test]
    fn ragged_row() {
        let f = file("a,b\n1,2\n3\n");
        assert!(matches!(ingest_csv(f.path(), &[]), Err(Error::Csv { .. })));
    }

    #[test]
    fn write_then_read() {
        let s = vec![
            SeriesRaw::new("p", vec![0.1, 1.0 / 3.0, 1e-300]),
            SeriesRaw::new("q", vec![7.0, 8.5, 9.25]),
        ];
        let text = write_series_csv(&s).unwrap();
        let f = file(&text);
        assert_eq!(ingest_csv(f.path(), &[]).unwrap(), s);
    }
}
