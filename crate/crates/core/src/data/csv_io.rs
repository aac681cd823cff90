use std::path::Path;

use super::DataMatrix;
use crate::error::{AlleError, Result};

/// Reads a rectangular numeric CSV. When `label_column` is given that
/// column is parsed as non-negative integer labels and removed from the
/// features.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AlleError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Option<Vec<String>> = if has_header {
        let h = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        Some(h)
    } else {
        None
    };

    let mut width = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let w = *width.get_or_insert(record.len());
        if let Some(col) = label_column {
            if col >= w {
                return Err(AlleError::invalid(format!(
                    "label column {col} out of range for {w} columns"
                )));
            }
        }
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                AlleError::format(
                    path,
                    format!("row {}, column {j}: not a number: {cell:?}", line + 1),
                )
            })?;
            if Some(j) == label_column {
                if value < 0.0 || value.fract() != 0.0 || !value.is_finite() {
                    return Err(AlleError::format(
                        path,
                        format!("row {}: label {cell:?} is not a non-negative integer", line + 1),
                    ));
                }
                labels.push(value as usize);
            } else {
                values.push(value);
            }
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| AlleError::format(path, "no data rows"))?;
    let dim = width - usize::from(label_column.is_some());
    if dim == 0 {
        return Err(AlleError::format(path, "no feature columns"));
    }

    let mut data = DataMatrix::new(rows, dim, values).map_err(|e| match e {
        AlleError::NonFinite(_) => AlleError::format(path, "non-finite feature value"),
        other => other,
    })?;
    if label_column.is_some() {
        data = data.with_labels(labels)?;
    }
    if let Some(mut names) = header {
        if let Some(col) = label_column {
            names.remove(col);
        }
        data = data.with_feature_names(names)?;
    }
    Ok(data)
}

/// Reads the table layout produced by [`write_csv`]: a header row whose
/// `label` column (if any) becomes the labels and whose `color` column (if
/// any) becomes the color; every other column is a feature.
pub fn load_csv_table(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let raw = load_csv(path, true, None)?;
    let names = raw.feature_names().map(<[String]>::to_vec).unwrap_or_default();
    let label_col = names.iter().position(|n| n == "label");
    let color_col = names.iter().position(|n| n == "color");
    if label_col.is_none() && color_col.is_none() {
        return Ok(raw);
    }
    let keep: Vec<usize> = (0..raw.dim())
        .filter(|&j| Some(j) != label_col && Some(j) != color_col)
        .collect();
    if keep.is_empty() {
        return Err(AlleError::format(path, "no feature columns"));
    }
    let mut values = Vec::with_capacity(raw.rows() * keep.len());
    for row in raw.iter_rows() {
        values.extend(keep.iter().map(|&j| row[j]));
    }
    let mut data = DataMatrix::new(raw.rows(), keep.len(), values)?
        .with_feature_names(keep.iter().map(|&j| names[j].clone()).collect())?;
    if let Some(col) = label_col {
        let labels = raw
            .iter_rows()
            .enumerate()
            .map(|(i, row)| {
                let v = row[col];
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(AlleError::format(
                        path,
                        format!("row {}: label {v} is not a non-negative integer", i + 1),
                    ))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        data = data.with_labels(labels)?;
    }
    if let Some(col) = color_col {
        data = data.with_color(raw.iter_rows().map(|row| row[col]).collect())?;
    }
    Ok(data)
}

/// Writes `data` with a header row: the feature names (or `x0..`), then a
/// `label` column and a `color` column when present. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(path: impl AsRef<Path>, data: &DataMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    write_csv_to(&mut out, data);
    std::fs::write(path, out).map_err(|e| AlleError::io(path, e))
}

pub(crate) fn write_csv_to(out: &mut String, data: &DataMatrix) {
    use std::fmt::Write;

    let mut header: Vec<String> = match data.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..data.dim()).map(|j| format!("x{j}")).collect(),
    };
    if data.labels().is_some() {
        header.push("label".into());
    }
    if data.color().is_some() {
        header.push("color".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in data.iter_rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if let Some(labels) = data.labels() {
            let _ = write!(out, ",{}", labels[i]);
        }
        if let Some(color) = data.color() {
            let _ = write!(out, ",{}", color[i]);
        }
        out.push('\n');
    }
}

fn csv_error(path: &Path, e: csv::Error) -> AlleError {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => AlleError::format(
            path,
            format!(
                "ragged row at line {}: expected {expected_len} fields, found {len}",
                pos.as_ref().map_or(0, |p| p.line())
            ),
        ),
        _ => AlleError::format(path, e.to_string()),
    }
}
