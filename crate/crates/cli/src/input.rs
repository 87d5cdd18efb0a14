use std::fs::File;
use std::path::Path;

use nat2::{DataMatrix, Matrix};

use crate::CliError;

/// Numeric table read from CSV; rows are samples.
#[derive(Debug, Clone)]
pub struct Table {
    pub names: Vec<String>,
    pub has_header: bool,
    pub data: Matrix<f64>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn into_data(self) -> Result<DataMatrix<f64>, CliError> {
        Ok(DataMatrix::new(self.data)?)
    }
}

fn parse_field(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads a CSV matrix. The first row is a header when any of its fields is
/// not a finite number; without one, columns are named `1`, `2`, ….
pub fn read_matrix(path: &Path) -> Result<Table, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    };
    let has_header = first.iter().any(|f| parse_field(f).is_none());
    let p = first.len();
    let names = if has_header {
        first.iter().map(str::to_string).collect()
    } else {
        (1..=p).map(|j| j.to_string()).collect()
    };

    let body = &records[usize::from(has_header)..];
    if body.is_empty() {
        return Err(CliError::Input(format!(
            "{}: header but no data rows",
            path.display()
        )));
    }
    let mut values = Vec::with_capacity(body.len() * p);
    for (line, rec) in body {
        if rec.len() != p {
            return Err(CliError::Input(format!(
                "{}: line {line}: expected {p} fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        for (col, field) in rec.iter().enumerate() {
            let v = parse_field(field).ok_or_else(|| {
                CliError::Input(format!(
                    "{}: line {line}, column {}: cannot parse {field:?} as a finite number",
                    path.display(),
                    col + 1
                ))
            })?;
            values.push(v);
        }
    }
    let data = Matrix::from_vec(body.len(), p, values)?;
    Ok(Table {
        names,
        has_header,
        data,
    })
}

/// How before/after measurements are stacked in a paired input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PairLayout {
    /// Rows 2i and 2i+1 belong to subject i.
    Interleaved,
    /// The first half of the rows are the "before" block.
    Blocks,
}

/// Per-subject differences `after − before`.
pub fn paired_difference(x: &Matrix<f64>, layout: PairLayout) -> Result<Matrix<f64>, CliError> {
    let rows = x.rows();
    if !rows.is_multiple_of(2) {
        return Err(CliError::Input(format!(
            "paired input needs an even number of rows, found {rows}"
        )));
    }
    let n = rows / 2;
    let pair = |i: usize| match layout {
        PairLayout::Interleaved => (2 * i, 2 * i + 1),
        PairLayout::Blocks => (i, n + i),
    };
    Ok(Matrix::from_fn(n, x.cols(), |i, j| {
        let (before, after) = pair(i);
        x[(after, j)] - x[(before, j)]
    }))
}

/// One named set of columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub columns: Vec<String>,
}

/// Reads a GMT-like file: `name<TAB>col<TAB>col…` per line. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_groups(path: &Path) -> Result<Vec<Group>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut groups: Vec<Group> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t').map(str::trim).filter(|f| !f.is_empty());
        let name = fields.next().unwrap_or_default().to_string();
        if groups.iter().any(|g| g.name == name) {
            return Err(CliError::Input(format!(
                "{}: line {}: duplicate group name {name:?}",
                path.display(),
                i + 1
            )));
        }
        groups.push(Group {
            name,
            columns: fields.map(str::to_string).collect(),
        });
    }
    if groups.is_empty() {
        return Err(CliError::Input(format!("{}: no groups", path.display())));
    }
    Ok(groups)
}
