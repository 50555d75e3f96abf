use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use super::arff::parse_error;
use super::{is_missing, Attribute, AttributeKind, ClassColumn, ParseOptions};
use crate::error::Result;

/// Infers column kinds with one streaming pass over a headered CSV file.
///
/// The class column and any column listed in `options.nominal` are nominal;
/// every other column is numeric when all of its values parse as finite
/// numbers, nominal otherwise. Nominal labels are ordered numerically when they
/// all parse as numbers and lexicographically otherwise.
pub(super) fn scan(path: &Path, options: &ParseOptions) -> Result<(Vec<Attribute>, usize)> {
    let mut reader = reader(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() {
        return Err(parse_error(path, 1, "empty header"));
    }
    let class_index = options
        .class
        .resolve(&names)
        .map_err(|m| parse_error(path, 1, &m))?;
    let mut forced: Vec<bool> = names
        .iter()
        .enumerate()
        .map(|(i, n)| i == class_index || options.nominal.iter().any(|m| m == n))
        .collect();
    // A column that turns out nominal after some numeric rows lost those
    // labels; rescan with it forced nominal from the start.
    loop {
        let (labels, late) = scan_pass(path, &names, &forced, options.max_arity)?;
        if late.is_empty() {
            let attributes = names
                .into_iter()
                .zip(labels)
                .map(|(name, set)| {
                    let kind = match set {
                        None => AttributeKind::Numeric,
                        Some(set) => AttributeKind::Nominal(order_labels(set)),
                    };
                    Attribute { name, kind }
                })
                .collect();
            return Ok((attributes, class_index));
        }
        for c in late {
            forced[c] = true;
        }
    }
}

type Labels = Vec<Option<BTreeSet<String>>>;

fn scan_pass(
    path: &Path,
    names: &[String],
    forced: &[bool],
    max_arity: usize,
) -> Result<(Labels, Vec<usize>)> {
    let mut reader = reader(path)?;
    // `None` while a column still looks numeric; otherwise its label set.
    let mut labels: Labels = forced.iter().map(|&f| f.then(BTreeSet::new)).collect();
    let mut late = Vec::new();
    let mut rows = 0usize;

    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record_line(&record);
        if record.len() != names.len() {
            return Err(parse_error(
                path,
                line,
                &format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        for (c, field) in record.iter().enumerate() {
            if is_missing(field) {
                return Err(parse_error(path, line, "missing values are not supported"));
            }
            let set = match &mut labels[c] {
                Some(set) => set,
                slot @ None => {
                    if field.parse::<f64>().is_ok_and(f64::is_finite) {
                        continue;
                    }
                    if rows > 0 {
                        late.push(c);
                    }
                    slot.insert(BTreeSet::new())
                }
            };
            set.insert(field.to_string());
            if set.len() > max_arity {
                return Err(parse_error(
                    path,
                    line,
                    &format!(
                        "column {:?} has more than {} distinct values",
                        names[c], max_arity
                    ),
                ));
            }
        }
        rows += 1;
    }
    Ok((labels, late))
}

pub(super) fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?))
}

pub(super) fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn order_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut labels: Vec<String> = labels.into_iter().collect();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(f64, String)> = keys.into_iter().zip(labels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        labels = paired.into_iter().map(|(_, l)| l).collect();
    }
    labels
}

impl ClassColumn {
    pub(super) fn resolve(&self, names: &[String]) -> std::result::Result<usize, String> {
        match self {
            ClassColumn::Last => Ok(names.len() - 1),
            ClassColumn::Index(i) if *i < names.len() => Ok(*i),
            ClassColumn::Index(i) => Err(format!(
                "class column {i} out of range for {} columns",
                names.len()
            )),
            ClassColumn::Name(n) => names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| format!("no column named {n:?}")),
        }
    }
}
