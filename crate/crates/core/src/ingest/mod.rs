//! Streaming ARFF/CSV readers and an incremental equal-frequency discretizer.
//!
//! Records are parsed lazily: memory use depends on the header and the
//! discretizer sample size, never on the number of rows. Nominal values are
//! indexed in declaration order (ARFF) or sorted order (CSV); numeric values
//! are mapped to one of [`NUM_BINS`] intervals by a per-attribute
//! [`Discretizer`].

mod arff;
mod delimited;
mod discretize;
mod meta;

use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub use discretize::{Discretizer, DEFAULT_CAPACITY, NUM_BINS};
pub use meta::{DatasetMeta, TABLE};

use crate::error::{Error, Result};
use crate::schema::{Instance, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Arff,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
            .map_err(|_| Error::Config(format!("cannot infer format of {}", path.display())))
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arff" => Ok(Format::Arff),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    /// Labels in index order.
    Nominal(Vec<String>),
    Numeric,
}

impl AttributeKind {
    pub fn arity(&self) -> Option<usize> {
        match self {
            AttributeKind::Nominal(labels) => Some(labels.len()),
            AttributeKind::Numeric => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ClassColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub class: ClassColumn,
    /// CSV columns to treat as nominal even if every value is numeric.
    pub nominal: Vec<String>,
    /// Upper bound on the number of labels of any nominal column.
    pub max_arity: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            class: ClassColumn::Last,
            nominal: Vec::new(),
            max_arity: 4096,
        }
    }
}

/// Parsed header: the attribute declarations and the class position.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub relation: Option<String>,
    pub columns: Vec<Attribute>,
    pub class_index: usize,
}

impl Header {
    pub fn class_labels(&self) -> &[String] {
        match &self.columns[self.class_index].kind {
            AttributeKind::Nominal(labels) => labels,
            AttributeKind::Numeric => unreachable!("class column is validated nominal"),
        }
    }

    /// Non-class columns, in file order.
    pub fn attributes(&self) -> impl Iterator<Item = &Attribute> {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.class_index)
            .map(|(_, a)| a)
    }

    pub fn num_attributes(&self) -> usize {
        self.columns.len() - 1
    }

    /// Discrete schema after binning numeric attributes into [`NUM_BINS`]
    /// intervals. Single-label nominal attributes are widened to arity 2.
    pub fn schema(&self) -> Result<Schema> {
        let arities = self
            .attributes()
            .map(|a| a.kind.arity().unwrap_or(NUM_BINS).max(2))
            .collect();
        Schema::new(arities, self.class_labels().len())
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(arff::parse_error(
                path,
                0,
                "need at least one attribute besides the class",
            ));
        }
        match &self.columns[self.class_index].kind {
            AttributeKind::Nominal(labels) if labels.len() >= 2 => Ok(()),
            AttributeKind::Nominal(_) => Err(arff::parse_error(
                path,
                0,
                "class attribute must declare at least two labels",
            )),
            AttributeKind::Numeric => Err(arff::parse_error(
                path,
                0,
                "class attribute must be nominal",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawValue {
    Nominal(usize),
    Numeric(f64),
}

/// One parsed row before discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// Non-class values, in file order.
    pub values: Vec<RawValue>,
    pub class: usize,
    /// 1-based line number in the source file.
    pub line: usize,
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "?"
}

enum Source {
    Arff {
        lines: Lines<BufReader<File>>,
        line: usize,
    },
    Csv {
        reader: csv::Reader<File>,
        record: csv::StringRecord,
    },
}

/// Lazy iterator over the rows of an ARFF or CSV file.
pub struct RecordReader {
    path: PathBuf,
    header: Header,
    source: Source,
    /// Per column: label lookup for nominal columns.
    lookup: Vec<Option<rustc_hash::FxHashMap<String, usize>>>,
    done: bool,
}

impl RecordReader {
    pub fn open(path: impl AsRef<Path>, format: Format, options: &ParseOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let (header, source) = match format {
            Format::Arff => {
                let mut reader = BufReader::new(File::open(&path)?);
                let (relation, columns, line) =
                    arff::read_header(&mut reader, &path, options.max_arity)?;
                let names: Vec<String> = columns.iter().map(|a| a.name.clone()).collect();
                let class_index = options
                    .class
                    .resolve(&names)
                    .map_err(|m| arff::parse_error(&path, line, &m))?;
                let header = Header {
                    relation,
                    columns,
                    class_index,
                };
                (
                    header,
                    Source::Arff {
                        lines: reader.lines(),
                        line,
                    },
                )
            }
            Format::Csv => {
                let (columns, class_index) = delimited::scan(&path, options)?;
                let mut reader = delimited::reader(&path)?;
                reader.headers()?;
                let header = Header {
                    relation: None,
                    columns,
                    class_index,
                };
                let source = Source::Csv {
                    reader,
                    record: csv::StringRecord::new(),
                };
                (header, source)
            }
        };
        header.validate(&path)?;
        let lookup = header
            .columns
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Nominal(labels) => Some(
                    labels
                        .iter()
                        .enumerate()
                        .map(|(i, l)| (l.clone(), i))
                        .collect(),
                ),
                AttributeKind::Numeric => None,
            })
            .collect();
        Ok(Self {
            path,
            header,
            source,
            lookup,
            done: false,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn next_record(&mut self) -> Result<Option<RawRecord>> {
        match &mut self.source {
            Source::Arff { lines, line } => loop {
                let Some(text) = lines.next().transpose()? else {
                    return Ok(None);
                };
                *line += 1;
                let text = text.trim();
                if text.is_empty() || text.starts_with('%') {
                    continue;
                }
                let at = *line;
                if text.starts_with('{') {
                    return Err(arff::parse_error(
                        &self.path,
                        at,
                        "sparse ARFF rows are not supported",
                    ));
                }
                let fields =
                    arff::split_fields(text).map_err(|m| arff::parse_error(&self.path, at, &m))?;
                return convert(
                    &self.path,
                    &self.header,
                    &self.lookup,
                    fields.iter().map(String::as_str),
                    fields.len(),
                    at,
                )
                .map(Some);
            },
            Source::Csv { reader, record } => {
                if !reader.read_record(record)? {
                    return Ok(None);
                }
                let at = delimited::record_line(record);
                convert(
                    &self.path,
                    &self.header,
                    &self.lookup,
                    record.iter(),
                    record.len(),
                    at,
                )
                .map(Some)
            }
        }
    }
}

fn convert<'a>(
    path: &Path,
    header: &Header,
    lookup: &[Option<rustc_hash::FxHashMap<String, usize>>],
    fields: impl Iterator<Item = &'a str>,
    count: usize,
    line: usize,
) -> Result<RawRecord> {
    if count != header.columns.len() {
        return Err(arff::parse_error(
            path,
            line,
            &format!("expected {} fields, found {count}", header.columns.len()),
        ));
    }
    let mut values = Vec::with_capacity(count - 1);
    let mut class = 0;
    for (c, field) in fields.enumerate() {
        if is_missing(field) {
            return Err(arff::parse_error(
                path,
                line,
                "missing values are not supported",
            ));
        }
        let column = &header.columns[c];
        let value = match &lookup[c] {
            Some(map) => RawValue::Nominal(*map.get(field).ok_or_else(|| {
                arff::parse_error(
                    path,
                    line,
                    &format!(
                        "value {field:?} not declared for attribute {:?}",
                        column.name
                    ),
                )
            })?),
            None => {
                let v: f64 = field.parse().map_err(|_| {
                    arff::parse_error(
                        path,
                        line,
                        &format!("invalid number {field:?} for attribute {:?}", column.name),
                    )
                })?;
                if !v.is_finite() {
                    return Err(arff::parse_error(
                        path,
                        line,
                        &format!("non-finite value {field:?}"),
                    ));
                }
                RawValue::Numeric(v)
            }
        };
        if c == header.class_index {
            let RawValue::Nominal(k) = value else {
                unreachable!("class column is nominal")
            };
            class = k;
        } else {
            values.push(value);
        }
    }
    Ok(RawRecord {
        values,
        class,
        line,
    })
}

impl Iterator for RecordReader {
    type Item = Result<RawRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.next_record().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}

/// Discretized instances from a dataset file, stamped with consecutive steps
/// starting at 0.
pub struct DatasetStream {
    records: RecordReader,
    schema: Schema,
    discretizers: Vec<Option<Discretizer>>,
    step: u64,
}

impl DatasetStream {
    pub fn open(
        path: impl AsRef<Path>,
        format: Format,
        options: &ParseOptions,
        discretizer_capacity: usize,
    ) -> Result<Self> {
        let records = RecordReader::open(path, format, options)?;
        let schema = records.header().schema()?;
        let discretizers = records
            .header()
            .attributes()
            .map(|a| match a.kind {
                AttributeKind::Numeric => Discretizer::new(discretizer_capacity).map(Some),
                AttributeKind::Nominal(_) => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            records,
            schema,
            discretizers,
            step: 0,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn header(&self) -> &Header {
        self.records.header()
    }

    fn discretize(&mut self, record: RawRecord) -> Result<Instance> {
        let values = record
            .values
            .iter()
            .zip(&mut self.discretizers)
            .map(|(v, d)| match (v, d) {
                (RawValue::Nominal(k), _) => Ok(*k),
                (RawValue::Numeric(x), Some(d)) => d.observe(*x),
                (RawValue::Numeric(_), None) => unreachable!("numeric column without discretizer"),
            })
            .collect::<Result<_>>()?;
        let x = Instance::new(values, record.class, self.step);
        self.step += 1;
        Ok(x)
    }
}

impl Iterator for DatasetStream {
    type Item = Result<Instance>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.records.next()?;
        Some(record.and_then(|r| self.discretize(r)))
    }
}

/// Rewrites a dataset as the discrete `step,x1..xa,y` stream format.
pub fn write_discretized_csv<W: std::io::Write>(stream: DatasetStream, out: W) -> Result<u64> {
    let mut writer = csv::Writer::from_writer(out);
    let a = stream.schema().num_attributes();
    let mut head = vec!["step".to_string()];
    head.extend((1..=a).map(|i| format!("x{i}")));
    head.push("y".into());
    writer.write_record(&head)?;
    let mut n = 0;
    for x in stream {
        let x = x?;
        let mut row = Vec::with_capacity(a + 2);
        row.push(x.step.to_string());
        row.extend(x.values.iter().map(usize::to_string));
        row.push(x.class.to_string());
        writer.write_record(&row)?;
        n += 1;
    }
    writer.flush()?;
    Ok(n)
}
