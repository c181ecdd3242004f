//! Plain-text record files and labeled cohort manifests.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::Record;

/// Two-class label. `ClassA` is the control (healthy) group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    ClassA,
    ClassB,
}

impl Label {
    pub fn other(self) -> Label {
        match self {
            Label::ClassA => Label::ClassB,
            Label::ClassB => Label::ClassA,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::ClassA => 0,
            Label::ClassB => 1,
        }
    }
}

/// Literal strings used for the two classes in manifests and feature tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelNames {
    pub class_a: String,
    pub class_b: String,
}

impl LabelNames {
    pub fn new(class_a: impl Into<String>, class_b: impl Into<String>) -> Result<Self> {
        let (class_a, class_b) = (class_a.into(), class_b.into());
        if class_a.is_empty() || class_b.is_empty() || class_a == class_b {
            return Err(Error::BadParams(format!(
                "class labels must be distinct and non-empty, got {class_a:?} and {class_b:?}"
            )));
        }
        Ok(LabelNames { class_a, class_b })
    }

    pub fn name(&self, label: Label) -> &str {
        match label {
            Label::ClassA => &self.class_a,
            Label::ClassB => &self.class_b,
        }
    }

    pub fn parse(&self, s: &str) -> Option<Label> {
        if s == self.class_a {
            Some(Label::ClassA)
        } else if s == self.class_b {
            Some(Label::ClassB)
        } else {
            None
        }
    }
}

impl Default for LabelNames {
    fn default() -> Self {
        LabelNames {
            class_a: "healthy".into(),
            class_b: "patient".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One line per time sample, one delimited column per channel.
    ColumnsPerChannel,
    /// One value per line; all samples of channel 0, then channel 1, ...
    ChannelMajorSingleColumn,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::ColumnsPerChannel => "columns",
            Layout::ChannelMajorSingleColumn => "channel-major",
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "columns" => Ok(Layout::ColumnsPerChannel),
            "channel-major" => Ok(Layout::ChannelMajorSingleColumn),
            other => Err(Error::BadParams(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawLayout {
    pub layout: Layout,
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for RawLayout {
    fn default() -> Self {
        RawLayout {
            layout: Layout::ColumnsPerChannel,
            delimiter: b',',
            has_header: false,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads a record file; the subject id is the file stem.
pub fn load_record(
    path: &Path,
    layout: &RawLayout,
    channel_count: usize,
    sample_rate_hz: f64,
) -> Result<Record> {
    let file = File::open(path).map_err(io_err(path))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_record(file, path, layout, channel_count, sample_rate_hz, id)
}

/// Parses record text from any reader; `origin` only labels errors.
pub fn read_record<R: Read>(
    reader: R,
    origin: &Path,
    layout: &RawLayout,
    channel_count: usize,
    sample_rate_hz: f64,
    subject_id: impl Into<String>,
) -> Result<Record> {
    if channel_count == 0 {
        return Err(Error::BadParams("channel count must be positive".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(layout.delimiter)
        .has_headers(layout.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = match layout.layout {
        Layout::ColumnsPerChannel => channel_count,
        Layout::ChannelMajorSingleColumn => 1,
    };
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    let mut row = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut row).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(origin, line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(Error::Shape(format!(
                "{}: line {line}: expected {width} column(s), found {}",
                origin.display(),
                row.len()
            )));
        }
        for field in row.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(origin, line, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(origin, line, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let channels = match layout.layout {
        Layout::ColumnsPerChannel => (0..channel_count)
            .map(|c| values.iter().skip(c).step_by(channel_count).copied().collect())
            .collect(),
        Layout::ChannelMajorSingleColumn => {
            if !rows.is_multiple_of(channel_count) {
                return Err(Error::Shape(format!(
                    "{}: {rows} lines not divisible by {channel_count} channels",
                    origin.display()
                )));
            }
            let n = rows / channel_count;
            values.chunks(n.max(1)).map(<[f64]>::to_vec).collect()
        }
    };
    Record::new(channels, sample_rate_hz, subject_id).map_err(|e| match e {
        Error::Shape(m) => Error::Shape(format!("{}: {m}", origin.display())),
        other => other,
    })
}

/// Writes `record` so that [`read_record`] reproduces it bit for bit.
pub fn write_record<W: Write>(mut out: W, record: &Record, layout: &RawLayout) -> io::Result<()> {
    let delim = char::from(layout.delimiter);
    match layout.layout {
        Layout::ColumnsPerChannel => {
            if layout.has_header {
                let header: Vec<String> =
                    (0..record.channel_count()).map(|c| format!("ch{c}")).collect();
                writeln!(out, "{}", header.join(&delim.to_string()))?;
            }
            let mut line = String::new();
            for k in 0..record.len() {
                line.clear();
                for (c, ch) in record.channels().iter().enumerate() {
                    if c > 0 {
                        line.push(delim);
                    }
                    line.push_str(&ch[k].to_string());
                }
                writeln!(out, "{line}")?;
            }
        }
        Layout::ChannelMajorSingleColumn => {
            if layout.has_header {
                writeln!(out, "value")?;
            }
            for ch in record.channels() {
                for v in ch {
                    writeln!(out, "{v}")?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_record(path: &Path, record: &Record, layout: &RawLayout) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = io::BufWriter::new(file);
    write_record(&mut w, record, layout)
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub label: Label,
}

/// Labeled list of record files sharing one channel count and sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    pub channel_count: usize,
    pub sample_rate_hz: f64,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, channel_count: usize, sample_rate_hz: f64) -> Result<Self> {
        if channel_count == 0 || !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::BadParams(format!(
                "manifest needs a positive channel count and sample rate, got {channel_count} and {sample_rate_hz}"
            )));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate subject id {:?}", e.subject_id)));
            }
        }
        Ok(DatasetManifest {
            entries,
            channel_count,
            sample_rate_hz,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Reads `path,subject_id,label` rows. Relative record paths resolve
    /// against the manifest's directory. A leading header row is optional.
    pub fn load(
        path: &Path,
        labels: &LabelNames,
        channel_count: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let file = File::open(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| {
                parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 3 {
                return Err(parse_error(path, line, "expected path,subject_id,label"));
            }
            if i == 0 && &row[0] == "path" && &row[1] == "subject_id" && &row[2] == "label" {
                continue;
            }
            let label = labels
                .parse(&row[2])
                .ok_or_else(|| parse_error(path, line, format!("unknown label {:?}", &row[2])))?;
            let rel = PathBuf::from(&row[0]);
            let path = if rel.is_absolute() { rel } else { base.join(rel) };
            entries.push(ManifestEntry {
                path,
                subject_id: row[1].to_string(),
                label,
            });
        }
        DatasetManifest::new(entries, channel_count, sample_rate_hz)
    }

    /// Writes the manifest with a header row. Paths are written as given.
    pub fn save(&self, path: &Path, labels: &LabelNames) -> Result<()> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: io::Error::other(e),
        };
        w.write_record(["path", "subject_id", "label"]).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.subject_id.as_str(),
                labels.name(e.label),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))
    }
}

/// Loads every manifest entry in order. Errors carry the subject id.
pub fn load_cohort(manifest: &DatasetManifest, layout: &RawLayout) -> Result<Vec<(Record, Label)>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            load_record(&e.path, layout, manifest.channel_count, manifest.sample_rate_hz)
                .map(|r| (r.with_subject_id(e.subject_id.clone()), e.label))
                .map_err(|err| err.for_subject(e.subject_id.clone()))
        })
        .collect()
}
