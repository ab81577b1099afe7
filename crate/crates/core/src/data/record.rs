//! The `EDAR` text record format.
//!
//! ```text
//! EDAR format=<name> version=<n> count=<records> schema=<fields> [key=value ...]
//! <record 0: space-separated numbers>
//! <record 1>
//! ...
//! ```
//!
//! Reals are written with 17 significant digits so every `f64` survives a
//! round trip bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::FormatError;

pub const MAGIC: &str = "EDAR";
pub const VERSION: u32 = 1;

/// Renders a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub schema: String,
    /// Extra key/value pairs in file order.
    pub extra: Vec<(String, String)>,
}

impl Header {
    pub fn new(format: &str, count: usize, schema: String) -> Self {
        Self {
            format: format.to_string(),
            version: VERSION,
            count,
            schema,
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Result<&str, FormatError> {
        self.extra
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| FormatError::Header(format!("missing key `{key}`")))
    }

    pub fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| FormatError::Header(format!("cannot parse `{key}={raw}`")))
    }

    fn render(&self) -> String {
        let mut s = format!(
            "{MAGIC} format={} version={} count={} schema={}",
            self.format, self.version, self.count, self.schema
        );
        for (k, v) in &self.extra {
            let _ = write!(s, " {k}={v}");
        }
        s
    }

    fn parse(line: &str) -> Result<Self, FormatError> {
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(FormatError::Header(format!("missing `{MAGIC}` magic")));
        }
        let mut format = None;
        let mut version = None;
        let mut count = None;
        let mut schema = None;
        let mut extra = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| FormatError::Header(format!("token `{tok}` is not key=value")))?;
            match k {
                "format" => format = Some(v.to_string()),
                "version" => version = Some(v.to_string()),
                "count" => count = Some(v.to_string()),
                "schema" => schema = Some(v.to_string()),
                _ => extra.push((k.to_string(), v.to_string())),
            }
        }
        let need = |o: Option<String>, k: &str| {
            o.ok_or_else(|| FormatError::Header(format!("missing key `{k}`")))
        };
        let format = need(format, "format")?;
        let version_raw = need(version, "version")?;
        let version = match version_raw.parse::<u32>() {
            Ok(v) if v == VERSION => v,
            _ => {
                return Err(FormatError::VersionMismatch {
                    expected: VERSION,
                    found: version_raw,
                })
            }
        };
        let count_raw = need(count, "count")?;
        let count = count_raw
            .parse()
            .map_err(|_| FormatError::Header(format!("bad count `{count_raw}`")))?;
        Ok(Self {
            format,
            version,
            count,
            schema: need(schema, "schema")?,
            extra,
        })
    }
}

/// Accumulates records and writes them atomically.
#[derive(Debug)]
pub struct RecordWriter {
    header: Header,
    body: String,
    written: usize,
}

impl RecordWriter {
    pub fn new(header: Header) -> Self {
        Self {
            header,
            body: String::new(),
            written: 0,
        }
    }

    /// Appends one record of already-rendered fields.
    pub fn record<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.body.push(' ');
            }
            self.body.push_str(f.as_ref());
            first = false;
        }
        self.body.push('\n');
        self.written += 1;
    }

    pub fn render(&self) -> String {
        debug_assert_eq!(self.written, self.header.count);
        format!("{}\n{}", self.header.render(), self.body)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), FormatError> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Writes via a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

/// A parsed file: header plus raw record lines.
#[derive(Debug)]
pub struct RecordFile {
    pub header: Header,
    lines: Vec<String>,
    ends_with_newline: bool,
}

impl RecordFile {
    pub fn read(path: &Path, expected_format: &str) -> Result<Self, FormatError> {
        let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, expected_format)
    }

    pub fn parse(text: &str, expected_format: &str) -> Result<Self, FormatError> {
        let mut lines = text.lines();
        let header = Header::parse(lines.next().unwrap_or(""))?;
        if header.format != expected_format {
            return Err(FormatError::WrongFormat {
                expected: expected_format.to_string(),
                found: header.format.clone(),
            });
        }
        let lines: Vec<String> = lines
            .filter(|l| !l.trim().is_empty())
            .map(str::to_string)
            .collect();
        if lines.len() > header.count {
            return Err(FormatError::Malformed {
                record: header.count,
                detail: format!("{} records present, header declares {}", lines.len(), header.count),
            });
        }
        Ok(Self {
            header,
            lines,
            ends_with_newline: text.ends_with('\n'),
        })
    }

    pub fn expect_schema(&self, schema: &str) -> Result<(), FormatError> {
        if self.header.schema != schema {
            return Err(FormatError::SchemaMismatch(format!(
                "expected `{schema}`, found `{}`",
                self.header.schema
            )));
        }
        Ok(())
    }

    /// Fields of record `index`, which must have exactly `width` of them.
    pub fn fields(&self, index: usize, width: usize) -> Result<Vec<&str>, FormatError> {
        let Some(line) = self.lines.get(index) else {
            return Err(FormatError::Truncated { record: index });
        };
        // Writers terminate every record, so an unterminated last line is partial.
        let is_last = index + 1 == self.lines.len();
        if is_last && !self.ends_with_newline {
            return Err(FormatError::Truncated { record: index });
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width {
            if is_last && fields.len() < width && self.lines.len() < self.header.count {
                return Err(FormatError::Truncated { record: index });
            }
            return Err(FormatError::Malformed {
                record: index,
                detail: format!("{} fields, expected {width}", fields.len()),
            });
        }
        Ok(fields)
    }

    pub fn reals(&self, index: usize, width: usize) -> Result<Vec<f64>, FormatError> {
        self.fields(index, width)?
            .into_iter()
            .map(|f| parse_num(f, index))
            .collect()
    }
}

pub fn parse_num<T: std::str::FromStr>(s: &str, record: usize) -> Result<T, FormatError> {
    s.parse().map_err(|_| FormatError::Malformed {
        record,
        detail: format!("cannot parse `{s}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        let mut w = RecordWriter::new(Header::new("demo", 2, "a,b".into()).with("dim", 2));
        w.record([fmt_real(0.1), fmt_real(-3.0)]);
        w.record([fmt_real(f64::MIN_POSITIVE), fmt_real(1e300)]);
        w.render()
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MAX] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn parse_rendered() {
        let f = RecordFile::parse(&sample(), "demo").unwrap();
        assert_eq!(f.header.parse_key::<usize>("dim").unwrap(), 2);
        assert_eq!(f.reals(0, 2).unwrap(), vec![0.1, -3.0]);
        assert!(f.expect_schema("a,b").is_ok());
        assert!(matches!(f.expect_schema("a,c"), Err(FormatError::SchemaMismatch(_))));
    }

    #[test]
    fn version_mismatch() {
        let text = sample().replacen("version=1", "version=2", 1);
        assert!(matches!(
            RecordFile::parse(&text, "demo"),
            Err(FormatError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn truncated_mid_record() {
        let text = sample();
        let cut = &text[..text.len() - 10];
        let f = RecordFile::parse(cut, "demo").unwrap();
        assert!(matches!(f.reals(1, 2), Err(FormatError::Truncated { record: 1 })));
    }

    #[test]
    fn missing_records() {
        let text = sample();
        let first_two: Vec<&str> = text.lines().take(2).collect();
        let f = RecordFile::parse(&(first_two.join("\n") + "\n"), "demo").unwrap();
        assert!(f.reals(0, 2).is_ok());
        assert!(matches!(f.reals(1, 2), Err(FormatError::Truncated { record: 1 })));
    }

    #[test]
    fn wrong_format_name() {
        assert!(matches!(
            RecordFile::parse(&sample(), "other"),
            Err(FormatError::WrongFormat { .. })
        ));
    }
}
