//! Line-oriented text format shared by all model files.
//!
//! A file starts with a magic line `<MAGIC> v<version>`, followed by records of
//! the form `<key> <value> <value> ...` separated by single spaces. Reals use
//! Rust's shortest round-trip formatting, so a write/read cycle is lossless.
//! Layouts of each model type are described in `docs/FORMATS.md`.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("expected magic `{expected}`, found `{found}`")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {magic} version {version}")]
    UnsupportedVersion { magic: String, version: u32 },
    #[error("line {line}: expected key `{expected}`, found `{found}`")]
    UnexpectedKey { line: usize, expected: String, found: String },
    #[error("line {line}: {msg}")]
    BadValue { line: usize, msg: String },
    #[error("unexpected end of file, expected `{0}`")]
    UnexpectedEof(String),
}

#[derive(Default)]
pub struct TextWriter {
    out: String,
}

impl TextWriter {
    pub fn new(magic: &str, version: u32) -> Self {
        TextWriter { out: format!("{magic} v{version}\n") }
    }

    pub fn record<T: Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        self.out.push_str(key);
        for v in values {
            self.out.push(' ');
            self.out.push_str(&v.to_string());
        }
        self.out.push('\n');
        self
    }

    pub fn scalar<T: Display>(&mut self, key: &str, value: T) -> &mut Self {
        self.record(key, &[value])
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub struct TextReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> TextReader<'a> {
    /// Checks the magic line and returns the reader with the file's version.
    pub fn open(text: &'a str, magic: &str, max_version: u32) -> Result<(Self, u32), FormatError> {
        let mut lines = text.lines().enumerate();
        let first = lines.next().map(|(_, l)| l).unwrap_or("");
        let mut parts = first.split(' ');
        let found = parts.next().unwrap_or("");
        if found != magic {
            return Err(FormatError::BadMagic { expected: magic.into(), found: found.into() });
        }
        let version = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| FormatError::BadValue { line: 1, msg: "missing version".into() })?;
        if version == 0 || version > max_version {
            return Err(FormatError::UnsupportedVersion { magic: magic.into(), version });
        }
        Ok((TextReader { lines, line_no: 1 }, version))
    }

    /// Next record's values, requiring its key to be `key`.
    pub fn record(&mut self, key: &str) -> Result<Vec<&'a str>, FormatError> {
        let (idx, line) = self.lines.next().ok_or_else(|| FormatError::UnexpectedEof(key.into()))?;
        self.line_no = idx + 1;
        let mut parts = line.split(' ');
        let found = parts.next().unwrap_or("");
        if found != key {
            return Err(FormatError::UnexpectedKey { line: self.line_no, expected: key.into(), found: found.into() });
        }
        Ok(parts.filter(|p| !p.is_empty()).collect())
    }

    pub fn values<T: FromStr>(&mut self, key: &str, len: usize) -> Result<Vec<T>, FormatError> {
        let raw = self.record(key)?;
        if raw.len() != len {
            return Err(self.bad(format!("`{key}` has {} values, expected {len}", raw.len())));
        }
        raw.iter()
            .map(|s| s.parse::<T>().map_err(|_| self.bad(format!("cannot parse `{s}` in `{key}`"))))
            .collect()
    }

    pub fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T, FormatError> {
        Ok(self.values(key, 1)?.remove(0))
    }

    pub fn bad(&self, msg: String) -> FormatError {
        FormatError::BadValue { line: self.line_no, msg }
    }

    pub fn expect_end(&mut self) -> Result<(), FormatError> {
        match self.lines.find(|(_, l)| !l.trim().is_empty()) {
            None => Ok(()),
            Some((i, l)) => Err(FormatError::BadValue { line: i + 1, msg: format!("trailing content `{l}`") }),
        }
    }
}
