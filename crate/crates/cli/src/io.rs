use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

/// One defect found while checking an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub file: PathBuf,
    /// 1-based line, when the defect is tied to one.
    pub line: Option<usize>,
    pub defect: String,
}

impl Diagnostic {
    pub fn new(file: &Path, line: Option<usize>, defect: impl Into<String>) -> Self {
        Diagnostic {
            file: file.to_path_buf(),
            line,
            defect: defect.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file.display(), l, self.defect),
            None => write!(f, "{}: {}", self.file.display(), self.defect),
        }
    }
}

pub type Checked<T> = Result<T, Vec<Diagnostic>>;

/// Parses every non-blank line; all malformed lines are reported.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Checked<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new(path, None, format!("cannot read: {e}"))])?;
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push((i + 1, v)),
            Err(e) => diags.push(Diagnostic::new(path, Some(i + 1), e.to_string())),
        }
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Checked<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new(path, None, format!("cannot read: {e}"))])?;
    serde_json::from_str(&text).map_err(|e| {
        let line = (e.line() > 0).then_some(e.line());
        vec![Diagnostic::new(path, line, e.to_string())]
    })
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

/// Self-describing report envelope.
#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub config: &'a C,
    pub result: R,
}

pub fn write_report<C: Serialize, R: Serialize>(path: &Path, command: &'static str, config: &C, result: R) -> std::io::Result<()> {
    let report = Report {
        toolkit_version: geoalign::TOOLKIT_VERSION,
        command,
        config,
        result,
    };
    let mut text = serde_json::to_vec_pretty(&report).expect("report serializes");
    text.push(b'\n');
    write_atomic(path, &text)
}
