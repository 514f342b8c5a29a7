//! Output directory handling: manifest, CSV tables, JSON summaries and
//! `--assert` checks against a summary.

use crate::CliError;
use serde::Serialize;
use serde_json::{Map, Value};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub overrides: Value,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
    pub timestamp: String,
    /// "ok", or the error that stopped the run after some outputs were written.
    pub status: String,
    pub outputs: Vec<String>,
}

/// Collects artifacts for one run and writes the manifest last.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    /// The directory itself is created on the first write.
    pub fn new(root: &Path) -> Self {
        OutputDir { root: root.to_path_buf(), files: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        if self.files.is_empty() {
            fs::create_dir_all(&self.root).map_err(|e| CliError::Io(format!("{}: {e}", self.root.display())))?;
        }
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(self.root.join(name))
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let path = self.path(name)?;
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name)?;
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut fs::File) -> std::io::Result<()>,
    {
        let path = self.path(name)?;
        let mut file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        f(&mut file).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        manifest.outputs = std::mem::take(&mut self.files);
        fs::create_dir_all(&self.root).map_err(|e| CliError::Io(format!("{}: {e}", self.root.display())))?;
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Lt,
    Le,
    Gt,
    Ge,
}

/// `key<value`, `key<=value`, `key>value` or `key>=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    key: String,
    op: Op,
    bound: f64,
}

impl std::str::FromStr for Assertion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (pos, op, width) = [("<=", Op::Le), (">=", Op::Ge), ("<", Op::Lt), (">", Op::Gt)]
            .iter()
            .find_map(|(sym, op)| s.find(sym).map(|p| (p, *op, sym.len())))
            .ok_or_else(|| format!("expected key<value or key>value, got {s:?}"))?;
        let key = s[..pos].trim();
        if key.is_empty() {
            return Err(format!("missing key in {s:?}"));
        }
        let bound = s[pos + width..]
            .trim()
            .parse()
            .map_err(|_| format!("bad bound in {s:?}"))?;
        Ok(Assertion { key: key.to_string(), op, bound })
    }
}

impl std::fmt::Display for Assertion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let op = match self.op {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        };
        write!(f, "{}{}{}", self.key, op, self.bound)
    }
}

/// Checks every assertion against numeric fields of `summary`.
pub fn check_assertions(summary: &Map<String, Value>, asserts: &[Assertion]) -> Result<(), CliError> {
    let mut failed = Vec::new();
    for a in asserts {
        let value = summary.get(&a.key).and_then(Value::as_f64).ok_or_else(|| {
            let keys: Vec<&String> = summary.iter().filter(|(_, v)| v.is_number()).map(|(k, _)| k).collect();
            CliError::Usage(format!("cannot assert on `{}`; numeric summary fields: {keys:?}", a.key))
        })?;
        let ok = match a.op {
            Op::Lt => value < a.bound,
            Op::Le => value <= a.bound,
            Op::Gt => value > a.bound,
            Op::Ge => value >= a.bound,
        };
        if !ok {
            failed.push(format!("{a} (got {value})"));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(failed.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_assertions() {
        let a: Assertion = "residual<0.012".parse().unwrap();
        assert_eq!(a, Assertion { key: "residual".into(), op: Op::Lt, bound: 0.012 });
        let b: Assertion = " time_below >= 1e-7 ".parse().unwrap();
        assert_eq!(b.op, Op::Ge);
        assert_eq!(b.bound, 1e-7);
        assert!("residual".parse::<Assertion>().is_err());
        assert!("<3".parse::<Assertion>().is_err());
        assert!("x<abc".parse::<Assertion>().is_err());
    }

    #[test]
    fn assertion_outcomes() {
        let mut m = Map::new();
        m.insert("residual".into(), Value::from(0.01));
        m.insert("name".into(), Value::from("x"));
        assert!(check_assertions(&m, &["residual<0.012".parse().unwrap()]).is_ok());
        assert!(matches!(
            check_assertions(&m, &["residual<0.005".parse().unwrap()]),
            Err(CliError::Assertion(_))
        ));
        assert!(matches!(check_assertions(&m, &["name<1".parse().unwrap()]), Err(CliError::Usage(_))));
    }
}
