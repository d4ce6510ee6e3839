use std::fs;
use std::path::{Path, PathBuf};

use nvunmix::io::format_sig;
use nvunmix::{Error, Result, Warning};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Diagnostics are written at the top
/// level of the JSON document next to the fixed fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub timestamp: String,
    pub inputs: Vec<InputRecord>,
    pub parameters: Value,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<Value>,
    #[serde(flatten)]
    pub diagnostics: Map<String, Value>,
}

impl RunReport {
    pub fn new(command: &str, parameters: Value) -> Self {
        RunReport {
            command: command.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            inputs: Vec::new(),
            parameters,
            outputs: Vec::new(),
            warnings: Vec::new(),
            diagnostics: Map::new(),
        }
    }

    /// Records an input file with the SHA-256 of its bytes.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn diag(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("diagnostic serializes");
        self.diagnostics.insert(key.to_string(), v);
    }

    pub fn warn(&mut self, warnings: &[Warning]) {
        self.warnings.extend(
            warnings
                .iter()
                .map(|w| serde_json::to_value(w).expect("warning serializes")),
        );
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), format!("run report: {e}")))
}

fn show(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if !(n.is_i64() || n.is_u64()) => format_sig(x, 6),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn show_tree(out: &mut String, v: &Value, indent: usize) {
    if let Value::Object(m) = v {
        for (k, v) in m {
            match v {
                Value::Object(_) => {
                    out.push_str(&format!("{:indent$}{k}:\n", ""));
                    show_tree(out, v, indent + 2);
                }
                _ => out.push_str(&format!("{:indent$}{k}: {}\n", "", show(v))),
            }
        }
    }
}

/// Human-readable summary with numbers rounded to 6 significant digits.
pub fn pretty(r: &RunReport) -> String {
    let mut out = format!("command:   {}\ntimestamp: {}\n", r.command, r.timestamp);
    if !r.inputs.is_empty() {
        out.push_str("inputs:\n");
        for i in &r.inputs {
            out.push_str(&format!(
                "  {}  sha256:{}\n",
                i.path,
                &i.sha256[..16.min(i.sha256.len())]
            ));
        }
    }
    if r.parameters.as_object().is_some_and(|m| !m.is_empty()) {
        out.push_str("parameters:\n");
        show_tree(&mut out, &r.parameters, 2);
    }
    if !r.diagnostics.is_empty() {
        out.push_str("diagnostics:\n");
        show_tree(&mut out, &Value::Object(r.diagnostics.clone()), 2);
    }
    if !r.warnings.is_empty() {
        out.push_str("warnings:\n");
        for w in &r.warnings {
            out.push_str(&format!("  {w}\n"));
        }
    }
    if !r.outputs.is_empty() {
        out.push_str("outputs:\n");
        for o in &r.outputs {
            out.push_str(&format!("  {o}\n"));
        }
    }
    out
}

/// `<dir>/<file name of stem>.<suffix>`, keeping any directory in `stem`.
pub fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
