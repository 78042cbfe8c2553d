use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use defect_foundry::format::{round_json, to_json_string};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Exit-code classes: 1 for bad input, 2 when the analysis itself fails.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Analysis(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Analysis(_) => 2,
        }
    }

    pub fn input(msg: impl fmt::Display) -> Self {
        CliError::Input(msg.to_string())
    }

    pub fn analysis(msg: impl fmt::Display) -> Self {
        CliError::Analysis(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Analysis(m) => write!(f, "analysis failed: {m}"),
        }
    }
}

impl From<defect_foundry::Error> for CliError {
    fn from(e: defect_foundry::Error) -> Self {
        match e {
            defect_foundry::Error::Numerical(_) => CliError::analysis(e),
            _ => CliError::input(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Strict JSON config; a missing path yields the command defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), e.line())))
}

/// Rows of a headed CSV. Columns named in `required` must be present; each row is
/// returned with those columns parsed as `f64`, in the order requested.
pub fn read_columns(path: &Path, required: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let at = |line: u64, msg: &dyn fmt::Display| {
        CliError::input(format!("{}:{line}: {msg}", path.display()))
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| at(0, &e))?;
    let headers = reader.headers().map_err(|e| at(1, &e))?.clone();
    let idx: Vec<usize> = required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| at(1, &format!("missing column `{name}`")))
        })
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| at(e.position().map_or(0, |p| p.line()), &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = idx
            .iter()
            .zip(required)
            .map(|(&i, name)| {
                let field = rec.get(i).unwrap_or("");
                field
                    .parse::<f64>()
                    .map_err(|_| at(line, &format!("bad {name} value `{field}`")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Output directory of one command run; tracks written files for the manifest.
pub struct Run {
    command: &'static str,
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, dir: &Path, format: Format) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::input(format!("cannot create output dir {}: {e}", dir.display()))
        })?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Register a file written by a library routine.
    pub fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        self.record(name);
        Ok(())
    }

    /// Write a report as `<stem>.json`, or as `<stem>.csv` (`key,value` rows of the
    /// flattened document) under `--format csv`. Returns the file name.
    pub fn report<T: Serialize>(&mut self, stem: &str, value: &T) -> CliResult<String> {
        match self.format {
            Format::Json => {
                let name = format!("{stem}.json");
                self.write(&name, &to_json_string(value)?)?;
                Ok(name)
            }
            Format::Csv => {
                let mut v = serde_json::to_value(value).map_err(defect_foundry::Error::from)?;
                round_json(&mut v);
                let mut rows = Vec::new();
                flatten("", &v, &mut rows);
                let mut out = String::from("key,value\n");
                for (k, val) in rows {
                    out.push_str(&format!("{},{}\n", csv_field(&k), csv_field(&val)));
                }
                let name = format!("{stem}.csv");
                self.write(&name, &out)?;
                Ok(name)
            }
        }
    }

    /// `manifest.json`: command, effective config and its SHA-256, seed, and the
    /// SHA-256 of every output. Only `created_unix_s` varies between identical runs.
    pub fn finish<C: Serialize>(self, config: &C, seed: Option<u64>) -> CliResult<()> {
        let config = serde_json::to_value(config).map_err(defect_foundry::Error::from)?;
        let config_text = serde_json::to_string(&config).map_err(defect_foundry::Error::from)?;
        let mut outputs = Vec::new();
        for name in &self.files {
            let bytes =
                fs::read(self.path(name)).map_err(|e| CliError::input(format!("{name}: {e}")))?;
            outputs.push(json!({ "file": name, "sha256": hex(&Sha256::digest(&bytes)) }));
        }
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config_sha256": hex(&Sha256::digest(config_text.as_bytes())),
            "config": config,
            "outputs": outputs,
            "created_unix_s": created,
        });
        let path = self.path("manifest.json");
        fs::write(&path, to_json_string(&manifest)?)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| flatten(&key(k), x, rows)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, x)| flatten(&key(&i.to_string()), x, rows)),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
