//! CSV output with a provenance header, and the trace and measurement input
//! formats. Header lines start with `# ` and carry `key=value` pairs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qndsim_core::jumps::{IqTrace, TraceMeta};

use crate::error::CliError;

/// Identifies how an output was produced: tool version, config hash, seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_hash: String, seed: Option<u64>) -> Self {
        Provenance { version: env!("CARGO_PKG_VERSION").to_string(), config_hash, seed }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Provenance { seed: Some(seed), ..self.clone() }
    }

    fn header_lines(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("qndsim_version".to_string(), self.version.clone()),
            ("config_sha256".to_string(), self.config_hash.clone()),
        ];
        if let Some(s) = self.seed {
            v.push(("seed".to_string(), s.to_string()));
        }
        v
    }
}

/// Writes `# key=value` lines, then a CSV table.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, prov: &Provenance, extra: &[(&str, String)], columns: &[&str]) -> Result<Self, CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = BufWriter::new(File::create(path)?);
        for (k, v) in prov.header_lines() {
            writeln!(file, "# {k}={v}")?;
        }
        for (k, v) in extra {
            writeln!(file, "# {k}={v}")?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns)?;
        Ok(CsvOut { path: path.to_path_buf(), writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest round-trip decimal form; non-finite values as `NaN`/`inf`/`-inf`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Parsed `# key=value` header plus data rows.
pub struct CsvIn {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvIn {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn read_numeric_csv(path: &Path) -> Result<CsvIn, CliError> {
    let err = |msg: String| CliError::Input { path: path.display().to_string(), msg };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut header = Vec::new();
    let mut line = String::new();
    let first_data_line = loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| err(e.to_string()))? == 0 {
            return Err(err("no column header".into()));
        }
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        break t.to_string();
    };
    let columns: Vec<String> = first_data_line.split(',').map(|c| c.trim().to_string()).collect();
    let mut csv = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in csv.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("row {}: not a number: {f:?}", k + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != columns.len() {
            return Err(err(format!("row {} has {} fields, expected {}", k + 1, row.len(), columns.len())));
        }
        rows.push(row);
    }
    Ok(CsvIn { header, columns, rows })
}

pub const TRACE_COLUMNS: [&str; 3] = ["index", "I", "Q"];

pub fn write_trace(path: &Path, prov: &Provenance, trace: &IqTrace) -> Result<PathBuf, CliError> {
    let extra = [
        ("dt_ns", num(trace.dt_ns)),
        ("sigma", num(trace.meta.sigma)),
        ("q_g", num(trace.meta.q_g)),
        ("q_e", num(trace.meta.q_e)),
    ];
    let mut out = CsvOut::create(path, prov, &extra, &TRACE_COLUMNS)?;
    for k in 0..trace.len() {
        out.row([k.to_string(), num(trace.i[k]), num(trace.q[k])])?;
    }
    out.finish()
}

pub fn read_trace(path: &Path) -> Result<IqTrace, CliError> {
    let data = read_numeric_csv(path)?;
    let err = |msg: &str| CliError::Input { path: path.display().to_string(), msg: msg.to_string() };
    let key = |k: &str| -> Result<f64, CliError> {
        data.get(k).ok_or_else(|| err(&format!("missing header {k}")))?.parse().map_err(|_| err(&format!("bad header {k}")))
    };
    let (ci, cq) = match (data.column("I"), data.column("Q")) {
        (Some(i), Some(q)) => (i, q),
        _ => return Err(err("trace needs I and Q columns")),
    };
    let meta = TraceMeta { sigma: key("sigma")?, q_g: key("q_g")?, q_e: key("q_e")? };
    let i = data.rows.iter().map(|r| r[ci]).collect();
    let q = data.rows.iter().map(|r| r[cq]).collect();
    Ok(IqTrace::new(key("dt_ns")?, i, q, meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let meta = TraceMeta { sigma: 1.0, q_g: 3.0, q_e: -3.0 };
        let trace = IqTrace::new(100.0, vec![0.1, -0.2, 1.0 / 3.0], vec![3.0, -2.9, 1e-17], meta).unwrap();
        write_trace(&path, &Provenance::new("abc".into(), Some(4)), &trace).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back, trace);
        let data = read_numeric_csv(&path).unwrap();
        assert_eq!(data.get("seed"), Some("4"));
        assert_eq!(data.get("config_sha256"), Some("abc"));
    }

    #[test]
    fn missing_header_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "index,I,Q\n0,1,2\n").unwrap();
        assert!(matches!(read_trace(&path), Err(CliError::Input { .. })));
    }
}
