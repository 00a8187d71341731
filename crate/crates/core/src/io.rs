//! Model files and dataset CSVs.
//!
//! A model file is a JSON object `{"p": .., "sigma": [[..], ..], "meta": ..}`
//! with every entry written to 17 significant digits, so Σ survives a round
//! trip bit for bit. A dataset is a CSV with header `x1,...,xp` and rows of
//! 0/1, preceded by `#key=value` comment lines.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::BinaryVector;
use crate::sampler::{Dataset, RNG_ALGORITHM};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub sigma: Matrix,
    pub meta: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    p: usize,
    sigma: Vec<Vec<f64>>,
    #[serde(default)]
    meta: Option<Value>,
}

pub fn model_to_string(sigma: &Matrix, meta: Option<&Value>) -> String {
    let p = sigma.rows();
    let mut s = String::new();
    let _ = writeln!(s, "{{\n  \"p\": {p},\n  \"sigma\": [");
    for i in 0..p {
        let row: Vec<String> = (0..p).map(|j| format!("{:.16e}", sigma[(i, j)])).collect();
        let sep = if i + 1 < p { "," } else { "" };
        let _ = writeln!(s, "    [{}]{sep}", row.join(", "));
    }
    s.push_str("  ]");
    if let Some(m) = meta {
        let _ = write!(s, ",\n  \"meta\": {m}");
    }
    s.push_str("\n}\n");
    s
}

pub fn write_model<W: Write>(mut w: W, sigma: &Matrix, meta: Option<&Value>) -> Result<()> {
    w.write_all(model_to_string(sigma, meta).as_bytes())?;
    Ok(())
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    if raw.sigma.len() != raw.p {
        return Err(Error::Parse(format!(
            "model file: p = {} but sigma has {} rows",
            raw.p,
            raw.sigma.len()
        )));
    }
    for (i, row) in raw.sigma.iter().enumerate() {
        if row.len() != raw.p {
            return Err(Error::Parse(format!(
                "model file: sigma row {} has {} entries, expected {}",
                i + 1,
                row.len(),
                raw.p
            )));
        }
    }
    let sigma = Matrix::from_row_major(raw.p, raw.p, raw.sigma.concat())?;
    Ok(ModelFile { sigma, meta: raw.meta })
}

pub fn read_model<R: Read>(mut r: R) -> Result<ModelFile> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_model(&text)
}

/// First 16 hex digits of SHA-256 over the little-endian bytes of Σ.
pub fn model_hash(sigma: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((sigma.rows() as u64).to_le_bytes());
    for v in sigma.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// `#key=value` lines preceding a dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetMeta {
    pub entries: Vec<(String, String)>,
}

impl DatasetMeta {
    pub fn for_sample(seed: u64, model_hash: &str) -> Self {
        Self {
            entries: vec![
                ("seed".into(), seed.to_string()),
                ("rng".into(), RNG_ALGORITHM.into()),
                ("model_hash".into(), model_hash.into()),
            ],
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn write_dataset<W: Write>(w: W, data: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    for (k, v) in &meta.entries {
        writeln!(w, "#{k}={v}")?;
    }
    let header: Vec<String> = (1..=data.dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::with_capacity(2 * data.dim());
    for row in data.rows() {
        line.clear();
        for (i, &b) in row.bits().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push(if b { '1' } else { '0' });
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(Dataset, DatasetMeta)> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;

    let mut meta = DatasetMeta::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line[1..].split_once('=') {
            meta.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("dataset header: {e}")))?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse("dataset: missing header".into()));
    }
    for (i, name) in header.iter().enumerate() {
        if name != format!("x{}", i + 1) {
            return Err(Error::Parse(format!(
                "dataset header: column {} is '{name}', expected 'x{}'",
                i + 1,
                i + 1
            )));
        }
    }
    let p = header.len();
    let mut data = Dataset::new(p);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("dataset: {e}")))?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != p {
            return Err(Error::Parse(format!(
                "dataset line {line}: {} fields, expected {p}",
                record.len()
            )));
        }
        let bits = record
            .iter()
            .enumerate()
            .map(|(j, f)| match f {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse(format!(
                    "dataset line {line}, field {}: expected 0 or 1, got '{other}'",
                    j + 1
                ))),
            })
            .collect::<Result<Vec<bool>>>()?;
        data.push(BinaryVector::new(bits))?;
    }
    Ok((data, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let sigma = Matrix::from_rows(&[[0.1 + 0.2, -1.0 / 3.0], [f64::MIN_POSITIVE, 1e-300 * 7.0]]).unwrap();
        let meta = json!({"source": "test"});
        let text = model_to_string(&sigma, Some(&meta));
        let back = parse_model(&text).unwrap();
        for (a, b) in back.sigma.as_slice().iter().zip(sigma.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.meta, Some(meta));
    }

    #[test]
    fn model_parse_errors() {
        assert!(matches!(parse_model("{"), Err(Error::Parse(_))));
        let bad = r#"{"p": 2, "sigma": [[0.5, 0.1], [0.2]]}"#;
        let err = parse_model(bad).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        let bad = r#"{"p": 3, "sigma": [[0.5]]}"#;
        assert!(parse_model(bad).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let rows = [0b101u64, 0b000, 0b111, 0b010];
        let data = Dataset::from_rows(3, rows.iter().map(|&m| BinaryVector::from_mask(m, 3)).collect()).unwrap();
        let meta = DatasetMeta::for_sample(42, "abcd");
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, &meta).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#seed=42\n#rng=chacha20\n#model_hash=abcd\nx1,x2,x3\n1,0,1\n"));
        let (back, back_meta) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back, data);
        assert_eq!(back_meta, meta);
        assert_eq!(back_meta.get("seed"), Some("42"));
    }

    #[test]
    fn header_only_dataset() {
        let (data, _) = read_dataset("x1,x2\n".as_bytes()).unwrap();
        assert_eq!(data.dim(), 2);
        assert!(data.is_empty());
    }

    #[test]
    fn dataset_errors_carry_position() {
        let err = read_dataset("x1,x2\n1,0\n1,2\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("field 2"), "{err}");
        assert!(read_dataset("a,b\n1,0\n".as_bytes()).is_err());
        assert!(read_dataset("x1,x2\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn hash_depends_on_entries() {
        let a = Matrix::from_rows(&[[0.5]]).unwrap();
        let b = Matrix::from_rows(&[[0.25]]).unwrap();
        assert_ne!(model_hash(&a), model_hash(&b));
        assert_eq!(model_hash(&a).len(), 16);
    }
}
