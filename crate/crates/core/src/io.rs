//! File formats: curve CSV (`strain,stress`), JSON helpers and content hashing.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, ResponseCurve, Result};

/// Shortest round-trip decimal form; keeps re-runs byte-identical.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn parse_curve_csv(text: &str, origin: &Path) -> Result<ResponseCurve> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(origin, e))?.clone();
    if headers.len() != 2 || &headers[0] != "strain" || &headers[1] != "stress" {
        return Err(Error::parse(
            origin,
            format!("expected header `strain,stress`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut strain = Vec::new();
    let mut stress = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(origin, e))?;
        let field = |k: usize| -> Result<f64> {
            record
                .get(k)
                .ok_or_else(|| Error::parse(origin, format!("row {}: missing column", i + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::parse(origin, format!("row {}: {e}", i + 1)))
        };
        strain.push(field(0)?);
        stress.push(field(1)?);
    }
    ResponseCurve::new(strain, stress)
}

pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<ResponseCurve> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curve_csv(&text, path)
}

pub fn curve_to_csv(curve: &ResponseCurve) -> String {
    let mut out = String::from("strain,stress\n");
    for (e, s) in curve.strain().iter().zip(curve.stress()) {
        out.push_str(&fmt_f64(*e));
        out.push(',');
        out.push_str(&fmt_f64(*s));
        out.push('\n');
    }
    out
}

pub fn write_curve_csv(path: impl AsRef<Path>, curve: &ResponseCurve) -> Result<()> {
    write_text(path, &curve_to_csv(curve))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Like [`read_json`], but content errors are configuration errors.
pub fn read_config_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => {
            Error::InvalidConfig(format!("{}: {e}", path.display()))
        }
        _ => Error::parse(path, e),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 14];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_csv_round_trip_is_bit_exact() {
        let c = ResponseCurve::new(vec![0.0, 1e-4, 2.5e-4], vec![0.0, 3.141592653589793, 1.0 / 3.0]).unwrap();
        let text = curve_to_csv(&c);
        assert!(text.starts_with("strain,stress\n"));
        let back = parse_curve_csv(&text, Path::new("mem")).unwrap();
        for (a, b) in back.stress().iter().zip(c.stress()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bad_header_and_bad_numbers() {
        assert!(parse_curve_csv("x,y\n0,0\n1,1\n", Path::new("m")).is_err());
        assert!(parse_curve_csv("strain,stress\n0,0\n1,abc\n", Path::new("m")).is_err());
        assert!(parse_curve_csv("strain,stress\n0,0\n1,1,000\n", Path::new("m")).is_err());
    }
}
