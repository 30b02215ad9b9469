//! Plain-text output helpers shared by the CSV and JSON writers.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Seventeen significant digits; parses back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Writes `# key: value` comment lines, a header row and the records.
pub fn write_csv(
    path: &Path,
    comments: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut file = File::create(path)?;
    for (k, v) in comments {
        writeln!(file, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Same as [`write_csv`] but into a string.
pub fn csv_string(
    comments: &[(String, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<String> {
    let mut out = String::new();
    for (k, v) in comments {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))?);
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 41.999_123_456_789_01, -2.5e-300, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn csv_with_comments() {
        let s = csv_string(
            &[("model".into(), "abc".into())],
            &["a", "b"],
            &[vec!["1".into(), "2".into()]],
        )
        .unwrap();
        assert_eq!(s, "# model: abc\na,b\n1,2\n");
    }
}
