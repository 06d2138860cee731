//! CSV and binary dataset files.
//!
//! CSV: header `y,a,f0,...,f{d-1}`, one row per sample, LF or CRLF.
//!
//! Binary (all integers little-endian):
//!
//! ```text
//! b"FDRF" | u32 version = 1 | u64 n | u64 d
//! n*d f32 features, row-major
//! n u8 labels
//! n u8 attributes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GroupedDataset;
use crate::error::{FdrError, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 4] = b"FDRF";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.csv` → CSV, anything else → binary.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

impl FromStr for DataFormat {
    type Err = FdrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DataFormat::Csv),
            "binary" | "bin" => Ok(DataFormat::Binary),
            other => Err(FdrError::InvalidArgument(format!("unknown data format '{other}'"))),
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<GroupedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FdrError::io(path, e))?;
    let reader = BufReader::new(file);
    let ds = match format {
        DataFormat::Csv => read_csv(reader)?,
        DataFormat::Binary => read_binary(reader)?,
    };
    Ok(ds.with_name(stem(path)))
}

pub fn save_dataset(ds: &GroupedDataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| FdrError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        DataFormat::Csv => write_csv(ds, &mut writer)?,
        DataFormat::Binary => write_binary(ds, &mut writer).map_err(|e| FdrError::io(path, e))?,
    }
    writer.flush().map_err(|e| FdrError::io(path, e))
}

fn parse_binary_field(field: &str, what: &str, row: usize) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(FdrError::malformed(row, format!("{what} '{other}' is not 0 or 1"))),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<GroupedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr
        .headers()
        .map_err(|e| FdrError::BadHeader(e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 2 || names[0] != "y" || names[1] != "a" {
        return Err(FdrError::BadHeader(format!(
            "expected 'y,a,f0,...', found '{}'",
            names.join(",")
        )));
    }
    for (j, name) in names[2..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(FdrError::BadHeader(format!("column {} should be 'f{j}', found '{name}'", j + 2)));
        }
    }
    let d = names.len() - 2;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut attributes = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| FdrError::malformed(row, e.to_string()))?;
        if record.len() != d + 2 {
            return Err(FdrError::malformed(
                row,
                format!("expected {} fields, found {}", d + 2, record.len()),
            ));
        }
        labels.push(parse_binary_field(&record[0], "label", row)?);
        attributes.push(parse_binary_field(&record[1], "attribute", row)?);
        for (j, field) in record.iter().skip(2).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| FdrError::malformed(row, format!("feature f{j} '{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(FdrError::malformed(row, format!("feature f{j} is not finite")));
            }
            data.push(v);
        }
    }
    let features = Matrix::from_vec(labels.len(), d, data)?;
    GroupedDataset::new("dataset", features, labels, attributes)
}

pub fn write_csv<W: Write>(ds: &GroupedDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| FdrError::InvalidArgument(format!("csv write failed: {e}"));
    let mut header = vec!["y".to_string(), "a".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len() {
        let mut record = vec![ds.labels()[i].to_string(), ds.attributes()[i].to_string()];
        // `{}` on f64 prints the shortest string that parses back to the same value.
        record.extend(ds.features().row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&record).map_err(csv_err)?;
    }
    wtr.flush()
        .map_err(|e| FdrError::InvalidArgument(format!("csv flush failed: {e}")))
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<GroupedDataset> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| FdrError::io("<binary dataset>", e))?;
    let found = bytes.len() as u64;
    if found < HEADER_LEN {
        return Err(FdrError::Truncated {
            expected: HEADER_LEN,
            found,
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(FdrError::BadHeader(format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(FdrError::BadHeader(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|f| f.checked_add(n.checked_mul(2)?))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| FdrError::BadHeader(format!("declared shape {n}x{d} overflows")))?;
    if found < expected {
        return Err(FdrError::Truncated { expected, found });
    }
    if found > expected {
        return Err(FdrError::BadHeader(format!(
            "{} trailing bytes after the declared {n}x{d} payload",
            found - expected
        )));
    }
    let (n, d) = (n as usize, d as usize);
    let mut offset = HEADER_LEN as usize;
    let data: Vec<f64> = bytes[offset..offset + n * d * 4]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    offset += n * d * 4;
    let labels = bytes[offset..offset + n].to_vec();
    offset += n;
    let attributes = bytes[offset..offset + n].to_vec();
    GroupedDataset::new("dataset", Matrix::from_vec(n, d, data)?, labels, attributes)
}

/// Features are stored as f32; values are rounded to nearest.
pub fn write_binary<W: Write>(ds: &GroupedDataset, mut writer: W) -> std::io::Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&VERSION.to_le_bytes())?;
    writer.write_all(&(ds.len() as u64).to_le_bytes())?;
    writer.write_all(&(ds.dim() as u64).to_le_bytes())?;
    for &v in ds.features().as_slice() {
        writer.write_all(&(v as f32).to_le_bytes())?;
    }
    writer.write_all(ds.labels())?;
    writer.write_all(ds.attributes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_csv() {
        let ds = read_csv("y,a,f0,f1\n0,1,0.5,-2\n1,0,3,4e-3\n".as_bytes()).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.features().row(1), &[3.0, 0.004]);
    }

    #[test]
    fn crlf_is_accepted() {
        let ds = read_csv("y,a,f0\r\n1,1,2.5\r\n0,0,1\r\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.attributes(), &[1, 0]);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let cases = [
            "y,a,f0\n0,0,1\n2,0,1\n",
            "y,a,f0\n0,0,1\n1,0,inf\n",
            "y,a,f0\n0,0,1\n1,0\n",
            "y,a,f0\n0,0,1\n1,0,abc\n",
        ];
        for text in cases {
            match read_csv(text.as_bytes()) {
                Err(FdrError::Malformed { row, .. }) => assert_eq!(row, 2, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            read_csv("a,y,f0\n0,0,1\n".as_bytes()),
            Err(FdrError::BadHeader(_))
        ));
        assert!(matches!(
            read_csv("y,a,f1\n0,0,1\n".as_bytes()),
            Err(FdrError::BadHeader(_))
        ));
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let csv = "y,a,f0,f1\n0,1,0.5,-2\n1,0,3,0.25\n1,1,-1,8\n";
        let ds = read_csv(csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_binary(&ds, &mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 3 * 2 * 4 + 6);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());

        let short = &buf[..buf.len() - 1];
        assert!(matches!(read_binary(short), Err(FdrError::Truncated { .. })));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_binary(long.as_slice()), Err(FdrError::BadHeader(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_binary(bad.as_slice()), Err(FdrError::BadHeader(_))));
    }
}
