//! SBAT tensor files and tab-separated dataset manifests.
//!
//! SBAT layout, all integers little-endian:
//!
//! | bytes        | content                              |
//! |--------------|--------------------------------------|
//! | 0..4         | magic `SBAT`                         |
//! | 4..8         | `u32` version = 1                    |
//! | 8..20        | `u32` C, H, W                        |
//! | 20..         | C·H·W `f32` LE values, `(c, y, x)`   |

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::binfmt::{self, Reader};
use crate::error::{Result, SbaError};
use crate::scalar::Real;
use crate::tensor::FeatureTensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"SBAT";
pub const TENSOR_HEADER_LEN: usize = 20;

pub fn encode_tensor<T: Real>(tensor: &FeatureTensor<T>) -> Result<Vec<u8>> {
    let fields = [
        binfmt::to_u32(tensor.channels(), "channel count")?,
        binfmt::to_u32(tensor.height(), "height")?,
        binfmt::to_u32(tensor.width(), "width")?,
    ];
    let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 4 * tensor.data().len());
    binfmt::put_header(&mut out, TENSOR_MAGIC, &fields);
    binfmt::put_reals(&mut out, tensor.data());
    Ok(out)
}

pub fn decode_tensor<T: Real>(bytes: &[u8]) -> Result<FeatureTensor<T>> {
    let mut r = Reader::open(bytes, TENSOR_MAGIC, "SBAT")?;
    let c = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    if c == 0 || h == 0 || w == 0 {
        return Err(SbaError::Format(format!("SBAT: zero dimension {c}x{h}x{w}")));
    }
    let count = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| SbaError::Corrupt("SBAT: dimensions overflow".into()))?;
    let data = r.reals(count)?;
    r.finish()?;
    FeatureTensor::new(c, h, w, data)
}

pub fn read_tensor<T: Real>(path: impl AsRef<Path>) -> Result<FeatureTensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    decode_tensor(&bytes).map_err(|e| annotate(e, path))
}

pub fn write_tensor<T: Real>(tensor: &FeatureTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(tensor)?;
    fs::write(path, bytes).map_err(|e| SbaError::io(path.display().to_string(), e))
}

fn annotate(err: SbaError, path: &Path) -> SbaError {
    let at = |m: String| format!("{}: {m}", path.display());
    match err {
        SbaError::Format(m) => SbaError::Format(at(m)),
        SbaError::Corrupt(m) => SbaError::Corrupt(at(m)),
        SbaError::Value(m) => SbaError::Value(at(m)),
        SbaError::Shape(m) => SbaError::Shape(at(m)),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image_id: String,
    pub tensor_path: String,
    pub label: Option<String>,
}

/// Ordered list of images. Record position is the index used by every
/// downstream artifact (SBAV rows, ranking tie-breaks).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            validate_field(&r.image_id, "image id")?;
            validate_field(&r.tensor_path, "tensor path")?;
            if let Some(label) = &r.label {
                validate_field(label, "label")?;
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(SbaError::Duplicate(r.image_id.clone()));
            }
        }
        Ok(Self {
            records,
            base_dir: None,
        })
    }

    /// Relative tensor paths are resolved against this directory.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.image_id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.records.iter().map(|r| r.label.clone()).collect()
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        let p = Path::new(&record.tensor_path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.image_id);
            out.push('\t');
            out.push_str(&r.tensor_path);
            if let Some(label) = &r.label {
                out.push('\t');
                out.push_str(label);
            }
            out.push('\n');
        }
        out
    }
}

fn validate_field(value: &str, what: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(SbaError::Format(format!(
            "{what} {value:?} is empty or contains tab/newline"
        )));
    }
    Ok(())
}

/// Parses manifest text: `image_id<TAB>tensor_path[<TAB>label]` per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(SbaError::Format(format!(
                "manifest line {}: expected 2 or 3 tab-separated fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        records.push(ManifestRecord {
            image_id: fields[0].to_string(),
            tensor_path: fields[1].to_string(),
            label: fields.get(2).map(|s| s.to_string()),
        });
    }
    DatasetManifest::new(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SbaError::io(path.display().to_string(), e))?;
    let manifest = parse_manifest(&text)?;
    Ok(match path.parent() {
        Some(dir) => manifest.with_base_dir(dir),
        None => manifest,
    })
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_text()).map_err(|e| SbaError::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_header_and_payload() {
        let mut bytes = b"SBAT".to_vec();
        for v in [1u32, 2, 1, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&3.0f32.to_le_bytes());
        bytes.extend_from_slice(&4.0f32.to_le_bytes());
        let t: FeatureTensor<f32> = decode_tensor(&bytes).unwrap();
        assert_eq!((t.channels(), t.height(), t.width()), (2, 1, 1));
        assert_eq!(t.get(0, 0, 0), 3.0);
        assert_eq!(t.get(1, 0, 0), 4.0);

        let truncated = &bytes[..bytes.len() - 2];
        assert!(matches!(decode_tensor::<f32>(truncated), Err(SbaError::Corrupt(_))));
    }

    #[test]
    fn unit_tensor_file_size() {
        let t = FeatureTensor::<f32>::zeros(1, 1, 1).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[..4], b"SBAT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_version_and_nan() {
        let t = FeatureTensor::<f32>::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let good = encode_tensor(&t).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensor::<f32>(&bad), Err(SbaError::Format(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_tensor::<f32>(&bad), Err(SbaError::Format(_))));

        let mut bad = good.clone();
        bad[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_tensor::<f32>(&bad), Err(SbaError::Value(_))));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_tensor::<f32>(&bad), Err(SbaError::Corrupt(_))));
    }

    #[test]
    fn manifest_parsing() {
        let m = parse_manifest("a\t/x.sbat\nb\t/y.sbat\tcathedral\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records()[0].label, None);
        assert_eq!(m.records()[1].label.as_deref(), Some("cathedral"));

        assert!(matches!(
            parse_manifest("a\t/x.sbat\na\t/y.sbat\n"),
            Err(SbaError::Duplicate(id)) if id == "a"
        ));
        assert!(matches!(parse_manifest("lonely\n"), Err(SbaError::Format(_))));
        assert!(parse_manifest("").unwrap().is_empty());
        assert_eq!(parse_manifest("# header\na\tp\n").unwrap().len(), 1);
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let m = parse_manifest("a\tt/a.sbat\nb\t/abs/b.sbat\n")
            .unwrap()
            .with_base_dir("/data");
        assert_eq!(m.resolve(&m.records()[0]), PathBuf::from("/data/t/a.sbat"));
        assert_eq!(m.resolve(&m.records()[1]), PathBuf::from("/abs/b.sbat"));
    }
}
