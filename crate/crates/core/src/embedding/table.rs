use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{l2_norm, Role, UnitVector, VectorProvider};
use crate::error::{Error, Result};

/// Hex SHA-256 of the trimmed text; the row key used by [`TableProvider`].
pub fn text_fingerprint(text: &str) -> String {
    hex::encode(Sha256::digest(text.trim().as_bytes()))
}

/// Reads an embedding table: a `#dim=<d>` header followed by
/// `id<TAB>v1,v2,...,vd` rows. Blank lines are skipped. Vectors are
/// normalised on load.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, UnitVector>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, path)
}

fn parse_table(text: &str, path: &Path) -> Result<BTreeMap<String, UnitVector>> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut dim = None;
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some(d) = dim else {
            let d = line
                .strip_prefix("#dim=")
                .ok_or_else(|| err(lineno, "missing `#dim=<d>` header".into()))?
                .trim()
                .parse::<usize>()
                .map_err(|e| err(lineno, format!("bad dimension: {e}")))?;
            if d == 0 {
                return Err(err(lineno, "dimension must be positive".into()));
            }
            dim = Some(d);
            continue;
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(err(lineno, format!("expected 2 tab-separated columns, found {}", cols.len())));
        }
        let id = cols[0].to_string();
        if id.is_empty() {
            return Err(err(lineno, "empty id".into()));
        }
        let values = cols[1]
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(lineno, format!("bad float: {e}")))?;
        if values.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: values.len(),
            });
        }
        // rows written by us are already unit-norm; keep their exact bits
        let v = match UnitVector::from_normalized(values.clone()) {
            Ok(v) if (l2_norm(v.as_slice()) - 1.0).abs() < 1e-12 => v,
            _ => UnitVector::normalize(values).map_err(|e| err(lineno, e.to_string()))?,
        };
        if out.insert(id.clone(), v).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    if dim.is_none() {
        return Err(err(1, "missing `#dim=<d>` header".into()));
    }
    Ok(out)
}

/// Writes rows in the table format, with shortest round-trip float formatting.
pub fn write_embedding_table<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    rows: impl IntoIterator<Item = (&'a str, &'a UnitVector)>,
) -> Result<()> {
    let mut out = format!("#dim={dim}\n");
    for (id, v) in rows {
        out.push_str(id);
        out.push('\t');
        for (i, x) in v.as_slice().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x:?}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Precomputed vectors looked up by [`text_fingerprint`].
///
/// One table serves every role; token lookups fingerprint the token.
#[derive(Debug, Clone)]
pub struct TableProvider {
    table: BTreeMap<String, UnitVector>,
    dim: usize,
}

impl TableProvider {
    pub fn open(path: impl AsRef<Path>, d_style: usize, d_sem: usize) -> Result<Self> {
        let table = load_embedding_table(path)?;
        Self::from_table(table, d_style, d_sem)
    }

    pub fn from_table(table: BTreeMap<String, UnitVector>, d_style: usize, d_sem: usize) -> Result<Self> {
        if d_style != d_sem {
            return Err(Error::Config("a file-backed table serves one dimension for all roles".into()));
        }
        if let Some(v) = table.values().find(|v| v.dim() != d_style) {
            return Err(Error::DimensionMismatch {
                expected: d_style,
                actual: v.dim(),
            });
        }
        Ok(Self { table, dim: d_style })
    }
}

impl VectorProvider for TableProvider {
    fn dim(&self, _role: Role) -> usize {
        self.dim
    }

    fn embed(&self, _role: Role, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts
            .iter()
            .map(|t| {
                let key = text_fingerprint(t);
                self.table.get(&key).cloned().ok_or(Error::UnknownText(key))
            })
            .collect()
    }
}
