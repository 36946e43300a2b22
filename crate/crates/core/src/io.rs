//! On-disk formats: data matrices as CSV, scalar chain traces as CSV,
//! dense matrices as a small packed binary format, truths and posterior
//! summaries as JSON. All writers go through an atomic temp-file + rename
//! so readers never observe a half-written artifact.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainTrace, ScalarRecord};
use crate::diagnostics::PosteriorSummary;
use crate::error::{Error, Result};
use crate::synth::{Design, SyntheticTruth};

/// Magic bytes opening the packed matrix format.
pub const MATRIX_MAGIC: &[u8; 4] = b"SFTR";

/// Writes `bytes` to `path` atomically: the data lands in a temporary file
/// in the same directory, which is then renamed over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn atomic_write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

/// A matrix read from CSV together with its header row, if one was present.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedMatrix {
    pub matrix: Array2<f64>,
    pub header: Option<Vec<String>>,
}

/// Reads a numeric CSV file. `header`: `Some(true)` means the first row is
/// column names, `Some(false)` means it is data, `None` means auto-detect
/// (a first row that does not fully parse as numbers is taken as a header).
/// Ragged rows and non-numeric cells are reported with their 1-based row
/// and column.
pub fn read_matrix_csv(path: &Path, header: Option<bool>) -> Result<LoadedMatrix> {
    let mut raw = String::new();
    File::open(path)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?
        .read_to_string(&mut raw)?;
    read_matrix_csv_str(&raw, header)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// `read_matrix_csv` on in-memory text.
pub fn read_matrix_csv_str(raw: &str, header: Option<bool>) -> Result<LoadedMatrix> {
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push((idx + 1, line.split(',').map(str::trim).collect()));
    }
    if rows.is_empty() {
        return Err(Error::format("no data rows"));
    }
    let parse_row = |fields: &[&str]| -> std::result::Result<Vec<f64>, usize> {
        fields
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse::<f64>().map_err(|_| c + 1))
            .collect()
    };
    let has_header = match header {
        Some(flag) => flag,
        None => parse_row(&rows[0].1).is_err(),
    };
    let header_names = if has_header {
        let (line_no, fields) = rows.remove(0);
        if rows.is_empty() {
            return Err(Error::format(format!(
                "row {line_no} looks like a header but no data rows follow"
            )));
        }
        Some(fields.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    } else {
        None
    };
    let width = rows[0].1.len();
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line_no, fields) in &rows {
        if fields.len() != width {
            return Err(Error::format(format!(
                "row {line_no} has {} fields, expected {width}",
                fields.len()
            )));
        }
        match parse_row(fields) {
            Ok(mut parsed) => values.append(&mut parsed),
            Err(col) => {
                return Err(Error::format(format!(
                    "row {line_no}, column {col}: '{}' is not a number",
                    fields[col - 1]
                )));
            }
        }
    }
    if let Some(names) = &header_names {
        if names.len() != width {
            return Err(Error::format(format!(
                "header has {} fields, data rows have {width}",
                names.len()
            )));
        }
    }
    let matrix = Array2::from_shape_vec((rows.len(), width), values)
        .expect("row-major construction from counted values");
    Ok(LoadedMatrix { matrix, header: header_names })
}

/// Writes a matrix as CSV, optionally with a header row, atomically.
pub fn write_matrix_csv(
    path: &Path,
    matrix: &ArrayView2<'_, f64>,
    header: Option<&[String]>,
) -> Result<()> {
    if let Some(names) = header {
        if names.len() != matrix.ncols() {
            return Err(Error::dimension(format!(
                "header has {} names for {} columns",
                names.len(),
                matrix.ncols()
            )));
        }
    }
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for row in matrix.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            // Round-trippable float formatting.
            out.push_str(ryu_format(*v).as_str());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Shortest decimal form that parses back to exactly the same f64.
fn ryu_format(v: f64) -> String {
    let mut s = format!("{v}");
    if s.parse::<f64>() != Ok(v) {
        s = format!("{v:?}");
    }
    s
}

/// Writes the per-iteration scalar trace (every sweep, burn-in included)
/// as CSV with columns `iteration,xi,support_size,psi`.
pub fn write_trace_csv(path: &Path, trace: &ChainTrace) -> Result<()> {
    let mut out = String::from("iteration,xi,support_size,psi\n");
    for rec in &trace.iterations {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.iteration,
            rec.xi,
            rec.support_size,
            ryu_format(rec.psi)
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a scalar trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<ScalarRecord>> {
    let mut raw = String::new();
    File::open(path)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?
        .read_to_string(&mut raw)?;
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == "iteration,xi,support_size,psi" => {}
        _ => {
            return Err(Error::format(format!(
                "{}: missing trace header 'iteration,xi,support_size,psi'",
                path.display()
            )));
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::format(format!(
                "{}: row {} has {} fields, expected 4",
                path.display(),
                idx + 1,
                fields.len()
            )));
        }
        let bad = |col: usize| {
            Error::format(format!(
                "{}: row {}, column {}: '{}' is not valid",
                path.display(),
                idx + 1,
                col + 1,
                fields[col]
            ))
        };
        records.push(ScalarRecord {
            iteration: fields[0].parse().map_err(|_| bad(0))?,
            xi: fields[1].parse().map_err(|_| bad(1))?,
            support_size: fields[2].parse().map_err(|_| bad(2))?,
            psi: fields[3].parse().map_err(|_| bad(3))?,
        });
    }
    Ok(records)
}

/// Writes a dense matrix in the packed binary format: a 16-byte header
/// (magic `SFTR`, u32 rows, u32 cols, u32 reserved = 0, all little-endian)
/// followed by row-major little-endian f64 values.
pub fn write_matrix_binary(path: &Path, matrix: &ArrayView2<'_, f64>) -> Result<()> {
    let rows = u32::try_from(matrix.nrows())
        .map_err(|_| Error::parameter("matrix has too many rows for the binary format"))?;
    let cols = u32::try_from(matrix.ncols())
        .map_err(|_| Error::parameter("matrix has too many columns for the binary format"))?;
    let mut bytes = Vec::with_capacity(16 + matrix.len() * 8);
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&rows.to_le_bytes());
    bytes.extend_from_slice(&cols.to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for v in matrix.rows().into_iter().flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Reads a matrix written by [`write_matrix_binary`].
pub fn read_matrix_binary(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::format(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 {
        return Err(fail("shorter than the 16-byte header"));
    }
    if &bytes[0..4] != MATRIX_MAGIC {
        return Err(fail("bad magic, not a packed matrix file"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| fail("header dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(fail(&format!(
            "payload is {} bytes, header promises {}",
            bytes.len(),
            expected
        )));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("counted values"))
}

/// JSON image of a synthetic truth; loadings are stored as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub design: Design,
    pub p: usize,
    pub r: usize,
    pub s: usize,
    pub noise_variance: f64,
    pub support: Vec<usize>,
    pub loadings: Vec<Vec<f64>>,
}

impl From<&SyntheticTruth> for TruthRecord {
    fn from(truth: &SyntheticTruth) -> Self {
        TruthRecord {
            design: truth.design,
            p: truth.p(),
            r: truth.r,
            s: truth.s,
            noise_variance: truth.noise_variance,
            support: truth.support.clone(),
            loadings: truth
                .loadings
                .rows()
                .into_iter()
                .map(|row| row.to_vec())
                .collect(),
        }
    }
}

impl TruthRecord {
    pub fn into_truth(self) -> Result<SyntheticTruth> {
        if self.loadings.len() != self.p {
            return Err(Error::format(format!(
                "truth file claims p={} but has {} loading rows",
                self.p,
                self.loadings.len()
            )));
        }
        let mut loadings = Array2::<f64>::zeros((self.p, self.r));
        for (j, row) in self.loadings.iter().enumerate() {
            if row.len() != self.r {
                return Err(Error::format(format!(
                    "loading row {} has {} entries, expected r={}",
                    j + 1,
                    row.len(),
                    self.r
                )));
            }
            for (k, &v) in row.iter().enumerate() {
                loadings[[j, k]] = v;
            }
        }
        if self.support.iter().any(|&j| j >= self.p) {
            return Err(Error::format("support index out of range"));
        }
        Ok(SyntheticTruth {
            loadings,
            noise_variance: self.noise_variance,
            support: self.support,
            r: self.r,
            s: self.s,
            design: self.design,
        })
    }
}

/// Writes the truth sidecar JSON next to a simulated dataset.
pub fn write_truth_json(path: &Path, truth: &SyntheticTruth) -> Result<()> {
    atomic_write_json(path, &TruthRecord::from(truth))
}

/// Reads a truth sidecar back.
pub fn read_truth_json(path: &Path) -> Result<SyntheticTruth> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot open {}: {e}", path.display())))?;
    let record: TruthRecord = serde_json::from_str(&raw)?;
    record.into_truth()
}

/// JSON image of a posterior summary. The model-covariance mean is not
/// embedded here; it is written separately in the packed binary format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub xi_mode: usize,
    pub xi_histogram: std::collections::BTreeMap<usize, usize>,
    pub support_histogram: std::collections::BTreeMap<usize, usize>,
    pub psi_mean: f64,
    pub psi_vector_mean: Option<Vec<f64>>,
    pub retained: usize,
    /// Shape of the covariance mean stored alongside.
    pub sigma_dim: [usize; 2],
}

impl From<&PosteriorSummary> for SummaryRecord {
    fn from(summary: &PosteriorSummary) -> Self {
        SummaryRecord {
            xi_mode: summary.xi_mode,
            xi_histogram: summary.xi_histogram.clone(),
            support_histogram: summary.support_histogram.clone(),
            psi_mean: summary.psi_mean,
            psi_vector_mean: summary.psi_vector_mean.as_ref().map(|v| v.to_vec()),
            retained: summary.retained,
            sigma_dim: [summary.sigma_mean.nrows(), summary.sigma_mean.ncols()],
        }
    }
}

/// Writes the posterior summary JSON.
pub fn write_summary_json(path: &Path, summary: &PosteriorSummary) -> Result<()> {
    atomic_write_json(path, &SummaryRecord::from(summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainSettings;
    use crate::rng::RngHandle;
    use ndarray::array;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("temp dir")
    }

    #[test]
    fn matrix_csv_roundtrips_without_header() {
        let dir = tmpdir();
        let path = dir.path().join("m.csv");
        let m = array![[1.5, -2.25e-7], [3.0, 0.1]];
        write_matrix_csv(&path, &m.view(), None).unwrap();
        let loaded = read_matrix_csv(&path, None).unwrap();
        assert_eq!(loaded.header, None);
        assert_eq!(loaded.matrix, m);
    }

    #[test]
    fn matrix_csv_roundtrips_with_header() {
        let dir = tmpdir();
        let path = dir.path().join("m.csv");
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let names = vec!["alpha".to_string(), "beta".to_string()];
        write_matrix_csv(&path, &m.view(), Some(&names)).unwrap();
        // Auto-detection spots the non-numeric first row.
        let loaded = read_matrix_csv(&path, None).unwrap();
        assert_eq!(loaded.header.as_deref(), Some(&names[..]));
        assert_eq!(loaded.matrix, m);
        // Forcing headerless parsing fails on the names with a location.
        let err = read_matrix_csv(&path, Some(false)).unwrap_err().to_string();
        assert!(err.contains("row 1, column 1"), "{err}");
    }

    #[test]
    fn numeric_header_can_be_forced() {
        let loaded = read_matrix_csv_str("1,2\n3,4\n", Some(true)).unwrap();
        assert_eq!(loaded.header.as_deref(), Some(&["1".to_string(), "2".to_string()][..]));
        assert_eq!(loaded.matrix, array![[3.0, 4.0]]);
    }

    #[test]
    fn ragged_and_bad_cells_report_their_location() {
        let err = read_matrix_csv_str("1,2\n3\n", None).unwrap_err().to_string();
        assert!(err.contains("row 2 has 1 fields, expected 2"), "{err}");
        let err = read_matrix_csv_str("1,2\n3,oops\n", None).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
        assert!(err.contains("oops"), "{err}");
        assert!(read_matrix_csv_str("", None).is_err());
        assert!(read_matrix_csv_str("a,b\n", Some(true)).is_err(), "header without data");
    }

    #[test]
    fn trace_csv_roundtrips_every_iteration() {
        let dir = tmpdir();
        let path = dir.path().join("trace.csv");
        // A tiny real chain: the trace covers all sweeps, not just retained.
        let mut rng = RngHandle::new(11, 0).rng();
        let truth = crate::synth::gen_uniform_band(12, 6, 1, &mut rng).unwrap();
        let data = crate::synth::sample_data(&truth, 20, &mut rng).unwrap();
        let (cfg, _) = crate::prior::ModelConfig::with_defaults(20, 12).unwrap();
        let settings = ChainSettings {
            n_iter: 40,
            burn_in: 10,
            thin: 3,
            ..ChainSettings::default()
        };
        let trace = crate::chain::run_chain(data.view(), &cfg, &settings).unwrap();
        write_trace_csv(&path, &trace).unwrap();
        let records = read_trace_csv(&path).unwrap();
        assert_eq!(records.len(), 40);
        assert_eq!(records, trace.iterations);
    }

    #[test]
    fn trace_csv_rejects_missing_header() {
        let dir = tmpdir();
        let path = dir.path().join("bad.csv");
        atomic_write(&path, b"1,2,3,4\n").unwrap();
        let err = read_trace_csv(&path).unwrap_err().to_string();
        assert!(err.contains("missing trace header"), "{err}");
    }

    #[test]
    fn binary_matrix_roundtrips_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("m.bin");
        let m = array![
            [0.1, -0.0, f64::MIN_POSITIVE],
            [1.0e300, 2.2250738585072014e-308, -7.5]
        ];
        write_matrix_binary(&path, &m.view()).unwrap();
        let loaded = read_matrix_binary(&path).unwrap();
        assert_eq!(loaded.dim(), (2, 3));
        for (a, b) in m.iter().zip(loaded.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"SFTR");
        assert_eq!(bytes.len(), 16 + 6 * 8);
    }

    #[test]
    fn binary_matrix_rejects_corruption() {
        let dir = tmpdir();
        let good = dir.path().join("good.bin");
        write_matrix_binary(&good, &array![[1.0, 2.0]].view()).unwrap();
        let bytes = fs::read(&good).unwrap();

        let bad_magic = dir.path().join("magic.bin");
        let mut b = bytes.clone();
        b[0] = b'X';
        atomic_write(&bad_magic, &b).unwrap();
        assert!(read_matrix_binary(&bad_magic).unwrap_err().to_string().contains("magic"));

        let truncated = dir.path().join("short.bin");
        atomic_write(&truncated, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_matrix_binary(&truncated)
            .unwrap_err()
            .to_string()
            .contains("header promises"));

        let tiny = dir.path().join("tiny.bin");
        atomic_write(&tiny, b"SF").unwrap();
        assert!(read_matrix_binary(&tiny).is_err());
    }

    #[test]
    fn truth_json_roundtrips() {
        let dir = tmpdir();
        let path = dir.path().join("truth.json");
        let mut rng = RngHandle::new(3, 0).rng();
        let truth = crate::synth::gen_signed_two(15, 6, 2, &mut rng).unwrap();
        write_truth_json(&path, &truth).unwrap();
        let loaded = read_truth_json(&path).unwrap();
        assert_eq!(loaded.design, truth.design);
        assert_eq!(loaded.support, truth.support);
        assert_eq!(loaded.r, truth.r);
        assert_eq!(loaded.s, truth.s);
        assert_eq!(loaded.noise_variance, truth.noise_variance);
        assert_eq!(loaded.loadings, truth.loadings);
    }

    #[test]
    fn truth_json_validates_shapes() {
        let record = TruthRecord {
            design: Design::SignedTwo,
            p: 3,
            r: 2,
            s: 1,
            noise_variance: 2.0,
            support: vec![5],
            loadings: vec![vec![0.0; 2]; 3],
        };
        assert!(record.into_truth().unwrap_err().to_string().contains("support"));
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_droppings() {
        let dir = tmpdir();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        let entries: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(entries.len(), 1, "leftover files: {entries:?}");
    }

    #[test]
    fn summary_json_is_deterministic() {
        let dir = tmpdir();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let mut rng = RngHandle::new(9, 0).rng();
        let truth = crate::synth::gen_uniform_band(10, 5, 1, &mut rng).unwrap();
        let data = crate::synth::sample_data(&truth, 16, &mut rng).unwrap();
        let (cfg, _) = crate::prior::ModelConfig::with_defaults(16, 10).unwrap();
        let settings = ChainSettings { n_iter: 30, burn_in: 10, thin: 2, ..Default::default() };
        let trace = crate::chain::run_chain(data.view(), &cfg, &settings).unwrap();
        let summary = crate::diagnostics::summarize(&trace).unwrap();
        write_summary_json(&a, &summary).unwrap();
        write_summary_json(&b, &summary).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let text = fs::read_to_string(&a).unwrap();
        assert!(text.contains("xi_histogram"));
    }
}
