//! CSV output with a fixed column order and 12 significant digits.
//!
//! Floats are rounded to 12 significant digits and then printed in their
//! shortest exact form: plain decimal for magnitudes in `[1e-5, 1e15)`,
//! scientific notation otherwise. Parsing a file and writing it again
//! reproduces it byte for byte.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;

use super::pipeline::TrialRecord;
use crate::error::{malformed, Error, Result};

/// A row type with a fixed header and textual field encoding.
pub trait CsvRow: DeserializeOwned {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Rounds to 12 significant digits.
pub fn round_sig12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("valid float text")
}

pub fn format_float(v: f64) -> String {
    let r = round_sig12(v);
    if r == 0.0 {
        return "0".into();
    }
    let a = r.abs();
    if !r.is_finite() || (1e-5..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn write_csv<R: CsvRow, W: Write>(records: &[R], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Malformed(format!("csv write: {e}"));
    w.write_record(R::HEADER).map_err(io)?;
    for r in records {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Malformed(format!("csv write: {e}")))?;
    Ok(())
}

pub fn emit_csv<R: CsvRow>(records: &[R], path: &Path) -> Result<()> {
    let with_path = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let file = std::fs::File::create(path).map_err(with_path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_csv(records, &mut buf)?;
    buf.flush().map_err(with_path)
}

pub fn parse_csv<R: CsvRow>(text: &str) -> Result<Vec<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| malformed(format!("csv header: {e}")))?;
    if headers.iter().ne(R::HEADER.iter().copied()) {
        return Err(malformed(format!(
            "unexpected csv header (expected `{}`)",
            R::HEADER.join(",")
        )));
    }
    rdr.deserialize()
        .map(|row| row.map_err(|e| malformed(format!("csv row: {e}"))))
        .collect()
}

pub fn read_csv<R: CsvRow>(path: &Path) -> Result<Vec<R>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv(&text)
}

impl CsvRow for TrialRecord {
    const HEADER: &'static [&'static str] = &[
        "trial",
        "snr1_db",
        "snr2_db",
        "mse1",
        "mse2",
        "mse_single1",
        "mse_single2",
        "theory_var1",
        "theory_var2",
        "r",
        "r_prime",
        "empirical_corr",
        "scs",
        "papr_before_db",
        "papr_after_db",
        "csi_err_var1",
        "csi_err_var2",
        "csi_mse1",
        "csi_mse2",
        "n_samples",
    ];

    fn fields(&self) -> Vec<String> {
        let mut out = vec![self.trial.to_string()];
        out.extend(
            [
                self.snr1_db,
                self.snr2_db,
                self.mse1,
                self.mse2,
                self.mse_single1,
                self.mse_single2,
                self.theory_var1,
                self.theory_var2,
                self.r,
                self.r_prime,
                self.empirical_corr,
                self.scs,
                self.papr_before_db,
                self.papr_after_db,
                self.csi_err_var1,
                self.csi_err_var2,
                self.csi_mse1,
                self.csi_mse2,
            ]
            .map(format_float),
        );
        out.push(self.n_samples.to_string());
        out
    }
}

impl TrialRecord {
    /// Copy with every float rounded as it would be written to CSV.
    pub fn rounded(&self) -> Self {
        let f = round_sig12;
        Self {
            snr1_db: f(self.snr1_db),
            snr2_db: f(self.snr2_db),
            mse1: f(self.mse1),
            mse2: f(self.mse2),
            mse_single1: f(self.mse_single1),
            mse_single2: f(self.mse_single2),
            theory_var1: f(self.theory_var1),
            theory_var2: f(self.theory_var2),
            r: f(self.r),
            r_prime: f(self.r_prime),
            empirical_corr: f(self.empirical_corr),
            scs: f(self.scs),
            papr_before_db: f(self.papr_before_db),
            papr_after_db: f(self.papr_after_db),
            csi_err_var1: f(self.csi_err_var1),
            csi_err_var2: f(self.csi_err_var2),
            csi_mse1: f(self.csi_mse1),
            csi_mse2: f(self.csi_mse2),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(seed: f64) -> TrialRecord {
        TrialRecord {
            trial: 3,
            snr1_db: -7.123456789012345,
            snr2_db: 1.5,
            mse1: 0.1 * seed,
            mse2: 1.0 / 3.0,
            mse_single1: 2e-9,
            mse_single2: 123456789.123456789,
            theory_var1: 0.0,
            theory_var2: -0.0,
            r: 0.8,
            r_prime: 0.7999999999999,
            empirical_corr: -0.25,
            scs: 1e-30,
            papr_before_db: 10.1,
            papr_after_db: 6.2,
            csi_err_var1: 1e20,
            csi_err_var2: 0.05,
            csi_mse1: 0.051,
            csi_mse2: 0.049,
            n_samples: 12288,
        }
    }

    #[test]
    fn float_format() {
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(2e-9), "2e-9");
        assert_eq!(format_float(123456789.123456789), "123456789.123");
        assert_eq!(format_float(1e20), "1e20");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn header_matches_serde_field_names() {
        let text = {
            let mut buf = Vec::new();
            write_csv(&[record(1.0)], &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let header = text.lines().next().unwrap();
        assert_eq!(header, TrialRecord::HEADER.join(","));
        let parsed: Vec<TrialRecord> = parse_csv(&text).unwrap();
        assert_eq!(parsed, vec![record(1.0).rounded()]);
    }

    #[test]
    fn empty_stream_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv::<TrialRecord>(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", TrialRecord::HEADER.join(",")));
        assert!(read_csv::<TrialRecord>(&path).unwrap().is_empty());
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing/dir/out.csv");
        match emit_csv(&[record(1.0)], &path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected I/O error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(parse_csv::<TrialRecord>("a,b\n1,2\n").is_err());
        let mut bad = TrialRecord::HEADER.join(",");
        bad.push_str("\n1,2,3\n");
        assert!(parse_csv::<TrialRecord>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn reemit_is_byte_identical(seed in -1e6..1e6f64, trial in 0u64..1000) {
            let mut rec = record(seed);
            rec.trial = trial;
            rec.snr1_db = seed.sin() * 10.0;
            let mut first = Vec::new();
            write_csv(&[rec.clone(), record(seed / 7.0)], &mut first).unwrap();
            let parsed: Vec<TrialRecord> = parse_csv(std::str::from_utf8(&first).unwrap()).unwrap();
            prop_assert_eq!(&parsed[0], &rec.rounded());
            let mut second = Vec::new();
            write_csv(&parsed, &mut second).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn rounding_keeps_twelve_digits(v in -1e300..1e300f64) {
            let r = round_sig12(v);
            prop_assert!((r - v).abs() <= 5e-12 * v.abs());
            prop_assert_eq!(round_sig12(r), r);
            prop_assert_eq!(format_float(r).parse::<f64>().unwrap(), r);
        }
    }
}
