//! Sweep results as CSV.
//!
//! One row per `(variant, snr_db, epsilon, seed)`. A file whose last row is
//! the marker `INCOMPLETE,,,,,,,` was written by a sweep that has not
//! finished.

use std::path::Path;

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::harness::SystemVariant;

pub const HEADER: &str = "variant,snr_db,epsilon,seed,bleu1,bleu2,mean_loss,n_sentences";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE,,,,,,,";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub variant: SystemVariant,
    pub snr_db: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub mean_loss: f64,
    pub n_sentences: usize,
}

impl RunRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.variant,
            self.snr_db,
            self.epsilon,
            self.seed,
            self.bleu1,
            self.bleu2,
            self.mean_loss,
            self.n_sentences
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Format(format!("expected 8 fields, got {}: {line:?}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Format(format!("bad {what} {s:?}")))
        }
        Ok(RunRow {
            variant: f[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad variant {:?}", f[0])))?,
            snr_db: num(f[1], "snr_db")?,
            epsilon: num(f[2], "epsilon")?,
            seed: num(f[3], "seed")?,
            bleu1: num(f[4], "bleu1")?,
            bleu2: num(f[5], "bleu2")?,
            mean_loss: num(f[6], "mean_loss")?,
            n_sentences: num(f[7], "n_sentences")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub rows: Vec<RunRow>,
    pub complete: bool,
}

pub fn to_csv(rows: &[RunRow], complete: bool) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    if !complete {
        s.push_str(INCOMPLETE_MARKER);
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<ResultFile> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Format("missing or wrong results header".into()));
    }
    let mut rows = Vec::new();
    let mut complete = true;
    for line in lines {
        if !complete {
            return Err(Error::Format("rows after the incomplete marker".into()));
        }
        if line == INCOMPLETE_MARKER {
            complete = false;
        } else {
            rows.push(RunRow::parse_line(line)?);
        }
    }
    Ok(ResultFile { rows, complete })
}

pub fn write_results(path: &Path, rows: &[RunRow], complete: bool) -> Result<()> {
    write_atomic(path, to_csv(rows, complete).as_bytes())
}

pub fn read_results(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}
