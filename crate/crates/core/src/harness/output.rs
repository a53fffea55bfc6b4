use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DriftReport, RunConfig, RunOutput};
use crate::checkpoint::save_checkpoint;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::eval::format_topics;

pub fn format_lpp_csv(rows: &[(usize, f64)]) -> String {
    let mut s = String::from("minibatch,lpp\n");
    for (i, v) in rows {
        writeln!(s, "{i},{v}").expect("string write");
    }
    s
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes `lpp.csv`, `npmi.txt`, `topics.txt`, `config.resolved` and
/// `checkpoint.bin` into `dir`, creating it if needed.
pub fn emit_outputs(out: &RunOutput, cfg: &RunConfig, vocab: &Vocabulary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "lpp.csv", format_lpp_csv(&out.report.lpp))?;
    write(dir, "npmi.txt", format!("{}\n", out.report.npmi))?;
    write(dir, "topics.txt", format_topics(&out.report.topics, vocab))?;
    write(dir, "config.resolved", cfg.to_toml())?;
    save_checkpoint(&out.learner.checkpoint(), dir.join("checkpoint.bin"))?;
    if let Some(d) = &out.drift {
        emit_drift_outputs(d, dir)?;
    }
    Ok(())
}

/// `drift.csv` and `forgetting.csv`.
pub fn emit_drift_outputs(report: &DriftReport, dir: &Path) -> Result<()> {
    let mut drift = String::from("minibatch,label,boundary,lpp\n");
    for r in &report.drift {
        writeln!(drift, "{},{},{},{}", r.minibatch, r.label, u8::from(r.boundary), r.lpp).expect("string write");
    }
    let mut forgetting = String::from("class,label,avg_lpp\n");
    for r in &report.forgetting {
        writeln!(forgetting, "{},{},{}", r.class_index, r.label, r.avg_lpp).expect("string write");
    }
    write(dir, "drift.csv", drift)?;
    write(dir, "forgetting.csv", forgetting)
}
