//! Runs the configured lemma rows and tabulates pass/fail per row.

use std::path::Path;

use nlslab_core::microlocal::{verify_lemma_decay, CutoffProfile, LemmaReport, LemmaRequest};
use nlslab_core::{LabError, Result};
use serde::{Deserialize, Serialize};

use crate::outputs::{num, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaStatus {
    Pass,
    Fail,
    /// The row's exponents violate the lemma's hypotheses; not judged.
    HypothesisViolated,
}

impl LemmaStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            LemmaStatus::Pass => "pass",
            LemmaStatus::Fail => "fail",
            LemmaStatus::HypothesisViolated => "hypothesis-violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub lemma: String,
    pub status: LemmaStatus,
    pub detail: String,
    pub report: Option<LemmaReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuite {
    pub rows: Vec<LemmaRow>,
}

impl LemmaSuite {
    /// True unless a judged row failed.
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.status != LemmaStatus::Fail)
    }
}

pub fn verify_lemmas(requests: &[LemmaRequest], profile: CutoffProfile, seed: u64) -> Result<LemmaSuite> {
    let mut rows = Vec::with_capacity(requests.len());
    for (k, req) in requests.iter().enumerate() {
        let row = match verify_lemma_decay(req, profile, seed.wrapping_add(k as u64)) {
            Ok(rep) => LemmaRow {
                lemma: req.name().to_string(),
                status: if rep.pass { LemmaStatus::Pass } else { LemmaStatus::Fail },
                detail: rep.criterion.clone(),
                report: Some(rep),
            },
            Err(LabError::Precondition(msg)) => LemmaRow {
                lemma: req.name().to_string(),
                status: LemmaStatus::HypothesisViolated,
                detail: msg,
                report: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(LemmaSuite { rows })
}

/// `lemmas.csv` (one row per lemma), `lemma_fits.csv` and `lemma_samples.csv`.
pub fn emit_lemma_outputs(suite: &LemmaSuite, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Resource(format!("cannot create {}: {e}", dir.display())))?;
    write_csv(
        &dir.join("lemmas.csv"),
        &["row", "lemma", "status", "detail"],
        suite.rows.iter().enumerate().map(|(k, r)| {
            vec![
                k.to_string(),
                r.lemma.clone(),
                r.status.as_str().into(),
                r.detail.clone(),
            ]
        }),
    )?;
    let mut fits = Vec::new();
    let mut samples = Vec::new();
    for (k, r) in suite.rows.iter().enumerate() {
        if let Some(rep) = &r.report {
            for f in &rep.fits {
                fits.push(vec![
                    k.to_string(),
                    r.lemma.clone(),
                    f.name.clone(),
                    num(f.fit.slope),
                    num(f.fit.r2),
                    f.fit.points.to_string(),
                ]);
            }
            for s in &rep.samples {
                samples.push(vec![
                    k.to_string(),
                    r.lemma.clone(),
                    s.label.clone(),
                    num(s.parameter),
                    num(s.norm),
                    s.n.to_string(),
                    num(s.half_length),
                ]);
            }
        }
    }
    write_csv(
        &dir.join("lemma_fits.csv"),
        &["row", "lemma", "fit", "slope", "r2", "points"],
        fits,
    )?;
    write_csv(
        &dir.join("lemma_samples.csv"),
        &["row", "lemma", "label", "parameter", "norm", "n", "half_length"],
        samples,
    )
}
