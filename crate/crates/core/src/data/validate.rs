use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::data::{Manifest, MIN_TIME_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    NonFinite,
    SeriesTooShort,
    MixedRoiCount,
    ClassAbsent,
    DuplicateSubject,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub kind: ViolationKind,
    pub subject: Option<String>,
    pub site: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} [{:?}]", self.kind)?;
        if let Some(s) = &self.site {
            write!(f, " site={s}")?;
        }
        if let Some(s) = &self.subject {
            write!(f, " subject={s}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| v.severity == Severity::Error)
    }
}

/// Checks every record and site, collecting all violations rather than
/// stopping at the first.
pub fn validate_dataset(manifest: &Manifest) -> ValidationReport {
    let mut out = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let expected_rois = manifest.n_rois();
    for r in manifest.records() {
        let subject = Some(r.subject_id.clone());
        let site = Some(r.site.clone());
        *seen.entry(&r.subject_id).or_default() += 1;
        let t = r.time_len();
        if let Some(pos) = r.series.data().iter().position(|v| !v.is_finite()) {
            out.push(Violation {
                severity: Severity::Error,
                kind: ViolationKind::NonFinite,
                subject: subject.clone(),
                site: site.clone(),
                message: format!("non-finite value at ROI {} time {}", pos / t, pos % t),
            });
        }
        if t < MIN_TIME_LEN {
            out.push(Violation {
                severity: Severity::Error,
                kind: ViolationKind::SeriesTooShort,
                subject: subject.clone(),
                site: site.clone(),
                message: format!("{t} time points, at least {MIN_TIME_LEN} required"),
            });
        }
        if r.n_rois() != expected_rois {
            out.push(Violation {
                severity: Severity::Error,
                kind: ViolationKind::MixedRoiCount,
                subject,
                site,
                message: format!("{} ROIs, dataset uses {expected_rois}", r.n_rois()),
            });
        }
    }
    for (id, n) in seen {
        if n > 1 {
            out.push(Violation {
                severity: Severity::Error,
                kind: ViolationKind::DuplicateSubject,
                subject: Some(id.to_string()),
                site: None,
                message: format!("appears {n} times"),
            });
        }
    }
    for site in manifest.sites() {
        let c = manifest.site_counts(site).unwrap_or_default();
        for (n, class) in [(c.adhd, "ADHD"), (c.hc, "HC")] {
            if n == 0 {
                out.push(Violation {
                    severity: Severity::Warning,
                    kind: ViolationKind::ClassAbsent,
                    subject: None,
                    site: Some(site.clone()),
                    message: format!("no {class} subjects; balanced batches cannot be drawn from this site alone"),
                });
            }
        }
    }
    ValidationReport { violations: out }
}
