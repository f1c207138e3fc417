//! Site-grouped ROI time-series datasets.

mod io;
mod sampling;
mod synthetic;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub use io::{load_manifest, parse_series, read_series, write_manifest, write_series, MANIFEST_HEADER};
pub use sampling::{balanced_batches, loso_split, Fold};
pub use synthetic::{gen_synthetic, SyntheticSpec, PLANTED_PERIOD};
pub use validate::{validate_dataset, Severity, ValidationReport, Violation, ViolationKind};

/// Number of regions in the full anatomical atlas.
pub const ATLAS_ROIS: usize = 116;
/// Shortest series accepted as a dataset record.
pub const MIN_TIME_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "ADHD")]
    Adhd,
}

impl Label {
    /// Class index used by the classifier: HC = 0, ADHD = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Hc => 0,
            Label::Adhd => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Hc),
            1 => Some(Label::Adhd),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hc => "HC",
            Label::Adhd => "ADHD",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ADHD" => Ok(Label::Adhd),
            "HC" => Ok(Label::Hc),
            other => Err(format!("unknown label {other:?} (expected ADHD or HC)")),
        }
    }
}

/// One subject: an `[N_R, T]` matrix of ROI mean signals plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub site: String,
    pub label: Label,
    pub series: Tensor,
}

impl SubjectRecord {
    pub fn n_rois(&self) -> usize {
        self.series.shape()[0]
    }

    pub fn time_len(&self) -> usize {
        self.series.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub adhd: usize,
    pub hc: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.adhd + self.hc
    }

    fn add(&mut self, label: Label) {
        match label {
            Label::Adhd => self.adhd += 1,
            Label::Hc => self.hc += 1,
        }
    }
}

/// A dataset: records, the sites in order of first appearance, and the
/// per-site class tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<SubjectRecord>,
    sites: Vec<String>,
    counts: BTreeMap<String, ClassCounts>,
}

impl Manifest {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::new();
        let mut sites = Vec::new();
        let mut counts: BTreeMap<String, ClassCounts> = BTreeMap::new();
        for r in &records {
            if !seen.insert(r.subject_id.as_str()) {
                return Err(Error::Validation {
                    subject: r.subject_id.clone(),
                    message: "duplicate subject_id".into(),
                });
            }
            if !counts.contains_key(&r.site) {
                sites.push(r.site.clone());
            }
            counts.entry(r.site.clone()).or_default().add(r.label);
        }
        Ok(Manifest { records, sites, counts })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sites(&self) -> &[String] {
        &self.sites
    }

    pub fn site_counts(&self, site: &str) -> Option<ClassCounts> {
        self.counts.get(site).copied()
    }

    pub fn totals(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for s in self.counts.values() {
            c.adhd += s.adhd;
            c.hc += s.hc;
        }
        c
    }

    /// ROI count of the first record.
    pub fn n_rois(&self) -> usize {
        self.records[0].n_rois()
    }

    /// Shortest series length across records.
    pub fn min_time_len(&self) -> usize {
        self.records.iter().map(SubjectRecord::time_len).min().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, site: &str, label: Label) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.into(),
            site: site.into(),
            label,
            series: Tensor::zeros(&[2, 20]).unwrap(),
        }
    }

    #[test]
    fn counts_and_site_order() {
        let m = Manifest::new(vec![
            rec("a", "B", Label::Adhd),
            rec("b", "A", Label::Hc),
            rec("c", "B", Label::Hc),
        ])
        .unwrap();
        assert_eq!(m.sites(), ["B", "A"]);
        assert_eq!(m.site_counts("B"), Some(ClassCounts { adhd: 1, hc: 1 }));
        assert_eq!(m.totals().total(), 3);
    }

    #[test]
    fn empty_and_duplicate_rejected() {
        assert!(matches!(Manifest::new(vec![]), Err(Error::EmptyDataset)));
        let dup = Manifest::new(vec![rec("a", "X", Label::Adhd), rec("a", "Y", Label::Hc)]);
        assert!(matches!(dup, Err(Error::Validation { .. })));
    }

    #[test]
    fn labels_parse() {
        assert_eq!("adhd".parse::<Label>().unwrap(), Label::Adhd);
        assert_eq!(" HC ".parse::<Label>().unwrap(), Label::Hc);
        assert!("control".parse::<Label>().is_err());
        assert_eq!(Label::from_index(Label::Adhd.index()), Some(Label::Adhd));
    }
}
