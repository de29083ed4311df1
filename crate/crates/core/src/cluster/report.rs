use std::fmt::Write as _;

use super::pca::Projection;
use crate::error::{Error, Result};

/// Clustering outcome of one variant and seed over a set of events.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub variant: String,
    pub seed: u64,
    pub k: usize,
    pub event_ids: Vec<u64>,
    pub true_classes: Vec<u8>,
    pub assignments: Vec<usize>,
    pub ari: f64,
    /// Configuration snapshot as ordered key-value pairs.
    pub config: Vec<(String, String)>,
}

impl ClusterReport {
    pub fn new(
        variant: impl Into<String>,
        seed: u64,
        k: usize,
        event_ids: Vec<u64>,
        true_classes: Vec<u8>,
        assignments: Vec<usize>,
        config: Vec<(String, String)>,
    ) -> Result<Self> {
        if event_ids.len() != true_classes.len() || event_ids.len() != assignments.len() {
            return Err(Error::contract("report columns differ in length"));
        }
        if let Some(a) = assignments.iter().find(|&&a| a >= k) {
            return Err(Error::contract(format!("assignment {a} outside [0, {k})")));
        }
        let truth: Vec<usize> = true_classes.iter().map(|&c| c as usize).collect();
        let ari = super::ari(&truth, &assignments)?;
        Ok(ClusterReport {
            variant: variant.into(),
            seed,
            k,
            event_ids,
            true_classes,
            assignments,
            ari,
            config,
        })
    }

    pub fn summary_line(&self) -> String {
        format!("{},{:.6},{}", self.variant, self.ari, self.seed)
    }

    /// Per-event table followed by the summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("event_id,true_class,assignment\n");
        for ((id, c), a) in self.event_ids.iter().zip(&self.true_classes).zip(&self.assignments) {
            writeln!(s, "{id},{c},{a}").expect("string write");
        }
        s.push_str("variant,ari,seed\n");
        s.push_str(&self.summary_line());
        s.push('\n');
        s
    }
}

pub fn projection_csv(event_ids: &[u64], true_classes: &[u8], projection: &Projection) -> Result<String> {
    if event_ids.len() != true_classes.len() || event_ids.len() != projection.projected.len() {
        return Err(Error::contract("projection columns differ in length"));
    }
    if projection.basis.len() < 2 {
        return Err(Error::contract("projection export needs two components"));
    }
    let mut s = String::from("event_id,true_class,pc1,pc2\n");
    for ((id, c), p) in event_ids.iter().zip(true_classes).zip(&projection.projected) {
        writeln!(s, "{id},{c},{:.9},{:.9}", p[0], p[1]).expect("string write");
    }
    Ok(s)
}
