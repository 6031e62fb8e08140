//! Reports, certificate replay and report comparison.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dynalg::algebra::{CertificateDoc, GeneratorTable};
use dynalg::functionals::Lagrangian;
use dynalg::lattice::Lattice;

use crate::error::CliError;
use crate::scenario::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Unproven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofState {
    Proved,
    Unproven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCertificate {
    pub label: String,
    pub status: ProofState,
    /// Raw fixed-point phase of the joined word, for bit-exact replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joined_phase: Option<String>,
    pub certificate: CertificateDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub kind: String,
    pub status: Status,
    pub residual: Option<f64>,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<StoredCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub wall_time_ms: f64,
}

/// What replay needs to rebuild a generator table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayContext {
    pub lattice: Lattice,
    pub lagrangian: Lagrangian,
    pub margin: f64,
}

impl ReplayContext {
    pub fn table(&self) -> GeneratorTable {
        GeneratorTable::with_margin(&Arc::new(self.lattice.clone()), self.lagrangian.clone(), self.margin)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub pass: usize,
    pub fail: usize,
    pub unproven: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub tool_version: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub context: ReplayContext,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn new(scenario_hash: String, seed: u64, context: ReplayContext, records: Vec<CheckRecord>) -> Self {
        let mut r = Self {
            schema_version: SCHEMA_VERSION.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_hash,
            seed,
            context,
            records,
            summary: Summary::default(),
        };
        r.summarize();
        r
    }

    fn summarize(&mut self) {
        let count = |s: Status| self.records.iter().filter(|r| r.status == s).count();
        self.summary = Summary {
            total: self.records.len(),
            pass: count(Status::Pass),
            fail: count(Status::Fail),
            unproven: count(Status::Unproven),
        };
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let r: Report = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
            pointer: crate::scenario::pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        if r.schema_version.split('.').next() != SCHEMA_VERSION.split('.').next() {
            return Err(CliError::Schema {
                pointer: "/schema_version".into(),
                message: format!("unsupported report version {}", r.schema_version),
            });
        }
        Ok(r)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The same report with every wall time set to zero.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.records.iter_mut().for_each(|c| c.wall_time_ms = 0.0);
        r
    }

    /// Exit status: failures always count, unproven ones only under `fail`.
    pub fn ok(&self, unproven_fails: bool) -> bool {
        self.summary.fail == 0 && (!unproven_fails || self.summary.unproven == 0)
    }

    /// Re-executes every stored certificate. Records whose certificates no
    /// longer replay to the recorded common word become failures naming the step.
    pub fn replay(&self) -> Report {
        let table = self.context.table();
        let mut out = self.clone();
        for rec in &mut out.records {
            for (i, c) in rec.certificates.iter().enumerate() {
                if c.status != ProofState::Proved {
                    continue;
                }
                let problem = match c.certificate.replay(&table) {
                    Err(e) => Some(e.to_string()),
                    Ok(w) => match &c.joined_phase {
                        Some(p) if *p != w.phase.raw().to_string() => {
                            Some(format!("joined phase {} differs from recorded {p}", w.phase.raw()))
                        }
                        _ => None,
                    },
                };
                if let Some(p) = problem {
                    rec.status = Status::Fail;
                    rec.message = Some(format!("certificate {i} ({}): {p}", c.label));
                    break;
                }
            }
        }
        out.summarize();
        out
    }
}

/// Differences between two reports, ignoring wall times.
pub fn diff(a: &Report, b: &Report) -> Vec<String> {
    let mut out = Vec::new();
    let (a, b) = (a.without_timing(), b.without_timing());
    for (key, x, y) in [
        ("schema_version", &a.schema_version, &b.schema_version),
        ("tool_version", &a.tool_version, &b.tool_version),
        ("scenario_hash", &a.scenario_hash, &b.scenario_hash),
    ] {
        if x != y {
            out.push(format!("{key}: {x} vs {y}"));
        }
    }
    if a.seed != b.seed {
        out.push(format!("seed: {} vs {}", a.seed, b.seed));
    }
    if a.context != b.context {
        out.push("context differs".into());
    }
    let bmap: BTreeMap<&str, &CheckRecord> = b.records.iter().map(|r| (r.name.as_str(), r)).collect();
    let amap: BTreeMap<&str, &CheckRecord> = a.records.iter().map(|r| (r.name.as_str(), r)).collect();
    for r in &a.records {
        let Some(s) = bmap.get(r.name.as_str()) else {
            out.push(format!("{}: only in first report", r.name));
            continue;
        };
        if r.status != s.status {
            out.push(format!("{}: status {:?} vs {:?}", r.name, r.status, s.status));
        }
        if r.residual.map(f64::to_bits) != s.residual.map(f64::to_bits) {
            out.push(format!("{}: residual {:?} vs {:?}", r.name, r.residual, s.residual));
        }
        if r.tolerance.to_bits() != s.tolerance.to_bits() {
            out.push(format!("{}: tolerance {} vs {}", r.name, r.tolerance, s.tolerance));
        }
        if r.values != s.values {
            out.push(format!("{}: values differ", r.name));
        }
        if r.certificates != s.certificates {
            out.push(format!("{}: certificates differ", r.name));
        }
        if r.message != s.message {
            out.push(format!("{}: message {:?} vs {:?}", r.name, r.message, s.message));
        }
    }
    for r in &b.records {
        if !amap.contains_key(r.name.as_str()) {
            out.push(format!("{}: only in second report", r.name));
        }
    }
    let order_a: Vec<&str> = a.records.iter().map(|r| r.name.as_str()).collect();
    let order_b: Vec<&str> = b.records.iter().map(|r| r.name.as_str()).collect();
    if out.is_empty() && order_a != order_b {
        out.push("record order differs".into());
    }
    out
}
