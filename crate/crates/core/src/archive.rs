//! Line-oriented JSON storage for Pareto fronts.
//!
//! Each non-empty line holds one member. Writing is byte-deterministic for a
//! given front: field order is fixed and floats use shortest round-trip form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{Genome, ParetoFront, GENES, GENE_BOUND};

/// Stored coefficients may differ from the decoded genome by at most this.
const DECODE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
#[error("archive line {line}: {message}")]
pub struct ArchiveError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveRecord {
    pub gate: String,
    pub seed: u64,
    /// Generations run when the archive was written.
    pub generation: usize,
    /// Generation in which this member was created.
    pub born: usize,
    pub genes: Vec<f64>,
    /// a1..a8 implied by `genes`.
    pub coefficients: Vec<f64>,
    pub f1: f64,
    pub f2: f64,
    pub feasible: bool,
}

impl ArchiveRecord {
    fn check(&self) -> Result<(), String> {
        if self.gate.trim().is_empty() {
            return Err("empty gate name".into());
        }
        if self.born > self.generation {
            return Err(format!("born {} after generation {}", self.born, self.generation));
        }
        if self.genes.len() != GENES {
            return Err(format!("expected {GENES} genes, got {}", self.genes.len()));
        }
        if self.coefficients.len() != 8 {
            return Err(format!("expected 8 coefficients, got {}", self.coefficients.len()));
        }
        if let Some(g) = self.genes.iter().find(|g| !(g.abs() <= GENE_BOUND)) {
            return Err(format!("gene {g} outside ±{GENE_BOUND}"));
        }
        for (name, v) in [("f1", self.f1), ("f2", self.f2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        let decoded = Genome::new(self.genes.clone())
            .decode()
            .map_err(|e| e.to_string())?
            .flat();
        for (i, (&stored, &expected)) in self.coefficients.iter().zip(decoded.iter()).enumerate() {
            if !((stored - expected).abs() <= DECODE_TOL) {
                return Err(format!(
                    "a{} = {stored} does not match genes (expected {expected})",
                    i + 1
                ));
            }
        }
        Ok(())
    }
}

pub fn records(front: &ParetoFront, gate: &str) -> Vec<ArchiveRecord> {
    front
        .members
        .iter()
        .map(|m| ArchiveRecord {
            gate: gate.to_string(),
            seed: front.seed,
            generation: front.generation,
            born: m.born,
            genes: m.genes.clone(),
            coefficients: Genome::new(m.genes.clone())
                .decode()
                .map(|c| c.flat().to_vec())
                .unwrap_or_default(),
            f1: m.evaluation.objectives.f1,
            f2: m.evaluation.objectives.f2,
            feasible: m.evaluation.feasible,
        })
        .collect()
}

pub fn write_records(records: &[ArchiveRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_archive(front: &ParetoFront, gate: &str) -> String {
    write_records(&records(front, gate))
}

/// Parses and validates every line; blank lines are skipped. Line numbers in
/// errors are 1-based.
pub fn parse_archive(text: &str) -> Result<Vec<ArchiveRecord>, ArchiveError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: ArchiveRecord = serde_json::from_str(raw).map_err(|e| ArchiveError {
            line,
            message: e.to_string(),
        })?;
        rec.check().map_err(|message| ArchiveError { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{Evaluation, Member, Objectives};

    fn front() -> ParetoFront {
        let member = |genes: Vec<f64>, f1, f2, born| Member {
            genes,
            evaluation: Evaluation::feasible(Objectives { f1, f2 }),
            born,
        };
        ParetoFront {
            members: vec![
                member(vec![-0.15, -0.125, 0.0, -0.125], 0.004, 0.01, 0),
                member(vec![0.1, 0.2, -0.3, 0.59], 0.01, 1e-4, 3),
            ],
            generation: 5,
            seed: 7,
            all_infeasible: false,
            hypervolume_history: vec![0.5; 6],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let text = write_archive(&front(), "CNOT");
        let parsed = parse_archive(&text).unwrap();
        assert_eq!(parsed, records(&front(), "CNOT"));
        assert_eq!(write_records(&parsed), text);
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut text = write_archive(&front(), "CNOT");
        text.push_str("\n{\"gate\":\"CNOT\"}\n");
        let err = parse_archive(&text).unwrap_err();
        assert_eq!(err.line, 4);
    }

    #[test]
    fn rejects_inconsistent_coefficients() {
        let mut recs = records(&front(), "CS");
        recs[1].coefficients[0] += 1e-3;
        let err = parse_archive(&write_records(&recs)).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("a1"));
    }

    #[test]
    fn rejects_out_of_range_fields() {
        let base = records(&front(), "CS")[0].clone();
        let cases: Vec<ArchiveRecord> = vec![
            ArchiveRecord {
                genes: vec![0.7, 0.0, 0.0, 0.0],
                ..base.clone()
            },
            ArchiveRecord {
                f1: 1.5,
                ..base.clone()
            },
            ArchiveRecord {
                born: 9,
                ..base.clone()
            },
            ArchiveRecord {
                gate: " ".into(),
                ..base.clone()
            },
            ArchiveRecord {
                coefficients: vec![0.0; 7],
                ..base
            },
        ];
        for rec in cases {
            assert!(parse_archive(&write_records(&[rec])).is_err());
        }
        assert!(parse_archive("{\"gate\":\"CS\",\"extra\":1}").is_err());
        assert!(parse_archive("\n\n").unwrap().is_empty());
    }
}
