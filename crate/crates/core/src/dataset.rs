//! Observed outcome statistics, one record per executed circuit, stored as
//! JSON lines.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::GateLabel;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: zeros {zeros} exceed shots {shots}")]
    Counts { line: usize, zeros: u64, shots: u64 },
    #[error("line {line}: probability {p} outside [0, 1]")]
    Probability { line: usize, p: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Counts { shots: u64, zeros: u64 },
    Exact { p_exact: f64 },
}

impl Observation {
    /// Observed frequency of the ground outcome.
    pub fn frequency(&self) -> f64 {
        match *self {
            Observation::Counts { shots, zeros } => zeros as f64 / shots as f64,
            Observation::Exact { p_exact } => p_exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Executed sequence in time order, terminal gates included.
    pub circuit: Vec<GateLabel>,
    #[serde(flatten)]
    pub observation: Observation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|source| DatasetError::Parse { line: i + 1, source })?;
            match rec.observation {
                Observation::Counts { shots, zeros } if zeros > shots || shots == 0 => {
                    return Err(DatasetError::Counts { line: i + 1, zeros, shots });
                }
                Observation::Exact { p_exact } if !(-1e-9..=1.0 + 1e-9).contains(&p_exact) => {
                    return Err(DatasetError::Probability { line: i + 1, p: p_exact });
                }
                _ => {}
            }
            records.push(rec);
        }
        Ok(Dataset { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::BaseGate;

    #[test]
    fn jsonl_round_trip() {
        let ds = Dataset {
            records: vec![
                Record {
                    circuit: vec![GateLabel::at(BaseGate::Rx, 3), GateLabel::at(BaseGate::I, 1)],
                    observation: Observation::Counts { shots: 100, zeros: 40 },
                },
                Record { circuit: vec![], observation: Observation::Exact { p_exact: 0.25 } },
            ],
        };
        let text = ds.to_jsonl();
        assert_eq!(text.lines().next().unwrap(), r#"{"circuit":["Rx@3","I@1"],"shots":100,"zeros":40}"#);
        assert_eq!(text.lines().nth(1).unwrap(), r#"{"circuit":[],"p_exact":0.25}"#);
        let back = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.records[0].observation.frequency(), 0.4);
    }

    #[test]
    fn rejects_bad_counts() {
        let bad = r#"{"circuit":["Rx"],"shots":10,"zeros":11}"#;
        assert!(matches!(Dataset::read_jsonl(bad.as_bytes()), Err(DatasetError::Counts { line: 1, .. })));
    }
}
