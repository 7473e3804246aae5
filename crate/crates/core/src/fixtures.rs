//! Reference fiducial and germ sets and measured idle PTMs of a
//! five-transmon device, shipped as `data/fixtures.json`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use crate::circuit::{parse_operator_string, ContextSpec, Germ};
use crate::label::{BaseGate, GateLabel};
use crate::ptm::SuperOp;

const RAW: &str = include_str!("../data/fixtures.json");

#[derive(Debug, Deserialize)]
struct Raw {
    version: u32,
    fiducials: BTreeMap<String, Vec<String>>,
    germs: BTreeMap<String, Vec<String>>,
    max_repetition: BTreeMap<String, u32>,
    crosstalk: RawChannels,
    memory: RawChannels,
}

#[derive(Debug, Deserialize)]
struct RawChannels {
    contexts: Vec<u8>,
    ptm: Vec<[[f64; 4]; 4]>,
    diamond: Vec<f64>,
    corrected: Vec<f64>,
}

/// A measured contextual idle together with the distances quoted for it.
#[derive(Debug, Clone)]
pub struct MeasuredIdle {
    pub label: GateLabel,
    pub ptm: SuperOp,
    pub diamond: f64,
    pub corrected: f64,
}

fn raw() -> &'static Raw {
    static CELL: OnceLock<Raw> = OnceLock::new();
    CELL.get_or_init(|| serde_json::from_str(RAW).expect("bundled fixtures are valid JSON"))
}

pub fn version() -> u32 {
    raw().version
}

fn parse_all(items: &[String]) -> Vec<Germ> {
    items
        .iter()
        .map(|s| parse_operator_string(s).expect("bundled sequences parse"))
        .collect()
}

/// Named fiducial set (`f_ref`), as context-free sequences.
pub fn fiducial_set(name: &str) -> Option<Vec<Germ>> {
    raw().fiducials.get(name).map(|v| parse_all(v))
}

/// Named germ set (`g`, `g6`, `g_ref`, `g_ct`, `g_mem`).
pub fn germ_set(name: &str) -> Option<Vec<Germ>> {
    raw().germs.get(name).map(|v| parse_all(v))
}

/// Maximum repetition index the named germ set was designed for.
pub fn max_repetition(name: &str) -> Option<u32> {
    raw().max_repetition.get(name).copied()
}

pub fn f_ref() -> Vec<Germ> {
    fiducial_set("f_ref").unwrap()
}

/// `f_ref` with the fiducial context of `ctx` applied.
pub fn f_ref_for(ctx: &ContextSpec) -> Vec<Germ> {
    f_ref()
        .into_iter()
        .map(|f| ctx.fiducial(&f.iter().map(|l| l.base).collect::<Vec<_>>()))
        .collect()
}

fn channels(r: &RawChannels) -> Vec<MeasuredIdle> {
    r.contexts
        .iter()
        .zip(&r.ptm)
        .zip(r.diamond.iter().zip(&r.corrected))
        .map(|((&k, m), (&d, &c))| MeasuredIdle {
            label: GateLabel::at(BaseGate::I, k),
            ptm: SuperOp::from_rows(*m),
            diamond: d,
            corrected: c,
        })
        .collect()
}

/// Idle PTMs in the four crosstalk contexts.
pub fn crosstalk_idles() -> Vec<MeasuredIdle> {
    channels(&raw().crosstalk)
}

/// Idle PTMs after Rx, Ry and I.
pub fn memory_idles() -> Vec<MeasuredIdle> {
    channels(&raw().memory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{compile, CircuitSpec};

    #[test]
    fn set_sizes() {
        assert_eq!(f_ref().len(), 6);
        assert_eq!(f_ref()[0].len(), 0);
        assert_eq!(germ_set("g").unwrap().len(), 11);
        assert_eq!(germ_set("g6").unwrap().len(), 11);
        assert_eq!(germ_set("g_ct").unwrap().len(), 15);
        assert_eq!(germ_set("g_mem").unwrap().len(), 11);
        assert_eq!(max_repetition("g"), Some(7));
        assert_eq!(crosstalk_idles().len(), 4);
        assert_eq!(memory_idles().len(), 3);
    }

    #[test]
    fn contextual_sets_compile() {
        for (name, ctx) in [("g_ct", ContextSpec::crosstalk()), ("g_mem", ContextSpec::memory())] {
            let germs = germ_set(name).unwrap();
            let fid = f_ref_for(&ctx);
            for g in 0..germs.len() {
                for l in 1..=3 {
                    let spec = CircuitSpec { prep: fid[5].clone(), germ: g, l, meas: fid[3].clone() };
                    compile(&spec, &germs, &ctx).unwrap();
                }
            }
        }
    }

    #[test]
    fn measured_idles_are_trace_preserving() {
        for m in crosstalk_idles().into_iter().chain(memory_idles()) {
            assert!(m.ptm.is_trace_preserving(0.0));
        }
    }
}
