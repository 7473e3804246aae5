//! Gate labels: a base gate plus the context it is applied in.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseGate {
    /// π/2 rotation about X.
    Rx,
    /// π/2 rotation about Y.
    Ry,
    /// Idle.
    I,
}

impl BaseGate {
    pub const ALL: [BaseGate; 3] = [BaseGate::Rx, BaseGate::Ry, BaseGate::I];

    /// Zero-based class used by the first-order memory model (Rx, Ry, I).
    pub fn class(self) -> u8 {
        match self {
            BaseGate::Rx => 0,
            BaseGate::Ry => 1,
            BaseGate::I => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseGate::Rx => "Rx",
            BaseGate::Ry => "Ry",
            BaseGate::I => "I",
        }
    }
}

impl fmt::Display for BaseGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Context of a gate application.
///
/// `Floating` only appears in uncompiled germs and fiducials; compilation
/// resolves it from the preceding gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Context {
    Free,
    Index(u8),
    Floating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GateLabel {
    pub base: BaseGate,
    pub context: Context,
}

impl GateLabel {
    pub const fn free(base: BaseGate) -> Self {
        GateLabel { base, context: Context::Free }
    }

    pub const fn at(base: BaseGate, context: u8) -> Self {
        GateLabel { base, context: Context::Index(context) }
    }

    pub const fn floating(base: BaseGate) -> Self {
        GateLabel { base, context: Context::Floating }
    }

    pub fn is_floating(&self) -> bool {
        self.context == Context::Floating
    }

    pub fn with_context(self, context: Context) -> Self {
        GateLabel { base: self.base, context }
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.context {
            Context::Free => write!(f, "{}", self.base),
            Context::Index(k) => write!(f, "{}@{}", self.base, k),
            Context::Floating => write!(f, "{}@f", self.base),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelParseError {
    #[error("unknown base gate `{0}`")]
    UnknownBase(String),
    #[error("bad context `{0}`")]
    BadContext(String),
}

impl FromStr for BaseGate {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Rx" | "X90" | "x" => Ok(BaseGate::Rx),
            "Ry" | "Y90" | "y" => Ok(BaseGate::Ry),
            "I" | "Gi" | "i" => Ok(BaseGate::I),
            other => Err(LabelParseError::UnknownBase(other.to_string())),
        }
    }
}

impl FromStr for GateLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (base, context) = match s.split_once('@') {
            None => (s, Context::Free),
            Some((b, "f")) => (b, Context::Floating),
            Some((b, c)) => {
                let k: u8 = c.parse().map_err(|_| LabelParseError::BadContext(c.to_string()))?;
                (b, Context::Index(k))
            }
        };
        Ok(GateLabel { base: base.parse()?, context })
    }
}

impl TryFrom<String> for GateLabel {
    type Error = LabelParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GateLabel> for String {
    fn from(l: GateLabel) -> String {
        l.to_string()
    }
}

impl Context {
    pub fn index(self) -> Option<u8> {
        match self {
            Context::Index(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Context::Free => f.write_str("free"),
            Context::Index(k) => write!(f, "{k}"),
            Context::Floating => f.write_str("f"),
        }
    }
}

impl FromStr for Context {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free" => Ok(Context::Free),
            "f" => Ok(Context::Floating),
            k => k.parse().map(Context::Index).map_err(|_| LabelParseError::BadContext(k.to_string())),
        }
    }
}

impl TryFrom<String> for Context {
    type Error = LabelParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Context> for String {
    fn from(c: Context) -> String {
        c.to_string()
    }
}

/// Render a time-ordered label sequence as a compact string, e.g. `Rx@3 I@1`.
pub fn format_sequence(seq: &[GateLabel]) -> String {
    seq.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse() {
        for s in ["Rx", "Ry@3", "I@f", "I@12"] {
            let l: GateLabel = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("Rz".parse::<GateLabel>().is_err());
        assert!("I@x".parse::<GateLabel>().is_err());
    }

    #[test]
    fn serde_as_string() {
        let l = GateLabel::at(BaseGate::I, 2);
        let js = serde_json::to_string(&l).unwrap();
        assert_eq!(js, "\"I@2\"");
        let back: GateLabel = serde_json::from_str(&js).unwrap();
        assert_eq!(back, l);
    }
}
