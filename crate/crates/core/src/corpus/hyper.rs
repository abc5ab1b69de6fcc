use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which summarizer variant, and therefore which context block a batch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// subroutine text only
    Baseline,
    /// sibling subroutines from the same file
    Fc,
    /// sampled files from the whole project
    Pc,
}

impl Variant {
    pub fn model_name(self) -> &'static str {
        match self {
            Variant::Baseline => "attendgru",
            Variant::Fc => "attendgru-fc",
            Variant::Pc => "attendgru-pc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Fc => "fc",
            Variant::Pc => "pc",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" | "attendgru" => Ok(Variant::Baseline),
            "fc" | "attendgru-fc" => Ok(Variant::Fc),
            "pc" | "attendgru-pc" => Ok(Variant::Pc),
            other => Err(Error::invalid(format!("unknown variant `{other}` (expected baseline, fc or pc)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    Gru,
}

/// Model and data-shaping knobs. Defaults for the first six follow the
/// published configuration; the rest are local choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// embedding / hidden width
    pub e: usize,
    /// vocabulary cap, excluding the reserved tokens
    pub v: usize,
    /// words per subroutine
    pub w: usize,
    /// subroutines per file
    pub s: usize,
    /// files per project
    pub f: usize,
    pub rnn: RnnKind,
    pub decode_max_len: usize,
    pub batch_size: usize,
    pub select_seed: u64,
    pub init_seed: u64,
    pub lr: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            e: 100,
            v: 10_000,
            w: 25,
            s: 10,
            f: 10,
            rnn: RnnKind::Gru,
            decode_max_len: 13,
            batch_size: 32,
            select_seed: 0,
            init_seed: 0,
            lr: 1e-3,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("e", self.e),
            ("v", self.v),
            ("w", self.w),
            ("s", self.s),
            ("f", self.f),
            ("decode_max_len", self.decode_max_len),
            ("batch_size", self.batch_size),
        ];
        for (name, value) in sizes {
            if value == 0 {
                return Err(Error::invalid(format!("hyperparameter {name} must be at least 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    /// Bytes of 32-bit floats one example's context block occupies once
    /// embedded: `f·s·w·e·4` for project context, `s·w·e·4` for file context.
    pub fn context_bytes(&self, variant: Variant) -> usize {
        match variant {
            Variant::Baseline => 0,
            Variant::Fc => self.s * self.w * self.e * 4,
            Variant::Pc => self.f * self.s * self.w * self.e * 4,
        }
    }
}
