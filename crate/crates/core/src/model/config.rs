use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::labels::Task;
use crate::{Error, Result};

/// Network wiring: the full dual-attention model and its three ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Question and answer both attend over the concatenated QA story.
    Dan,
    /// Only the question attends over the story.
    DanNoAnsAttn,
    /// No attention at all.
    QaSBlstm,
    /// Question and answer attend directly over each other.
    QaCoattention,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::QaSBlstm,
        Variant::QaCoattention,
        Variant::DanNoAnsAttn,
        Variant::Dan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dan => "dan",
            Variant::DanNoAnsAttn => "dan-no-ans-attn",
            Variant::QaSBlstm => "qa-s-blstm",
            Variant::QaCoattention => "qa-coattention",
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Dan => "DAN",
            Variant::DanNoAnsAttn => "DAN (-) Ans. Attention",
            Variant::QaSBlstm => "QA S-BLSTM",
            Variant::QaCoattention => "QA CoAttention",
        }
    }

    pub fn uses_story(self) -> bool {
        matches!(self, Variant::Dan | Variant::DanNoAnsAttn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected dan, dan-no-ans-attn, qa-s-blstm or qa-coattention)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub task: Task,
    pub embed_dim: usize,
    /// Concatenated forward+backward width of every BLSTM layer.
    pub blstm_dim: usize,
    pub question_len: usize,
    pub answer_len: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn full(task: Task) -> Self {
        ModelConfig {
            variant: Variant::Dan,
            task,
            embed_dim: 300,
            blstm_dim: 128,
            question_len: 82,
            answer_len: 82,
            dropout: 0.1,
            seed: 0,
        }
    }

    /// Reduced dimensions for CPU-scale runs.
    pub fn micro(task: Task) -> Self {
        ModelConfig {
            embed_dim: 64,
            blstm_dim: 64,
            question_len: 24,
            answer_len: 24,
            ..ModelConfig::full(task)
        }
    }

    pub fn story_len(&self) -> usize {
        self.question_len + self.answer_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.question_len == 0 || self.answer_len == 0 {
            return Err(Error::Config("question and answer lengths must be >= 1".into()));
        }
        if self.blstm_dim == 0 || self.blstm_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "BLSTM width {} must be positive and even",
                self.blstm_dim
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let cfg = ModelConfig::full(Task::Compat);
        assert_eq!(
            (cfg.embed_dim, cfg.blstm_dim, cfg.question_len, cfg.answer_len),
            (300, 128, 82, 82)
        );
        assert_eq!(cfg.dropout, 0.1);
        assert!(cfg.validate().is_ok());
        let odd = ModelConfig {
            blstm_dim: 7,
            ..cfg.clone()
        };
        assert!(odd.validate().is_err());
        let bad_rate = ModelConfig { dropout: 1.0, ..cfg };
        assert!(bad_rate.validate().is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!(matches!("dan2".parse::<Variant>(), Err(Error::Config(_))));
    }
}
