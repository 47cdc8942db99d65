//! Run configuration files (TOML).
//!
//! ```toml
//! dataset = "wsc.jsonl"
//! perturbed = ["wsc.TEN.jsonl"]   # empty: generate all seven kinds
//! scores = []                     # precomputed score set files
//! adapter = "builtin:toy"
//! strategies = ["mask_substitution"]
//! seed = 0
//! nucleus_p = 0.9
//! marginal_q = 0.15
//! out = "out"
//! metrics = []                    # empty: every metric
//! human_reference = false
//!
//! [pmi]
//! table = "corpus.wpmi"
//! [pmi.config]
//! min_count = 200
//! window = 6
//!
//! [scoring]
//! averaging = "probability"
//! pmi_scope = "segment"
//!
//! [attn]
//! target = "correct_referent"
//! top = 5
//! ```
//!
//! Relative paths are resolved against the directory of the file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use winoprobe_core::attention::CriticalTarget;
use winoprobe_core::pmi::PmiConfig;
use winoprobe_core::scoring::{ScoreOptions, Strategy};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Accuracy,
    DeltaAcc,
    PairAccuracy,
    Stability,
    Associative,
    SecondReferent,
    Marginal,
    ProbabilityShift,
    RightWrong,
    JsDistance,
    Representation,
    PmiDivergence,
}

impl MetricName {
    pub const ALL: [MetricName; 12] = [
        MetricName::Accuracy,
        MetricName::DeltaAcc,
        MetricName::PairAccuracy,
        MetricName::Stability,
        MetricName::Associative,
        MetricName::SecondReferent,
        MetricName::Marginal,
        MetricName::ProbabilityShift,
        MetricName::RightWrong,
        MetricName::JsDistance,
        MetricName::Representation,
        MetricName::PmiDivergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::DeltaAcc => "delta_acc",
            MetricName::PairAccuracy => "pair_accuracy",
            MetricName::Stability => "stability",
            MetricName::Associative => "associative",
            MetricName::SecondReferent => "second_referent",
            MetricName::Marginal => "marginal",
            MetricName::ProbabilityShift => "probability_shift",
            MetricName::RightWrong => "right_wrong",
            MetricName::JsDistance => "js_distance",
            MetricName::Representation => "representation",
            MetricName::PmiDivergence => "pmi_divergence",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        MetricName::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmiSection {
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub config: PmiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttnSection {
    pub target: CriticalTarget,
    /// Words kept per head in attention-shift rankings.
    pub top: usize,
}

impl Default for AttnSection {
    fn default() -> Self {
        AttnSection { target: CriticalTarget::CorrectReferent, top: 5 }
    }
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::MaskSubstitution]
}

fn default_p() -> f64 {
    0.9
}

fn default_q() -> f64 {
    0.15
}

fn default_out() -> PathBuf {
    PathBuf::from("winoprobe-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub perturbed: Vec<PathBuf>,
    #[serde(default)]
    pub scores: Vec<PathBuf>,
    #[serde(default)]
    pub adapter: Option<String>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p")]
    pub nucleus_p: f64,
    /// Quantile for the marginal sets.
    #[serde(default = "default_q")]
    pub marginal_q: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub metrics: Vec<MetricName>,
    #[serde(default)]
    pub human_reference: bool,
    #[serde(default)]
    pub pmi: PmiSection,
    #[serde(default)]
    pub scoring: ScoreOptions,
    #[serde(default)]
    pub attn: AttnSection,
}

impl RunConfig {
    /// A configuration over one dataset with every default.
    pub fn for_dataset(dataset: PathBuf) -> Self {
        RunConfig {
            dataset,
            perturbed: Vec::new(),
            scores: Vec::new(),
            adapter: None,
            strategies: default_strategies(),
            seed: 0,
            nucleus_p: default_p(),
            marginal_q: default_q(),
            out: default_out(),
            lexicon: None,
            metrics: Vec::new(),
            human_reference: false,
            pmi: PmiSection::default(),
            scoring: ScoreOptions::default(),
            attn: AttnSection::default(),
        }
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut c.dataset);
        c.perturbed.iter_mut().for_each(abs);
        c.scores.iter_mut().for_each(abs);
        abs(&mut c.out);
        if let Some(l) = c.lexicon.as_mut() {
            abs(l);
        }
        if let Some(t) = c.pmi.table.as_mut() {
            abs(t);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks values and that every referenced input exists.
    pub fn check(&self) -> Result<()> {
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::Config(format!("nucleus_p {} outside (0,1]", self.nucleus_p)));
        }
        if !(self.marginal_q > 0.0 && self.marginal_q <= 0.5) {
            return Err(Error::Config(format!("marginal_q {} outside (0,0.5]", self.marginal_q)));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        self.pmi.config.validate()?;
        let mut missing: Vec<String> = Vec::new();
        let inputs = std::iter::once(&self.dataset).chain(&self.perturbed).chain(&self.scores).chain(&self.lexicon).chain(&self.pmi.table);
        for p in inputs {
            if !p.exists() {
                missing.push(p.display().to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::Missing(format!("missing inputs: {}", missing.join(", "))));
        }
        Ok(())
    }

    pub fn selected(&self) -> BTreeSet<MetricName> {
        if self.metrics.is_empty() {
            MetricName::ALL.into_iter().collect()
        } else {
            self.metrics.iter().copied().collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = r#"
            dataset = "d.jsonl"
            perturbed = ["/abs/p.jsonl"]
            strategies = ["context_option", "pmi_baseline"]
            seed = 11
            metrics = ["accuracy", "stability"]
            [pmi]
            table = "t.wpmi"
            [pmi.config]
            min_count = 2
            [scoring]
            averaging = "log_probability"
            [attn]
            target = "discriminatory_segment"
        "#;
        let c = RunConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(c.dataset, PathBuf::from("/base/d.jsonl"));
        assert_eq!(c.perturbed, vec![PathBuf::from("/abs/p.jsonl")]);
        assert_eq!(c.pmi.table, Some(PathBuf::from("/base/t.wpmi")));
        assert_eq!(c.pmi.config, PmiConfig { min_count: 2, ..PmiConfig::default() });
        assert_eq!(c.strategies, vec![Strategy::ContextOption, Strategy::PmiBaseline]);
        assert_eq!(c.selected().len(), 2);
        assert_eq!(c.attn.target, CriticalTarget::DiscriminatorySegment);
        assert_eq!(c.nucleus_p, 0.9);
        assert_eq!(c.out, PathBuf::from("/base/winoprobe-out"));
    }

    #[test]
    fn unknown_keys_and_missing_inputs_are_reported() {
        assert!(RunConfig::parse("dataset = \"d\"\nsed = 1\n", Path::new(".")).is_err());
        let c = RunConfig::parse("dataset = \"nope.jsonl\"\nscores = [\"gone\"]\n", Path::new("/definitely/absent")).unwrap();
        let err = c.check().unwrap_err().to_string();
        assert!(err.contains("nope.jsonl") && err.contains("gone"), "{err}");
    }
}
