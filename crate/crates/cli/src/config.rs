//! Run configuration: JSON file defaults overridden by command-line flags.

use perspect_core::{
    BackendConfig, Error, PackingConfig, PromptTemplate, Result, SplitId, Strategy, TreeMode,
    WireProtocol,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory holding schema.json plus split files.
    pub data_dir: Option<PathBuf>,
    /// Prompt template JSON; `<data_dir>/template.json` when absent.
    pub template: Option<PathBuf>,
    /// Where distributions, manifests, and reports land.
    pub out_dir: PathBuf,
    pub split: SplitId,
    pub budget_tokens: usize,
    pub generation_headroom: usize,
    /// Cap on packed examples; the one-example ablation sets 1.
    pub max_examples: Option<usize>,
    pub include_demographics: bool,
    /// How label-set trees are evaluated.
    pub tree_mode: TreeMode,
    pub seed: u64,
    /// Aggregation strategies to consider, in preference order.
    pub strategies: Vec<Strategy>,
    /// Highest tolerated inference failure rate before a nonzero exit.
    pub failure_threshold: f64,
    pub backend: BackendConfig,
    /// Rater population file; when set, inference answers come from the
    /// simulated population instead of the HTTP backend.
    pub oracle_population: Option<PathBuf>,
    /// Tag separating runs that share an output directory.
    pub mode_tag: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            template: None,
            out_dir: PathBuf::from("runs"),
            split: SplitId::Dev,
            budget_tokens: 3000,
            generation_headroom: 64,
            max_examples: None,
            include_demographics: true,
            tree_mode: TreeMode::default(),
            seed: 17,
            strategies: vec![Strategy::Mean, Strategy::Mixed],
            failure_threshold: 0.0,
            backend: BackendConfig::default(),
            oracle_population: None,
            mode_tag: "default".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("run config {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("run config: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data_dir.as_deref().ok_or_else(|| {
            Error::Config("no dataset directory; pass --data or set data_dir".into())
        })
    }

    pub fn template_path(&self) -> Result<PathBuf> {
        if let Some(p) = &self.template {
            return Ok(p.clone());
        }
        let fallback = self.data_dir()?.join("template.json");
        if fallback.exists() {
            return Ok(fallback);
        }
        Err(Error::Config(
            "no prompt template; pass --template, set template, \
             or put template.json in the dataset directory"
                .into(),
        ))
    }

    /// The template with config-level ablations applied.
    pub fn load_template(&self) -> Result<PromptTemplate> {
        let mut t = PromptTemplate::load(&self.template_path()?)?;
        if !self.include_demographics {
            t.include_demographics = false;
        }
        Ok(t)
    }

    pub fn packing(&self) -> PackingConfig {
        PackingConfig {
            budget_tokens: self.budget_tokens,
            generation_headroom: self.generation_headroom,
            max_examples: self.max_examples,
        }
    }
}

/// Flags shared by the prompt-building and inference commands. Every field
/// overrides the corresponding [`RunConfig`] value when present.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// JSON run config; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dataset directory with schema.json and split files.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Prompt template JSON.
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Split to operate on: train, dev, or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Prompt token budget.
    #[arg(long)]
    pub budget_tokens: Option<usize>,
    /// Tokens reserved for the forced continuation.
    #[arg(long)]
    pub generation_headroom: Option<usize>,
    /// Pack at most one in-context example (ablation).
    #[arg(long, conflicts_with = "max_examples")]
    pub one_example: bool,
    /// Pack at most this many in-context examples.
    #[arg(long)]
    pub max_examples: Option<usize>,
    /// Drop the demographics line from prompts (ablation).
    #[arg(long)]
    pub no_demographics: bool,
    /// Label-set tree evaluation: minimal or exact.
    #[arg(long)]
    pub tree_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated population file answering queries instead of HTTP.
    #[arg(long, value_name = "FILE")]
    pub oracle_population: Option<PathBuf>,
    /// Backend base URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent with each request.
    #[arg(long)]
    pub model: Option<String>,
    /// Wire protocol: openai-completions or native-score.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Highest tolerated failure rate before a nonzero exit.
    #[arg(long)]
    pub failure_threshold: Option<f64>,
    /// Tag separating runs that share an output directory.
    #[arg(long)]
    pub mode_tag: Option<String>,
}

pub fn parse_tree_mode(s: &str) -> Result<TreeMode> {
    match s {
        "minimal" => Ok(TreeMode::Minimal),
        "exact" => Ok(TreeMode::Exact),
        other => Err(Error::Config(format!(
            "unknown tree mode {other:?} (expected minimal or exact)"
        ))),
    }
}

pub fn parse_protocol(s: &str) -> Result<WireProtocol> {
    match s {
        "openai-completions" => Ok(WireProtocol::OpenAiCompletions),
        "native-score" => Ok(WireProtocol::NativeScore),
        other => Err(Error::Config(format!(
            "unknown protocol {other:?} (expected openai-completions or native-score)"
        ))),
    }
}

pub fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "mean" => Ok(Strategy::Mean),
        "mixed" => Ok(Strategy::Mixed),
        other => Err(Error::Config(format!(
            "unknown strategy {other:?} (expected mean or mixed)"
        ))),
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data {
            cfg.data_dir = Some(v.clone());
        }
        if let Some(v) = &self.template {
            cfg.template = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.split {
            cfg.split = SplitId::parse(v)?;
        }
        if let Some(v) = self.budget_tokens {
            cfg.budget_tokens = v;
        }
        if let Some(v) = self.generation_headroom {
            cfg.generation_headroom = v;
        }
        if self.one_example {
            cfg.max_examples = Some(1);
        }
        if let Some(v) = self.max_examples {
            cfg.max_examples = Some(v);
        }
        if self.no_demographics {
            cfg.include_demographics = false;
        }
        if let Some(v) = &self.tree_mode {
            cfg.tree_mode = parse_tree_mode(v)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.oracle_population {
            cfg.oracle_population = Some(v.clone());
        }
        if let Some(v) = &self.endpoint {
            cfg.backend.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            cfg.backend.model = Some(v.clone());
        }
        if let Some(v) = &self.protocol {
            cfg.backend.protocol = parse_protocol(v)?;
        }
        if let Some(v) = self.failure_threshold {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "failure threshold {v} outside [0, 1]"
                )));
            }
            cfg.failure_threshold = v;
        }
        if let Some(v) = &self.mode_tag {
            cfg.mode_tag = v.clone();
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare_args() -> ConfigArgs {
        ConfigArgs {
            config: None,
            data: None,
            template: None,
            out: None,
            split: None,
            budget_tokens: None,
            generation_headroom: None,
            one_example: false,
            max_examples: None,
            no_demographics: false,
            tree_mode: None,
            seed: None,
            oracle_population: None,
            endpoint: None,
            model: None,
            protocol: None,
            failure_threshold: None,
            mode_tag: None,
        }
    }

    #[test]
    fn defaults_without_a_config_file() {
        let cfg = bare_args().resolve().unwrap();
        assert_eq!(cfg.budget_tokens, 3000);
        assert_eq!(cfg.seed, 17);
        assert!(cfg.include_demographics);
        assert_eq!(cfg.max_examples, None);
        assert!(cfg.data_dir().is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let on_disk = RunConfig {
            budget_tokens: 2000,
            seed: 5,
            ..RunConfig::default()
        };
        on_disk.save(&path).unwrap();

        let mut args = bare_args();
        args.config = Some(path);
        args.budget_tokens = Some(800);
        args.one_example = true;
        args.no_demographics = true;
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.budget_tokens, 800);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.max_examples, Some(1));
        assert!(!cfg.include_demographics);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"budget_tokens": 100, "bugdet": 5}"#).unwrap();
        let mut args = bare_args();
        args.config = Some(path);
        let err = args.resolve().unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("bugdet"));
    }

    #[test]
    fn config_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let cfg = RunConfig {
            data_dir: Some(PathBuf::from("/data/x")),
            max_examples: Some(3),
            ..RunConfig::default()
        };
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }
}
