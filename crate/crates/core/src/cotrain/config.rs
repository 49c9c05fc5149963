use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dpo::DpoConfig;
use crate::encoder::{TrainConfig, DEFAULT_EMBED_DIM, DEFAULT_FEATURE_DIM, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_KS;
use crate::rewriter::{DecodeConfig, PolicyConfig};

/// Component switches for the ablation arms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub skip_s1b: bool,
    pub freeze_encoder: bool,
    pub freeze_rewriter: bool,
}

impl Ablation {
    /// Short label such as `full` or `skip_s1b+freeze_rewriter`.
    pub fn label(&self) -> String {
        let on: Vec<&str> = [
            (self.skip_s1b, "skip_s1b"),
            (self.freeze_encoder, "freeze_encoder"),
            (self.freeze_rewriter, "freeze_rewriter"),
        ]
        .iter()
        .filter(|(set, _)| *set)
        .map(|(_, name)| *name)
        .collect();
        if on.is_empty() {
            "full".to_string()
        } else {
            on.join("+")
        }
    }
}

/// Shape of the untrained encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderInit {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub temperature: f64,
}

impl Default for EncoderInit {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

/// Everything that determines a pipeline run besides the corpus and the
/// lexicon. Stage seeds are derived from `seed`; the `seed` fields of the
/// nested training configs are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rounds: usize,
    pub seed: u64,
    pub encoder: EncoderInit,
    pub policy: PolicyConfig,
    pub s1a: TrainConfig,
    pub s3: TrainConfig,
    pub dpo: DpoConfig,
    pub n_candidates: usize,
    pub s2_decode: DecodeConfig,
    pub s4_decode: DecodeConfig,
    /// Caps the number of training queries sampled at S4.
    pub s4_max_queries: Option<usize>,
    pub ablation: Ablation,
    /// Regenerate the description dataset after the last round too.
    pub regenerate_final: bool,
    /// Evaluate both modes after every model-changing stage. When off, only
    /// the trajectory points are evaluated.
    pub eval_stages: bool,
    pub ks: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            seed: 0,
            encoder: EncoderInit::default(),
            policy: PolicyConfig::default(),
            s1a: TrainConfig::default(),
            s3: TrainConfig::default(),
            dpo: DpoConfig::default(),
            n_candidates: 4,
            s2_decode: DecodeConfig::bootstrap(),
            s4_decode: DecodeConfig::candidates(),
            s4_max_queries: None,
            ablation: Ablation::default(),
            regenerate_final: false,
            eval_stages: true,
            ks: DEFAULT_KS.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if self.n_candidates < 2 {
            return bad("n_candidates must be at least 2".into());
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be non-empty and positive".into());
        }
        if !self.ks.contains(&5) {
            return bad("ks must include 5 (the trajectory metric)".into());
        }
        if self.s4_max_queries == Some(0) {
            return bad("s4_max_queries must be positive".into());
        }
        if self.encoder.embed_dim < 2 || self.encoder.feature_dim < 1 {
            return bad("encoder dimensions are too small".into());
        }
        if !(self.encoder.temperature > 0.0 && self.encoder.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.encoder.temperature));
        }
        for (name, t) in [("s1a", &self.s1a), ("s3", &self.s3)] {
            if t.batch_size == 0 || !(t.lr >= 0.0 && t.lr.is_finite()) {
                return bad(format!("{name}: invalid batch size or learning rate"));
            }
            if !(0.0..=1.0).contains(&t.warmup_frac) {
                return bad(format!("{name}: warmup_frac must lie in [0, 1]"));
            }
        }
        self.dpo.validate().map_err(|e| Error::Config(format!("dpo: {e}")))?;
        self.s2_decode.validate().map_err(|e| Error::Config(format!("s2_decode: {e}")))?;
        self.s4_decode.validate().map_err(|e| Error::Config(format!("s4_decode: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Input files of a run. Relative paths are resolved against the directory
/// of the run file they were read from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
}

/// One experiment: `[data]` plus `[pipeline]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub data: DataPaths,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl RunFile {
    /// Parses without validating the pipeline section, so that overrides
    /// can be applied first.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut run = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut run.data.corpus, &mut run.data.lexicon] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = PipelineConfig::from_toml_str("rounds = 2\n[ablation]\nskip_s1b = true\n").unwrap();
        assert_eq!(cfg.rounds, 2);
        assert!(cfg.ablation.skip_s1b);
        assert_eq!(cfg.n_candidates, 4);
        assert_eq!(cfg.dpo.beta, 0.1);
        let again = PipelineConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn rejects_invalid() {
        assert!(PipelineConfig::from_toml_str("rounds = 0").is_err());
        assert!(PipelineConfig::from_toml_str("n_candidates = 1").is_err());
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml_str("[dpo]\nbeta = 0.0").is_err());
    }

    #[test]
    fn ablation_labels() {
        assert_eq!(Ablation::default().label(), "full");
        let a = Ablation {
            skip_s1b: true,
            freeze_rewriter: true,
            ..Ablation::default()
        };
        assert_eq!(a.label(), "skip_s1b+freeze_rewriter");
    }

    #[test]
    fn run_file_resolves_paths_against_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[data]\ncorpus = \"c.jsonl\"\nlexicon = \"/abs/lex.tsv\"\n[pipeline]\nrounds = 1\n",
        )
        .unwrap();
        let run = RunFile::load(&path).unwrap();
        assert_eq!(run.data.corpus, dir.path().join("c.jsonl"));
        assert_eq!(run.data.lexicon, PathBuf::from("/abs/lex.tsv"));
        assert_eq!(run.pipeline.rounds, 1);
        assert!(RunFile::from_toml_str("[pipeline]\nrounds = 1\n").is_err());
    }
}
