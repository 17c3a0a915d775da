//! Self-describing policy files: the config they were produced under, the
//! benchmark table, an optional refined critic and provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::learner::{QTable, UpdateRule};
use crate::stabilizer::{CriticState, RefineLogRow, StabilizerParams};
use crate::statespace::{ActionGrid, BinningConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rule: UpdateRule,
    pub episodes: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineProvenance {
    pub episodes: usize,
    pub nu_bar: f64,
    pub seed: u64,
    pub config_hash: String,
    /// Set when the benchmark table was never trained.
    pub empty_benchmark: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticArtifact {
    pub params: StabilizerParams,
    pub table: Vec<f64>,
    /// Per-rollout accepted-update ledger from refinement.
    pub ledger: Vec<RefineLogRow>,
    pub provenance: RefineProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub format_version: u32,
    pub config: RunConfig,
    pub binning: BinningConfig,
    pub actions: ActionGrid,
    pub q_table: QTable,
    pub provenance: Provenance,
    pub critic: Option<CriticArtifact>,
}

/// Min, max and nonzero count of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub cells: usize,
    pub min: f64,
    pub max: f64,
    pub nonzero: usize,
}

impl TableSummary {
    pub fn of(values: &[f64]) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (min, max) = if values.is_empty() { (0.0, 0.0) } else { (min, max) };
        Self { cells: values.len(), min, max, nonzero: values.iter().filter(|&&v| v != 0.0).count() }
    }
}

pub fn space_signature(binning: &BinningConfig, actions: &ActionGrid) -> String {
    format!("{} | {}", binning.signature(), actions.signature())
}

impl PolicyArtifact {
    /// The embedded config has its output directory blanked, so equal runs
    /// written to different places produce identical files.
    pub fn benchmark(config: &RunConfig, q_table: QTable) -> Self {
        let env = config.env();
        let train = config.train();
        Self {
            format_version: FORMAT_VERSION,
            config: RunConfig { out: Default::default(), ..config.clone() },
            binning: env.binning,
            actions: env.actions,
            q_table,
            provenance: Provenance {
                rule: train.rule,
                episodes: train.episodes,
                seed: config.seed,
                config_hash: config.hash(),
            },
            critic: None,
        }
    }

    pub fn with_critic(mut self, critic: &CriticState, params: StabilizerParams, ledger: Vec<RefineLogRow>, provenance: RefineProvenance) -> Self {
        self.critic = Some(CriticArtifact { params, table: critic.table().to_vec(), ledger, provenance });
        self
    }

    pub fn signature(&self) -> String {
        space_signature(&self.binning, &self.actions)
    }

    /// Rejects an artifact whose spaces differ from `env`'s.
    pub fn check_space(&self, env: &EnvConfig) -> Result<()> {
        let mine = self.signature();
        let theirs = space_signature(&env.binning, &env.actions);
        if mine != theirs {
            return Err(Error::SpaceMismatch { artifact: mine, config: theirs });
        }
        Ok(())
    }

    /// Environment the artifact was produced under.
    pub fn env(&self) -> EnvConfig {
        self.config.env()
    }

    pub fn critic_state(&self) -> Result<Option<(CriticState, StabilizerParams)>> {
        self.critic
            .as_ref()
            .map(|c| Ok((CriticState::from_table(&self.binning, self.actions.len(), c.table.clone(), &c.params)?, c.params)))
            .transpose()
    }

    fn check(&self) -> Result<()> {
        let (n, m) = (self.binning.cardinality(), self.actions.len());
        if self.q_table.n_states() != n || self.q_table.n_actions() != m || self.q_table.values().len() != n * m {
            return Err(Error::Artifact(format!(
                "benchmark table is {} x {} ({} cells); spaces need {n} x {m}",
                self.q_table.n_states(),
                self.q_table.n_actions(),
                self.q_table.values().len()
            )));
        }
        if let Some(c) = &self.critic {
            if c.table.len() != n * m {
                return Err(Error::Artifact(format!("critic has {} cells; spaces need {}", c.table.len(), n * m)));
            }
        }
        if self.q_table.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Artifact("benchmark table holds non-finite values".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses an artifact, checking the format version before anything else.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::ArtifactVersion { found: probe.format_version, supported: FORMAT_VERSION });
        }
        let artifact: Self = serde_json::from_str(text)?;
        artifact.check()?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized artifact.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    /// Human-readable dump: config, provenance and table summaries.
    pub fn dump(&self) -> Result<String> {
        use std::fmt::Write;
        let mut s = String::new();
        let q = TableSummary::of(self.q_table.values());
        let w = |s: &mut String, line: String| s.push_str(&(line + "\n"));
        w(&mut s, format!("format_version = {}", self.format_version));
        w(&mut s, format!("config_hash = {}", self.provenance.config_hash));
        w(&mut s, format!("seed = {}", self.provenance.seed));
        w(&mut s, format!("rule = {}", self.provenance.rule));
        w(&mut s, format!("episodes = {}", self.provenance.episodes));
        w(&mut s, format!("spaces = {}", self.signature()));
        w(&mut s, format!("q_table: cells={} min={} max={} nonzero={}", q.cells, q.min, q.max, q.nonzero));
        if let Some(c) = &self.critic {
            let t = TableSummary::of(&c.table);
            let accepted: u64 = c.ledger.iter().map(|r| r.audit.accepted).sum();
            w(&mut s, format!("critic: cells={} min={} max={} nonzero={}", t.cells, t.min, t.max, t.nonzero));
            w(&mut s, format!(
                "refine: episodes={} nu_bar={} seed={} config_hash={} accepted_updates={} empty_benchmark={}",
                c.provenance.episodes, c.provenance.nu_bar, c.provenance.seed, c.provenance.config_hash, accepted, c.provenance.empty_benchmark
            ));
        }
        writeln!(s, "\n[config]\n{}", self.config.to_toml()?).expect("string write");
        Ok(s)
    }
}
