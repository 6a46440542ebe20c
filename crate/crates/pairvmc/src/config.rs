//! Run configuration: one TOML file with dotted keys, overridable from the
//! command line.

use std::path::{Path, PathBuf};

use pairvmc_core::optim::AdamConfig;
use pairvmc_core::sampler::McmcConfig;
use pairvmc_core::trainer::TrainConfig;
use pairvmc_core::{AnsatzKind, NetConfig, Nucleus, Potential, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub ansatz: String,
    pub seed: u64,
    pub output: PathBuf,
    pub system: SystemSection,
    pub network: NetworkSection,
    pub mcmc: McmcSection,
    pub train: TrainSection,
    pub evaluate: EvaluateSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub dim: usize,
    pub n_up: usize,
    pub n_down: usize,
    /// "coulomb" or "harmonic"
    pub potential: String,
    pub omega: f64,
    pub nuclei: Vec<NucleusEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusEntry {
    pub charge: f64,
    pub position: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub layers: usize,
    pub one_width: usize,
    pub two_width: usize,
    pub pair_width: usize,
    pub ensemble: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub steps_per_iter: usize,
    pub move_width: f64,
    pub burn_in: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Winsorization width in MADs; 0 disables.
    pub winsorize: f64,
    pub checkpoint_every: usize,
    pub summary_window: usize,
    pub summary_stride: usize,
    /// Write wall-clock milliseconds to the trace; when false the column is
    /// zero and traces are byte-reproducible.
    pub record_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub blocks: usize,
    pub sweeps_per_block: usize,
    pub burn_in: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ansatz: AnsatzKind::PairDouble.name().into(),
            seed: 0,
            output: PathBuf::from("runs/default"),
            system: SystemSection::default(),
            network: NetworkSection::default(),
            mcmc: McmcSection::default(),
            train: TrainSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            dim: 3,
            n_up: 1,
            n_down: 0,
            potential: "coulomb".into(),
            omega: 1.0,
            nuclei: vec![NucleusEntry {
                charge: 1.0,
                position: vec![0.0; 3],
            }],
        }
    }
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetConfig::default();
        Self {
            layers: n.layers,
            one_width: n.one_width,
            two_width: n.two_width,
            pair_width: n.pair_width,
            ensemble: n.ensemble,
        }
    }
}

impl Default for McmcSection {
    fn default() -> Self {
        let m = McmcConfig::default();
        Self {
            steps_per_iter: m.steps_per_iter,
            move_width: m.move_width,
            burn_in: m.burn_in,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch: t.batch,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            clip_norm: t.adam.clip_norm.unwrap_or(0.0),
            winsorize: t.winsorize.unwrap_or(0.0),
            checkpoint_every: 1000,
            summary_window: t.summary_window,
            summary_stride: t.summary_stride,
            record_time: true,
        }
    }
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            blocks: 64,
            sweeps_per_block: 10,
            burn_in: 100,
        }
    }
}

/// Built-in configurations, by name.
pub const PRESETS: [(&str, &str); 6] = [
    ("hydrogen", include_str!("../presets/hydrogen.toml")),
    (
        "harmonic1d-n2",
        include_str!("../presets/harmonic1d-n2.toml"),
    ),
    (
        "harmonic1d-n3",
        include_str!("../presets/harmonic1d-n3.toml"),
    ),
    ("li-pairprime", include_str!("../presets/li-pairprime.toml")),
    (
        "li-pairdouble",
        include_str!("../presets/li-pairdouble.toml"),
    ),
    (
        "be-pairdouble",
        include_str!("../presets/be-pairdouble.toml"),
    ),
];

pub fn preset_text(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Config(format!(
                "unknown preset '{name}' (available: {})",
                names.join(", ")
            ))
        })
}

/// Sets `path` (dotted) in a TOML table, creating intermediate tables.
fn set_dotted(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CliError::Config(format!("empty key in override '{path}'")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{p}' in '{path}' is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as a TOML literal and falls back to
/// a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{s}' is not key=value")))?;
    let k = k.trim();
    let v = v.trim();
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl RunConfig {
    /// Parses TOML text, applies overrides, and validates.
    pub fn from_toml_with(
        text: &str,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut table, k, v.clone())?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::from_toml_with(text, &[])
    }

    pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_with(&text, overrides)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn kind(&self) -> Result<AnsatzKind, CliError> {
        self.ansatz
            .parse()
            .map_err(|e| CliError::Config(format!("{e}")))
    }

    pub fn system(&self) -> Result<SystemSpec, CliError> {
        let s = &self.system;
        let potential = match s.potential.to_ascii_lowercase().as_str() {
            "coulomb" => Potential::Coulomb,
            "harmonic" => Potential::Harmonic { omega: s.omega },
            other => return Err(CliError::Config(format!("unknown potential '{other}'"))),
        };
        let spec = SystemSpec {
            dim: s.dim,
            nuclei: s
                .nuclei
                .iter()
                .map(|n| Nucleus {
                    charge: n.charge,
                    position: n.position.clone(),
                })
                .collect(),
            n_up: s.n_up,
            n_down: s.n_down,
            potential,
        };
        spec.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn net(&self) -> NetConfig {
        let n = &self.network;
        NetConfig {
            layers: n.layers,
            one_width: n.one_width,
            two_width: n.two_width,
            pair_width: n.pair_width,
            ensemble: n.ensemble,
        }
    }

    pub fn mcmc(&self) -> McmcConfig {
        McmcConfig {
            steps_per_iter: self.mcmc.steps_per_iter,
            move_width: self.mcmc.move_width,
            burn_in: self.mcmc.burn_in,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch: t.batch,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                clip_norm: (t.clip_norm > 0.0).then_some(t.clip_norm),
            },
            winsorize: (t.winsorize > 0.0).then_some(t.winsorize),
            seed: self.seed,
            summary_window: t.summary_window,
            summary_stride: t.summary_stride,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: pairvmc_core::Error| CliError::Config(e.to_string());
        self.kind()?;
        self.system()?;
        self.net().validate().map_err(cfg_err)?;
        self.mcmc().validate().map_err(cfg_err)?;
        self.train_config().validate().map_err(cfg_err)?;
        if self.train.clip_norm < 0.0 || self.train.winsorize < 0.0 {
            return Err(CliError::Config(
                "clip_norm and winsorize must be >= 0".into(),
            ));
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!(
                "seed must be at most {}",
                i64::MAX
            )));
        }
        if self.train.checkpoint_every == 0 {
            return Err(CliError::Config(
                "train.checkpoint_every must be at least 1".into(),
            ));
        }
        if self.evaluate.blocks < 2 || self.evaluate.sweeps_per_block == 0 {
            return Err(CliError::Config(
                "evaluate needs >= 2 blocks of >= 1 sweep".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_protocol() {
        let c = RunConfig::default();
        assert_eq!(c.network.layers, 4);
        assert_eq!((c.network.one_width, c.network.two_width), (256, 32));
        assert_eq!(c.train.batch, 2048);
        assert_eq!(c.mcmc.move_width, 0.02);
        assert_eq!(c.mcmc.steps_per_iter, 10);
        assert_eq!(c.train.learning_rate, 1e-4);
        c.validate().unwrap();
    }

    #[test]
    fn every_preset_parses() {
        for (name, text) in PRESETS {
            let c = RunConfig::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("ansatz = 'fermi'\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rat = 0.1\n").is_err());
        assert!(RunConfig::from_toml("ansatz = 'pfaffian'\n").is_err());
    }

    #[test]
    fn overrides_win_over_the_file() {
        let text = "ansatz = 'fermi'\n[train]\nbatch = 64\n";
        let o = vec![
            parse_override("train.batch=128").unwrap(),
            parse_override("ansatz=pair-prime").unwrap(),
            parse_override("network.layers = 2").unwrap(),
        ];
        let c = RunConfig::from_toml_with(text, &o).unwrap();
        assert_eq!(c.train.batch, 128);
        assert_eq!(c.ansatz, "pair-prime");
        assert_eq!(c.network.layers, 2);
        assert_eq!(c.train.iterations, TrainSection::default().iterations);
        assert!(parse_override("novalue").is_err());
    }
}
