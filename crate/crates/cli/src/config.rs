//! Experiment configuration: a TOML file with nested sections, per-kind
//! defaults and command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use mpsmagic::{preset, DmrgSettings, PartitionScheme};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PhaseScan,
    FullStateSre,
    SreVsChi,
    MutualInfo,
    LongRangeMagic,
    Autocorr,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PhaseScan => "phase-scan",
            Self::FullStateSre => "full-state-sre",
            Self::SreVsChi => "sre-vs-chi",
            Self::MutualInfo => "mutual-info",
            Self::LongRangeMagic => "long-range-magic",
            Self::Autocorr => "autocorr",
            Self::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    Perfect,
    Markov,
    PauliMps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicaChoice {
    Exact,
    Compressed,
}

/// `count` evenly spaced values from `min` to `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub jz: Axis,
    pub d: Axis,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    preset: Option<String>,
    jz: Option<f64>,
    d: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerFile {
    method: Option<SamplerMethod>,
    n_samples: Option<usize>,
    seed: Option<u64>,
    thinning: Option<usize>,
    burn_in: Option<usize>,
    move_mix: Option<f64>,
    scramble_mix: Option<f64>,
    dump_samples: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PauliMpsFile {
    mode: Option<ReplicaChoice>,
    chi_p_factor: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    scheme: Option<PartitionScheme>,
}

/// The file as written by the user; every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    kind: Option<ExperimentKind>,
    id: Option<String>,
    out_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    sizes: Option<Vec<usize>>,
    chis: Option<Vec<usize>>,
    renyi: Option<Vec<f64>>,
    model: Option<ModelFile>,
    sampler: Option<SamplerFile>,
    dmrg: Option<DmrgSettings>,
    pauli_mps: Option<PauliMpsFile>,
    partition: Option<PartitionFile>,
    grid: Option<Grid>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid experiment configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn kind(&self) -> Option<ExperimentKind> {
        self.kind
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelChoice {
    pub preset: Option<String>,
    pub jz: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplerSettings {
    pub method: SamplerMethod,
    pub n_samples: usize,
    pub seed: u64,
    pub thinning: Option<usize>,
    pub burn_in: Option<usize>,
    pub move_mix: f64,
    pub scramble_mix: f64,
    pub dump_samples: bool,
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub model: ModelChoice,
    pub sizes: Vec<usize>,
    pub chis: Vec<usize>,
    pub renyi: Vec<f64>,
    pub sampler: SamplerSettings,
    pub dmrg: DmrgSettings,
    pub replica_mode: ReplicaChoice,
    pub chi_p_factor: usize,
    pub partition: PartitionScheme,
    pub grid: Option<Grid>,
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
}

struct KindDefaults {
    sizes: Vec<usize>,
    chis: Vec<usize>,
    renyi: Vec<f64>,
    method: SamplerMethod,
    n_samples: usize,
    partition: PartitionScheme,
    grid: Option<Grid>,
}

fn defaults(kind: ExperimentKind) -> KindDefaults {
    let base = KindDefaults {
        sizes: vec![40],
        chis: vec![20],
        renyi: vec![1.0],
        method: SamplerMethod::Markov,
        n_samples: 1_000_000,
        partition: PartitionScheme::Bc,
        grid: None,
    };
    match kind {
        ExperimentKind::PhaseScan => {
            let axis = Axis { min: -0.5, max: 3.0, count: 8 };
            KindDefaults {
                sizes: vec![32],
                chis: vec![16],
                method: SamplerMethod::Perfect,
                n_samples: 1000,
                grid: Some(Grid { jz: axis, d: axis }),
                ..base
            }
        }
        ExperimentKind::FullStateSre => {
            KindDefaults { sizes: vec![16, 32, 64], chis: vec![16], method: SamplerMethod::Perfect, n_samples: 10_000, ..base }
        }
        ExperimentKind::SreVsChi => {
            KindDefaults { sizes: vec![64], chis: vec![2, 4, 8, 16, 32], method: SamplerMethod::Perfect, n_samples: 10_000, ..base }
        }
        ExperimentKind::MutualInfo | ExperimentKind::LongRangeMagic | ExperimentKind::Autocorr => {
            KindDefaults { sizes: vec![16, 28, 40], ..base }
        }
        ExperimentKind::OracleCheck => {
            KindDefaults { sizes: vec![4], chis: vec![4], renyi: vec![1.0, 2.0], method: SamplerMethod::Perfect, n_samples: 10_000, ..base }
        }
    }
}

impl ExperimentConfig {
    /// Applies per-kind defaults and overrides, then validates.
    pub fn resolve(file: ConfigFile, kind: ExperimentKind, ov: &Overrides) -> Result<Self> {
        if let Some(k) = file.kind {
            ensure!(k == kind, "config kind '{}' does not match the requested verb ('{}')", k.name(), kind.name());
        }
        let def = defaults(kind);
        let model_file = file.model.unwrap_or_default();
        let from_preset = |name: &str| -> Result<ModelChoice> {
            let p = preset(name)?;
            Ok(ModelChoice { preset: Some(p.name.to_string()), jz: p.jz, d: p.d })
        };
        // a --preset flag replaces the whole [model] section
        let model = match (&ov.preset, model_file.preset, model_file.jz, model_file.d) {
            (Some(name), ..) => from_preset(name)?,
            (None, Some(_), jz, d) if jz.is_some() || d.is_some() => bail!("[model] takes either a preset or explicit jz and d, not both"),
            (None, Some(name), ..) => from_preset(&name)?,
            (None, None, Some(jz), Some(d)) => ModelChoice { preset: None, jz, d },
            (None, None, None, None) => from_preset("haldane-large-d")?,
            _ => bail!("[model] needs both jz and d"),
        };
        let s = file.sampler.unwrap_or_default();
        let sampler = SamplerSettings {
            method: s.method.unwrap_or(def.method),
            n_samples: s.n_samples.unwrap_or(def.n_samples),
            seed: ov.seed.or(s.seed).unwrap_or(0),
            thinning: s.thinning,
            burn_in: s.burn_in,
            move_mix: s.move_mix.unwrap_or(0.5),
            scramble_mix: s.scramble_mix.unwrap_or(if kind == ExperimentKind::OracleCheck { 0.2 } else { 0.0 }),
            dump_samples: s.dump_samples.unwrap_or(false),
        };
        let pm = file.pauli_mps.unwrap_or_default();
        let id = file.id.unwrap_or_else(|| kind.name().to_string());
        let out_dir = ov.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from("runs").join(&id));
        let cache_dir = file.cache_dir.unwrap_or_else(|| out_dir.join("cache"));
        let cfg = Self {
            id,
            kind,
            model,
            sizes: file.sizes.unwrap_or(def.sizes),
            chis: file.chis.unwrap_or(def.chis),
            renyi: file.renyi.unwrap_or(def.renyi),
            sampler,
            dmrg: file.dmrg.unwrap_or_default(),
            replica_mode: pm.mode.unwrap_or(ReplicaChoice::Compressed),
            chi_p_factor: pm.chi_p_factor.unwrap_or(2),
            partition: file.partition.and_then(|p| p.scheme).unwrap_or(def.partition),
            grid: file.grid.or(def.grid),
            out_dir,
            cache_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.id.is_empty() && !self.id.contains(['/', '\\']), "experiment id must be a non-empty file name");
        ensure!(!self.sizes.is_empty(), "sizes: at least one N is required");
        ensure!(!self.chis.is_empty(), "chis: at least one bond dimension is required");
        ensure!(self.sizes.iter().all(|&n| n >= 2), "sizes: every N must be >= 2");
        ensure!(self.chis.iter().all(|&c| c >= 1), "chis: every bond dimension must be >= 1");
        ensure!(!self.renyi.is_empty() && self.renyi.iter().all(|&n| n > 0.0 && n.is_finite()), "renyi: orders must be positive");
        ensure!(self.sampler.n_samples >= 2, "sampler.n_samples must be >= 2");
        ensure!(self.chi_p_factor >= 1, "pauli_mps.chi_p_factor must be >= 1");
        ensure!(self.model.jz.is_finite() && self.model.d.is_finite(), "model couplings must be finite");
        let needs_markov = matches!(self.kind, ExperimentKind::MutualInfo | ExperimentKind::LongRangeMagic | ExperimentKind::Autocorr);
        if needs_markov {
            ensure!(self.sampler.method == SamplerMethod::Markov, "{} runs Pauli-Markov chains; sampler.method must be \"markov\"", self.kind.name());
            ensure!(self.sizes.iter().all(|&n| n >= 4), "partitions of length N/4 need N >= 4");
        }
        if self.kind == ExperimentKind::PhaseScan {
            ensure!(self.sampler.method == SamplerMethod::Perfect, "phase-scan uses perfect sampling; sampler.method must be \"perfect\"");
            let g = self.grid.as_ref().context("phase-scan needs a [grid] section")?;
            ensure!(g.jz.count >= 1 && g.d.count >= 1, "grid axes need count >= 1");
        }
        if self.kind == ExperimentKind::OracleCheck {
            ensure!(self.sizes.iter().all(|&n| n <= 6), "oracle-check compares against dense oracles; N must be <= 6");
        }
        if self.sampler.method == SamplerMethod::PauliMps {
            ensure!(
                self.renyi.iter().all(|&n| n >= 2.0 && n.fract() == 0.0),
                "the Pauli-MPS replica method needs integer Renyi orders >= 2"
            );
        }
        self.dmrg.validate()?;
        Ok(())
    }

    /// Short `key=value` description of the couplings for result rows.
    pub fn params_label(&self, jz: f64, d: f64) -> String {
        match &self.model.preset {
            Some(p) if jz == self.model.jz && d == self.model.d => format!("{p};jz={jz};d={d}"),
            _ => format!("jz={jz};d={d}"),
        }
    }
}
