//! Run configuration: a JSON file with `space`/`preset`, `operators`,
//! `engine`, `objectives`, `oracle` and `output` sections. Command-line
//! flags are applied on top of the file.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::engine::{DEFAULT_GENERATIONS, DEFAULT_POPULATION};
use crate::objectives::ObjectiveSpec;
use crate::oracle::{Landscape, TargetRequest, DEFAULT_TIMEOUT};
use crate::space::{preset_space_by_name, LatentSpaceSpec, OperatorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Sphere,
    Zdt1,
    /// Planted-optimum embedding oracle, `tanh(M z)`.
    Linear,
}

impl Benchmark {
    pub fn default_dim(self) -> usize {
        match self {
            Benchmark::Sphere => 8,
            Benchmark::Zdt1 => 10,
            Benchmark::Linear => 16,
        }
    }

    pub fn landscape(self) -> Option<Landscape> {
        match self {
            Benchmark::Sphere => Some(Landscape::Sphere),
            Benchmark::Zdt1 => Some(Landscape::Zdt1),
            Benchmark::Linear => None,
        }
    }

    pub fn default_space(self, dim: usize) -> LatentSpaceSpec {
        // the linear oracle shares the sphere's N(0, 1) prior
        self.landscape().unwrap_or(Landscape::Sphere).default_space(dim)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorsSection {
    /// Defaults to `1 / total_dim`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutation_prob_per_gene: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub real_mutation_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub population_size: usize,
    pub generations: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self { population_size: DEFAULT_POPULATION, generations: DEFAULT_GENERATIONS, seed: 0, log_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectivesSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetRequest>,
    /// Add the discriminator loss when the oracle offers one.
    pub discriminator: bool,
    pub real_label: f64,
    /// Explicit objective list; replaces the defaults above.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specs: Option<Vec<ObjectiveSpec>>,
}

impl Default for ObjectivesSection {
    fn default() -> Self {
        Self { target: None, discriminator: true, real_label: 1.0, specs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Benchmark>,
    /// Genome length for benchmark spaces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub matrix_seed: u64,
    pub embedding_dim: usize,
    pub timeout_secs: u64,
    /// Largest number of genomes per eval request; whole batches when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            command: None,
            address: None,
            benchmark: None,
            dim: None,
            matrix_seed: 0,
            embedding_dim: crate::oracle::SyntheticLinearOracle::DEFAULT_EMBEDDING_DIM,
            timeout_secs: DEFAULT_TIMEOUT.as_secs(),
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub out_dir: PathBuf,
    /// Ask the oracle to render the best genome at the end of the run.
    pub render: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("runs/latest"), render: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<LatentSpaceSpec>,
    pub operators: OperatorsSection,
    pub engine: EngineSection,
    pub objectives: ObjectivesSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
}

/// Flag values layered over a config file.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct RunFlags {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// biggan, stylegan2, gpt2 or gpt2:<n_ctx>.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, conflicts_with = "target_image")]
    pub target_text: Option<String>,
    #[arg(long)]
    pub target_image: Option<String>,
    /// Shell command starting an oracle that speaks the protocol on stdin/stdout.
    #[arg(long, conflicts_with_all = ["oracle_addr", "benchmark"])]
    pub oracle_cmd: Option<String>,
    /// host:port of an oracle listening on TCP.
    #[arg(long, conflicts_with = "benchmark")]
    pub oracle_addr: Option<String>,
    /// Built-in oracle; no external process is started.
    #[arg(long, value_enum)]
    pub benchmark: Option<Benchmark>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Default 500.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimize similarity only, even if the oracle has a discriminator.
    #[arg(long)]
    pub no_discriminator: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub log_every: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_flags(flags: &RunFlags) -> Result<Self, CliError> {
        let mut config = match &flags.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply(flags);
        Ok(config)
    }

    pub fn apply(&mut self, flags: &RunFlags) {
        if let Some(p) = &flags.preset {
            self.preset = Some(p.clone());
            self.space = None;
        }
        if let Some(t) = &flags.target_text {
            self.objectives.target = Some(TargetRequest::text(t));
        }
        if let Some(t) = &flags.target_image {
            self.objectives.target = Some(TargetRequest::image_path(t));
        }
        let oracle = &mut self.oracle;
        if let Some(cmd) = &flags.oracle_cmd {
            (oracle.command, oracle.address, oracle.benchmark) = (Some(cmd.clone()), None, None);
        }
        if let Some(addr) = &flags.oracle_addr {
            (oracle.command, oracle.address, oracle.benchmark) = (None, Some(addr.clone()), None);
        }
        if let Some(b) = flags.benchmark {
            (oracle.command, oracle.address, oracle.benchmark) = (None, None, Some(b));
        }
        if flags.dim.is_some() {
            oracle.dim = flags.dim;
        }
        if flags.batch_size.is_some() {
            oracle.batch_size = flags.batch_size;
        }
        if let Some(t) = flags.timeout_secs {
            oracle.timeout_secs = t;
        }
        let engine = &mut self.engine;
        if let Some(p) = flags.population {
            engine.population_size = p;
        }
        if let Some(g) = flags.generations {
            engine.generations = g;
        }
        if let Some(s) = flags.seed {
            engine.seed = s;
        }
        if let Some(l) = flags.log_every {
            engine.log_every = l;
        }
        if flags.no_discriminator {
            self.objectives.discriminator = false;
        }
        if let Some(dir) = &flags.out_dir {
            self.output.out_dir = dir.clone();
        }
    }

    /// The latent space this config searches.
    pub fn resolve_space(&self) -> Result<LatentSpaceSpec, CliError> {
        let from_config = match (&self.preset, &self.space) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("set either `preset` or `space`, not both".into()))
            }
            (Some(name), None) => Some(preset_space_by_name(name).map_err(|e| CliError::Config(e.to_string()))?),
            (None, Some(space)) => Some(space.clone()),
            (None, None) => None,
        };
        match (from_config, self.oracle.benchmark) {
            (Some(space), _) => Ok(space),
            (None, Some(b)) => Ok(b.default_space(self.oracle.dim.unwrap_or(b.default_dim()))),
            (None, None) => Err(CliError::Config(
                "no latent space: give --preset, a `space` section, or --benchmark".into(),
            )),
        }
    }

    pub fn resolve_operators(&self, space: &LatentSpaceSpec) -> Result<OperatorParams, CliError> {
        let defaults = OperatorParams::for_space(space);
        let params = OperatorParams {
            mutation_prob_per_gene: self.operators.mutation_prob_per_gene.unwrap_or(defaults.mutation_prob_per_gene),
            real_mutation_sigma: self.operators.real_mutation_sigma.unwrap_or(defaults.real_mutation_sigma),
            crossover_prob: self.operators.crossover_prob.unwrap_or(defaults.crossover_prob),
        };
        params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }

    /// Checks everything that can be checked before contacting an oracle.
    pub fn validate(&self) -> Result<(), CliError> {
        let sources = [self.oracle.command.is_some(), self.oracle.address.is_some(), self.oracle.benchmark.is_some()]
            .iter()
            .filter(|&&s| s)
            .count();
        match sources {
            0 => return Err(CliError::Config("no oracle: give --oracle-cmd, --oracle-addr or --benchmark".into())),
            1 => {}
            _ => return Err(CliError::Config("give only one of oracle command, address or benchmark".into())),
        }
        let space = self.resolve_space()?;
        self.resolve_operators(&space)?;
        if let Some(specs) = &self.objectives.specs {
            if specs.is_empty() {
                return Err(CliError::Config("`objectives.specs` must not be empty".into()));
            }
            for s in specs {
                s.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        if !(self.objectives.real_label > 0.0 && self.objectives.real_label <= 1.0) {
            return Err(CliError::Config(format!(
                "real_label must be in (0, 1], got {}",
                self.objectives.real_label
            )));
        }
        if self.oracle.timeout_secs == 0 {
            return Err(CliError::Config("timeout_secs must be positive".into()));
        }
        let needs_target = self.oracle.command.is_some() || self.oracle.address.is_some();
        if needs_target && self.objectives.target.is_none() && self.objectives.specs.is_none() {
            return Err(CliError::Config("a target is required: --target-text or --target-image".into()));
        }
        Ok(())
    }
}
