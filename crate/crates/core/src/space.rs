//! Mixed-variable latent spaces and the genetic operators acting on them.
//!
//! A [`LatentSpaceSpec`] is an ordered list of blocks (boolean, real or
//! integer). A [`Genome`] is the flat concatenation of those blocks, stored
//! as `f64` genes: booleans are `0.0`/`1.0`, integers are whole numbers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Rejection attempts before a truncated-normal draw falls back to uniform.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("latent space must contain at least one block")]
    Empty,
    #[error("block {index}: {reason}")]
    InvalidBlock { index: usize, reason: String },
    #[error("unknown preset `{0}` (expected biggan, stylegan2, gpt2 or gpt2:<n>)")]
    UnknownPreset(String),
    #[error("genome does not match space: {0}")]
    Mismatch(Violation),
    #[error("invalid operator parameters: {0}")]
    InvalidParams(String),
}

/// Distribution of a real-valued block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum RealDistribution {
    Normal { mean: f64, stddev: f64 },
    TruncatedNormal { mean: f64, stddev: f64, lo: f64, hi: f64 },
}

impl RealDistribution {
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            RealDistribution::Normal { .. } => None,
            RealDistribution::TruncatedNormal { lo, hi, .. } => Some((lo, hi)),
        }
    }

    pub fn stddev(&self) -> f64 {
        match *self {
            RealDistribution::Normal { stddev, .. }
            | RealDistribution::TruncatedNormal { stddev, .. } => stddev,
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            RealDistribution::Normal { mean, .. }
            | RealDistribution::TruncatedNormal { mean, .. } => mean,
        }
    }
}

/// One contiguous run of genes sharing a domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockSpec {
    Boolean {
        length: usize,
    },
    Real {
        length: usize,
        #[serde(flatten)]
        distribution: RealDistribution,
    },
    /// Inclusive range `[lo, hi]`.
    Integer { length: usize, lo: i64, hi: i64 },
}

impl BlockSpec {
    pub fn len(&self) -> usize {
        match *self {
            BlockSpec::Boolean { length }
            | BlockSpec::Real { length, .. }
            | BlockSpec::Integer { length, .. } => length,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_real(&self) -> bool {
        matches!(self, BlockSpec::Real { .. })
    }

    fn check(&self) -> Result<(), String> {
        if self.is_empty() {
            return Err("length must be positive".into());
        }
        match *self {
            BlockSpec::Boolean { .. } => Ok(()),
            BlockSpec::Real { distribution, .. } => {
                let (mean, stddev) = (distribution.mean(), distribution.stddev());
                if !mean.is_finite() {
                    return Err(format!("mean must be finite, got {mean}"));
                }
                if !(stddev.is_finite() && stddev > 0.0) {
                    return Err(format!("stddev must be positive and finite, got {stddev}"));
                }
                if let Some((lo, hi)) = distribution.bounds() {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(format!("truncation bounds must satisfy lo < hi, got [{lo}, {hi}]"));
                    }
                }
                Ok(())
            }
            BlockSpec::Integer { lo, hi, .. } => {
                if lo > hi {
                    Err(format!("integer range must satisfy lo <= hi, got [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Canonical text used for space fingerprints.
    fn canonical(&self) -> String {
        match *self {
            BlockSpec::Boolean { length } => format!("bool*{length}"),
            BlockSpec::Real { length, distribution: RealDistribution::Normal { mean, stddev } } => {
                format!("real*{length}:normal({mean:?},{stddev:?})")
            }
            BlockSpec::Real {
                length,
                distribution: RealDistribution::TruncatedNormal { mean, stddev, lo, hi },
            } => format!("real*{length}:truncnormal({mean:?},{stddev:?},{lo:?},{hi:?})"),
            BlockSpec::Integer { length, lo, hi } => format!("int*{length}:[{lo},{hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct LatentSpaceSpec {
    blocks: Vec<BlockSpec>,
    total_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    blocks: Vec<BlockSpec>,
}

impl TryFrom<SpaceRepr> for LatentSpaceSpec {
    type Error = SpaceError;

    fn try_from(repr: SpaceRepr) -> Result<Self, Self::Error> {
        LatentSpaceSpec::new(repr.blocks)
    }
}

impl From<LatentSpaceSpec> for SpaceRepr {
    fn from(spec: LatentSpaceSpec) -> Self {
        SpaceRepr { blocks: spec.blocks }
    }
}

impl LatentSpaceSpec {
    pub fn new(blocks: Vec<BlockSpec>) -> Result<Self, SpaceError> {
        if blocks.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (index, block) in blocks.iter().enumerate() {
            block
                .check()
                .map_err(|reason| SpaceError::InvalidBlock { index, reason })?;
        }
        let total_dim = blocks.iter().map(BlockSpec::len).sum();
        Ok(Self { blocks, total_dim })
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn is_real_only(&self) -> bool {
        self.blocks.iter().all(BlockSpec::is_real)
    }

    /// Iterates the block owning each gene, in genome order.
    pub fn gene_blocks(&self) -> impl Iterator<Item = &BlockSpec> + '_ {
        self.blocks
            .iter()
            .flat_map(|block| std::iter::repeat_n(block, block.len()))
    }

    /// Canonical one-line description, e.g. `bool*1000;real*128:truncnormal(0.0,1.0,-2.0,2.0)`.
    pub fn canonical(&self) -> String {
        self.blocks
            .iter()
            .map(BlockSpec::canonical)
            .collect::<Vec<_>>()
            .join(";")
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One point of a latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<f64>);

impl Genome {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every gene is bit-identical to `other`'s.
    pub fn bit_eq(&self, other: &Genome) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f64>> for Genome {
    fn from(values: Vec<f64>) -> Self {
        Genome(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub mutation_prob_per_gene: f64,
    /// Gaussian mutation step, as a fraction of the bound width for truncated
    /// reals and of the distribution stddev for unbounded reals.
    pub real_mutation_sigma: f64,
    pub crossover_prob: f64,
}

impl OperatorParams {
    pub const DEFAULT_REAL_MUTATION_SIGMA: f64 = 0.1;
    pub const DEFAULT_CROSSOVER_PROB: f64 = 0.9;

    /// Defaults: one expected mutation per genome, crossover probability 0.9.
    pub fn for_space(spec: &LatentSpaceSpec) -> Self {
        Self {
            mutation_prob_per_gene: 1.0 / spec.total_dim() as f64,
            real_mutation_sigma: Self::DEFAULT_REAL_MUTATION_SIGMA,
            crossover_prob: Self::DEFAULT_CROSSOVER_PROB,
        }
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SpaceError::InvalidParams(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        prob("mutation_prob_per_gene", self.mutation_prob_per_gene)?;
        prob("crossover_prob", self.crossover_prob)?;
        if !(self.real_mutation_sigma.is_finite() && self.real_mutation_sigma > 0.0) {
            return Err(SpaceError::InvalidParams(format!(
                "real_mutation_sigma must be positive, got {}",
                self.real_mutation_sigma
            )));
        }
        Ok(())
    }
}

/// Named latent spaces of the supported generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    BigGan,
    StyleGan2,
    Gpt2 { n_ctx: usize },
}

impl Preset {
    pub const GPT2_DEFAULT_CONTEXT: usize = 20;
    /// Largest GPT-2 BPE token id (vocabulary of 50257 entries).
    pub const GPT2_MAX_TOKEN: i64 = 50256;
}

impl FromStr for Preset {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "biggan" => Ok(Preset::BigGan),
            "stylegan2" => Ok(Preset::StyleGan2),
            "gpt2" => Ok(Preset::Gpt2 { n_ctx: Preset::GPT2_DEFAULT_CONTEXT }),
            other => other
                .strip_prefix("gpt2:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .map(|n_ctx| Preset::Gpt2 { n_ctx })
                .ok_or_else(|| SpaceError::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::BigGan => f.write_str("biggan"),
            Preset::StyleGan2 => f.write_str("stylegan2"),
            Preset::Gpt2 { n_ctx } if *n_ctx == Preset::GPT2_DEFAULT_CONTEXT => f.write_str("gpt2"),
            Preset::Gpt2 { n_ctx } => write!(f, "gpt2:{n_ctx}"),
        }
    }
}

pub fn preset_space(preset: Preset) -> LatentSpaceSpec {
    let blocks = match preset {
        // 1000 class booleans followed by 128 truncated-normal noise values.
        Preset::BigGan => vec![
            BlockSpec::Boolean { length: 1000 },
            BlockSpec::Real {
                length: 128,
                distribution: RealDistribution::TruncatedNormal {
                    mean: 0.0,
                    stddev: 1.0,
                    lo: -2.0,
                    hi: 2.0,
                },
            },
        ],
        Preset::StyleGan2 => vec![BlockSpec::Real {
            length: 512,
            distribution: RealDistribution::Normal { mean: 0.0, stddev: 1.0 },
        }],
        Preset::Gpt2 { n_ctx } => vec![BlockSpec::Integer {
            length: n_ctx,
            lo: 0,
            hi: Preset::GPT2_MAX_TOKEN,
        }],
    };
    LatentSpaceSpec::new(blocks).expect("preset spaces are valid")
}

/// Looks up a preset by name (`biggan`, `stylegan2`, `gpt2`, `gpt2:<n>`).
pub fn preset_space_by_name(name: &str) -> Result<LatentSpaceSpec, SpaceError> {
    name.parse().map(preset_space)
}

/// Which constraint a gene violated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Length { expected: usize, actual: usize },
    NotFinite,
    NotBoolean,
    NotInteger,
    OutOfRange { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    /// Offending gene; `None` for a length mismatch.
    pub index: Option<usize>,
    pub value: f64,
    pub constraint: Constraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.index, self.constraint) {
            (_, Constraint::Length { expected, actual }) => {
                write!(f, "genome has {actual} genes, space expects {expected}")
            }
            (Some(i), Constraint::NotFinite) => write!(f, "gene {i} is not finite ({})", self.value),
            (Some(i), Constraint::NotBoolean) => write!(f, "gene {i} = {} is not 0 or 1", self.value),
            (Some(i), Constraint::NotInteger) => write!(f, "gene {i} = {} is not an integer", self.value),
            (Some(i), Constraint::OutOfRange { lo, hi }) => {
                write!(f, "gene {i} = {} is outside [{lo}, {hi}]", self.value)
            }
            (None, c) => write!(f, "{c:?}"),
        }
    }
}

fn check_gene(block: &BlockSpec, v: f64) -> Result<(), Constraint> {
    if !v.is_finite() {
        return Err(Constraint::NotFinite);
    }
    match *block {
        BlockSpec::Boolean { .. } => {
            if v == 0.0 || v == 1.0 {
                Ok(())
            } else {
                Err(Constraint::NotBoolean)
            }
        }
        BlockSpec::Real { distribution, .. } => match distribution.bounds() {
            Some((lo, hi)) if !(lo..=hi).contains(&v) => Err(Constraint::OutOfRange { lo, hi }),
            _ => Ok(()),
        },
        BlockSpec::Integer { lo, hi, .. } => {
            if v.fract() != 0.0 {
                Err(Constraint::NotInteger)
            } else if v < lo as f64 || v > hi as f64 {
                Err(Constraint::OutOfRange { lo: lo as f64, hi: hi as f64 })
            } else {
                Ok(())
            }
        }
    }
}

/// Reports the first gene that breaks the space's domain, if any.
pub fn validate(spec: &LatentSpaceSpec, genome: &Genome) -> Result<(), Violation> {
    if genome.len() != spec.total_dim() {
        return Err(Violation {
            index: None,
            value: f64::NAN,
            constraint: Constraint::Length { expected: spec.total_dim(), actual: genome.len() },
        });
    }
    for (index, (block, &value)) in spec.gene_blocks().zip(genome.values()).enumerate() {
        check_gene(block, value).map_err(|constraint| Violation {
            index: Some(index),
            value,
            constraint,
        })?;
    }
    Ok(())
}

fn sample_real<R: Rng + ?Sized>(distribution: RealDistribution, rng: &mut R) -> f64 {
    match distribution {
        RealDistribution::Normal { mean, stddev } => {
            mean + stddev * rng.sample::<f64, _>(StandardNormal)
        }
        RealDistribution::TruncatedNormal { mean, stddev, lo, hi } => {
            for _ in 0..MAX_REJECTIONS {
                let x = mean + stddev * rng.sample::<f64, _>(StandardNormal);
                if (lo..=hi).contains(&x) {
                    return x;
                }
            }
            // bounds far in the tail: acceptance rate is negligible
            rng.random_range(lo..=hi)
        }
    }
}

fn sample_gene<R: Rng + ?Sized>(block: &BlockSpec, rng: &mut R) -> f64 {
    match *block {
        BlockSpec::Boolean { .. } => {
            if rng.random::<bool>() {
                1.0
            } else {
                0.0
            }
        }
        BlockSpec::Real { distribution, .. } => sample_real(distribution, rng),
        BlockSpec::Integer { lo, hi, .. } => rng.random_range(lo..=hi) as f64,
    }
}

/// Draws a genome from the space's prior.
pub fn sample<R: Rng + ?Sized>(spec: &LatentSpaceSpec, rng: &mut R) -> Genome {
    Genome(spec.gene_blocks().map(|block| sample_gene(block, rng)).collect())
}

fn ensure_valid(spec: &LatentSpaceSpec, genome: &Genome) -> Result<(), SpaceError> {
    validate(spec, genome).map_err(SpaceError::Mismatch)
}

/// Per-gene mutation: booleans flip, reals take a Gaussian step (clamped to
/// truncation bounds), integers are resampled uniformly over their range.
pub fn mutate<R: Rng + ?Sized>(
    spec: &LatentSpaceSpec,
    genome: &Genome,
    params: &OperatorParams,
    rng: &mut R,
) -> Result<Genome, SpaceError> {
    ensure_valid(spec, genome)?;
    let values = spec
        .gene_blocks()
        .zip(genome.values())
        .map(|(block, &v)| {
            if rng.random::<f64>() >= params.mutation_prob_per_gene {
                return v;
            }
            match *block {
                BlockSpec::Boolean { .. } => 1.0 - v,
                BlockSpec::Real { distribution, .. } => {
                    let scale = match distribution.bounds() {
                        Some((lo, hi)) => hi - lo,
                        None => distribution.stddev(),
                    };
                    let step = params.real_mutation_sigma * scale * rng.sample::<f64, _>(StandardNormal);
                    match distribution.bounds() {
                        Some((lo, hi)) => (v + step).clamp(lo, hi),
                        None => v + step,
                    }
                }
                BlockSpec::Integer { lo, hi, .. } => rng.random_range(lo..=hi) as f64,
            }
        })
        .collect();
    Ok(Genome(values))
}

/// Uniform crossover applied with probability `crossover_prob`; otherwise the
/// children are copies of the parents.
pub fn crossover<R: Rng + ?Sized>(
    spec: &LatentSpaceSpec,
    a: &Genome,
    b: &Genome,
    params: &OperatorParams,
    rng: &mut R,
) -> Result<(Genome, Genome), SpaceError> {
    ensure_valid(spec, a)?;
    ensure_valid(spec, b)?;
    let mut first = a.clone();
    let mut second = b.clone();
    if rng.random::<f64>() < params.crossover_prob {
        for (x, y) in first.0.iter_mut().zip(second.0.iter_mut()) {
            if rng.random::<bool>() {
                std::mem::swap(x, y);
            }
        }
    }
    Ok((first, second))
}
