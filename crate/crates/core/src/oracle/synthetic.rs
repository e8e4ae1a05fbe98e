//! Deterministic in-process oracles.
//!
//! [`SyntheticLinearOracle`] stands in for "generator + image encoder" with
//! `embedding = tanh(M z)`, so a target built from a known latent point has a
//! known optimum. [`SyntheticBenchmarkOracle`] reports classic test-function
//! values directly.

use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{Oracle, OracleError, OracleHandshake, TargetRequest, PROTOCOL_VERSION};
use crate::engine::rng_from_seed;
use crate::objectives::{Direction, Embedding, Measurement, ObjectiveSpec};
use crate::space::{self, BlockSpec, Genome, LatentSpaceSpec, RealDistribution};

fn require_real_only(space: &LatentSpaceSpec) -> Result<(), OracleError> {
    if space.is_real_only() {
        Ok(())
    } else {
        Err(OracleError::InvalidSpace("synthetic oracles only accept real-valued genes".into()))
    }
}

fn check_genome(space: &LatentSpaceSpec, genome: &Genome) -> Result<(), Measurement> {
    space::validate(space, genome).map_err(|v| Measurement::Failed { message: v.to_string() })
}

pub struct SyntheticLinearOracle {
    space: LatentSpaceSpec,
    /// `embedding_dim` rows of `space.total_dim()` entries.
    matrix: Vec<f64>,
    embedding_dim: usize,
    with_discriminator: bool,
}

impl SyntheticLinearOracle {
    pub const DEFAULT_EMBEDDING_DIM: usize = 32;
    /// Target payload prefix selecting a planted optimum: `planted:<seed>`.
    pub const PLANTED_PREFIX: &'static str = "planted:";

    /// `M` has i.i.d. `N(0, 1/n)` entries drawn from `matrix_seed`, so
    /// `M z` stays O(1) for prior samples and `tanh` does not saturate.
    pub fn new(
        space: &LatentSpaceSpec,
        matrix_seed: u64,
        embedding_dim: usize,
        with_discriminator: bool,
    ) -> Result<Self, OracleError> {
        require_real_only(space)?;
        if embedding_dim == 0 {
            return Err(OracleError::InvalidSpace("embedding_dim must be positive".into()));
        }
        let n = space.total_dim();
        let scale = 1.0 / (n as f64).sqrt();
        let mut rng = rng_from_seed(matrix_seed);
        let matrix = (0..embedding_dim * n)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        Ok(Self { space: space.clone(), matrix, embedding_dim, with_discriminator })
    }

    pub fn embed(&self, z: &[f64]) -> Embedding {
        let n = self.space.total_dim();
        Embedding(
            self.matrix
                .chunks_exact(n)
                .map(|row| row.iter().zip(z).map(|(m, x)| m * x).sum::<f64>().tanh())
                .collect(),
        )
    }

    /// `exp(-|z|^2 / n)`: 1 at the origin, decaying away from it.
    pub fn d_prob(&self, z: &[f64]) -> f64 {
        let sq: f64 = z.iter().map(|v| v * v).sum();
        (-sq / self.space.total_dim() as f64).exp()
    }

    /// The latent point a `planted:<seed>` target is built from.
    pub fn planted_point(&self, seed: u64) -> Genome {
        space::sample(&self.space, &mut rng_from_seed(seed))
    }

    fn target_seed(request: &TargetRequest) -> u64 {
        if let Some(seed) = request
            .payload
            .strip_prefix(Self::PLANTED_PREFIX)
            .and_then(|s| s.trim().parse::<u64>().ok())
        {
            return seed;
        }
        // any other caption or path is hashed to a planted point
        let digest = Sha256::new()
            .chain_update(format!("{:?}", request.kind))
            .chain_update(&request.payload)
            .finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

impl Oracle for SyntheticLinearOracle {
    fn handshake(&mut self) -> Result<OracleHandshake, OracleError> {
        Ok(OracleHandshake {
            protocol_version: PROTOCOL_VERSION,
            embedding_dim: self.embedding_dim,
            supports_discriminator: self.with_discriminator,
            space_fingerprint: self.space.fingerprint(),
            raw_objectives: 0,
            supports_render: false,
        })
    }

    fn target(&mut self, request: &TargetRequest) -> Result<Embedding, OracleError> {
        let z = self.planted_point(Self::target_seed(request));
        Ok(self.embed(z.values()))
    }

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Measurement>, OracleError> {
        Ok(genomes
            .iter()
            .map(|g| match check_genome(&self.space, g) {
                Err(failed) => failed,
                Ok(()) => Measurement::Embedded {
                    embedding: self.embed(g.values()),
                    d_prob: self.with_discriminator.then(|| self.d_prob(g.values())),
                },
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landscape {
    /// `f(z) = |z|^2`.
    Sphere,
    /// Two objectives on `[0, 1]^n`; Pareto front `f2 = 1 - sqrt(f1)`.
    Zdt1,
}

impl FromStr for Landscape {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Landscape::Sphere),
            "zdt1" => Ok(Landscape::Zdt1),
            other => Err(OracleError::UnknownLandscape(other.to_string())),
        }
    }
}

impl Landscape {
    pub fn name(&self) -> &'static str {
        match self {
            Landscape::Sphere => "sphere",
            Landscape::Zdt1 => "zdt1",
        }
    }

    pub fn objectives(&self) -> Vec<ObjectiveSpec> {
        match self {
            Landscape::Sphere => vec![ObjectiveSpec::custom("sphere", Direction::Minimize)],
            Landscape::Zdt1 => vec![
                ObjectiveSpec::custom("f1", Direction::Minimize),
                ObjectiveSpec::custom("f2", Direction::Minimize),
            ],
        }
    }

    /// Sphere: unbounded `N(0, 1)` genes. ZDT1: genes truncated to `[0, 1]`
    /// with a wide normal (mean 0.5, stddev 0.5) as the sampling prior.
    pub fn default_space(&self, dim: usize) -> LatentSpaceSpec {
        let distribution = match self {
            Landscape::Sphere => RealDistribution::Normal { mean: 0.0, stddev: 1.0 },
            Landscape::Zdt1 => RealDistribution::TruncatedNormal { mean: 0.5, stddev: 0.5, lo: 0.0, hi: 1.0 },
        };
        LatentSpaceSpec::new(vec![BlockSpec::Real { length: dim.max(1), distribution }])
            .expect("benchmark spaces are valid")
    }

    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Landscape::Sphere => vec![z.iter().map(|v| v * v).sum()],
            Landscape::Zdt1 => {
                let f1 = z[0];
                let tail = &z[1..];
                let g = 1.0 + 9.0 * tail.iter().sum::<f64>() / tail.len() as f64;
                vec![f1, g * (1.0 - (f1 / g).sqrt())]
            }
        }
    }
}

pub struct SyntheticBenchmarkOracle {
    landscape: Landscape,
    space: LatentSpaceSpec,
}

impl SyntheticBenchmarkOracle {
    pub fn new(landscape: Landscape, space: &LatentSpaceSpec) -> Result<Self, OracleError> {
        require_real_only(space)?;
        if landscape == Landscape::Zdt1 {
            if space.total_dim() < 2 {
                return Err(OracleError::InvalidSpace("zdt1 needs at least 2 genes".into()));
            }
            let inside_unit = space.blocks().iter().all(|b| match b {
                BlockSpec::Real { distribution, .. } => {
                    matches!(distribution.bounds(), Some((lo, hi)) if lo >= 0.0 && hi <= 1.0)
                }
                _ => false,
            });
            if !inside_unit {
                return Err(OracleError::InvalidSpace("zdt1 genes must be truncated to [0, 1]".into()));
            }
        }
        Ok(Self { landscape, space: space.clone() })
    }

    pub fn landscape(&self) -> Landscape {
        self.landscape
    }
}

impl Oracle for SyntheticBenchmarkOracle {
    fn handshake(&mut self) -> Result<OracleHandshake, OracleError> {
        Ok(OracleHandshake {
            protocol_version: PROTOCOL_VERSION,
            embedding_dim: self.space.total_dim(),
            supports_discriminator: false,
            space_fingerprint: self.space.fingerprint(),
            raw_objectives: self.landscape.objectives().len(),
            supports_render: false,
        })
    }

    fn target(&mut self, _request: &TargetRequest) -> Result<Embedding, OracleError> {
        Err(OracleError::Unsupported("targets (benchmark landscapes report objectives directly)"))
    }

    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Measurement>, OracleError> {
        Ok(genomes
            .iter()
            .map(|g| match check_genome(&self.space, g) {
                Err(failed) => failed,
                Ok(()) => Measurement::Raw { objectives: self.landscape.evaluate(g.values()) },
            })
            .collect())
    }
}
