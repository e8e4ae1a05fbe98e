use std::fs;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::Serialize;
use tracing::{info, warn};

use super::config::{Benchmark, RunConfig};
use super::manifest::{timestamp, FrontMember, RunManifest, RunStatus, ENGINE_VERSION, LOG_FILE};
use super::CliError;
use crate::engine::{run_search_observed, GenerationStats, SearchConfig, SearchError, SearchObserver, SearchResult};
use crate::objectives::{Direction, Embedding, ObjectiveKind, ObjectiveSpec};
use crate::oracle::{
    LineTransport, Oracle, OracleEvaluator, OracleHandshake, RemoteOracle, SyntheticBenchmarkOracle,
    SyntheticLinearOracle, TargetRequest, PROTOCOL_VERSION,
};
use crate::space::LatentSpaceSpec;

/// An oracle connected, greeted and checked against the configured space.
pub struct Session {
    pub oracle: Box<dyn Oracle>,
    pub handshake: OracleHandshake,
    pub search: SearchConfig,
    pub target: Option<Embedding>,
    pub batch_size: Option<usize>,
}

pub fn open_oracle(config: &RunConfig, space: &LatentSpaceSpec) -> Result<Box<dyn Oracle>, CliError> {
    let oracle = &config.oracle;
    let timeout = Duration::from_secs(oracle.timeout_secs);
    if let Some(cmd) = &oracle.command {
        return Ok(Box::new(RemoteOracle::new(LineTransport::spawn(cmd)?).with_timeout(timeout)));
    }
    if let Some(addr) = &oracle.address {
        return Ok(Box::new(RemoteOracle::new(LineTransport::connect(addr)?).with_timeout(timeout)));
    }
    let bad_space = |e| CliError::Config(format!("benchmark oracle: {e}"));
    match oracle.benchmark {
        Some(Benchmark::Linear) => Ok(Box::new(
            SyntheticLinearOracle::new(space, oracle.matrix_seed, oracle.embedding_dim, true).map_err(bad_space)?,
        )),
        Some(b) => {
            let landscape = b.landscape().expect("non-linear benchmarks have a landscape");
            Ok(Box::new(SyntheticBenchmarkOracle::new(landscape, space).map_err(bad_space)?))
        }
        None => Err(CliError::Config("no oracle configured".into())),
    }
}

/// Objectives for this oracle: explicit ones from the config, the oracle's
/// own raw objectives, or similarity plus the discriminator loss when offered.
pub fn resolve_objectives(config: &RunConfig, handshake: &OracleHandshake) -> Result<Vec<ObjectiveSpec>, CliError> {
    let section = &config.objectives;
    if let Some(specs) = &section.specs {
        for s in specs {
            match (&s.kind, handshake.raw_objectives) {
                (ObjectiveKind::Custom { .. }, 0) => {
                    return Err(CliError::Config(format!("oracle reports embeddings; `{}` needs raw objectives", s.name())))
                }
                (ObjectiveKind::Custom { .. }, _) => {}
                (_, n) if n > 0 => {
                    return Err(CliError::Config(format!("oracle reports raw objectives; `{}` needs embeddings", s.name())))
                }
                (ObjectiveKind::DiscriminatorLoss { .. }, _) if !handshake.supports_discriminator => {
                    return Err(CliError::Config("oracle has no discriminator".into()))
                }
                _ => {}
            }
        }
        if handshake.raw_objectives > 0 && specs.len() != handshake.raw_objectives {
            return Err(CliError::Config(format!(
                "{} objectives configured, oracle reports {}",
                specs.len(),
                handshake.raw_objectives
            )));
        }
        return Ok(specs.clone());
    }
    if handshake.raw_objectives > 0 {
        if let Some(landscape) = config.oracle.benchmark.and_then(Benchmark::landscape) {
            return Ok(landscape.objectives());
        }
        return Ok((0..handshake.raw_objectives)
            .map(|i| ObjectiveSpec::custom(format!("f{}", i + 1), Direction::Minimize))
            .collect());
    }
    let mut specs = vec![ObjectiveSpec::similarity()];
    if handshake.supports_discriminator && section.discriminator {
        specs.push(ObjectiveSpec::discriminator_loss(section.real_label));
    } else if section.discriminator {
        info!("oracle has no discriminator; optimizing similarity only");
    }
    Ok(specs)
}

/// Offset between the search seed and the default planted target's seed, so
/// the optimum is never one of the initial samples.
pub const PLANTED_SEED_OFFSET: u64 = 1000;

fn target_request(config: &RunConfig) -> Option<TargetRequest> {
    config.objectives.target.clone().or_else(|| {
        (config.oracle.benchmark == Some(Benchmark::Linear)).then(|| {
            let seed = config.engine.seed.wrapping_add(PLANTED_SEED_OFFSET);
            TargetRequest::text(format!("{}{seed}", SyntheticLinearOracle::PLANTED_PREFIX))
        })
    })
}

/// Connects to the oracle and builds the search: handshake, objectives, target.
pub fn open_session(config: &RunConfig) -> Result<Session, CliError> {
    config.validate()?;
    let space = config.resolve_space()?;
    let operator_params = config.resolve_operators(&space)?;
    let mut oracle = open_oracle(config, &space)?;
    let handshake = oracle.handshake()?;
    handshake.validate(&space.fingerprint())?;
    let specs = resolve_objectives(config, &handshake)?;

    let needs_target = specs.iter().any(|s| s.kind == ObjectiveKind::Similarity);
    let target = match (needs_target, target_request(config)) {
        (false, _) => None,
        (true, None) => return Err(CliError::Config("similarity needs a target: --target-text or --target-image".into())),
        (true, Some(request)) => {
            let embedding = oracle.target(&request)?;
            if embedding.dim() != handshake.embedding_dim {
                return Err(CliError::Oracle(crate::oracle::OracleError::InvalidHandshake(format!(
                    "target embedding has dimension {}, handshake promised {}",
                    embedding.dim(),
                    handshake.embedding_dim
                ))));
            }
            Some(embedding)
        }
    };

    let mut search = SearchConfig::new(space, specs);
    search.operator_params = operator_params;
    search.population_size = config.engine.population_size;
    search.generations = config.engine.generations;
    search.seed = config.engine.seed;
    search.log_every = config.engine.log_every;
    search.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Session { oracle, handshake, search, target, batch_size: config.oracle.batch_size })
}

impl Session {
    pub fn search(&mut self, observer: &mut dyn SearchObserver) -> Result<SearchResult, SearchError> {
        let mut evaluator = OracleEvaluator::new(
            &mut *self.oracle,
            self.handshake.clone(),
            self.search.objective_specs.clone(),
            self.target.clone(),
        )
        .with_batch_size(self.batch_size);
        run_search_observed(&self.search, &mut evaluator, observer)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

fn search_error(e: SearchError) -> CliError {
    match e {
        SearchError::InvalidConfig(msg) => CliError::Config(msg),
        SearchError::Evaluation { .. } => CliError::Evaluation(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

/// Runs a search and writes `manifest.json` and `generations.jsonl` to the
/// output directory. Setting `abort` stops the run after the current
/// generation; the manifest is then marked interrupted.
pub fn execute_run(config: &RunConfig, abort: &AtomicBool) -> Result<RunOutcome, CliError> {
    let started_at = timestamp();
    let mut session = open_session(config)?;
    let out_dir = config.output.out_dir.clone();
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", out_dir.display()));
    fs::create_dir_all(&out_dir).map_err(io)?;
    let mut log = BufWriter::new(fs::File::create(out_dir.join(LOG_FILE)).map_err(io)?);
    let mut log_error = None;

    let mut observer = |stats: &GenerationStats| {
        if let Err(e) = write_jsonl(&mut log, stats) {
            log_error = Some(e);
            return ControlFlow::Break(());
        }
        if abort.load(Ordering::SeqCst) {
            warn!(generation = stats.generation, "interrupted; writing partial manifest");
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    };
    let outcome = session.search(&mut observer);
    if let Some(e) = log_error {
        return Err(CliError::Io(format!("{}: {e}", out_dir.join(LOG_FILE).display())));
    }

    let specs = session.search.objective_specs.clone();
    let mut manifest = RunManifest {
        status: RunStatus::Complete,
        engine_version: ENGINE_VERSION.into(),
        protocol_version: PROTOCOL_VERSION,
        seed: config.engine.seed,
        started_at,
        finished_at: started_at,
        config: config.clone(),
        space_fingerprint: session.search.space.fingerprint(),
        handshake: session.handshake.clone(),
        objectives: specs.clone(),
        evaluations: 0,
        best: None,
        front: Vec::new(),
        history: Vec::new(),
        rendered: None,
        error: None,
    };
    let result = match outcome {
        Ok(result) => result,
        Err(SearchError::Evaluation { generation, source, history, evaluations }) => {
            let err = CliError::Evaluation(format!("evaluation failed at generation {generation}: {source}"));
            manifest.status = RunStatus::Failed;
            manifest.history = history;
            manifest.evaluations = evaluations;
            manifest.error = Some(err.to_string());
            manifest.finished_at = timestamp();
            manifest.write_atomic(&out_dir)?;
            return Err(err);
        }
        Err(e) => return Err(search_error(e)),
    };

    if !result.completed {
        manifest.status = RunStatus::Interrupted;
    }
    manifest.evaluations = result.evaluations;
    manifest.best = Some(FrontMember::from_individual(&result.best, &specs));
    manifest.front = result.pareto_front.iter().map(|ind| FrontMember::from_individual(ind, &specs)).collect();
    manifest.history = result.history;
    if session.handshake.supports_render && config.output.render {
        manifest.rendered = render_best(&mut *session.oracle, &result.best.genome, &out_dir);
    }
    manifest.finished_at = timestamp();
    manifest.write_atomic(&out_dir)?;
    Ok(RunOutcome { out_dir, manifest })
}

fn write_jsonl<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

fn render_best(oracle: &mut dyn Oracle, genome: &crate::space::Genome, dir: &Path) -> Option<String> {
    let rendered = match oracle.render(genome) {
        Ok(r) => r,
        Err(e) => {
            warn!(error = %e, "render failed; keeping manifest only");
            return None;
        }
    };
    let name = format!("best.{}", rendered.extension());
    match fs::write(dir.join(&name), &rendered.data) {
        Ok(()) => Some(name),
        Err(e) => {
            warn!(error = %e, "could not save rendered output");
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub generations: usize,
    /// First generation whose population differs from the recording.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<usize>,
    pub detail: String,
}

/// Replays the manifest's run (no files are written) and compares the
/// per-generation digests, then the final front bit for bit.
pub fn verify_manifest(manifest: &RunManifest) -> Result<VerifyReport, CliError> {
    if manifest.engine_version != ENGINE_VERSION {
        return Err(CliError::Config(format!(
            "manifest was written by engine {}, this is {ENGINE_VERSION}",
            manifest.engine_version
        )));
    }
    if manifest.protocol_version != PROTOCOL_VERSION {
        return Err(CliError::Config(format!(
            "manifest uses protocol {}, this engine speaks {PROTOCOL_VERSION}",
            manifest.protocol_version
        )));
    }
    if manifest.status == RunStatus::Failed {
        return Err(CliError::Config("the recorded run failed; there is no front to verify".into()));
    }
    let recorded = manifest.history.len().saturating_sub(1);
    if recorded == 0 {
        return Err(CliError::Config("manifest records no completed generation".into()));
    }
    let mut config = manifest.config.clone();
    config.engine.generations = recorded;
    let mut session = open_session(&config)?;
    if session.search.objective_specs != manifest.objectives {
        return Ok(VerifyReport {
            ok: false,
            generations: recorded,
            diverged_at: Some(0),
            detail: "objectives resolved differently on replay".into(),
        });
    }
    let result = session.search(&mut |_: &GenerationStats| ControlFlow::Continue(())).map_err(search_error)?;
    let specs = &session.search.objective_specs;

    let mismatch = |generation: usize, detail: String| VerifyReport { ok: false, generations: recorded, diverged_at: Some(generation), detail };
    for (mine, theirs) in result.history.iter().zip(&manifest.history) {
        if mine != theirs {
            return Ok(mismatch(theirs.generation, format!("population digest {} != recorded {}", mine.digest, theirs.digest)));
        }
    }
    let front: Vec<FrontMember> = result.pareto_front.iter().map(|ind| FrontMember::from_individual(ind, specs)).collect();
    if front.len() != manifest.front.len() {
        return Ok(mismatch(recorded, format!("front has {} members, recorded {}", front.len(), manifest.front.len())));
    }
    if let Some(i) = front.iter().zip(&manifest.front).position(|(a, b)| !a.bit_eq(b)) {
        return Ok(mismatch(recorded, format!("front member {i} differs from the recording")));
    }
    let best = FrontMember::from_individual(&result.best, specs);
    if !manifest.best.as_ref().is_some_and(|b| b.bit_eq(&best)) {
        return Ok(mismatch(recorded, "best individual differs from the recording".into()));
    }
    if result.evaluations != manifest.evaluations {
        return Ok(mismatch(recorded, format!("{} evaluations, recorded {}", result.evaluations, manifest.evaluations)));
    }
    Ok(VerifyReport {
        ok: true,
        generations: recorded,
        diverged_at: None,
        detail: format!("{} generations and {} front members reproduced exactly", recorded, front.len()),
    })
}
