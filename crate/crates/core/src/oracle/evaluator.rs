use tracing::warn;

use super::{evaluate_batch, Oracle, OracleHandshake};
use crate::engine::{EvalError, Evaluation, Evaluator};
use crate::objectives::{assemble, Embedding, ObjectiveSpec};
use crate::space::Genome;

/// Adapts an oracle to the engine: measurements become minimized objective
/// vectors, per-genome failures become penalized entries, and transport or
/// protocol failures abort the run.
pub struct OracleEvaluator<'a> {
    oracle: &'a mut dyn Oracle,
    handshake: OracleHandshake,
    specs: Vec<ObjectiveSpec>,
    target: Option<Embedding>,
    batch_size: Option<usize>,
}

impl<'a> OracleEvaluator<'a> {
    pub fn new(
        oracle: &'a mut dyn Oracle,
        handshake: OracleHandshake,
        specs: Vec<ObjectiveSpec>,
        target: Option<Embedding>,
    ) -> Self {
        Self { oracle, handshake, specs, target, batch_size: None }
    }

    /// Splits every engine batch into requests of at most `size` genomes.
    pub fn with_batch_size(mut self, size: Option<usize>) -> Self {
        self.batch_size = size.filter(|&s| s > 0);
        self
    }
}

impl Evaluator for OracleEvaluator<'_> {
    fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Evaluation>, EvalError> {
        let chunk = self.batch_size.unwrap_or(genomes.len()).max(1);
        let mut out = Vec::with_capacity(genomes.len());
        for batch in genomes.chunks(chunk) {
            let measurements = evaluate_batch(&mut *self.oracle, &self.handshake, batch)
                .map_err(|e| EvalError::with_source("oracle evaluation failed", e))?;
            for (offset, m) in measurements.iter().enumerate() {
                match assemble(&self.specs, m, self.target.as_ref()) {
                    Ok(values) => out.push(Evaluation::new(values)),
                    Err(e) => {
                        warn!(genome = out.len(), offset, error = %e, "penalizing genome");
                        out.push(Evaluation::penalty(self.specs.len()));
                    }
                }
            }
        }
        Ok(out)
    }
}
