use crate::autodiff::{adam_step, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::gnn::{model_forward, ForwardMode, GraphBatch, ModelState};
use crate::types::AttributedGraph;

/// Online entropy minimization over batch-norm scale and shift. Every batch
/// is normalized with its own statistics; running statistics stay untouched.
#[derive(Clone, Debug)]
pub struct Tent {
    state: ModelState,
    lr: f64,
    steps: usize,
}

impl Tent {
    pub fn new(mut state: ModelState, lr: f64, steps_per_batch: usize) -> Result<Self> {
        if !state.has_batch_norm() {
            return Err(Error::Unsupported("Tent needs a model with batch normalization".into()));
        }
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config("tent learning rate must be positive".into()));
        }
        state.train_norm_affine_only();
        state.params.reset_state();
        Ok(Tent { state, lr, steps: steps_per_batch })
    }

    pub fn model(&self) -> &ModelState {
        &self.state
    }

    /// Mean prediction entropy on `graphs` under the current parameters.
    pub fn entropy(&self, graphs: &[&AttributedGraph]) -> Result<f64> {
        let batch = GraphBatch::new(graphs, &self.state.config)?;
        let mut tape = Tape::new();
        let out = model_forward(&self.state, &batch, ForwardMode::TestTimeBatchStats, &mut tape)?;
        let h = tape.mean_entropy(out.logits)?;
        Ok(tape.value(h).item())
    }

    /// Predicts `graphs`, then takes the configured number of entropy steps
    /// on them. Predictions come from the forward pass before any update.
    pub fn adapt_batch(&mut self, graphs: &[&AttributedGraph]) -> Result<Vec<usize>> {
        let batch = GraphBatch::new(graphs, &self.state.config)?;
        let mut predictions = None;
        for _ in 0..self.steps.max(1) {
            let mut tape = Tape::new();
            let out = model_forward(&self.state, &batch, ForwardMode::TestTimeBatchStats, &mut tape)?;
            if predictions.is_none() {
                predictions = Some(tape.value(out.logits).argmax_rows());
            }
            if self.steps == 0 {
                break;
            }
            let loss = tape.mean_entropy(out.logits)?;
            let grads = tape.backward(loss)?;
            let grads = self.state.params.collect_grads(&grads, &out.vars);
            adam_step(&mut self.state.params, &grads, self.lr, AdamConfig::default())?;
        }
        Ok(predictions.unwrap_or_default())
    }

    /// Final adapted model with every parameter trainable again.
    pub fn into_state(mut self) -> ModelState {
        self.state.train_all();
        self.state.params.reset_state();
        self.state
    }
}
