use super::AdaptConfig;
use crate::error::{Error, Result};
use crate::gnn::ModelState;
use crate::train::{fit, History, LabeledSet, TrainConfig};

/// Supervised adaptation on labeled target data. With `reinit_classifier`
/// the head is redrawn for `classes` outputs; otherwise `classes` must match
/// the source model. All parameters are trained.
pub fn finetune(
    state: &ModelState,
    train: &LabeledSet,
    val: &LabeledSet,
    classes: usize,
    cfg: &AdaptConfig,
) -> Result<(ModelState, History)> {
    cfg.validate()?;
    let mut state = state.clone();
    if cfg.reinit_classifier {
        state.reinit_classifier(classes, cfg.seed.wrapping_add(1))?;
    } else if classes != state.config.classes {
        return Err(Error::Config(format!(
            "target has {classes} classes but the model has {}; enable reinit_classifier",
            state.config.classes
        )));
    }
    state.train_all();
    let train_cfg = TrainConfig {
        epochs: cfg.finetune_epochs.max(1),
        batch_size: cfg.batch_size,
        lr: cfg.finetune_lr,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    fit(state, train, val, cfg.finetune_epochs, &train_cfg)
}
