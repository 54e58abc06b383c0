//! Joint training loop with teacher forcing, seeded batch order and
//! checkpointing.

mod checkpoint;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CheckpointMeta,
    CHECKPOINT_MAGIC,
};

use crate::decomposition::CharacterDb;
use crate::glyphgen::Corpus;
use crate::nnet::{
    images_to_tensor, AdadeltaConfig, BatchLoss, Graph, ModelConfig, ModelState, NnetError, Tensor, Variant,
    DEFAULT_LAMBDA,
};
use crate::seeding::rng_for;

const SHUFFLE_TAG: u64 = 0x5348_5546;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("corpus class {0} is not in the character database")]
    UnknownChar(u32),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub optimizer: AdadeltaConfig,
    pub model: ModelConfig,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            variant: Variant::StrokeRadical,
            optimizer: AdadeltaConfig::default(),
            model: ModelConfig::default(),
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && (0.0..1.0).contains(&o.rho) && o.eps > 0.0) {
            return Err(TrainError::InvalidConfig("optimizer constants out of range".into()));
        }
        self.model.validate()?;
        Ok(())
    }

    /// λ actually applied: StrokeOnly has no similarity term.
    pub fn effective_lambda(&self) -> f64 {
        match self.variant {
            Variant::StrokeOnly => 0.0,
            Variant::StrokeRadical => self.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub l_stroke: f64,
    pub l_radical: Option<f64>,
    pub l_sim: Option<f64>,
    pub l_star: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub zero_vector_events: usize,
    pub checkpoint: Option<PathBuf>,
}

/// Sample order for `epoch`; a pure function of `(seed, epoch, n)`.
pub fn batch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, &[SHUFFLE_TAG, epoch as u64]));
    idx
}

/// Per-sample label sequences for both decoders.
#[derive(Clone, Debug)]
pub struct Targets {
    pub strokes: Vec<Vec<usize>>,
    pub radicals: Vec<Vec<usize>>,
}

pub fn targets_for(db: &CharacterDb, corpus: &Corpus) -> Result<Targets, TrainError> {
    let mut strokes = Vec::with_capacity(corpus.len());
    let mut radicals = Vec::with_capacity(corpus.len());
    for s in &corpus.samples {
        let rec = db.get(s.char_id).ok_or(TrainError::UnknownChar(s.char_id))?;
        strokes.push(rec.strokes.labels().into_iter().map(usize::from).collect());
        radicals.push(db.radical_encoding(rec).tokens().iter().map(|&t| t as usize).collect());
    }
    Ok(Targets { strokes, radicals })
}

/// Fresh model for `config` over `db`'s radical vocabulary.
pub fn init_model(config: &TrainConfig, db: &CharacterDb) -> Result<ModelState, TrainError> {
    config.validate()?;
    let radical_labels = match config.variant {
        Variant::StrokeOnly => None,
        Variant::StrokeRadical => Some(db.token_vocab().max_label() as usize),
    };
    let mut m = ModelState::new(
        config.model.clone(),
        radical_labels,
        config.effective_lambda(),
        config.seed,
    )?;
    m.optimizer.config = config.optimizer;
    Ok(m)
}

/// One forward/backward/update on a batch.
pub fn train_step(
    model: &mut ModelState,
    images: &Tensor,
    strokes: &[Vec<usize>],
    radicals: Option<&[Vec<usize>]>,
) -> Result<BatchLoss, NnetError> {
    let (parts, grads) = {
        let mut g = Graph::new(&model.params);
        let (loss, parts) = model.loss(&mut g, images, strokes, radicals)?;
        if !parts.total.is_finite() {
            return Ok(parts);
        }
        (parts, g.backward(loss).into_params())
    };
    model.optimizer.step(&mut model.params, &grads)?;
    Ok(parts)
}

pub fn train_joint(
    config: &TrainConfig,
    corpus: &Corpus,
    db: &CharacterDb,
) -> Result<(ModelState, TrainReport), TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let targets = targets_for(db, corpus)?;
    let mut model = init_model(config, db)?;
    let use_radical = model.radical.is_some();
    let mut report = TrainReport::default();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let order = batch_order(config.seed, epoch, corpus.len());
        let (mut ls, mut lr, mut lsim, mut lstar, mut seen) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let images = images_to_tensor(&chunk.iter().map(|&i| &corpus.samples[i]).collect::<Vec<_>>());
            let st: Vec<_> = chunk.iter().map(|&i| targets.strokes[i].clone()).collect();
            let rt: Vec<_> = chunk.iter().map(|&i| targets.radicals[i].clone()).collect();
            let parts = train_step(&mut model, &images, &st, use_radical.then_some(rt.as_slice()))?;
            if !parts.total.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    detail: format!("{parts:?}"),
                });
            }
            let w = chunk.len() as f64;
            ls += parts.stroke * w;
            lr += parts.radical.unwrap_or(0.0) * w;
            lsim += parts.sim.unwrap_or(0.0) * w;
            lstar += parts.total * w;
            seen += chunk.len();
            report.zero_vector_events += parts.zero_vectors;
        }
        let n = seen as f64;
        let e = EpochReport {
            epoch,
            l_stroke: ls / n,
            l_radical: use_radical.then_some(lr / n),
            l_sim: use_radical.then_some(lsim / n),
            l_star: lstar / n,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: L_stroke {:.4} L_radical {:?} L_sim {:?} L_star {:.4} ({:.1}s)",
            e.l_stroke,
            e.l_radical,
            e.l_sim,
            e.l_star,
            e.wall_secs
        );
        report.epochs.push(e);
    }
    if let Some(path) = &config.checkpoint {
        save_checkpoint(&model, path)?;
        report.checkpoint = Some(path.clone());
    }
    Ok((model, report))
}
