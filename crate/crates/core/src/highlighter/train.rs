use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::HighlighterModel;
use super::schedule::{lr_at_epoch, HighlighterTrainConfig};
use crate::datamgmt::{DatasetSplit, HuTicsRecord};
use crate::error::{Error, Result};
use crate::evalbench::{miou, EvalReport};
use crate::handseg::{HandSegmentor, HandSegmentorConfig};
use crate::imaging::{resize_mask_nearest, BinaryMask, ImageFrame, SoftMask, DEFAULT_THRESHOLD};
use crate::nn::{loss::bce_with_logits, trainable_vars, ModelSpec};

/// One supervised sample: a frame, the hand mask and the object mask.
#[derive(Debug, Clone)]
pub struct HighlightExample {
    pub id: String,
    pub frame: ImageFrame,
    pub hand: BinaryMask,
    pub target: BinaryMask,
}

impl HighlightExample {
    pub fn new(id: impl Into<String>, frame: ImageFrame, hand: BinaryMask, target: BinaryMask) -> Result<Self> {
        frame.check_same_dims(hand.width(), hand.height())?;
        frame.check_same_dims(target.width(), target.height())?;
        Ok(Self {
            id: id.into(),
            frame,
            hand,
            target,
        })
    }
}

/// Adam + BCE-with-logits training loop driven by the epoch schedule.
pub struct HighlighterTrainer {
    model: HighlighterModel,
    opt: AdamW,
    inputs: Vec<Tensor>,
    targets: Vec<Tensor>,
    config: HighlighterTrainConfig,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl HighlighterTrainer {
    pub fn new(model: HighlighterModel, examples: &[HighlightExample], config: HighlighterTrainConfig) -> Result<Self> {
        config.validate()?;
        if examples.is_empty() {
            return Err(Error::Dataset("no training examples".into()));
        }
        if model.input_size() != config.input_size {
            return Err(Error::Config(format!(
                "model input {:?} differs from training input {:?}",
                model.input_size(),
                config.input_size
            )));
        }
        let (w, h) = config.input_size;
        let mut inputs = Vec::with_capacity(examples.len());
        let mut targets = Vec::with_capacity(examples.len());
        for ex in examples {
            inputs.push(model.input_tensor(&ex.frame, &ex.hand)?);
            let t = resize_mask_nearest(&ex.target, w, h);
            let v: Vec<f32> = t.values().iter().map(|b| *b as f32).collect();
            targets.push(Tensor::from_vec(v, (1, 1, h as usize, w as usize), &Device::Cpu)?);
        }
        let params = ParamsAdamW {
            lr: config.lr_initial,
            weight_decay: 0.0,
            ..Default::default()
        };
        let opt = AdamW::new(trainable_vars(model.net()?.varmap()), params)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            opt,
            inputs,
            targets,
            config,
            rng,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &HighlighterModel {
        &self.model
    }

    /// Mean BCE of the current weights over `indices`, without updating.
    pub fn loss_on(&self, indices: &[usize]) -> Result<f32> {
        let (x, y) = self.batch(indices)?;
        let logits = self.model.logits(&x, false)?;
        Ok(bce_with_logits(&logits, &y)?.to_scalar::<f32>()?)
    }

    /// One optimizer step on the given examples; returns the pre-step loss.
    pub fn step(&mut self, indices: &[usize], lr: f64) -> Result<f32> {
        let (x, y) = self.batch(indices)?;
        let logits = self.model.logits(&x, true)?;
        let loss = bce_with_logits(&logits, &y)?;
        self.opt.set_learning_rate(lr);
        self.opt.backward_step(&loss)?;
        Ok(loss.to_scalar::<f32>()?)
    }

    /// Runs one shuffled epoch and returns the mean batch loss.
    pub fn run_epoch(&mut self) -> Result<f32> {
        let lr = lr_at_epoch(&self.config, self.epoch)?;
        let mut order: Vec<usize> = (0..self.inputs.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            total += self.step(chunk, lr)?;
            batches += 1;
        }
        self.epoch += 1;
        Ok(total / batches as f32)
    }

    /// Trains for the configured number of epochs. `progress` receives
    /// (epoch, mean loss) after each one.
    pub fn train(mut self, mut progress: impl FnMut(usize, f32)) -> Result<HighlighterModel> {
        while self.epoch < self.config.epochs {
            let loss = self.run_epoch()?;
            if !loss.is_finite() {
                return Err(Error::State(format!("training diverged at epoch {}", self.epoch)));
            }
            progress(self.epoch - 1, loss);
        }
        Ok(self.model)
    }

    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        if indices.is_empty() || indices.iter().any(|i| *i >= self.inputs.len()) {
            return Err(Error::Argument(format!("bad batch indices {indices:?}")));
        }
        let xs: Vec<&Tensor> = indices.iter().map(|i| &self.inputs[*i]).collect();
        let ys: Vec<&Tensor> = indices.iter().map(|i| &self.targets[*i]).collect();
        Ok((Tensor::cat(&xs, 0)?, Tensor::cat(&ys, 0)?))
    }
}

/// Predicts every example and scores it against its target.
pub fn evaluate_highlighter(model: &HighlighterModel, examples: &[HighlightExample]) -> Result<EvalReport> {
    let pairs = examples
        .iter()
        .map(|ex| Ok((model.predict_highlight(&ex.frame, &ex.hand)?, ex.target.clone())))
        .collect::<Result<Vec<(SoftMask, BinaryMask)>>>()?;
    Ok(miou(&pairs, DEFAULT_THRESHOLD)?.with_image_ids(examples.iter().map(|e| e.id.clone()).collect()))
}

/// Trains a fresh model on `train` and reports mIoU on `test`. With an empty
/// test set the report is computed on the training examples and says so.
pub fn train_on_examples(
    train: &[HighlightExample],
    test: &[HighlightExample],
    spec: ModelSpec,
    config: &HighlighterTrainConfig,
    progress: impl FnMut(usize, f32),
) -> Result<(HighlighterModel, EvalReport)> {
    config.validate()?;
    let model = HighlighterModel::new(spec, config.input_size, config.seed)?;
    if let Some(path) = &config.encoder_weights {
        let n = model.load_encoder(path)?;
        log::info!("loaded {n} encoder tensors from {}", path.display());
    }
    let mut model = HighlighterTrainer::new(model, train, config.clone())?.train(progress)?;
    let (eval_set, name) = if test.is_empty() { (train, "train") } else { (test, "test") };
    let report = evaluate_highlighter(&model, eval_set)?.describe(
        model.describe(),
        format!("{name} split, {} images", eval_set.len()),
        config.seed,
    );
    model.set_trained_miou(report.miou);
    Ok((model, report))
}

/// Loads each record's frame and object mask and runs the hand segmentor on
/// the frame.
pub fn examples_from_records(records: &[HuTicsRecord], handseg: &HandSegmentor) -> Result<Vec<HighlightExample>> {
    records
        .iter()
        .map(|r| {
            let (frame, target) = r.load_pair()?;
            let hand = handseg.hand_mask(&frame)?;
            HighlightExample::new(r.frame_id.clone(), frame, hand, target)
        })
        .collect()
}

/// Trains on the split's training records and reports mIoU on its test
/// records, with hand masks from the configured segmentor.
pub fn train_highlighter(
    split: &DatasetSplit,
    spec: ModelSpec,
    config: &HighlighterTrainConfig,
    handseg: &HandSegmentorConfig,
    progress: impl FnMut(usize, f32),
) -> Result<(HighlighterModel, EvalReport)> {
    if split.train.is_empty() {
        return Err(Error::Dataset("split has no training records".into()));
    }
    let seg = HandSegmentor::new(handseg.clone())?;
    let train = examples_from_records(&split.train, &seg)?;
    let test = examples_from_records(&split.test, &seg)?;
    let (model, report) = train_on_examples(&train, &test, spec, config, progress)?;
    let report = EvalReport {
        dataset_desc: format!(
            "{} ({} train / {} test images, ratio {}, split seed {})",
            report.dataset_desc,
            train.len(),
            test.len(),
            split.ratio,
            split.seed
        ),
        ..report
    };
    Ok((model, report))
}
