use std::fmt;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::hurdle::wta_sparsify;
use super::model::{
    backward, decode, forward, loss, loss_grad, rectified_codes, Mode, ModelParams,
};
use super::schedule::{schedule_update, ScheduleState};
use super::{SparseEncoding, TrainConfig};
use crate::embed_io::Embedding;
use crate::error::{Error, Result};

/// One training-log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_error: f64,
    /// Schedule values in force during the epoch.
    pub sigma: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
    /// Mean survivor fraction of the top-α layer.
    pub sparsity: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6e}\t{:.2}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.mean_error, self.sigma, self.alpha_t, self.beta_t, self.sparsity
        )
    }
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\tmean_error\tsigma\talpha_t\tbeta_t\tsparsity";
}

/// Owns the model and optimizer state for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    params: ModelParams,
    last_good: ModelParams,
    adam: Adam,
    schedule: ScheduleState,
    rng: ChaCha8Rng,
    steps: usize,
    epoch: usize,
    log: Vec<EpochLog>,
}

impl Trainer {
    pub fn new(d: usize, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if d == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = ModelParams::init(d, d * cfg.hidden_mult, cfg.k, &mut rng);
        Ok(Self {
            adam: Adam::new(cfg.adam, &params.weights),
            schedule: ScheduleState::initial(cfg.alpha),
            last_good: params.clone(),
            params,
            cfg,
            rng,
            steps: 0,
            epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn schedule(&self) -> ScheduleState {
        self.schedule
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// One pass over shuffled minibatches followed by a schedule update.
    ///
    /// A non-finite loss restores the parameters of the last completed epoch
    /// and reports divergence.
    pub fn run_epoch(&mut self, data: &Array2<f64>) -> Result<EpochLog> {
        let n = data.nrows();
        if n < 2 {
            return Err(Error::Degenerate("need at least two training rows".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let batch_size = self.cfg.batch_size.min(n);

        let state = self.schedule;
        let mut total_loss = 0.0;
        let mut total_sparsity = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = data.select(Axis(0), chunk);
            let fp = match forward(
                &self.params,
                batch.view(),
                &state,
                Mode::Train,
                self.cfg.bisect_iters,
                &mut self.rng,
            ) {
                Ok(fp) => fp,
                Err(e) => return Err(self.diverged(e.to_string())),
            };
            let l = loss(fp.recon.view(), batch.view());
            if !l.is_finite() {
                return Err(self.diverged(format!("loss {l}")));
            }
            let grads = backward(
                &self.params,
                &fp,
                loss_grad(fp.recon.view(), batch.view()).view(),
            );
            self.steps += 1;
            self.adam.step(&mut self.params.weights, &grads, self.steps);
            self.params
                .update_running_stats(&fp.batch_mean, &fp.batch_var, chunk.len());
            total_loss += l;
            total_sparsity += fp.survivor_fraction();
            batches += 1;
        }
        if !self.params.all_finite() {
            return Err(self.diverged("non-finite parameters".into()));
        }

        let mean_error = total_loss / batches as f64;
        let entry = EpochLog {
            epoch: self.epoch,
            mean_error,
            sigma: state.sigma,
            alpha_t: state.alpha_t,
            beta_t: state.beta_t,
            sparsity: total_sparsity / batches as f64,
        };
        self.schedule = schedule_update(state, mean_error, &self.cfg);
        self.epoch += 1;
        self.last_good = self.params.clone();
        self.log.push(entry);
        Ok(entry)
    }

    fn diverged(&mut self, detail: String) -> Error {
        self.params = self.last_good.clone();
        Error::Diverged {
            epoch: self.epoch,
            detail,
        }
    }

    /// Runs the configured number of epochs, calling `on_epoch` after each.
    pub fn fit(&mut self, e: &Embedding, mut on_epoch: impl FnMut(&EpochLog)) -> Result<()> {
        self.check_dim(e)?;
        let data = e.matrix().clone();
        while self.epoch < self.cfg.epochs {
            let entry = self.run_epoch(&data)?;
            on_epoch(&entry);
        }
        Ok(())
    }

    fn check_dim(&self, e: &Embedding) -> Result<()> {
        if e.dim() != self.params.input_dim() {
            return Err(Error::Shape(format!(
                "embedding dimension {} for a model of input dimension {}",
                e.dim(),
                self.params.input_dim()
            )));
        }
        Ok(())
    }

    /// Noise-free pass over the whole vocabulary at the current sparsity.
    pub fn encode(&self, e: &Embedding) -> Result<(SparseEncoding, Embedding)> {
        self.check_dim(e)?;
        encode_with(
            &self.params,
            e,
            self.schedule.alpha_t,
            self.cfg.bisect_iters,
            self.cfg.batch_size,
        )
    }
}

/// Infer-mode encoding of `e`: dense layers run in chunks of `chunk` rows,
/// then the top-α hurdle of each code dimension is taken over all words.
pub fn encode_with(
    params: &ModelParams,
    e: &Embedding,
    alpha: f64,
    bisect_iters: usize,
    chunk: usize,
) -> Result<(SparseEncoding, Embedding)> {
    let x = e.matrix();
    let v = x.nrows();
    let mut dense = Array2::zeros((v, params.code_dim()));
    let step = chunk.max(1);
    for start in (0..v).step_by(step) {
        let end = (start + step).min(v);
        let block = rectified_codes(params, x.slice(s![start..end, ..]), Mode::Infer);
        dense.slice_mut(s![start..end, ..]).assign(&block);
    }
    let codes = wta_sparsify(dense.view(), alpha, bisect_iters).values;
    let mut recon = Array2::zeros(x.dim());
    for start in (0..v).step_by(step) {
        let end = (start + step).min(v);
        let block = decode(params, codes.slice(s![start..end, ..]));
        recon.slice_mut(s![start..end, ..]).assign(&block);
    }
    if recon.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reconstruction".into()));
    }
    let encoding = SparseEncoding::new(
        e.vocab().clone(),
        codes,
        params.weights.w_f.clone(),
        params.weights.b_f.clone(),
    )?;
    let reconstruction = Embedding::new(e.vocab().clone(), recon)?;
    Ok((encoding, reconstruction))
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub encoding: SparseEncoding,
    pub reconstruction: Embedding,
    pub params: ModelParams,
    pub schedule: ScheduleState,
    pub log: Vec<EpochLog>,
}

/// Trains for `cfg.epochs` epochs and returns the infer-mode codes `A`, the
/// dictionary and the reconstruction `E*`.
pub fn train(e: &Embedding, cfg: TrainConfig) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(e.dim(), cfg)?;
    trainer.fit(e, |entry| log::debug!("{entry}"))?;
    let (encoding, reconstruction) = trainer.encode(e)?;
    Ok(TrainOutput {
        encoding,
        reconstruction,
        params: trainer.params.clone(),
        schedule: trainer.schedule,
        log: trainer.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            k: 16,
            alpha: 0.1,
            hidden_mult: 2,
            batch_size: 32,
            epochs: 3,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn identical_seeds_identical_codes() {
        let e = synth::factor_embedding(96, 6, 3, 1);
        let a = train(&e, small_cfg()).unwrap();
        let b = train(&e, small_cfg()).unwrap();
        assert_eq!(a.encoding.codes(), b.encoding.codes());
        assert_eq!(a.log, b.log);
        assert!(a.encoding.codes().iter().all(|&v| v >= 0.0));
        assert_eq!(a.log.len(), 3);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let e = synth::factor_embedding(40, 6, 3, 1);
        let other = synth::factor_embedding(40, 5, 3, 1);
        let mut t = Trainer::new(6, small_cfg()).unwrap();
        assert!(t.fit(&other, |_| {}).is_err());
        assert!(t.fit(&e, |_| {}).is_ok());
    }

    #[test]
    fn divergence_restores_last_good() {
        let e = synth::factor_embedding(64, 6, 3, 2);
        let mut cfg = small_cfg();
        cfg.adam.step_size = 1e300;
        let mut t = Trainer::new(6, cfg).unwrap();
        let start = t.params().clone();
        let err = (0..5).find_map(|_| t.run_epoch(e.matrix()).err());
        assert!(matches!(err, Some(Error::Diverged { .. })));
        assert!(t.params().all_finite());
        if t.epochs_run() == 0 {
            assert_eq!(t.params(), &start);
        }
    }
}
