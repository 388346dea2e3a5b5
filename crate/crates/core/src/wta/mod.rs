//! Winner-take-all sparse autoencoder.
//!
//! Learns a non-negative sparse code `A` (V x k) and a dictionary `D`
//! (k x d) such that `A D + b` reconstructs the input embedding. Sparsity is
//! enforced per code dimension over each minibatch by [`hurdle`], and the
//! sparsity target is annealed from 50% down to `alpha` by [`schedule`].

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod hurdle;
pub mod model;
pub mod schedule;
mod train;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};

pub use adam::{adam_update, Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use gradcheck::{gradient_check, gradient_check_masked, GradCheckReport};
pub use hurdle::{top_alpha_hurdle, wta_sparsify, Hurdle, Sparsified};
pub use model::{backward, forward, forward_with, loss, Mode, ModelParams, ParamSet, Selection};
pub use schedule::{schedule_update, ScheduleState};
pub use train::{encode_with, train, EpochLog, TrainOutput, Trainer};

use crate::embed_io::{Embedding, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Code dimensionality.
    pub k: usize,
    /// Final sparsity fraction.
    pub alpha: f64,
    /// Hidden width as a multiple of the input dimension.
    pub hidden_mult: usize,
    pub batch_size: usize,
    pub bisect_iters: usize,
    pub sigma_step: f64,
    /// σ advances only after epochs whose mean error is below this.
    pub error_threshold: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 1024,
            alpha: 0.0675,
            hidden_mult: 8,
            batch_size: 16384,
            bisect_iters: 5,
            sigma_step: 0.01,
            error_threshold: 0.01,
            epochs: 1000,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return fail(format!("alpha {} outside (0, 0.5)", self.alpha));
        }
        if self.k == 0 {
            return fail("k must be positive".into());
        }
        if self.batch_size < 2 {
            return fail("batch_size must exceed 1".into());
        }
        if self.hidden_mult == 0 {
            return fail("hidden_mult must be positive".into());
        }
        if !(self.sigma_step >= 0.0 && self.error_threshold > 0.0) {
            return fail("sigma_step and error_threshold must be non-negative".into());
        }
        let a = &self.adam;
        if !(a.step_size > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.epsilon > 0.0)
        {
            return fail("invalid adam settings".into());
        }
        Ok(())
    }

    /// `key=value` lines, used in checkpoints and run headers.
    pub fn to_kv(&self) -> String {
        format!(
            "k={}\nalpha={}\nhidden_mult={}\nbatch_size={}\nbisect_iters={}\nsigma_step={}\nerror_threshold={}\nepochs={}\nadam_step_size={}\nadam_beta1={}\nadam_beta2={}\nadam_epsilon={}\nseed={}\n",
            self.k,
            self.alpha,
            self.hidden_mult,
            self.batch_size,
            self.bisect_iters,
            self.sigma_step,
            self.error_threshold,
            self.epochs,
            self.adam.step_size,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.epsilon,
            self.seed
        )
    }

    /// Parses [`to_kv`](Self::to_kv) output; missing keys keep defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        fn get<T: std::str::FromStr>(
            map: &BTreeMap<&str, &str>,
            key: &str,
            slot: &mut T,
        ) -> Result<()> {
            if let Some(v) = map.get(key) {
                *slot = v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))?;
            }
            Ok(())
        }
        let mut c = Self::default();
        get(&map, "k", &mut c.k)?;
        get(&map, "alpha", &mut c.alpha)?;
        get(&map, "hidden_mult", &mut c.hidden_mult)?;
        get(&map, "batch_size", &mut c.batch_size)?;
        get(&map, "bisect_iters", &mut c.bisect_iters)?;
        get(&map, "sigma_step", &mut c.sigma_step)?;
        get(&map, "error_threshold", &mut c.error_threshold)?;
        get(&map, "epochs", &mut c.epochs)?;
        get(&map, "adam_step_size", &mut c.adam.step_size)?;
        get(&map, "adam_beta1", &mut c.adam.beta1)?;
        get(&map, "adam_beta2", &mut c.adam.beta2)?;
        get(&map, "adam_epsilon", &mut c.adam.epsilon)?;
        get(&map, "seed", &mut c.seed)?;
        Ok(c)
    }
}

/// Non-negative sparse codes with the dictionary that maps them back to the
/// dense space.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEncoding {
    vocab: Vocabulary,
    codes: Array2<f64>,
    dictionary: Array2<f64>,
    bias: Array1<f64>,
}

impl SparseEncoding {
    pub fn new(
        vocab: Vocabulary,
        codes: Array2<f64>,
        dictionary: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        if codes.nrows() != vocab.len() {
            return Err(Error::Shape(format!(
                "{} code rows for {} tokens",
                codes.nrows(),
                vocab.len()
            )));
        }
        if codes.ncols() != dictionary.nrows() || dictionary.ncols() != bias.len() {
            return Err(Error::Shape(format!(
                "codes {:?}, dictionary {:?}, bias {}",
                codes.dim(),
                dictionary.dim(),
                bias.len()
            )));
        }
        if codes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Format(
                "codes must be finite and non-negative".into(),
            ));
        }
        if dictionary.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dictionary".into()));
        }
        Ok(Self {
            vocab,
            codes,
            dictionary,
            bias,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn codes(&self) -> &Array2<f64> {
        &self.codes
    }

    pub fn dictionary(&self) -> &Array2<f64> {
        &self.dictionary
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn k(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Mean fraction of non-zero entries per word.
    pub fn nonzero_fraction(&self) -> f64 {
        if self.codes.is_empty() {
            return 0.0;
        }
        self.codes.iter().filter(|&&v| v > 0.0).count() as f64 / self.codes.len() as f64
    }

    pub fn nonzeros_per_word(&self) -> Vec<usize> {
        self.codes
            .axis_iter(Axis(0))
            .map(|r| r.iter().filter(|&&v| v > 0.0).count())
            .collect()
    }

    /// `A D + b` as a dense embedding.
    pub fn reconstruct(&self) -> Result<Embedding> {
        let mut m = self.codes.dot(&self.dictionary);
        m += &self.bias;
        Embedding::new(self.vocab.clone(), m)
    }

    /// The raw codes as a dense embedding.
    pub fn codes_embedding(&self) -> Result<Embedding> {
        Embedding::new(self.vocab.clone(), self.codes.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                alpha: 0.5,
                ..Default::default()
            },
            TrainConfig {
                alpha: 0.0,
                ..Default::default()
            },
            TrainConfig {
                k: 0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 1,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig {
            k: 128,
            alpha: 0.075,
            batch_size: 256,
            epochs: 17,
            seed: 99,
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert!(TrainConfig::from_kv("k=abc").is_err());
    }

    #[test]
    fn encoding_rejects_negative_codes() {
        let vocab = Vocabulary::new(vec!["a".into()]).unwrap();
        let codes = Array2::from_elem((1, 2), -1.0);
        assert!(
            SparseEncoding::new(vocab, codes, Array2::zeros((2, 3)), Array1::zeros(3)).is_err()
        );
    }
}
