//! Seeded synthetic embeddings for tests, examples and benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embed_io::{Embedding, Vocabulary};

fn numbered_vocab(v: usize) -> Vocabulary {
    Vocabulary::new((0..v).map(|i| format!("w{i}")).collect()).expect("unique tokens")
}

/// I.i.d. standard normal entries.
pub fn gaussian_embedding(v: usize, d: usize, seed: u64) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Array2::from_shape_fn((v, d), |_| StandardNormal.sample(&mut rng));
    Embedding::new(numbered_vocab(v), m).expect("finite entries")
}

/// Rows are non-negative mixtures of `factors` Gaussian directions.
///
/// Each word activates two or three factors with weights drawn from
/// `U(0.5, 1.5)`; the factor directions are standard normal in `d`
/// dimensions. The result is scaled so entries have roughly unit variance
/// and a little isotropic noise (std 0.01) is added.
pub fn factor_embedding(v: usize, d: usize, factors: usize, seed: u64) -> Embedding {
    assert!(factors > 0, "at least one factor");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = Array2::from_shape_fn((factors, d), |_| StandardNormal.sample(&mut rng));
    let mut weights = Array2::<f64>::zeros((v, factors));
    let active = 3.min(factors);
    for mut row in weights.rows_mut() {
        let count = if active > 2 {
            rng.random_range(2..=active)
        } else {
            active
        };
        for _ in 0..count {
            let f = rng.random_range(0..factors);
            row[f] = rng.random_range(0.5..1.5);
        }
    }
    let mut m = weights.dot(&basis);
    let scale = {
        let var = m.iter().map(|x| x * x).sum::<f64>() / m.len() as f64;
        1.0 / var.sqrt().max(f64::MIN_POSITIVE)
    };
    m.mapv_inplace(|x| x * scale);
    for x in m.iter_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *x += 0.01 * n;
    }
    Embedding::new(numbered_vocab(v), m).expect("finite entries")
}
