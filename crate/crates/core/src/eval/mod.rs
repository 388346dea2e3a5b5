//! Word-similarity and word-analogy evaluation.
//!
//! Every representation is reduced to a [`CosineProvider`]: something that
//! can score a pair of vocabulary rows. Dense embeddings, raw sparse codes and
//! LSH signatures all implement it, so the same harness produces every row of
//! a comparison table.

mod analogy;
mod datasets;
mod interpret;
mod stats;

use std::fmt;

use ndarray::{Array1, Array2, Axis};

pub use analogy::{
    answer_analogy, answer_analogy_indices, eval_analogy, AnalogyMethod, MUL_EPSILON,
};
pub use datasets::{AnalogyDataset, SimilarityDataset};
pub use interpret::{interpret, DimensionProbe};
pub use stats::{average_ranks, pearson, spearman};

use crate::embed_io::{Embedding, Vocabulary};
use crate::error::{Error, Result};
use crate::lsh::{similarity, SignatureSet};

/// Cosine of two vectors. A zero vector yields 0 and sets the flag.
pub fn cosine_flagged(u: &[f64], v: &[f64]) -> Result<(f64, bool)> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of {} and {} dimensions",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok((0.0, true));
    }
    Ok((dot / (nu * nv), false))
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    cosine_flagged(u, v).map(|c| c.0)
}

/// Pairwise scoring over a vocabulary.
pub trait CosineProvider: Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Cosine (or cosine estimate) between rows `a` and `b`.
    fn cosine(&self, a: usize, b: usize) -> f64;

    /// Cosines of every row against row `a`.
    fn cosines_to(&self, a: usize) -> Vec<f64> {
        (0..self.vocab().len()).map(|c| self.cosine(c, a)).collect()
    }
}

/// Row-normalized dense vectors; zero rows stay zero and score 0.
#[derive(Debug, Clone)]
pub struct DenseCosine {
    vocab: Vocabulary,
    unit: Array2<f64>,
}

impl DenseCosine {
    pub fn new(vocab: Vocabulary, matrix: &Array2<f64>) -> Result<Self> {
        if matrix.nrows() != vocab.len() {
            return Err(Error::Shape("rows do not match vocabulary".into()));
        }
        let mut unit = matrix.clone();
        for mut row in unit.axis_iter_mut(Axis(0)) {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        Ok(Self { vocab, unit })
    }

    pub fn from_embedding(e: &Embedding) -> Self {
        Self::new(e.vocab().clone(), e.matrix()).expect("embedding rows match vocabulary")
    }
}

impl CosineProvider for DenseCosine {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        self.unit.row(a).dot(&self.unit.row(b))
    }

    fn cosines_to(&self, a: usize) -> Vec<f64> {
        let col: Array1<f64> = self.unit.dot(&self.unit.row(a));
        col.to_vec()
    }
}

impl CosineProvider for SignatureSet {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        similarity(&self.signatures[a], &self.signatures[b]).expect("signatures share a length")
    }
}

/// Outcome of one evaluation task.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    /// Spearman ρ or accuracy fraction.
    pub metric: f64,
    /// Fraction of items whose words are all in the vocabulary.
    pub coverage: f64,
    /// Items actually scored.
    pub count: usize,
}

impl EvalReport {
    /// `task<TAB>metric<TAB>coverage<TAB>count`.
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{}",
            self.task, self.metric, self.coverage, self.count
        )
    }

    pub const TABLE_HEADER: &'static str =
        "task                             metric  coverage    count";
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<30} {:>8.4} {:>9.4} {:>8}",
            self.task, self.metric, self.coverage, self.count
        )
    }
}

/// Spearman ρ between model cosines and human scores over the in-vocabulary
/// pairs.
pub fn eval_similarity(
    rep: &dyn CosineProvider,
    ds: &SimilarityDataset,
    task: &str,
) -> Result<EvalReport> {
    let vocab = rep.vocab();
    let mut model = Vec::new();
    let mut human = Vec::new();
    for (a, b, score) in &ds.pairs {
        if let (Some(i), Some(j)) = (vocab.get(a), vocab.get(b)) {
            model.push(rep.cosine(i, j));
            human.push(*score);
        }
    }
    let coverage = if ds.pairs.is_empty() {
        0.0
    } else {
        model.len() as f64 / ds.pairs.len() as f64
    };
    if model.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{task}: {} scorable pairs (coverage {coverage:.3})",
            model.len()
        )));
    }
    Ok(EvalReport {
        task: task.to_string(),
        metric: spearman(&model, &human)?,
        coverage,
        count: model.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(
            cosine_flagged(&[0.0, 0.0], &[1.0, 3.0]).unwrap(),
            (0.0, true)
        );
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn tiny() -> Embedding {
        Embedding::from_rows(vec![
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.9, 0.1]),
            ("c", vec![0.0, 1.0]),
            ("d", vec![-1.0, 0.2]),
        ])
        .unwrap()
    }

    #[test]
    fn dense_provider_matches_definition() {
        let e = tiny();
        let rep = DenseCosine::from_embedding(&e);
        for i in 0..4 {
            let all = rep.cosines_to(i);
            for j in 0..4 {
                let direct = cosine(&e.row(i).to_vec(), &e.row(j).to_vec()).unwrap();
                assert!((rep.cosine(i, j) - direct).abs() < 1e-12);
                assert!((all[j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn similarity_self_scores() {
        let e = tiny();
        let rep = DenseCosine::from_embedding(&e);
        let pairs = vec![("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("oov", "a")];
        let ds = SimilarityDataset {
            pairs: pairs
                .iter()
                .map(|(x, y)| {
                    let s = match (e.vocab().get(x), e.vocab().get(y)) {
                        (Some(i), Some(j)) => rep.cosine(i, j),
                        _ => 0.0,
                    };
                    (x.to_string(), y.to_string(), s)
                })
                .collect(),
        };
        let r = eval_similarity(&rep, &ds, "self").unwrap();
        assert!((r.metric - 1.0).abs() < 1e-12);
        assert_eq!(r.count, 4);
        assert!((r.coverage - 0.8).abs() < 1e-15);
        assert_eq!(r.tsv(), "self\t1.000000\t0.800000\t4");
    }

    #[test]
    fn all_oov_is_an_error() {
        let rep = DenseCosine::from_embedding(&tiny());
        let ds = SimilarityDataset {
            pairs: vec![("x".into(), "y".into(), 1.0), ("p".into(), "q".into(), 2.0)],
        };
        assert!(matches!(
            eval_similarity(&rep, &ds, "t"),
            Err(Error::Degenerate(_))
        ));
    }
}
