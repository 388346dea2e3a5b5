use std::str::FromStr;

use rayon::prelude::*;

use super::{AnalogyDataset, CosineProvider, EvalReport};
use crate::error::{Error, Result};

/// Denominator guard for the multiplicative objective.
pub const MUL_EPSILON: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalogyMethod {
    /// `cos(c, a*) - cos(c, a) + cos(c, b)`
    Add,
    /// `s(c, a*) s(c, b) / (s(c, a) + 0.001)` with `s = (cos + 1) / 2`
    Mul,
}

impl AnalogyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Mul => "mul",
        }
    }
}

impl FromStr for AnalogyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "add" | "3cosadd" => Ok(Self::Add),
            "mul" | "3cosmul" => Ok(Self::Mul),
            other => Err(Error::Config(format!("unknown analogy method {other:?}"))),
        }
    }
}

#[inline]
fn shift(c: f64) -> f64 {
    (c + 1.0) / 2.0
}

/// Best candidate for `a : a_star :: b : ?` by row index. Every word except
/// the three query words is a candidate; ties go to the lower index.
pub fn answer_analogy_indices(
    rep: &dyn CosineProvider,
    a: usize,
    a_star: usize,
    b: usize,
    method: AnalogyMethod,
) -> Option<usize> {
    let to_a = rep.cosines_to(a);
    let to_a_star = rep.cosines_to(a_star);
    let to_b = rep.cosines_to(b);
    let mut best: Option<(usize, f64)> = None;
    for c in 0..to_a.len() {
        if c == a || c == a_star || c == b {
            continue;
        }
        let score = match method {
            AnalogyMethod::Add => to_a_star[c] - to_a[c] + to_b[c],
            AnalogyMethod::Mul => {
                shift(to_a_star[c]) * shift(to_b[c]) / (shift(to_a[c]) + MUL_EPSILON)
            }
        };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((c, score));
        }
    }
    best.map(|b| b.0)
}

/// Token-level wrapper around [`answer_analogy_indices`].
pub fn answer_analogy(
    rep: &dyn CosineProvider,
    a: &str,
    a_star: &str,
    b: &str,
    method: AnalogyMethod,
) -> Result<String> {
    let vocab = rep.vocab();
    let look = |t: &str| {
        vocab
            .get(t)
            .ok_or_else(|| Error::OutOfVocabulary(t.to_string()))
    };
    let (ia, ias, ib) = (look(a)?, look(a_star)?, look(b)?);
    answer_analogy_indices(rep, ia, ias, ib, method)
        .map(|c| vocab.word(c).to_string())
        .ok_or_else(|| Error::Degenerate("no candidate words beyond the query".into()))
}

/// Accuracy over the questions whose four words are all in the vocabulary.
pub fn eval_analogy(
    rep: &dyn CosineProvider,
    ds: &AnalogyDataset,
    method: AnalogyMethod,
    task: &str,
) -> Result<EvalReport> {
    let vocab = rep.vocab();
    let answerable: Vec<[usize; 4]> = ds
        .questions
        .iter()
        .filter_map(|q| {
            Some([
                vocab.get(&q[0])?,
                vocab.get(&q[1])?,
                vocab.get(&q[2])?,
                vocab.get(&q[3])?,
            ])
        })
        .collect();
    let coverage = if ds.questions.is_empty() {
        0.0
    } else {
        answerable.len() as f64 / ds.questions.len() as f64
    };
    if answerable.is_empty() {
        return Err(Error::Degenerate(format!(
            "{task}: no answerable questions (coverage {coverage:.3})"
        )));
    }
    let correct = answerable
        .par_iter()
        .filter(|q| answer_analogy_indices(rep, q[0], q[1], q[2], method) == Some(q[3]))
        .count();
    Ok(EvalReport {
        task: task.to_string(),
        metric: correct as f64 / answerable.len() as f64,
        coverage,
        count: answerable.len(),
    })
}
