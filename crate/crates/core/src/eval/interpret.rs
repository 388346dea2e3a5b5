use crate::error::{Error, Result};
use crate::wta::SparseEncoding;

/// One code dimension that is strong for the probed word.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionProbe {
    pub dimension: usize,
    /// The probed word's value in this dimension.
    pub value: f64,
    /// Highest-valued words in this dimension, descending.
    pub top: Vec<(String, f64)>,
}

/// Picks the `n_dims` dimensions where `word` has its largest codes and, for
/// each, lists the `n_words` vocabulary items with the largest codes there.
/// Ties keep the lower index first.
pub fn interpret(
    enc: &SparseEncoding,
    word: &str,
    n_dims: usize,
    n_words: usize,
) -> Result<Vec<DimensionProbe>> {
    let row = enc
        .vocab()
        .get(word)
        .ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
    let codes = enc.codes();
    let mut dims: Vec<(usize, f64)> = codes
        .row(row)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(j, &v)| (j, v))
        .collect();
    if dims.is_empty() {
        return Err(Error::Degenerate(format!(
            "{word:?} is uncoded (all-zero code)"
        )));
    }
    dims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    dims.truncate(n_dims);

    Ok(dims
        .into_iter()
        .map(|(dimension, value)| {
            let mut col: Vec<(usize, f64)> = codes
                .column(dimension)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(i, &v)| (i, v))
                .collect();
            col.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            col.truncate(n_words);
            DimensionProbe {
                dimension,
                value,
                top: col
                    .into_iter()
                    .map(|(i, v)| (enc.vocab().word(i).to_string(), v))
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::Vocabulary;
    use ndarray::{array, Array1, Array2};

    fn encoding() -> SparseEncoding {
        let vocab = Vocabulary::new(
            ["motorbike", "car", "tyre", "apple"]
                .map(String::from)
                .to_vec(),
        )
        .unwrap();
        let codes = array![
            [0.9, 0.0, 0.4],
            [0.5, 0.0, 0.0],
            [0.95, 0.0, 0.2],
            [0.0, 0.0, 0.0],
        ];
        SparseEncoding::new(vocab, codes, Array2::zeros((3, 2)), Array1::zeros(2)).unwrap()
    }

    #[test]
    fn known_lists() {
        let probes = interpret(&encoding(), "motorbike", 2, 2).unwrap();
        assert_eq!(probes.len(), 2);
        assert_eq!(probes[0].dimension, 0);
        assert_eq!(
            probes[0].top,
            vec![("tyre".into(), 0.95), ("motorbike".into(), 0.9)]
        );
        assert_eq!(probes[1].dimension, 2);
        assert_eq!(
            probes[1].top,
            vec![("motorbike".into(), 0.4), ("tyre".into(), 0.2)]
        );
    }

    #[test]
    fn single_dimension_word() {
        let probes = interpret(&encoding(), "car", 5, 10).unwrap();
        assert_eq!(probes.len(), 1);
        assert_eq!(probes[0].dimension, 0);
        let values: Vec<f64> = probes[0].top.iter().map(|t| t.1).collect();
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn uncoded_and_oov() {
        assert!(matches!(
            interpret(&encoding(), "apple", 3, 3),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            interpret(&encoding(), "bus", 3, 3),
            Err(Error::OutOfVocabulary(_))
        ));
    }
}
