//! Dense embeddings: vocabulary, text and binary formats, row subsetting.
//!
//! The text format is the one used by pretrained GloVe releases: one word per
//! line, the token followed by `d` whitespace-separated decimals.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::bits::{expect_magic, read_bytes, read_f32, read_u32, write_f32, write_u32};
use crate::error::{Error, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Significant digits used when rendering values as text.
pub const TEXT_SIG_DIGITS: usize = 9;

/// Ordered list of unique tokens with its inverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary, refusing duplicate tokens.
    ///
    /// An empty vocabulary is allowed here (it is the natural content of an
    /// empty sparse file); [`Embedding::new`] rejects it.
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateToken {
                    line: i + 1,
                    token: w.clone(),
                });
            }
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    /// Row position of a token (exact byte match, no case folding).
    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

/// A dense `V x d` embedding with its aligned vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vocab: Vocabulary,
    matrix: Array2<f64>,
}

impl Embedding {
    pub fn new(vocab: Vocabulary, matrix: Array2<f64>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::EmptyEmbedding);
        }
        if matrix.nrows() != vocab.len() {
            return Err(Error::Shape(format!(
                "{} rows for {} tokens",
                matrix.nrows(),
                vocab.len()
            )));
        }
        if let Some((pos, v)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{v} at row {} column {}",
                pos.0, pos.1
            )));
        }
        Ok(Self { vocab, matrix })
    }

    /// Convenience constructor from parallel token and row lists.
    pub fn from_rows<S: Into<String>>(rows: Vec<(S, Vec<f64>)>) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.1.len())
            .ok_or(Error::EmptyEmbedding)?;
        let mut words = Vec::with_capacity(rows.len());
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (i, (w, r)) in rows.into_iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    line: i + 1,
                    expected: d,
                    found: r.len(),
                });
            }
            words.push(w.into());
            flat.extend(r);
        }
        let matrix = Array2::from_shape_vec((words.len(), d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(Vocabulary::new(words)?, matrix)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_parts(self) -> (Vocabulary, Array2<f64>) {
        (self.vocab, self.matrix)
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.vocab.get(token).map(|i| self.matrix.row(i))
    }
}

/// Rounds to [`TEXT_SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    format!("{:.*e}", TEXT_SIG_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Parses the text format from any reader.
pub fn read_text<R: BufRead>(reader: R, expected_d: Option<usize>) -> Result<Embedding> {
    let mut words = Vec::new();
    let mut flat = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut d = expected_d;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let start = flat.len();
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("non-numeric field {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-finite value {f:?}"),
                });
            }
            flat.push(v);
        }
        let found = flat.len() - start;
        let expected = *d.get_or_insert(found);
        if found != expected {
            return Err(Error::DimensionMismatch {
                line: lineno,
                expected,
                found,
            });
        }
        if index.insert(token.to_string(), words.len()).is_some() {
            return Err(Error::DuplicateToken {
                line: lineno,
                token: token.to_string(),
            });
        }
        words.push(token.to_string());
    }

    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = d.unwrap_or(0);
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no vector components".into(),
        });
    }
    let matrix =
        Array2::from_shape_vec((words.len(), d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Embedding::new(Vocabulary::new(words)?, matrix)
}

/// Loads a text embedding; `d` is inferred from the first line when
/// `expected_d` is `None`.
pub fn load_text(path: impl AsRef<Path>, expected_d: Option<usize>) -> Result<Embedding> {
    read_text(BufReader::new(File::open(path)?), expected_d)
}

pub fn write_text<W: Write>(e: &Embedding, mut w: W) -> Result<()> {
    if e.is_empty() {
        return Err(Error::EmptyEmbedding);
    }
    for (word, row) in e.vocab.words().iter().zip(e.matrix.rows()) {
        w.write_all(word.as_bytes())?;
        for &v in row {
            // Display of the rounded value gives the shortest exact rendering.
            write!(w, " {}", round_sig(v))?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_text(e: &Embedding, path: impl AsRef<Path>) -> Result<()> {
    if e.is_empty() {
        return Err(Error::EmptyEmbedding);
    }
    write_text(e, BufWriter::new(File::create(path)?))
}

/// Restricts `e` to the tokens of `keep` that it contains, in `keep` order.
/// Repeated tokens in `keep` are taken once.
pub fn subset<S: AsRef<str>>(e: &Embedding, keep: &[S]) -> Result<Embedding> {
    let mut seen = std::collections::HashSet::new();
    let rows: Vec<usize> = keep
        .iter()
        .filter_map(|t| e.vocab.get(t.as_ref()))
        .filter(|&i| seen.insert(i))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyEmbedding);
    }
    let words = rows.iter().map(|&i| e.vocab.word(i).to_string()).collect();
    let matrix = e.matrix.select(ndarray::Axis(0), &rows);
    Embedding::new(Vocabulary::new(words)?, matrix)
}

pub(crate) fn write_vocab<W: Write>(w: &mut W, vocab: &Vocabulary) -> Result<()> {
    for word in vocab.words() {
        write_u32(w, word.len() as u32)?;
        w.write_all(word.as_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_vocab<R: Read>(r: &mut R, count: usize) -> Result<Vocabulary> {
    let mut words = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(r, "token length")? as usize;
        let bytes = read_bytes(r, len, "token")?;
        let word = String::from_utf8(bytes)
            .map_err(|_| Error::Format("token is not valid UTF-8".into()))?;
        words.push(word);
    }
    Vocabulary::new(words)
}

/// Writes the `EMB1` binary cache: magic, `u32` V, `u32` d, the vocabulary
/// block, then `V x d` little-endian `f32` values row-major.
pub fn write_binary<W: Write>(e: &Embedding, mut w: W) -> Result<()> {
    w.write_all(EMB_MAGIC)?;
    write_u32(&mut w, e.len() as u32)?;
    write_u32(&mut w, e.dim() as u32)?;
    write_vocab(&mut w, &e.vocab)?;
    for &v in e.matrix.iter() {
        write_f32(&mut w, v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Embedding> {
    expect_magic(&mut r, EMB_MAGIC)?;
    let v = read_u32(&mut r, "vocabulary size")? as usize;
    let d = read_u32(&mut r, "dimension")? as usize;
    let vocab = read_vocab(&mut r, v)?;
    let mut flat = Vec::with_capacity(v * d);
    for _ in 0..v * d {
        flat.push(f64::from(read_f32(&mut r, "matrix")?));
    }
    let matrix = Array2::from_shape_vec((v, d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Embedding::new(vocab, matrix)
}

pub fn save_binary(e: &Embedding, path: impl AsRef<Path>) -> Result<()> {
    write_binary(e, BufWriter::new(File::create(path)?))
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<Embedding> {
    read_binary(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Embedding> {
        read_text(s.as_bytes(), None)
    }

    #[test]
    fn parses_rows_in_order() {
        let e = parse("the 0.1 0.2\ncat -1.0 3.5").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.dim(), 2);
        assert_eq!(e.vocab().words(), ["the", "cat"]);
        assert_eq!(e.row(1).to_vec(), vec![-1.0, 3.5]);
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        match parse("a 1 2\nb 3") {
            Err(Error::DimensionMismatch {
                line,
                expected,
                found,
            }) => {
                assert_eq!((line, expected, found), (2, 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expected_d_is_enforced() {
        assert!(matches!(
            read_text("a 1 2\n".as_bytes(), Some(3)),
            Err(Error::DimensionMismatch { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_and_non_numeric_are_errors() {
        assert!(matches!(
            parse("a 1\nb 2\na 3"),
            Err(Error::DuplicateToken { line: 3, .. })
        ));
        assert!(matches!(
            parse("a 1\nb x"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("a nan"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse(""), Err(Error::EmptyInput)));
        assert!(matches!(parse("\n  \n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn blank_lines_are_skipped_but_counted() {
        assert!(matches!(
            parse("a 1 2\n\nb 3"),
            Err(Error::DimensionMismatch { line: 3, .. })
        ));
    }

    #[test]
    fn save_zero_renders_plainly() {
        let e = Embedding::from_rows(vec![("x", vec![0.0])]).unwrap();
        let mut out = Vec::new();
        write_text(&e, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x 0\n");
    }

    #[test]
    fn empty_embedding_refused() {
        let vocab = Vocabulary::new(vec![]).unwrap();
        assert!(matches!(
            Embedding::new(vocab, Array2::zeros((0, 3))),
            Err(Error::EmptyEmbedding)
        ));
    }

    #[test]
    fn subset_keeps_order_and_skips_missing() {
        let e = parse("cat 1 2\nmouse 3 4\nowl 5 6").unwrap();
        let s = subset(&e, &["owl", "dog", "cat", "owl"]).unwrap();
        assert_eq!(s.vocab().words(), ["owl", "cat"]);
        assert_eq!(s.row(0).to_vec(), vec![5.0, 6.0]);
        let one = subset(&e, &["cat", "dog"]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(matches!(subset(&e, &["dog"]), Err(Error::EmptyEmbedding)));
        let all = subset(&e, e.vocab().words()).unwrap();
        assert_eq!(all, e);
    }

    #[test]
    fn binary_cache_round_trip() {
        let e = parse("a 0.5 -2\nb 0.125 7.25").unwrap();
        let mut buf = Vec::new();
        write_binary(&e, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"EMB1");
        assert_eq!(read_binary(buf.as_slice()).unwrap(), e);
        buf.truncate(buf.len() - 2);
        assert!(matches!(
            read_binary(buf.as_slice()),
            Err(Error::Truncated(_))
        ));
    }

    fn small_embedding() -> impl Strategy<Value = Embedding> {
        (1usize..12, 1usize..8).prop_flat_map(|(v, d)| {
            prop::collection::vec(-1e6f64..1e6, v * d).prop_map(move |flat| {
                let words = (0..v).map(|i| format!("w{i}")).collect();
                Embedding::new(
                    Vocabulary::new(words).unwrap(),
                    Array2::from_shape_vec((v, d), flat).unwrap(),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip_within_print_precision(e in small_embedding()) {
            let mut buf = Vec::new();
            write_text(&e, &mut buf).unwrap();
            let back = read_text(buf.as_slice(), Some(e.dim())).unwrap();
            prop_assert_eq!(back.vocab(), e.vocab());
            for (a, b) in back.matrix().iter().zip(e.matrix().iter()) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(f64::MIN_POSITIVE));
                prop_assert_eq!(*a, round_sig(*b));
            }
        }

        #[test]
        fn subset_rows_are_bit_identical(e in small_embedding(), picks in prop::collection::vec(0usize..12, 1..8)) {
            let keep: Vec<String> = picks.iter().map(|i| format!("w{i}")).collect();
            if let Ok(s) = subset(&e, &keep) {
                for (i, w) in s.vocab().words().iter().enumerate() {
                    let src = e.vector(w).unwrap();
                    for (a, b) in s.row(i).iter().zip(src.iter()) {
                        prop_assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            } else {
                prop_assert!(keep.iter().all(|t| !e.vocab().contains(t)));
            }
        }
    }
}
