use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Word pairs with human similarity scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityDataset {
    pub pairs: Vec<(String, String, f64)>,
}

/// `a : a* :: b : b*` questions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalogyDataset {
    pub questions: Vec<[String; 4]>,
}

fn norm(token: &str, lowercase: bool) -> String {
    if lowercase {
        token.to_lowercase()
    } else {
        token.to_string()
    }
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

impl SimilarityDataset {
    /// One `word1 word2 score` triple per line, whitespace or tab
    /// separated. Blank lines and `#` comments are skipped.
    pub fn parse<R: BufRead>(reader: R, lowercase: bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if is_skippable(&line) {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let score: f64 = fields[2].parse().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("bad score {:?}", fields[2]),
            })?;
            if !score.is_finite() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "non-finite score".into(),
                });
            }
            pairs.push((
                norm(fields[0], lowercase),
                norm(fields[1], lowercase),
                score,
            ));
        }
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { pairs })
    }

    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        Self::parse(BufReader::new(File::open(path)?), lowercase)
    }

    /// Distinct words mentioned by the dataset, in first-seen order.
    pub fn words(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.pairs
            .iter()
            .flat_map(|(a, b, _)| [a, b])
            .filter(|w| seen.insert(w.as_str()))
            .cloned()
            .collect()
    }
}

impl AnalogyDataset {
    /// Four tokens per line; `:`-prefixed section headers are skipped.
    pub fn parse<R: BufRead>(reader: R, lowercase: bool) -> Result<Self> {
        let mut questions = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if is_skippable(&line) || line.trim_start().starts_with(':') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let q: [&str; 4] = fields.as_slice().try_into().map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("expected 4 tokens, found {}", fields.len()),
            })?;
            questions.push(q.map(|t| norm(t, lowercase)));
        }
        if questions.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { questions })
    }

    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        Self::parse(BufReader::new(File::open(path)?), lowercase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_lines() {
        let ds = SimilarityDataset::parse(
            "# header\nTiger cat 7.35\n\nbook\tpaper 7.46\n".as_bytes(),
            false,
        )
        .unwrap();
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[0], ("Tiger".into(), "cat".into(), 7.35));
        let lower = SimilarityDataset::parse("Tiger cat 7.35".as_bytes(), true).unwrap();
        assert_eq!(lower.pairs[0].0, "tiger");
        assert!(matches!(
            SimilarityDataset::parse("a b\n".as_bytes(), false),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            SimilarityDataset::parse("a b c\n".as_bytes(), false),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn analogy_sections_skipped() {
        let text = ": capital-common-countries\nAthens Greece Baghdad Iraq\n: family\nboy girl brother sister\n";
        let ds = AnalogyDataset::parse(text.as_bytes(), false).unwrap();
        assert_eq!(ds.questions.len(), 2);
        assert_eq!(ds.questions[1][3], "sister");
        assert!(AnalogyDataset::parse("a b c\n".as_bytes(), false).is_err());
        assert!(matches!(
            AnalogyDataset::parse(": only\n".as_bytes(), false),
            Err(Error::EmptyInput)
        ));
    }
}
