//! Per-dimension adaptive level quantization.
//!
//! Every embedding column gets its own table of levels, fitted with Lloyd's
//! algorithm (1-D k-means). Each element is then stored as the index of its
//! nearest level. Eight levels at 300 dimensions is the 900-bit word budget.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::bits::{
    bits_for, expect_magic, read_bytes, read_f32, read_u16, read_u32, write_f32, write_u16,
    write_u32, BitReader, BitWriter,
};
use crate::embed_io::{read_vocab, write_vocab, Embedding, Vocabulary};
use crate::error::{Error, Result};

const LQE_MAGIC: &[u8; 4] = b"LQE1";

/// Ascending quantization levels for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    levels: Vec<f64>,
}

impl LevelTable {
    /// Requires a non-empty, finite, strictly ascending list.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptyInput);
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("level table".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("levels not strictly ascending".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Index of the nearest level; equidistant values take the lower index.
    pub fn nearest(&self, v: f64) -> usize {
        nearest_in(&self.levels, v)
    }
}

fn nearest_in(levels: &[f64], v: f64) -> usize {
    // first level whose upper decision boundary lies at or above v
    let n = levels.len();
    let mut lo = 0;
    let mut hi = n - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if goes_lower(v, levels[mid], levels[mid + 1]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

#[inline]
fn goes_lower(v: f64, lower: f64, upper: f64) -> bool {
    (v - lower).abs() <= (upper - v).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydConfig {
    pub n_levels: usize,
    pub max_iters: usize,
    /// Movement tolerance as a fraction of the value range.
    pub rel_tol: f64,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            n_levels: 8,
            max_iters: 100,
            rel_tol: 1e-7,
        }
    }
}

impl LloydConfig {
    pub fn with_levels(n_levels: usize) -> Self {
        Self {
            n_levels,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// No assignment changed; levels are exact centroids.
    Stable,
    /// Largest level movement fell below the tolerance.
    Tolerance,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct LloydFit {
    pub table: LevelTable,
    /// Squared quantization error after every assignment step, starting with
    /// the initial quantile placement.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl LloydFit {
    pub fn objective(&self) -> f64 {
        *self
            .objective_history
            .last()
            .expect("history is never empty")
    }
}

/// `(i + 0.5) / n` quantiles of already-sorted values.
pub fn quantile_levels(sorted: &[f64], n: usize) -> Vec<f64> {
    let len = sorted.len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * len as f64 / n as f64).floor() as usize;
            sorted[pos.min(len - 1)]
        })
        .collect();
    out.dedup();
    out
}

/// Sum of squared distances from each value to its nearest level.
pub fn objective(values: &[f64], table: &LevelTable) -> f64 {
    values
        .iter()
        .map(|&v| {
            let d = v - table.value(table.nearest(v));
            d * d
        })
        .sum()
}

fn validate(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{v} in quantizer input")));
    }
    Ok(())
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Cluster end offsets (exclusive) over sorted values.
fn assign(sorted: &[f64], levels: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(levels.len());
    for q in 0..levels.len() - 1 {
        let (a, b) = (levels[q], levels[q + 1]);
        bounds.push(sorted.partition_point(|&v| goes_lower(v, a, b)));
    }
    bounds.push(sorted.len());
    bounds
}

fn cluster_ranges(bounds: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    bounds.iter().scan(0usize, |start, &end| {
        let r = (*start, end);
        *start = end;
        Some(r)
    })
}

fn sorted_objective(sorted: &[f64], levels: &[f64], bounds: &[usize]) -> f64 {
    cluster_ranges(bounds)
        .zip(levels)
        .map(|((s, e), &c)| sorted[s..e].iter().map(|v| (v - c) * (v - c)).sum::<f64>())
        .sum()
}

/// Drops levels that won no values, then reseeds until `target` levels exist.
fn repair(sorted: &[f64], levels: &mut Vec<f64>, target: usize) -> Vec<usize> {
    loop {
        let bounds = assign(sorted, levels);
        let mut kept = Vec::with_capacity(levels.len());
        for ((s, e), &c) in cluster_ranges(&bounds).zip(levels.iter()) {
            if e > s {
                kept.push(c);
            }
        }
        if kept.len() != levels.len() {
            *levels = kept;
            continue;
        }
        if levels.len() >= target {
            return bounds;
        }
        let seed = reseed_point(sorted, levels, &bounds);
        let at = levels.partition_point(|&c| c < seed);
        levels.insert(at, seed);
    }
}

/// Midpoint of the widest gap inside one cluster, skipping midpoints that
/// coincide with a level; otherwise the worst-quantized value.
fn reseed_point(sorted: &[f64], levels: &[f64], bounds: &[usize]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for ((s, e), &c) in cluster_ranges(bounds).zip(levels) {
        for i in s..e.saturating_sub(1) {
            let gap = sorted[i + 1] - sorted[i];
            let mid = 0.5 * (sorted[i] + sorted[i + 1]);
            if gap > 0.0 && mid != c && best.is_none_or(|(g, _)| gap > g) {
                best = Some((gap, mid));
            }
        }
    }
    if let Some((_, mid)) = best {
        return mid;
    }
    let mut worst = (0.0, sorted[0]);
    for ((s, e), &c) in cluster_ranges(bounds).zip(levels) {
        for &v in &sorted[s..e] {
            let err = (v - c).abs();
            if err > worst.0 {
                worst = (err, v);
            }
        }
    }
    worst.1
}

/// Fits a level table to one dimension's values.
///
/// Levels start at the `(i + 0.5) / n` quantiles and alternate between
/// nearest-level assignment and centroid updates. When `n_levels` exceeds the
/// number of distinct values the table holds exactly those values.
pub fn fit_dimension(values: &[f64], cfg: &LloydConfig) -> Result<LloydFit> {
    validate(values)?;
    if cfg.n_levels == 0 {
        return Err(Error::Config("n_levels must be at least 1".into()));
    }
    let sorted = sorted_copy(values);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= cfg.n_levels {
        return Ok(LloydFit {
            table: LevelTable::new(distinct)?,
            objective_history: vec![0.0],
            iterations: 0,
            termination: Termination::Stable,
        });
    }
    let target = cfg.n_levels;
    let tol = cfg.rel_tol * (sorted[sorted.len() - 1] - sorted[0]);

    let mut levels = quantile_levels(&sorted, target);
    let mut history = Vec::new();
    let mut prev_bounds: Option<Vec<usize>> = None;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        let bounds = repair(&sorted, &mut levels, target);
        history.push(sorted_objective(&sorted, &levels, &bounds));
        if prev_bounds.as_ref() == Some(&bounds) {
            termination = Termination::Stable;
            break;
        }
        iterations += 1;
        let updated: Vec<f64> = cluster_ranges(&bounds)
            .map(|(s, e)| sorted[s..e].iter().sum::<f64>() / (e - s) as f64)
            .collect();
        let movement = updated
            .iter()
            .zip(&levels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        levels = updated;
        prev_bounds = Some(bounds);
        if movement < tol {
            termination = Termination::Tolerance;
            break;
        }
    }
    if termination != Termination::Stable {
        // centroids may have merged after the last update
        levels.dedup();
        let bounds = repair(&sorted, &mut levels, 0);
        history.push(sorted_objective(&sorted, &levels, &bounds));
    }

    Ok(LloydFit {
        table: LevelTable::new(levels)?,
        objective_history: history,
        iterations,
        termination,
    })
}

/// Per-dimension level tables plus per-element level indices.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedEmbedding {
    vocab: Vocabulary,
    n_levels: usize,
    tables: Vec<LevelTable>,
    indices: Array2<u16>,
}

impl QuantizedEmbedding {
    pub fn new(
        vocab: Vocabulary,
        n_levels: usize,
        tables: Vec<LevelTable>,
        indices: Array2<u16>,
    ) -> Result<Self> {
        if n_levels == 0 || n_levels > usize::from(u16::MAX) {
            return Err(Error::Config(format!("n_levels {n_levels} out of range")));
        }
        if indices.nrows() != vocab.len() || indices.ncols() != tables.len() {
            return Err(Error::Shape(format!(
                "indices {:?} for V={} d={}",
                indices.dim(),
                vocab.len(),
                tables.len()
            )));
        }
        if let Some(t) = tables.iter().find(|t| t.len() > n_levels) {
            return Err(Error::Format(format!(
                "table with {} levels exceeds n_levels {n_levels}",
                t.len()
            )));
        }
        for (col, t) in indices.axis_iter(Axis(1)).zip(&tables) {
            if col.iter().any(|&i| usize::from(i) >= t.len()) {
                return Err(Error::Format("level index out of range".into()));
            }
        }
        Ok(Self {
            vocab,
            n_levels,
            tables,
            indices,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn tables(&self) -> &[LevelTable] {
        &self.tables
    }

    pub fn indices(&self) -> &Array2<u16> {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.tables.len()
    }

    pub fn bits_per_element(&self) -> u32 {
        bits_for(self.n_levels)
    }

    /// `d * ceil(log2 n_levels)`.
    pub fn payload_bits_per_word(&self) -> usize {
        self.dim() * self.bits_per_element() as usize
    }
}

/// `d * ceil(log2 n_levels)` without building anything.
pub fn payload_bits(d: usize, n_levels: usize) -> usize {
    d * bits_for(n_levels) as usize
}

pub fn quantize(e: &Embedding, n_levels: usize) -> Result<QuantizedEmbedding> {
    quantize_with(e, &LloydConfig::with_levels(n_levels))
}

/// Fits every column independently (in parallel) and assigns each element
/// to its nearest level.
pub fn quantize_with(e: &Embedding, cfg: &LloydConfig) -> Result<QuantizedEmbedding> {
    if cfg.n_levels == 0 || cfg.n_levels > usize::from(u16::MAX) {
        return Err(Error::Config(format!(
            "n_levels {} out of range",
            cfg.n_levels
        )));
    }
    let columns: Vec<Vec<f64>> = e.matrix().axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let tables = columns
        .par_iter()
        .map(|col| fit_dimension(col, cfg).map(|f| f.table))
        .collect::<Result<Vec<_>>>()?;
    let indices = Array2::from_shape_fn(e.matrix().dim(), |(i, j)| {
        tables[j].nearest(e.matrix()[[i, j]]) as u16
    });
    QuantizedEmbedding::new(e.vocab().clone(), cfg.n_levels, tables, indices)
}

pub fn dequantize(q: &QuantizedEmbedding) -> Embedding {
    let matrix = Array2::from_shape_fn(q.indices.dim(), |(i, j)| {
        q.tables[j].value(usize::from(q.indices[[i, j]]))
    });
    Embedding::new(q.vocab.clone(), matrix).expect("quantized embedding is valid")
}

/// Writes the `LQE1` layout: magic, `u32` V, `u32` d, `u16` n_levels,
/// vocabulary block, `d x n_levels` `f32` tables (short tables padded with
/// their top level), then one byte-aligned bitstream of indices per word.
pub fn write_quantized<W: Write>(q: &QuantizedEmbedding, mut w: W) -> Result<()> {
    w.write_all(LQE_MAGIC)?;
    write_u32(&mut w, q.vocab.len() as u32)?;
    write_u32(&mut w, q.dim() as u32)?;
    write_u16(&mut w, q.n_levels as u16)?;
    write_vocab(&mut w, &q.vocab)?;
    for t in &q.tables {
        let top = t.value(t.len() - 1);
        for i in 0..q.n_levels {
            write_f32(&mut w, if i < t.len() { t.value(i) } else { top } as f32)?;
        }
    }
    let width = q.bits_per_element();
    for row in q.indices.rows() {
        let mut bw = BitWriter::new();
        for &idx in row {
            bw.push(u32::from(idx), width);
        }
        w.write_all(&bw.into_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_quantized<R: Read>(mut r: R) -> Result<QuantizedEmbedding> {
    expect_magic(&mut r, LQE_MAGIC)?;
    let v = read_u32(&mut r, "vocabulary size")? as usize;
    let d = read_u32(&mut r, "dimension")? as usize;
    let n_levels = usize::from(read_u16(&mut r, "level count")?);
    if n_levels == 0 {
        return Err(Error::Format("zero levels".into()));
    }
    let vocab = read_vocab(&mut r, v)?;
    let mut tables = Vec::with_capacity(d);
    for _ in 0..d {
        let mut levels = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            levels.push(f64::from(read_f32(&mut r, "level table")?));
        }
        // padding repeats the top level
        levels.dedup();
        tables.push(LevelTable::new(levels)?);
    }
    let width = bits_for(n_levels);
    let row_bytes = (d * width as usize).div_ceil(8);
    let mut indices = Array2::zeros((v, d));
    for i in 0..v {
        let bytes = read_bytes(&mut r, row_bytes, "index stream")?;
        let mut br = BitReader::new(&bytes);
        for j in 0..d {
            indices[[i, j]] = br.read(width)? as u16;
        }
    }
    QuantizedEmbedding::new(vocab, n_levels, tables, indices)
}

pub fn save_quantized(q: &QuantizedEmbedding, path: impl AsRef<Path>) -> Result<()> {
    write_quantized(q, BufWriter::new(File::create(path)?))
}

pub fn load_quantized(path: impl AsRef<Path>) -> Result<QuantizedEmbedding> {
    read_quantized(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit(values: &[f64], n: usize) -> LloydFit {
        fit_dimension(values, &LloydConfig::with_levels(n)).unwrap()
    }

    #[test]
    fn exact_clusters() {
        let f = fit(&[1.0, 1.0, 5.0, 5.0], 2);
        assert_eq!(f.table.levels(), [1.0, 5.0]);
        assert_eq!(f.objective(), 0.0);
    }

    #[test]
    fn as_many_levels_as_values() {
        let f = fit(&[3.0, 1.0, 0.0, 2.0], 4);
        assert_eq!(f.table.levels(), [0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn too_many_levels_clamps_to_distinct() {
        let f = fit(&[2.0, 2.0, 7.0], 8);
        assert_eq!(f.table.levels(), [2.0, 7.0]);
    }

    #[test]
    fn input_errors() {
        let cfg = LloydConfig::default();
        assert!(matches!(fit_dimension(&[], &cfg), Err(Error::EmptyInput)));
        assert!(matches!(
            fit_dimension(&[1.0, f64::NAN], &cfg),
            Err(Error::NonFinite(_))
        ));
        assert!(fit_dimension(&[1.0], &LloydConfig::with_levels(0)).is_err());
    }

    #[test]
    fn ties_take_lower_level() {
        let t = LevelTable::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(t.nearest(1.0), 0);
        assert_eq!(t.nearest(1.0000001), 1);
        assert_eq!(t.nearest(-5.0), 0);
        assert_eq!(t.nearest(9.0), 1);
    }

    #[test]
    fn level_table_invariants() {
        assert!(LevelTable::new(vec![]).is_err());
        assert!(LevelTable::new(vec![1.0, 1.0]).is_err());
        assert!(LevelTable::new(vec![2.0, 1.0]).is_err());
        assert!(LevelTable::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn duplicate_heavy_data_keeps_requested_levels() {
        // quantile init lands on the repeated value three times
        let mut values = vec![0.0; 60];
        values.extend([1.0, 2.0, 3.0, 10.0]);
        let f = fit(&values, 4);
        assert_eq!(f.table.len(), 4);
        for w in f.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    fn embedding(rows: Vec<Vec<f64>>) -> Embedding {
        Embedding::from_rows(
            rows.into_iter()
                .enumerate()
                .map(|(i, r)| (format!("w{i}"), r))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_column_round_trips() {
        let e = embedding(vec![vec![4.5, 1.0], vec![4.5, 2.0], vec![4.5, 3.0]]);
        let q = quantize(&e, 8).unwrap();
        assert_eq!(q.tables()[0].len(), 1);
        assert_eq!(dequantize(&q), e);
    }

    #[test]
    fn payload_bits_identity() {
        assert_eq!(payload_bits(300, 8), 900);
        assert_eq!(payload_bits(300, 1), 0);
        assert_eq!(payload_bits(50, 5), 150);
    }

    #[test]
    fn zero_indices_give_lowest_levels() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        let tables = vec![
            LevelTable::new(vec![-1.0, 3.0]).unwrap(),
            LevelTable::new(vec![0.5, 0.7]).unwrap(),
        ];
        let q = QuantizedEmbedding::new(vocab, 2, tables, Array2::zeros((2, 2))).unwrap();
        let e = dequantize(&q);
        for row in e.matrix().rows() {
            assert_eq!(row.to_vec(), vec![-1.0, 0.5]);
        }
    }

    #[test]
    fn lqe_round_trip_and_padding() {
        let e = embedding(vec![
            vec![0.0, 1.0, 0.25],
            vec![1.0, 1.0, 0.5],
            vec![2.0, 1.0, 0.75],
            vec![3.0, 1.0, 0.125],
        ]);
        let q = quantize(&e, 3).unwrap();
        let mut buf = Vec::new();
        write_quantized(&q, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"LQE1");
        let back = read_quantized(buf.as_slice()).unwrap();
        assert_eq!(back.indices(), q.indices());
        assert_eq!(back.tables()[1].len(), 1);
        assert_eq!(dequantize(&back).matrix(), dequantize(&q).matrix());
        assert!(read_quantized(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn objective_monotone_and_nearest(values in prop::collection::vec(-100.0f64..100.0, 1..80), n in 1usize..9) {
            let f = fit(&values, n);
            for w in f.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            let init = LevelTable::new(quantile_levels(&sorted_copy(&values), n)).unwrap();
            prop_assert!(objective(&values, &f.table) <= objective(&values, &init) + 1e-9);
            for &v in &values {
                let chosen = (v - f.table.value(f.table.nearest(v))).abs();
                for &l in f.table.levels() {
                    prop_assert!(chosen <= (v - l).abs());
                }
            }
        }

        #[test]
        fn requantizing_is_idempotent(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..40)) {
            let e = embedding(rows);
            let once = dequantize(&quantize(&e, 4).unwrap());
            let twice = dequantize(&quantize(&once, 4).unwrap());
            prop_assert_eq!(once, twice);
        }
    }
}
