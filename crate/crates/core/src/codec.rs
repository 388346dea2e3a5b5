//! Bit-budget records for non-negative sparse codes.
//!
//! A word's non-zeros are listed in declining value order. Storing that order
//! costs nothing extra (the locations are needed anyway), and it lets each
//! value after the first be written as a coarse ratio to its predecessor:
//!
//! * count `m` (8 bits)
//! * `m` locations (`log2 k` bits each), largest value first
//! * the largest value as an IEEE half-precision float (16 bits)
//! * `m - 1` successive ratios, each a 3-bit code on `[0.70, 1.00]`
//!
//! The sparsity that fits a budget of `n` bits per word is
//! `n / (k (log2 k + 3))`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use half::f16;
use ndarray::{Array1, Array2};

use crate::bits::{
    bits_for, expect_magic, read_f32, read_u16, read_u32, read_u8, write_f32, write_u16, write_u32,
    write_u8, BitReader, BitWriter,
};
use crate::embed_io::{read_vocab, write_vocab, Vocabulary};
use crate::error::{Error, Result};
use crate::wta::SparseEncoding;

const SNE_MAGIC: &[u8; 4] = b"SNE1";

pub const COUNT_BITS: u32 = 8;
pub const HEAD_BITS: u32 = 16;
pub const MAX_NONZEROS: usize = 255;
pub const RATIO_BITS: u8 = 3;
pub const RATIO_LO: f64 = 0.70;
pub const RATIO_HI: f64 = 1.00;

/// Sparsity fraction that spends `n_bits` per word on locations and 3-bit
/// ratios over a `k`-dimensional code.
pub fn compute_alpha(n_bits: usize, k: usize) -> f64 {
    n_bits as f64 / (k as f64 * ((k as f64).log2() + f64::from(RATIO_BITS)))
}

/// Budget and ratio quantizer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSpec {
    pub n_bits: usize,
    pub k: usize,
    pub ratio_bits: u8,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

impl BudgetSpec {
    /// Standard 3-bit ratios on `[0.70, 1.00]`. `k` must be a power of two
    /// and the derived α must lie in `(0, 0.5)`.
    pub fn new(n_bits: usize, k: usize) -> Result<Self> {
        let spec = Self {
            n_bits,
            k,
            ratio_bits: RATIO_BITS,
            ratio_lo: RATIO_LO,
            ratio_hi: RATIO_HI,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || !self.k.is_power_of_two() {
            return Err(Error::Config(format!(
                "k = {} is not a power of two",
                self.k
            )));
        }
        if self.ratio_bits == 0 || self.ratio_bits > 8 {
            return Err(Error::Config(format!("ratio_bits = {}", self.ratio_bits)));
        }
        if !(self.ratio_lo > 0.0 && self.ratio_lo < self.ratio_hi) {
            return Err(Error::Config("ratio range".into()));
        }
        let a = self.alpha();
        if !(a > 0.0 && a < 0.5) {
            return Err(Error::Config(format!(
                "budget of {} bits at k = {} gives alpha = {a:.4}, outside (0, 0.5)",
                self.n_bits, self.k
            )));
        }
        Ok(())
    }

    /// Budget-derived sparsity, `n / (k (log2 k + ratio_bits))`.
    pub fn alpha(&self) -> f64 {
        self.n_bits as f64 / (self.k as f64 * ((self.k as f64).log2() + f64::from(self.ratio_bits)))
    }

    pub fn location_bits(&self) -> u32 {
        bits_for(self.k)
    }

    fn ratio_levels(&self) -> u32 {
        1u32 << self.ratio_bits
    }

    /// Distance between adjacent ratio levels.
    pub fn ratio_step(&self) -> f64 {
        (self.ratio_hi - self.ratio_lo) / f64::from(self.ratio_levels() - 1)
    }

    pub fn decode_ratio(&self, code: u8) -> f64 {
        self.ratio_lo + f64::from(code) * self.ratio_step()
    }

    /// Nearest level; ratios below the range clamp to code 0.
    pub fn encode_ratio(&self, ratio: f64) -> u8 {
        let top = self.ratio_levels() - 1;
        let c = ((ratio - self.ratio_lo) / self.ratio_step()).round();
        c.clamp(0.0, f64::from(top)) as u8
    }

    /// Record size in bits for `m` non-zeros, before byte padding.
    pub fn record_bits(&self, m: usize) -> usize {
        let mut bits = COUNT_BITS as usize + m * self.location_bits() as usize;
        if m > 0 {
            bits += HEAD_BITS as usize + (m - 1) * self.ratio_bits as usize;
        }
        bits
    }
}

/// One word's stored form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRecord {
    /// Non-zero positions, largest value first.
    pub locations: Vec<u32>,
    pub head: f16,
    pub ratio_codes: Vec<u8>,
}

impl SparseRecord {
    pub fn empty() -> Self {
        Self {
            locations: Vec::new(),
            head: f16::ZERO,
            ratio_codes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Decoded values in list order.
    pub fn values(&self, spec: &BudgetSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        if self.is_empty() {
            return out;
        }
        let mut v = self.head.to_f64();
        out.push(v);
        for &c in &self.ratio_codes {
            v *= spec.decode_ratio(c);
            out.push(v);
        }
        out
    }
}

fn store_head(v: f64) -> f16 {
    let h = f16::from_f64(v);
    // keep the value positive and finite so the zero pattern survives
    if !h.is_finite() {
        f16::MAX
    } else if h <= f16::ZERO {
        f16::from_bits(1)
    } else {
        h
    }
}

/// Encodes one non-negative code vector. Equal values are listed lower
/// location first; beyond 255 non-zeros the smallest values are dropped.
pub fn encode_word(code: &[f64], spec: &BudgetSpec) -> SparseRecord {
    let mut nz: Vec<(u32, f64)> = code
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(i, &v)| (i as u32, v))
        .collect();
    if nz.is_empty() {
        return SparseRecord::empty();
    }
    nz.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if nz.len() > MAX_NONZEROS {
        log::warn!(
            "dropping {} smallest non-zeros beyond {MAX_NONZEROS}",
            nz.len() - MAX_NONZEROS
        );
        nz.truncate(MAX_NONZEROS);
    }
    let ratio_codes = nz
        .windows(2)
        .map(|w| spec.encode_ratio(w[1].1 / w[0].1))
        .collect();
    SparseRecord {
        locations: nz.iter().map(|p| p.0).collect(),
        head: store_head(nz[0].1),
        ratio_codes,
    }
}

/// Expands a record into a dense `k`-vector.
pub fn decode_word(rec: &SparseRecord, spec: &BudgetSpec) -> Result<Vec<f64>> {
    let k = spec.k;
    if rec.ratio_codes.len() != rec.len().saturating_sub(1) {
        return Err(Error::Format(
            "ratio count does not match location count".into(),
        ));
    }
    let mut out = vec![0.0; k];
    let mut seen = vec![false; k];
    for (&loc, v) in rec.locations.iter().zip(rec.values(spec)) {
        let loc = loc as usize;
        if loc >= k {
            return Err(Error::Format(format!(
                "location {loc} out of range for k = {k}"
            )));
        }
        if std::mem::replace(&mut seen[loc], true) {
            return Err(Error::Format(format!("duplicate location {loc}")));
        }
        out[loc] = v;
    }
    Ok(out)
}

fn write_record(bw: &mut BitWriter, rec: &SparseRecord, spec: &BudgetSpec) {
    bw.push(rec.len() as u32, COUNT_BITS);
    for &loc in &rec.locations {
        bw.push(loc, spec.location_bits());
    }
    if !rec.is_empty() {
        bw.push(u32::from(rec.head.to_bits()), HEAD_BITS);
        for &c in &rec.ratio_codes {
            bw.push(u32::from(c), u32::from(spec.ratio_bits));
        }
    }
    bw.align();
}

fn read_record(br: &mut BitReader<'_>, spec: &BudgetSpec) -> Result<SparseRecord> {
    let m = br.read(COUNT_BITS)? as usize;
    let mut locations = Vec::with_capacity(m);
    for _ in 0..m {
        locations.push(br.read(spec.location_bits())?);
    }
    let mut rec = SparseRecord {
        locations,
        ..SparseRecord::empty()
    };
    if m > 0 {
        rec.head = f16::from_bits(br.read(HEAD_BITS)? as u16);
        for _ in 1..m {
            rec.ratio_codes
                .push(br.read(u32::from(spec.ratio_bits))? as u8);
        }
    }
    br.align();
    Ok(rec)
}

/// Contents of an `SNE1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFile {
    pub vocab: Vocabulary,
    pub spec: BudgetSpec,
    /// `k x d`.
    pub dictionary: Array2<f64>,
    pub bias: Array1<f64>,
    pub records: Vec<SparseRecord>,
}

impl SparseFile {
    /// Encodes every word of `enc`. Warns when the mean location-plus-ratio
    /// cost exceeds the budget.
    pub fn from_encoding(enc: &SparseEncoding, spec: BudgetSpec) -> Result<Self> {
        spec.validate()?;
        if enc.k() != spec.k {
            return Err(Error::Shape(format!(
                "encoding has k = {}, budget k = {}",
                enc.k(),
                spec.k
            )));
        }
        let records: Vec<SparseRecord> = enc
            .codes()
            .rows()
            .into_iter()
            .map(|row| encode_word(&row.to_vec(), &spec))
            .collect();
        let f = Self {
            vocab: enc.vocab().clone(),
            spec,
            dictionary: enc.dictionary().clone(),
            bias: enc.bias().clone(),
            records,
        };
        let used = f.mean_budget_bits();
        if used > spec.n_bits as f64 {
            log::warn!(
                "mean location+ratio cost {used:.1} bits exceeds the {} bit budget",
                spec.n_bits
            );
        }
        Ok(f)
    }

    /// Mean bits per word charged against the budget (locations and ratios).
    pub fn mean_budget_bits(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let lb = self.spec.location_bits() as usize;
        let rb = self.spec.ratio_bits as usize;
        let total: usize = self
            .records
            .iter()
            .map(|r| r.len() * lb + r.len().saturating_sub(1) * rb)
            .sum();
        total as f64 / self.records.len() as f64
    }

    /// Mean stored bits per word including count, head and padding.
    pub fn mean_stored_bits(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let total: usize = self
            .records
            .iter()
            .map(|r| self.spec.record_bits(r.len()).div_ceil(8) * 8)
            .sum();
        total as f64 / self.records.len() as f64
    }

    pub fn decode_codes(&self) -> Result<Array2<f64>> {
        let mut codes = Array2::zeros((self.records.len(), self.spec.k));
        for (mut row, rec) in codes.rows_mut().into_iter().zip(&self.records) {
            let dense = decode_word(rec, &self.spec)?;
            row.iter_mut().zip(dense).for_each(|(d, s)| *d = s);
        }
        Ok(codes)
    }

    /// Decoded codes with the stored dictionary.
    pub fn to_encoding(&self) -> Result<SparseEncoding> {
        SparseEncoding::new(
            self.vocab.clone(),
            self.decode_codes()?,
            self.dictionary.clone(),
            self.bias.clone(),
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = &self.spec;
        if self.dictionary.dim() != (spec.k, self.bias.len()) {
            return Err(Error::Shape("dictionary does not match k and bias".into()));
        }
        if self.records.len() != self.vocab.len() {
            return Err(Error::Shape("one record per word required".into()));
        }
        w.write_all(SNE_MAGIC)?;
        write_u32(&mut w, self.vocab.len() as u32)?;
        write_u32(&mut w, spec.k as u32)?;
        write_u32(&mut w, self.bias.len() as u32)?;
        let n_bits = u16::try_from(spec.n_bits).map_err(|_| {
            Error::Config(format!("budget {} does not fit in 16 bits", spec.n_bits))
        })?;
        write_u16(&mut w, n_bits)?;
        write_u8(&mut w, spec.ratio_bits)?;
        write_vocab(&mut w, &self.vocab)?;
        for &v in self.dictionary.iter() {
            write_f32(&mut w, v as f32)?;
        }
        for &v in self.bias.iter() {
            write_f32(&mut w, v as f32)?;
        }
        let mut bw = BitWriter::new();
        for rec in &self.records {
            write_record(&mut bw, rec, spec);
        }
        w.write_all(&bw.into_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, SNE_MAGIC)?;
        let v = read_u32(&mut r, "vocabulary size")? as usize;
        let k = read_u32(&mut r, "code dimension")? as usize;
        let d = read_u32(&mut r, "dense dimension")? as usize;
        let n_bits = usize::from(read_u16(&mut r, "budget")?);
        let ratio_bits = read_u8(&mut r, "ratio bits")?;
        let spec = BudgetSpec {
            n_bits,
            k,
            ratio_bits,
            ratio_lo: RATIO_LO,
            ratio_hi: RATIO_HI,
        };
        if !k.is_power_of_two() || ratio_bits == 0 || ratio_bits > 8 {
            return Err(Error::Format(format!(
                "unsupported header k = {k}, ratio_bits = {ratio_bits}"
            )));
        }
        let vocab = read_vocab(&mut r, v)?;
        let mut dict = Vec::with_capacity(k * d);
        for _ in 0..k * d {
            dict.push(f64::from(read_f32(&mut r, "dictionary")?));
        }
        let dictionary =
            Array2::from_shape_vec((k, d), dict).map_err(|e| Error::Shape(e.to_string()))?;
        let mut bias = Array1::zeros(d);
        for b in bias.iter_mut() {
            *b = f64::from(read_f32(&mut r, "bias")?);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        let mut br = BitReader::new(&rest);
        let mut records = Vec::with_capacity(v);
        for _ in 0..v {
            let rec = read_record(&mut br, &spec)?;
            decode_word(&rec, &spec)?;
            records.push(rec);
        }
        if br.byte_pos() != rest.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                rest.len() - br.byte_pos()
            )));
        }
        Ok(Self {
            vocab,
            spec,
            dictionary,
            bias,
            records,
        })
    }

    /// Header bytes before the dictionary.
    pub fn header_bytes(&self) -> usize {
        4 + 4
            + 4
            + 4
            + 2
            + 1
            + self
                .vocab
                .words()
                .iter()
                .map(|w| 4 + w.len())
                .sum::<usize>()
    }
}

pub fn write_file(enc: &SparseEncoding, spec: BudgetSpec, path: impl AsRef<Path>) -> Result<()> {
    SparseFile::from_encoding(enc, spec)?.write(BufWriter::new(File::create(path)?))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<SparseFile> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    SparseFile::read(bytes.as_slice())
}

/// Whether `head` starts with the `SNE1` magic.
pub fn is_sparse_file(head: &[u8]) -> bool {
    head.starts_with(SNE_MAGIC)
}

/// Bytes taken by the byte-aligned record stream.
pub fn record_stream_len(records: &[SparseRecord], spec: &BudgetSpec) -> usize {
    records
        .iter()
        .map(|r| spec.record_bits(r.len()).div_ceil(8))
        .sum()
}
