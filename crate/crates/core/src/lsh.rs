//! Sign-of-random-projection hashing, the bit-budget baseline.
//!
//! Each bit records which side of a random hyperplane a vector falls on. The
//! fraction of differing bits between two signatures estimates the angle
//! between the vectors divided by π.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bits::{
    expect_magic, read_bytes, read_u16, read_u32, read_u64, write_u16, write_u32, write_u64,
};
use crate::embed_io::{read_vocab, write_vocab, Embedding, Vocabulary};
use crate::error::{Error, Result};

const LSH_MAGIC: &[u8; 4] = b"LSH1";

/// Default signature length, matching the 900-bit word budget.
pub const DEFAULT_BITS: usize = 900;

/// Standard-normal hyperplanes drawn from a recorded seed.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSet {
    planes: Array2<f64>,
    seed: u64,
}

impl HyperplaneSet {
    pub fn new(n_bits: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = Array2::from_shape_fn((n_bits, d), |_| StandardNormal.sample(&mut rng));
        Self { planes, seed }
    }

    pub fn n_bits(&self) -> usize {
        self.planes.nrows()
    }

    pub fn dim(&self) -> usize {
        self.planes.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bit `i` is set iff `plane_i . v > 0`. The flag reports whether any
    /// projection was exactly zero (always the case for a zero vector).
    pub fn hash_flagged(&self, v: ArrayView1<'_, f64>) -> (BitSignature, bool) {
        assert_eq!(v.len(), self.dim(), "vector dimension");
        let proj = self.planes.dot(&v);
        let mut sig = BitSignature::zeros(self.n_bits());
        let mut flagged = false;
        for (i, &p) in proj.iter().enumerate() {
            if p > 0.0 {
                sig.set(i);
            } else if p == 0.0 {
                flagged = true;
            }
        }
        (sig, flagged)
    }

    pub fn hash(&self, v: ArrayView1<'_, f64>) -> BitSignature {
        let (sig, flagged) = self.hash_flagged(v);
        if flagged {
            log::debug!("zero projection while hashing; bit left at 0");
        }
        sig
    }
}

/// Packed bit vector, MSB-first within 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSignature {
    words: Vec<u64>,
    n_bits: usize,
}

impl BitSignature {
    pub fn zeros(n_bits: usize) -> Self {
        Self {
            words: vec![0; n_bits.div_ceil(64)],
            n_bits,
        }
    }

    pub fn len(&self) -> usize {
        self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        self.n_bits == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (63 - i % 64);
    }

    /// Flips every bit.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        let tail = self.n_bits % 64;
        if tail != 0 {
            let last = out.words.len() - 1;
            out.words[last] &= !0u64 << (64 - tail);
        }
        out
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        if self.n_bits != other.n_bits {
            return Err(Error::Shape(format!(
                "signature lengths {} and {}",
                self.n_bits, other.n_bits
            )));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.n_bits.div_ceil(8));
        out
    }

    fn from_bytes(bytes: &[u8], n_bits: usize) -> Self {
        let mut sig = Self::zeros(n_bits);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            sig.words[i] = u64::from_be_bytes(buf);
        }
        let tail = n_bits % 64;
        if tail != 0 {
            let last = sig.words.len() - 1;
            sig.words[last] &= !0u64 << (64 - tail);
        }
        sig
    }
}

/// `cos(π · hamming / n_bits)`, the cosine estimate between the hashed
/// vectors.
pub fn similarity(a: &BitSignature, b: &BitSignature) -> Result<f64> {
    let h = a.hamming(b)?;
    if a.is_empty() {
        return Err(Error::Degenerate("zero-length signatures".into()));
    }
    Ok((PI * h as f64 / a.len() as f64).cos())
}

/// Signatures for a whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSet {
    pub vocab: Vocabulary,
    pub n_bits: usize,
    pub seed: u64,
    pub signatures: Vec<BitSignature>,
}

impl SignatureSet {
    pub fn from_embedding(e: &Embedding, n_bits: usize, seed: u64) -> Self {
        let planes = HyperplaneSet::new(n_bits, e.dim(), seed);
        let signatures = e
            .matrix()
            .rows()
            .into_iter()
            .map(|r| planes.hash(r))
            .collect();
        Self {
            vocab: e.vocab().clone(),
            n_bits,
            seed,
            signatures,
        }
    }

    /// `LSH1`: magic, `u32` V, `u16` n_bits, `u64` seed, vocabulary block,
    /// then per word `ceil(n_bits / 8)` bytes, MSB-first.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(LSH_MAGIC)?;
        write_u32(&mut w, self.vocab.len() as u32)?;
        let n_bits = u16::try_from(self.n_bits)
            .map_err(|_| Error::Config(format!("{} bits do not fit in 16 bits", self.n_bits)))?;
        write_u16(&mut w, n_bits)?;
        write_u64(&mut w, self.seed)?;
        write_vocab(&mut w, &self.vocab)?;
        for s in &self.signatures {
            w.write_all(&s.to_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, LSH_MAGIC)?;
        let v = read_u32(&mut r, "vocabulary size")? as usize;
        let n_bits = usize::from(read_u16(&mut r, "bit count")?);
        let seed = read_u64(&mut r, "seed")?;
        let vocab = read_vocab(&mut r, v)?;
        let bytes = n_bits.div_ceil(8);
        let mut signatures = Vec::with_capacity(v);
        for _ in 0..v {
            signatures.push(BitSignature::from_bytes(
                &read_bytes(&mut r, bytes, "signature")?,
                n_bits,
            ));
        }
        Ok(Self {
            vocab,
            n_bits,
            seed,
            signatures,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scale_invariance_and_antisymmetry() {
        let planes = HyperplaneSet::new(130, 4, 9);
        let v = array![0.3, -1.2, 2.0, 0.7];
        let a = planes.hash(v.view());
        assert_eq!(a, planes.hash((&v * 2.0).view()));
        let (neg, flagged) = planes.hash_flagged((-&v).view());
        assert!(!flagged);
        assert_eq!(neg, a.complement());
    }

    #[test]
    fn similarity_extremes() {
        let planes = HyperplaneSet::new(900, 5, 1);
        let s = planes.hash(array![1.0, 2.0, 3.0, -1.0, 0.5].view());
        assert_eq!(similarity(&s, &s).unwrap(), 1.0);
        assert!((similarity(&s, &s.complement()).unwrap() + 1.0).abs() < 1e-15);
        assert!(similarity(&s, &BitSignature::zeros(899)).is_err());
    }

    #[test]
    fn zero_vector_is_flagged() {
        let planes = HyperplaneSet::new(64, 3, 2);
        let (sig, flagged) = planes.hash_flagged(array![0.0, 0.0, 0.0].view());
        assert!(flagged);
        assert_eq!(sig, BitSignature::zeros(64));
    }

    #[test]
    fn same_seed_same_signatures() {
        let e = crate::synth::gaussian_embedding(10, 6, 3);
        assert_eq!(
            SignatureSet::from_embedding(&e, 100, 5),
            SignatureSet::from_embedding(&e, 100, 5)
        );
        assert_ne!(
            SignatureSet::from_embedding(&e, 100, 5).signatures,
            SignatureSet::from_embedding(&e, 100, 6).signatures
        );
    }

    #[test]
    fn file_round_trip() {
        let e = crate::synth::gaussian_embedding(7, 5, 3);
        for bits in [900, 64, 13] {
            let set = SignatureSet::from_embedding(&e, bits, 11);
            let mut buf = Vec::new();
            set.write(&mut buf).unwrap();
            assert_eq!(&buf[..4], b"LSH1");
            assert_eq!(SignatureSet::read(buf.as_slice()).unwrap(), set);
        }
    }
}
