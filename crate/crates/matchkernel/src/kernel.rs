//! Match-kernel math over binary residual signatures.
//!
//! A quantized descriptor is reduced to the elementwise sign of its residual
//! against its visual word, packed to d bits. Descriptors of one image that
//! share a word are aggregated by summing residuals before taking the sign,
//! so repeated (bursty) structures collapse to a single signature per word.
//! Image similarity is the selectivity-weighted sum of signature matches
//! over common words, normalized so that self-similarity is exactly 1.
//!
//! `smk_score` (per-descriptor signatures) and `asmk_score` (per-word
//! aggregated signatures) are reference implementations; the inverted file
//! in [`crate::index`] must reproduce `asmk_score` exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A packed vector in {-1,+1}^d: bit 1 means +1, bit 0 means -1. Bits are
/// stored LSB-first within each byte; padding bits of the last byte are zero
/// on both sides of every comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySignature {
    bits: Vec<u8>,
    nbits: u32,
}

impl BinarySignature {
    pub fn from_bytes(bits: Vec<u8>, nbits: u32) -> Result<Self> {
        if bits.len() != Self::byte_len(nbits) {
            return Err(Error::DimensionMismatch {
                expected: Self::byte_len(nbits),
                got: bits.len(),
            });
        }
        let tail = nbits as usize % 8;
        if tail != 0 {
            let mask = !((1u8 << tail) - 1);
            if bits.last().map_or(false, |&b| b & mask != 0) {
                return Err(Error::FormatViolation(
                    "nonzero padding bits in binary signature".into(),
                ));
            }
        }
        Ok(Self { bits, nbits })
    }

    pub fn byte_len(nbits: u32) -> usize {
        (nbits as usize + 7) / 8
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, i: u32) -> bool {
        (self.bits[(i / 8) as usize] >> (i % 8)) & 1 == 1
    }

    /// The signature as +1/-1 values, for tests and debugging.
    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.nbits).map(|i| if self.bit(i) { 1 } else { -1 }).collect()
    }

    fn from_sign_iter(values: impl ExactSizeIterator<Item = bool>) -> Self {
        let nbits = values.len() as u32;
        let mut bits = vec![0u8; Self::byte_len(nbits)];
        for (i, positive) in values.enumerate() {
            if positive {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        Self { bits, nbits }
    }

    pub fn hamming(&self, other: &BinarySignature) -> Result<u32> {
        if self.nbits != other.nbits {
            return Err(Error::DimensionMismatch {
                expected: self.nbits as usize,
                got: other.nbits as usize,
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| (a ^ b).count_ones())
            .sum())
    }
}

/// Selectivity parameters: the normalized signature inner product is raised
/// to `alpha` when it reaches `tau`, otherwise the pair contributes nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub alpha: f32,
    pub tau: f32,
    pub d: usize,
}

impl KernelParams {
    pub fn new(alpha: f32, tau: f32, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!("tau must be in [0,1], got {tau}")));
        }
        if d == 0 {
            return Err(Error::InvalidParameter("signature dimension must be positive".into()));
        }
        Ok(Self { alpha, tau, d })
    }
}

/// A descriptor together with its visual word and the residual against that
/// word's centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDescriptor {
    pub word: u32,
    pub residual: Vec<f32>,
}

/// One image's index-side representation: per occupied visual word one
/// aggregated signature, plus the normalizer gamma = 1/sqrt(#words).
/// An empty record keeps gamma = 0 and never matches anything.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedImageRecord {
    pub image_id: u32,
    /// (word, signature), word ids strictly ascending.
    pub entries: Vec<(u32, BinarySignature)>,
    pub gamma: f64,
}

impl AggregatedImageRecord {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.entries.len()
    }
}

/// Elementwise sign of the residual; sign(0) = +1.
pub fn binarize(residual: &[f32]) -> BinarySignature {
    BinarySignature::from_sign_iter(residual.iter().map(|&v| v >= 0.0))
}

/// Sign of the elementwise sum of the residuals; sign(0) = +1.
pub fn aggregate_word(residuals: &[&[f32]]) -> Result<BinarySignature> {
    let first = residuals
        .first()
        .ok_or(Error::EmptyInput("aggregate_word needs at least one residual"))?;
    let dim = first.len();
    let mut sum = vec![0.0f64; dim];
    for r in residuals {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        for (s, &v) in sum.iter_mut().zip(r.iter()) {
            *s += v as f64;
        }
    }
    Ok(BinarySignature::from_sign_iter(sum.iter().map(|&v| v >= 0.0)))
}

/// Thresholded, exponentiated normalized inner product of two signatures.
pub fn selectivity(a: &BinarySignature, b: &BinarySignature, p: &KernelParams) -> Result<f64> {
    if a.nbits() as usize != p.d || b.nbits() as usize != p.d {
        return Err(Error::DimensionMismatch {
            expected: p.d,
            got: if a.nbits() as usize != p.d {
                a.nbits() as usize
            } else {
                b.nbits() as usize
            },
        });
    }
    let hamming = a.hamming(b)? as f64;
    let d = p.d as f64;
    let s = (d - 2.0 * hamming) / d;
    if s >= p.tau as f64 {
        Ok(s.powf(p.alpha as f64))
    } else {
        Ok(0.0)
    }
}

fn group_signatures(
    set: &[QuantizedDescriptor],
    p: &KernelParams,
) -> Result<BTreeMap<u32, Vec<BinarySignature>>> {
    let mut groups: BTreeMap<u32, Vec<BinarySignature>> = BTreeMap::new();
    for q in set {
        if q.residual.len() != p.d {
            return Err(Error::DimensionMismatch {
                expected: p.d,
                got: q.residual.len(),
            });
        }
        groups.entry(q.word).or_default().push(binarize(&q.residual));
    }
    Ok(groups)
}

fn cross_sum(
    a: &BTreeMap<u32, Vec<BinarySignature>>,
    b: &BTreeMap<u32, Vec<BinarySignature>>,
    p: &KernelParams,
) -> Result<f64> {
    let mut total = 0.0f64;
    for (word, sigs_a) in a {
        if let Some(sigs_b) = b.get(word) {
            for sa in sigs_a {
                for sb in sigs_b {
                    total += selectivity(sa, sb, p)?;
                }
            }
        }
    }
    Ok(total)
}

/// Per-descriptor match-kernel similarity over common visual words,
/// normalized to unit self-similarity. Empty sets score 0.
pub fn smk_score(
    x: &[QuantizedDescriptor],
    y: &[QuantizedDescriptor],
    p: &KernelParams,
) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Ok(0.0);
    }
    let gx = group_signatures(x, p)?;
    let gy = group_signatures(y, p)?;
    let self_x = cross_sum(&gx, &gx, p)?;
    let self_y = cross_sum(&gy, &gy, p)?;
    let cross = cross_sum(&gx, &gy, p)?;
    Ok(cross / (self_x.sqrt() * self_y.sqrt()))
}

/// Aggregated match-kernel similarity: one signature comparison per common
/// word, scaled by the stored gammas. Empty records score 0.
pub fn asmk_score(
    a: &AggregatedImageRecord,
    b: &AggregatedImageRecord,
    p: &KernelParams,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0f64;
    let mut ia = 0;
    let mut ib = 0;
    while ia < a.entries.len() && ib < b.entries.len() {
        match a.entries[ia].0.cmp(&b.entries[ib].0) {
            std::cmp::Ordering::Less => ia += 1,
            std::cmp::Ordering::Greater => ib += 1,
            std::cmp::Ordering::Equal => {
                total += selectivity(&a.entries[ia].1, &b.entries[ib].1, p)?;
                ia += 1;
                ib += 1;
            }
        }
    }
    Ok(a.gamma * b.gamma * total)
}

/// Groups a quantized descriptor set by visual word, aggregates each group
/// and computes gamma = 1/sqrt(#occupied words). Works for database sets
/// (single assignment) and for query sets expanded by multiple assignment.
pub fn build_record(
    image_id: u32,
    quantized: &[QuantizedDescriptor],
    kappa: usize,
) -> Result<AggregatedImageRecord> {
    let mut groups: BTreeMap<u32, Vec<&[f32]>> = BTreeMap::new();
    for q in quantized {
        if q.word as usize >= kappa {
            return Err(Error::WordOutOfRange {
                word: q.word,
                kappa,
            });
        }
        groups.entry(q.word).or_default().push(&q.residual);
    }
    let entries: Vec<(u32, BinarySignature)> = groups
        .into_iter()
        .map(|(word, residuals)| Ok((word, aggregate_word(&residuals)?)))
        .collect::<Result<_>>()?;
    let gamma = if entries.is_empty() {
        0.0
    } else {
        1.0 / (entries.len() as f64).sqrt()
    };
    Ok(AggregatedImageRecord {
        image_id,
        entries,
        gamma,
    })
}
