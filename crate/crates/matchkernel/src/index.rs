//! Delta-coded inverted file over aggregated image records.
//!
//! Posting lists map a visual word to the images occupying it (ids stored as
//! gaps, first entry raw) together with one binary signature per image.
//! A query is scored by walking the posting lists of its words and
//! accumulating selectivity values into a dense per-image array; the result
//! equals the pairwise `asmk_score` against every indexed record.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::kernel::{selectivity, AggregatedImageRecord, BinarySignature, KernelParams};

/// LEB128-style unsigned varint: 7 data bits per byte, high bit set while
/// more bytes follow.
pub fn encode_varint(mut value: u32, out: &mut Vec<u8>) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn decode_varint(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let mut value = 0u32;
    let mut shift = 0u32;
    loop {
        let byte = *bytes
            .get(*pos)
            .ok_or(Error::Truncated("varint"))?;
        *pos += 1;
        if shift == 28 && byte > 0x0f {
            return Err(Error::FormatViolation("varint overflows u32".into()));
        }
        value |= u32::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 28 {
            return Err(Error::FormatViolation("varint longer than 5 bytes".into()));
        }
    }
}

pub fn varint_len(value: u32) -> usize {
    match value {
        0..=0x7f => 1,
        0x80..=0x3fff => 2,
        0x4000..=0x1f_ffff => 3,
        0x20_0000..=0xfff_ffff => 4,
        _ => 5,
    }
}

/// One word's postings: image-id gaps (first entry is the raw id) and the
/// parallel aggregated signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    pub word_id: u32,
    pub image_id_deltas: Vec<u32>,
    pub signatures: Vec<BinarySignature>,
}

impl PostingList {
    pub fn len(&self) -> usize {
        self.image_id_deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_id_deltas.is_empty()
    }

    /// Undoes the delta coding.
    pub fn decode_ids(&self) -> Vec<u32> {
        let mut ids = Vec::with_capacity(self.image_id_deltas.len());
        let mut current = 0u32;
        for (i, &delta) in self.image_id_deltas.iter().enumerate() {
            current = if i == 0 { delta } else { current + delta };
            ids.push(current);
        }
        ids
    }
}

fn delta_encode(ids: &[u32]) -> Vec<u32> {
    let mut deltas = Vec::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        deltas.push(if i == 0 { id } else { id - ids[i - 1] });
    }
    deltas
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexStats {
    pub image_count: usize,
    pub mean_words_per_image: f64,
    pub total_signatures: usize,
    /// Packed signature bytes plus varint-encoded delta bytes.
    pub bytes: usize,
}

/// Ranked search output: (image id, score), score descending, ties by
/// ascending image id.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub ranking: Vec<(u32, f64)>,
    /// Number of signature pairs compared while scoring.
    pub hamming_comparisons: u64,
}

/// Immutable inverted file over a set of aggregated records.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: KernelParams,
    kappa: usize,
    postings: BTreeMap<u32, PostingList>,
    /// (image id, gamma), ascending by image id; empty records keep gamma 0.
    gammas: Vec<(u32, f64)>,
    slot_of: HashMap<u32, u32>,
}

impl InvertedIndex {
    pub fn build(
        records: &[AggregatedImageRecord],
        params: KernelParams,
        kappa: usize,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in records {
            if !seen.insert(r.image_id) {
                return Err(Error::DuplicateImageId(r.image_id));
            }
        }
        let mut gammas: Vec<(u32, f64)> = records.iter().map(|r| (r.image_id, r.gamma)).collect();
        gammas.sort_by_key(|&(id, _)| id);

        let mut per_word: BTreeMap<u32, Vec<(u32, BinarySignature)>> = BTreeMap::new();
        for r in records {
            for (word, sig) in &r.entries {
                if *word as usize >= kappa {
                    return Err(Error::WordOutOfRange {
                        word: *word,
                        kappa,
                    });
                }
                if sig.nbits() as usize != params.d {
                    return Err(Error::DimensionMismatch {
                        expected: params.d,
                        got: sig.nbits() as usize,
                    });
                }
                per_word.entry(*word).or_default().push((r.image_id, sig.clone()));
            }
        }

        let postings = per_word
            .into_iter()
            .map(|(word_id, mut entries)| {
                entries.sort_by_key(|&(id, _)| id);
                let ids: Vec<u32> = entries.iter().map(|&(id, _)| id).collect();
                let signatures: Vec<BinarySignature> =
                    entries.into_iter().map(|(_, sig)| sig).collect();
                (
                    word_id,
                    PostingList {
                        word_id,
                        image_id_deltas: delta_encode(&ids),
                        signatures,
                    },
                )
            })
            .collect();

        Self::from_parts(params, kappa, postings, gammas)
    }

    /// Assembles an index from already-encoded parts (used by the loader)
    /// and validates the structural invariants.
    pub fn from_parts(
        params: KernelParams,
        kappa: usize,
        postings: BTreeMap<u32, PostingList>,
        gammas: Vec<(u32, f64)>,
    ) -> Result<Self> {
        for window in gammas.windows(2) {
            if window[0].0 >= window[1].0 {
                return Err(Error::FormatViolation(
                    "gamma table image ids must be strictly ascending".into(),
                ));
            }
        }
        let slot_of: HashMap<u32, u32> = gammas
            .iter()
            .enumerate()
            .map(|(slot, &(id, _))| (id, slot as u32))
            .collect();
        for (word, pl) in &postings {
            if *word != pl.word_id || *word as usize >= kappa {
                return Err(Error::FormatViolation(format!(
                    "posting list word {} out of place",
                    pl.word_id
                )));
            }
            if pl.signatures.len() != pl.image_id_deltas.len() {
                return Err(Error::FormatViolation(
                    "posting ids and signatures must be parallel".into(),
                ));
            }
            let ids = pl.decode_ids();
            for window in ids.windows(2) {
                if window[0] >= window[1] {
                    return Err(Error::FormatViolation(
                        "posting image ids must be strictly ascending".into(),
                    ));
                }
            }
            for id in ids {
                if !slot_of.contains_key(&id) {
                    return Err(Error::FormatViolation(format!(
                        "posting references image {id} with no gamma entry"
                    )));
                }
            }
        }
        Ok(Self {
            params,
            kappa,
            postings,
            gammas,
            slot_of,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn image_count(&self) -> usize {
        self.gammas.len()
    }

    pub fn gammas(&self) -> &[(u32, f64)] {
        &self.gammas
    }

    pub fn postings(&self) -> &BTreeMap<u32, PostingList> {
        &self.postings
    }

    /// Scores a query record against every indexed image. The query record
    /// is built exactly like a database record, except that each query
    /// descriptor may contribute residuals to several assigned words
    /// (multiple assignment) before aggregation.
    pub fn search(&self, query: &AggregatedImageRecord, top_k: usize) -> Result<SearchResult> {
        if query.is_empty() {
            return Ok(SearchResult {
                ranking: Vec::new(),
                hamming_comparisons: 0,
            });
        }
        let mut acc = vec![0.0f64; self.gammas.len()];
        let mut comparisons = 0u64;
        for (word, qsig) in &query.entries {
            if qsig.nbits() as usize != self.params.d {
                return Err(Error::DimensionMismatch {
                    expected: self.params.d,
                    got: qsig.nbits() as usize,
                });
            }
            let Some(pl) = self.postings.get(word) else {
                continue;
            };
            let mut id = 0u32;
            for (i, sig) in pl.signatures.iter().enumerate() {
                id = if i == 0 {
                    pl.image_id_deltas[0]
                } else {
                    id + pl.image_id_deltas[i]
                };
                let slot = self.slot_of[&id] as usize;
                acc[slot] += selectivity(qsig, sig, &self.params)?;
                comparisons += 1;
            }
        }
        let mut ranking: Vec<(u32, f64)> = self
            .gammas
            .iter()
            .zip(&acc)
            .map(|(&(id, gamma), &sum)| (id, query.gamma * gamma * sum))
            .collect();
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if top_k > 0 {
            ranking.truncate(top_k);
        }
        Ok(SearchResult {
            ranking,
            hamming_comparisons: comparisons,
        })
    }

    pub fn stats(&self) -> IndexStats {
        let total_signatures: usize = self.postings.values().map(|pl| pl.len()).sum();
        let sig_bytes = BinarySignature::byte_len(self.params.d as u32);
        let bytes: usize = self
            .postings
            .values()
            .map(|pl| {
                pl.len() * sig_bytes
                    + pl.image_id_deltas.iter().map(|&d| varint_len(d)).sum::<usize>()
            })
            .sum();
        IndexStats {
            image_count: self.gammas.len(),
            mean_words_per_image: if self.gammas.is_empty() {
                0.0
            } else {
                total_signatures as f64 / self.gammas.len() as f64
            },
            total_signatures,
            bytes,
        }
    }
}
