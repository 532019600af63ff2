//! Serialization of all pipeline artifacts, bit-exact on round trip.
//!
//! Binary formats are little-endian with a four-byte ASCII magic each:
//! `DFMP` dense feature maps, `WHIT` whitening transforms, `CBOK` codebooks,
//! `DSET` descriptor sets, `ASMK` inverted indexes (gamma table, then per
//! nonempty word a varint-delta id list and packed signatures).
//! Ground-truth and ranking exchange formats are line-oriented text.
//!
//! Files are written to a temporary file in the target directory and
//! renamed into place, so readers never observe partial files.

pub mod synth;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::eval::{ClassGroundTruth, QueryRelevance, RetrievalGroundTruth};
use crate::features::{DenseFeatureMap, LocalDescriptorSet, WhiteningTransform};
use crate::index::{decode_varint, encode_varint, InvertedIndex, PostingList};
use crate::kernel::{BinarySignature, KernelParams};

const MAGIC_FEATURE_MAP: [u8; 4] = *b"DFMP";
const MAGIC_WHITENING: [u8; 4] = *b"WHIT";
const MAGIC_CODEBOOK: [u8; 4] = *b"CBOK";
const MAGIC_DESCRIPTOR_SET: [u8; 4] = *b"DSET";
const MAGIC_INDEX: [u8; 4] = *b"ASMK";

pub const MAX_DESCRIPTOR_COUNT: usize = 1 << 24;

/// The storage form of a selected descriptor set: strengths and vectors
/// only (grid geometry is not retained, nothing downstream consumes it).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub image_id: String,
    pub dim: usize,
    pub strengths: Vec<f32>,
    pub vectors: Vec<f32>,
}

impl DescriptorSet {
    pub fn new(image_id: String, dim: usize, strengths: Vec<f32>, vectors: Vec<f32>) -> Result<Self> {
        if strengths.len() > MAX_DESCRIPTOR_COUNT {
            return Err(Error::InvalidParameter(format!(
                "descriptor count {} exceeds {MAX_DESCRIPTOR_COUNT}",
                strengths.len()
            )));
        }
        if vectors.len() != strengths.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: strengths.len() * dim,
                got: vectors.len(),
            });
        }
        Ok(Self {
            image_id,
            dim,
            strengths,
            vectors,
        })
    }

    pub fn from_local(set: &LocalDescriptorSet) -> Self {
        let dim = set.descriptors.first().map_or(0, |d| d.vector.len());
        Self {
            image_id: set.image_id.clone(),
            dim,
            strengths: set.descriptors.iter().map(|d| d.strength).collect(),
            vectors: set
                .descriptors
                .iter()
                .flat_map(|d| d.vector.iter().copied())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Writes through a temp file in the same directory, then renames.
fn atomic_write(path: &Path, write: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut writer = BufWriter::new(tmp.as_file_mut());
        write(&mut writer)?;
        writer.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn check_magic<R: Read>(reader: &mut R, expected: [u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    reader
        .read_exact(&mut got)
        .map_err(|_| Error::Truncated("magic"))?;
    if got != expected {
        return Err(Error::BadMagic { expected, got });
    }
    Ok(())
}

fn check_version<R: Read>(reader: &mut R, expected: u32) -> Result<()> {
    let got = read_u32(reader, "version")?;
    if got != expected {
        return Err(Error::BadVersion { expected, got });
    }
    Ok(())
}

fn read_u32<R: Read>(reader: &mut R, what: &'static str) -> Result<u32> {
    reader
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated(what))
}

fn read_u64<R: Read>(reader: &mut R, what: &'static str) -> Result<u64> {
    reader
        .read_u64::<LittleEndian>()
        .map_err(|_| Error::Truncated(what))
}

fn read_f32<R: Read>(reader: &mut R, what: &'static str) -> Result<f32> {
    reader
        .read_f32::<LittleEndian>()
        .map_err(|_| Error::Truncated(what))
}

fn read_f64<R: Read>(reader: &mut R, what: &'static str) -> Result<f64> {
    reader
        .read_f64::<LittleEndian>()
        .map_err(|_| Error::Truncated(what))
}

fn read_f32_vec<R: Read>(reader: &mut R, len: usize, what: &'static str) -> Result<Vec<f32>> {
    let mut out = vec![0.0f32; len];
    reader
        .read_f32_into::<LittleEndian>(&mut out)
        .map_err(|_| Error::Truncated(what))?;
    Ok(out)
}

/// Reads exactly `buf.len()` bytes, or reports a clean end-of-file when no
/// byte was available at all.
fn try_read_exact<R: Read>(reader: &mut R, buf: &mut [u8], what: &'static str) -> Result<bool> {
    let mut filled = 0usize;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return if filled == 0 {
                Ok(false)
            } else {
                Err(Error::Truncated(what))
            };
        }
        filled += n;
    }
    Ok(true)
}

fn read_varint<R: Read>(reader: &mut R) -> Result<u32> {
    let mut value = 0u32;
    let mut shift = 0u32;
    loop {
        let byte = reader.read_u8().map_err(|_| Error::Truncated("varint"))?;
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

pub fn save_feature_map(map: &DenseFeatureMap, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(&MAGIC_FEATURE_MAP)?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u32::<LittleEndian>(map.width() as u32)?;
        w.write_u32::<LittleEndian>(map.height() as u32)?;
        w.write_u32::<LittleEndian>(map.depth() as u32)?;
        w.write_f32::<LittleEndian>(map.scale_factor())?;
        for &v in map.data() {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    })
}

pub fn load_feature_map(path: &Path, allow_negative: bool) -> Result<DenseFeatureMap> {
    let mut r = open_reader(path)?;
    check_magic(&mut r, MAGIC_FEATURE_MAP)?;
    check_version(&mut r, 1)?;
    let width = read_u32(&mut r, "width")? as usize;
    let height = read_u32(&mut r, "height")? as usize;
    let depth = read_u32(&mut r, "depth")? as usize;
    let scale = read_f32(&mut r, "scale factor")?;
    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(depth))
        .ok_or_else(|| Error::FormatViolation("feature map dimensions overflow".into()))?;
    let data = read_f32_vec(&mut r, count, "activations")?;
    DenseFeatureMap::with_options(width, height, depth, scale, data, allow_negative)
}

pub fn save_whitening(t: &WhiteningTransform, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(&MAGIC_WHITENING)?;
        w.write_u32::<LittleEndian>(t.input_dim() as u32)?;
        w.write_u32::<LittleEndian>(t.output_dim() as u32)?;
        for &v in t.mean() {
            w.write_f32::<LittleEndian>(v)?;
        }
        for &v in t.projection() {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    })
}

pub fn load_whitening(path: &Path) -> Result<WhiteningTransform> {
    let mut r = open_reader(path)?;
    check_magic(&mut r, MAGIC_WHITENING)?;
    let input_dim = read_u32(&mut r, "input dim")? as usize;
    let output_dim = read_u32(&mut r, "output dim")? as usize;
    if input_dim == 0 {
        return Err(Error::FormatViolation("whitening input dim is zero".into()));
    }
    let mean = read_f32_vec(&mut r, input_dim, "mean")?;
    let projection = read_f32_vec(&mut r, input_dim * output_dim, "projection")?;
    WhiteningTransform::new(projection, mean, input_dim, output_dim)
}

pub fn save_codebook(cb: &Codebook, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(&MAGIC_CODEBOOK)?;
        w.write_u32::<LittleEndian>(cb.kappa() as u32)?;
        w.write_u32::<LittleEndian>(cb.dim() as u32)?;
        w.write_u64::<LittleEndian>(cb.seed())?;
        for &v in cb.centroids() {
            w.write_f32::<LittleEndian>(v)?;
        }
        Ok(())
    })
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let mut r = open_reader(path)?;
    check_magic(&mut r, MAGIC_CODEBOOK)?;
    let kappa = read_u32(&mut r, "kappa")? as usize;
    let dim = read_u32(&mut r, "dim")? as usize;
    let seed = read_u64(&mut r, "seed")?;
    let count = kappa
        .checked_mul(dim)
        .ok_or_else(|| Error::FormatViolation("codebook dimensions overflow".into()))?;
    let centroids = read_f32_vec(&mut r, count, "centroids")?;
    Codebook::from_centroids(centroids, kappa, dim, seed)
}

pub fn save_descriptor_set(set: &DescriptorSet, path: &Path) -> Result<()> {
    if set.len() > MAX_DESCRIPTOR_COUNT {
        return Err(Error::InvalidParameter(format!(
            "descriptor count {} exceeds {MAX_DESCRIPTOR_COUNT}",
            set.len()
        )));
    }
    atomic_write(path, |w| {
        w.write_all(&MAGIC_DESCRIPTOR_SET)?;
        w.write_u32::<LittleEndian>(1)?;
        let name = set.image_id.as_bytes();
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_u32::<LittleEndian>(set.len() as u32)?;
        w.write_u32::<LittleEndian>(set.dim as u32)?;
        for i in 0..set.len() {
            w.write_f32::<LittleEndian>(set.strengths[i])?;
            for &v in set.vector(i) {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    })
}

pub fn load_descriptor_set(path: &Path) -> Result<DescriptorSet> {
    let mut r = open_reader(path)?;
    check_magic(&mut r, MAGIC_DESCRIPTOR_SET)?;
    check_version(&mut r, 1)?;
    let name_len = read_u32(&mut r, "image id length")? as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)
        .map_err(|_| Error::Truncated("image id"))?;
    let image_id = String::from_utf8(name)
        .map_err(|_| Error::FormatViolation("image id is not valid UTF-8".into()))?;
    let count = read_u32(&mut r, "descriptor count")? as usize;
    if count > MAX_DESCRIPTOR_COUNT {
        return Err(Error::FormatViolation(format!(
            "descriptor count {count} exceeds {MAX_DESCRIPTOR_COUNT}"
        )));
    }
    let dim = read_u32(&mut r, "descriptor dim")? as usize;
    let mut strengths = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count * dim);
    for _ in 0..count {
        strengths.push(read_f32(&mut r, "strength")?);
        vectors.extend(read_f32_vec(&mut r, dim, "descriptor values")?);
    }
    DescriptorSet::new(image_id, dim, strengths, vectors)
}

pub fn save_index(index: &InvertedIndex, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        w.write_all(&MAGIC_INDEX)?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u32::<LittleEndian>(index.kappa() as u32)?;
        w.write_u32::<LittleEndian>(index.params().d as u32)?;
        w.write_f32::<LittleEndian>(index.params().alpha)?;
        w.write_f32::<LittleEndian>(index.params().tau)?;
        w.write_u64::<LittleEndian>(index.image_count() as u64)?;
        for &(id, gamma) in index.gammas() {
            w.write_u32::<LittleEndian>(id)?;
            w.write_f64::<LittleEndian>(gamma)?;
        }
        let mut varint_buf = Vec::new();
        for pl in index.postings().values() {
            w.write_u32::<LittleEndian>(pl.word_id)?;
            w.write_u32::<LittleEndian>(pl.len() as u32)?;
            varint_buf.clear();
            for &delta in &pl.image_id_deltas {
                encode_varint(delta, &mut varint_buf);
            }
            w.write_all(&varint_buf)?;
            for sig in &pl.signatures {
                w.write_all(sig.bytes())?;
            }
        }
        Ok(())
    })
}

pub fn load_index(path: &Path) -> Result<InvertedIndex> {
    let mut r = open_reader(path)?;
    check_magic(&mut r, MAGIC_INDEX)?;
    check_version(&mut r, 1)?;
    let kappa = read_u32(&mut r, "kappa")? as usize;
    let d = read_u32(&mut r, "signature dim")? as usize;
    let alpha = read_f32(&mut r, "alpha")?;
    let tau = read_f32(&mut r, "tau")?;
    let params = KernelParams::new(alpha, tau, d)?;
    let image_count = read_u64(&mut r, "image count")? as usize;
    let mut gammas = Vec::with_capacity(image_count);
    for _ in 0..image_count {
        let id = read_u32(&mut r, "gamma image id")?;
        let gamma = read_f64(&mut r, "gamma")?;
        gammas.push((id, gamma));
    }
    let sig_bytes = BinarySignature::byte_len(d as u32);
    let mut postings = BTreeMap::new();
    let mut word_buf = [0u8; 4];
    while try_read_exact(&mut r, &mut word_buf, "posting word id")? {
        let word_id = u32::from_le_bytes(word_buf);
        let len = read_u32(&mut r, "posting length")? as usize;
        if len == 0 {
            return Err(Error::FormatViolation(format!(
                "posting list for word {word_id} is empty"
            )));
        }
        let mut deltas = Vec::with_capacity(len);
        for _ in 0..len {
            deltas.push(read_varint(&mut r)?);
        }
        let mut signatures = Vec::with_capacity(len);
        for _ in 0..len {
            let mut bytes = vec![0u8; sig_bytes];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Truncated("signature"))?;
            signatures.push(BinarySignature::from_bytes(bytes, d as u32)?);
        }
        let previous = postings.insert(
            word_id,
            PostingList {
                word_id,
                image_id_deltas: deltas,
                signatures,
            },
        );
        if previous.is_some() {
            return Err(Error::FormatViolation(format!(
                "word {word_id} appears twice in index file"
            )));
        }
    }
    InvertedIndex::from_parts(params, kappa, postings, gammas)
}

fn check_plain_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', ',', ':']) {
        return Err(Error::FormatViolation(format!(
            "id `{id}` is empty or contains a reserved character"
        )));
    }
    Ok(())
}

/// One line per query: `query<TAB>positives:a,b<TAB>ignores:c`.
pub fn save_retrieval_ground_truth(gt: &RetrievalGroundTruth, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        for (query, rel) in &gt.queries {
            check_plain_id(query)?;
            for id in rel.positives.iter().chain(&rel.ignores) {
                check_plain_id(id)?;
            }
            let positives: Vec<&str> = rel.positives.iter().map(|s| s.as_str()).collect();
            let ignores: Vec<&str> = rel.ignores.iter().map(|s| s.as_str()).collect();
            writeln!(
                w,
                "{query}\tpositives:{}\tignores:{}",
                positives.join(","),
                ignores.join(",")
            )?;
        }
        Ok(())
    })
}

fn parse_id_list(field: &str, prefix: &str, line: usize) -> Result<std::collections::BTreeSet<String>> {
    let rest = field.strip_prefix(prefix).ok_or_else(|| Error::TextFormat {
        line,
        msg: format!("expected field starting with `{prefix}`, got `{field}`"),
    })?;
    Ok(rest
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect())
}

pub fn load_retrieval_ground_truth(path: &Path) -> Result<RetrievalGroundTruth> {
    let reader = open_reader(path)?;
    let mut gt = RetrievalGroundTruth::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let query = fields.next().unwrap_or_default().to_string();
        let positives = parse_id_list(fields.next().unwrap_or_default(), "positives:", i + 1)?;
        let ignores = parse_id_list(fields.next().unwrap_or_default(), "ignores:", i + 1)?;
        if query.is_empty() {
            return Err(Error::TextFormat {
                line: i + 1,
                msg: "empty query id".into(),
            });
        }
        let relevance = QueryRelevance::new(positives, ignores).map_err(|e| Error::TextFormat {
            line: i + 1,
            msg: e.to_string(),
        })?;
        gt.queries.insert(query, relevance);
    }
    Ok(gt)
}

/// One line per image: `image<TAB>class`.
pub fn save_class_labels(labels: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        for (id, class) in labels {
            check_plain_id(id)?;
            check_plain_id(class)?;
            writeln!(w, "{id}\t{class}")?;
        }
        Ok(())
    })
}

pub fn load_class_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = open_reader(path)?;
    let mut labels = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, class) = line.split_once('\t').ok_or_else(|| Error::TextFormat {
            line: i + 1,
            msg: "expected `image<TAB>class`".into(),
        })?;
        labels.insert(id.to_string(), class.to_string());
    }
    Ok(labels)
}

/// One line per query: `query<TAB>class` or `query<TAB>NONE`.
pub fn save_query_classes(
    classes: &BTreeMap<String, Option<String>>,
    path: &Path,
) -> Result<()> {
    atomic_write(path, |w| {
        for (id, class) in classes {
            check_plain_id(id)?;
            match class {
                Some(c) => {
                    check_plain_id(c)?;
                    writeln!(w, "{id}\t{c}")?;
                }
                None => writeln!(w, "{id}\tNONE")?,
            }
        }
        Ok(())
    })
}

pub fn load_query_classes(path: &Path) -> Result<BTreeMap<String, Option<String>>> {
    let reader = open_reader(path)?;
    let mut classes = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, class) = line.split_once('\t').ok_or_else(|| Error::TextFormat {
            line: i + 1,
            msg: "expected `query<TAB>class|NONE`".into(),
        })?;
        let class = if class == "NONE" {
            None
        } else {
            Some(class.to_string())
        };
        classes.insert(id.to_string(), class);
    }
    Ok(classes)
}

/// Rankings exchange format: `query<TAB>image<TAB>score<TAB>rank`, rank
/// 1-based within each query.
pub fn save_rankings(rankings: &[(String, Vec<(String, f64)>)], path: &Path) -> Result<()> {
    atomic_write(path, |w| {
        for (query, items) in rankings {
            for (rank, (image, score)) in items.iter().enumerate() {
                writeln!(w, "{query}\t{image}\t{score}\t{}", rank + 1)?;
            }
        }
        Ok(())
    })
}

/// Loads rankings grouped by query (first-appearance order), each sorted by
/// its rank column.
pub fn load_rankings(path: &Path) -> Result<Vec<(String, Vec<(String, f64)>)>> {
    let reader = open_reader(path)?;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(u64, String, f64)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::TextFormat {
                line: i + 1,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let score: f64 = fields[2].parse().map_err(|_| Error::TextFormat {
            line: i + 1,
            msg: format!("bad score `{}`", fields[2]),
        })?;
        let rank: u64 = fields[3].parse().map_err(|_| Error::TextFormat {
            line: i + 1,
            msg: format!("bad rank `{}`", fields[3]),
        })?;
        if !grouped.contains_key(fields[0]) {
            order.push(fields[0].to_string());
        }
        grouped
            .entry(fields[0].to_string())
            .or_default()
            .push((rank, fields[1].to_string(), score));
    }
    Ok(order
        .into_iter()
        .map(|query| {
            let mut items = grouped.remove(&query).unwrap();
            items.sort_by(|a, b| a.0.cmp(&b.0));
            let items = items.into_iter().map(|(_, id, s)| (id, s)).collect();
            (query, items)
        })
        .collect())
}
