//! Synthetic retrieval corpora for tests and benchmarks.
//!
//! Each image depicts one of `n_objects` objects. An object is a fixed set
//! of anchor vectors in the unit cube; an image emits every anchor of its
//! object `burst_factor` times with Gaussian jitter of `noise_sigma`, plus
//! uniform background descriptors to fill the per-image budget. Bursts model
//! repeated structures: with zero jitter the copies are bit-identical, so
//! per-word aggregation collapses them. Ground truth links images that show
//! the same object; each image ignores itself as a query.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{ClassGroundTruth, QueryRelevance, RetrievalGroundTruth};
use crate::store::DescriptorSet;

/// Fraction of the per-image descriptor budget spent on object anchors.
const OBJECT_FRACTION_NUM: usize = 9;
const OBJECT_FRACTION_DEN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_images: usize,
    pub descriptors_per_image: usize,
    pub dim: usize,
    pub n_objects: usize,
    pub burst_factor: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_images == 0
            || self.descriptors_per_image == 0
            || self.dim == 0
            || self.n_objects == 0
            || self.burst_factor == 0
        {
            return Err(Error::InvalidParameter(
                "synthetic spec counts must be positive".into(),
            ));
        }
        if self.burst_factor > self.descriptors_per_image {
            return Err(Error::InvalidParameter(format!(
                "burst factor {} exceeds the per-image budget {}",
                self.burst_factor, self.descriptors_per_image
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Anchors per object: the object share of the budget divided by the
    /// burst factor, at least one.
    pub fn anchors_per_object(&self) -> usize {
        let object_budget = self.descriptors_per_image * OBJECT_FRACTION_NUM / OBJECT_FRACTION_DEN;
        (object_budget / self.burst_factor).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sets: Vec<DescriptorSet>,
    pub retrieval: RetrievalGroundTruth,
    pub classes: ClassGroundTruth,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let anchors_per_object = spec.anchors_per_object();
    let object_descriptors = anchors_per_object * spec.burst_factor;
    let background = spec.descriptors_per_image - object_descriptors.min(spec.descriptors_per_image);

    let anchors: Vec<Vec<f64>> = (0..spec.n_objects * anchors_per_object)
        .map(|_| (0..spec.dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut sets = Vec::with_capacity(spec.n_images);
    let mut image_objects = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let object = rng.random_range(0..spec.n_objects);
        image_objects.push(object);
        let mut vectors = Vec::with_capacity(spec.descriptors_per_image * spec.dim);
        for a in 0..anchors_per_object {
            let anchor = &anchors[object * anchors_per_object + a];
            for _ in 0..spec.burst_factor {
                for &base in anchor {
                    let jitter: f64 = rng.sample(StandardNormal);
                    vectors.push((base + spec.noise_sigma * jitter) as f32);
                }
            }
        }
        for _ in 0..background {
            for _ in 0..spec.dim {
                vectors.push(rng.random::<f64>() as f32);
            }
        }
        let count = vectors.len() / spec.dim;
        sets.push(DescriptorSet::new(
            format!("img{i:06}"),
            spec.dim,
            vec![1.0; count],
            vectors,
        )?);
    }

    let mut by_object: Vec<Vec<usize>> = vec![Vec::new(); spec.n_objects];
    for (i, &object) in image_objects.iter().enumerate() {
        by_object[object].push(i);
    }

    let mut retrieval = RetrievalGroundTruth::default();
    let mut classes = ClassGroundTruth::default();
    for (i, &object) in image_objects.iter().enumerate() {
        let id = sets[i].image_id.clone();
        let positives = by_object[object]
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| sets[j].image_id.clone())
            .collect();
        let ignores = std::iter::once(id.clone()).collect();
        retrieval
            .queries
            .insert(id.clone(), QueryRelevance::new(positives, ignores)?);
        let class = format!("obj{object:04}");
        classes.labels.insert(id.clone(), class.clone());
        classes.query_classes.insert(id, Some(class));
    }

    Ok(SyntheticCorpus {
        sets,
        retrieval,
        classes,
    })
}
