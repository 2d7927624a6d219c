//! Seeded parametric opportunity generator.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layout::{FeatureLayout, FieldDescriptor, FieldKind};
use super::value_model::{ValueModel, ValueModelConfig};
use super::volume::{build_volume_curve, VolumeCurve};
use super::SourceError;
use crate::domain::{AdOpportunity, AdvertiserProfile, EpisodeConfig, FEATURE_DIM};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeShape {
    Daily,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Log-normal parameters of the long-tailed count fields.
    pub count_mu: f64,
    pub count_sigma: f64,
    /// Log-normal parameters of the monetary amount fields.
    pub amount_mu: f64,
    pub amount_sigma: f64,
    /// Synthesize the 176-wide feature vectors. Auction-only runs can skip it.
    pub with_features: bool,
    pub volume: VolumeShape,
    pub values: ValueModelConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            count_mu: 0.5,
            count_sigma: 1.2,
            amount_mu: 4.0,
            amount_sigma: 1.2,
            with_features: true,
            volume: VolumeShape::Daily,
            values: ValueModelConfig::default(),
        }
    }
}

enum FieldSampler {
    Categorical(Vec<f64>),
    BirthYear,
    Constant(f64),
    Count(LogNormal<f64>),
    Amount(LogNormal<f64>),
}

/// Sampling rules for every field of the feature layout.
pub struct FeatureModel {
    fields: Vec<(FieldDescriptor, FieldSampler)>,
}

impl FeatureModel {
    pub fn seeded(seed: u64, layout: &FeatureLayout, config: &GeneratorConfig) -> Self {
        let mut rng = stream_rng(seed, Stream::FeatureModel, 0);
        let count = LogNormal::new(config.count_mu, config.count_sigma).expect("valid count parameters");
        let amount = LogNormal::new(config.amount_mu, config.amount_sigma).expect("valid amount parameters");
        let fields = layout
            .fields()
            .iter()
            .map(|f| {
                let sampler = match (f.kind, f.name) {
                    (FieldKind::OneHot, name) if name.starts_with("zipCode") => {
                        FieldSampler::Categorical(cumulative(&vec![1.0; f.span.len]))
                    }
                    (FieldKind::OneHot, _) => {
                        let w: Vec<f64> = (0..f.span.len).map(|_| rng.random_range(0.05f64..1.0).powi(2)).collect();
                        FieldSampler::Categorical(cumulative(&w))
                    }
                    (_, "idBirthyear") => FieldSampler::BirthYear,
                    (_, "nationId") => FieldSampler::Constant(1.0),
                    (FieldKind::IntegerCount, _) => FieldSampler::Count(count),
                    (FieldKind::RealAmount, _) => FieldSampler::Amount(amount),
                };
                (*f, sampler)
            })
            .collect();
        Self { fields }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; FEATURE_DIM];
        for (field, sampler) in &self.fields {
            match sampler {
                FieldSampler::Categorical(cum) => {
                    let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
                    let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                    out[field.span.start + k * field.span.stride] = 1.0;
                }
                FieldSampler::BirthYear => out[field.span.start] = rng.random_range(1955..=2008) as f64,
                FieldSampler::Constant(c) => out[field.span.start] = *c,
                FieldSampler::Count(d) => {
                    for i in field.span.indices() {
                        out[i] = d.sample(rng).round();
                    }
                }
                FieldSampler::Amount(d) => {
                    for i in field.span.indices() {
                        out[i] = (d.sample(rng) * 100.0).round() / 100.0;
                    }
                }
            }
        }
        out
    }
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    w.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Everything needed to produce any step of any period deterministically.
pub struct Generator {
    seed: u64,
    num_steps: usize,
    categories: Vec<usize>,
    value_model: ValueModel,
    features: Option<FeatureModel>,
}

impl Generator {
    pub fn new(seed: u64, num_steps: usize, profiles: &[AdvertiserProfile], config: &GeneratorConfig) -> Self {
        let features = config
            .with_features
            .then(|| FeatureModel::seeded(seed, &FeatureLayout::standard(), config));
        Self {
            seed,
            num_steps,
            categories: profiles.iter().map(|p| p.category_index).collect(),
            value_model: ValueModel::seeded(seed, num_steps, &config.values),
            features,
        }
    }

    pub fn value_model(&self) -> &ValueModel {
        &self.value_model
    }

    fn stream_index(&self, period: u32, step: usize) -> u64 {
        ((period as u64) << 32) | step as u64
    }

    /// The opportunities of one step. Pure in `(seed, period, step, count,
    /// first_pv)`; steps can be produced in any order or in parallel.
    pub fn generate_step(&self, period: u32, step: usize, count: usize, first_pv: u64) -> Vec<AdOpportunity> {
        assert!(step < self.num_steps, "step {step} outside [0, {})", self.num_steps);
        let index = self.stream_index(period, step);
        let mut value_rng = stream_rng(self.seed, Stream::StepValues, index);
        let mut feature_rng = stream_rng(self.seed, Stream::StepFeatures, index);
        (0..count)
            .map(|k| {
                let user_z: f64 = value_rng.sample(StandardNormal);
                let values: Vec<f64> = self
                    .categories
                    .iter()
                    .map(|&c| {
                        let own_z: f64 = value_rng.sample(StandardNormal);
                        self.value_model.value(c, step, user_z, own_z)
                    })
                    .collect();
                let value_sigmas = values.iter().map(|&v| self.value_model.sigma(v)).collect();
                AdOpportunity {
                    pv_index: first_pv + k as u64,
                    step_index: step,
                    features: self.features.as_ref().map(|m| m.sample(&mut feature_rng)),
                    values,
                    value_sigmas,
                }
            })
            .collect()
    }
}

/// Iterator over the steps of one delivery period.
pub struct ParametricSource {
    generator: Generator,
    volume: VolumeCurve,
    period: u32,
    next_step: usize,
    next_pv: u64,
}

impl ParametricSource {
    pub fn new(config: &EpisodeConfig, generator_config: &GeneratorConfig, profiles: &[AdvertiserProfile], period: u32) -> Self {
        let volume = match generator_config.volume {
            VolumeShape::Daily => build_volume_curve(
                config.opportunities_per_episode,
                config.num_steps,
                derive_seed(config.seed, Stream::Episode, period as u64),
            ),
            VolumeShape::Uniform => VolumeCurve::uniform(config.opportunities_per_episode, config.num_steps),
        };
        Self {
            generator: Generator::new(config.seed, config.num_steps, profiles, generator_config),
            volume,
            period,
            next_step: 0,
            next_pv: 0,
        }
    }

    pub fn volume(&self) -> &VolumeCurve {
        &self.volume
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }
}

impl Iterator for ParametricSource {
    type Item = Result<Vec<AdOpportunity>, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let step = self.next_step;
        let count = *self.volume.counts.get(step)? as usize;
        let batch = self.generator.generate_step(self.period, step, count, self.next_pv);
        self.next_step += 1;
        self.next_pv += count as u64;
        Some(Ok(batch))
    }
}
