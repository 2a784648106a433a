use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::appearance::ObjectSimilarityParams;
use crate::captioning::CaptionSettings;
use crate::curation::CurationThresholds;
use crate::error::{Error, Result};
use crate::geometry::GeometryParams;
use crate::ingest::{FrameDecoder, NativeDecoder, SubprocessDecoder};
use crate::model::MetricName;
use crate::providers::{
    Capability, EmbeddingDims, HttpProvider, HttpSettings, MockConfig, MockProvider, ModelProvider, ProviderDescriptor,
    SceneRegistry,
};

/// One JSON document describing a run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub providers: ProvidersConfig,
    pub curation_thresholds: CurationThresholds,
    pub metrics: MetricsConfig,
    pub sampling: SamplingConfig,
    pub seed: u64,
    pub captioning: CaptionSettings,
    pub decoder: DecoderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    #[default]
    Mock,
    Live,
}

impl std::str::FromStr for ProviderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(ProviderMode::Mock),
            "live" => Ok(ProviderMode::Live),
            other => Err(Error::Config(format!("providers must be mock or live, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersConfig {
    pub mode: ProviderMode,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub dims: EmbeddingDims,
    /// Per-capability routing for live runs.
    pub overrides: Vec<ProviderDescriptor>,
    /// Mock only: weight of the per-image noise added to identity embeddings.
    pub identity_noise: f64,
    /// Mock only: capabilities to withhold.
    pub disabled: BTreeSet<Capability>,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        ProvidersConfig {
            mode: ProviderMode::Mock,
            endpoint: "http://127.0.0.1:8765".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_ms: 50,
            dims: EmbeddingDims::default(),
            overrides: Vec::new(),
            identity_noise: 0.05,
            disabled: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub enabled: BTreeSet<MetricName>,
    pub object_similarity: ObjectSimilarityParams,
    pub geometry: GeometryParams,
    /// Also mark the second-best value of each report column.
    pub second_best: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            enabled: MetricName::ALL.into_iter().collect(),
            object_similarity: ObjectSimilarityParams::default(),
            geometry: GeometryParams::default(),
            second_best: false,
        }
    }
}

/// Frame counts drawn uniformly from each video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub vbench_frames: usize,
    pub video_similarity_frames: usize,
    pub geometry_frames: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            vbench_frames: 16,
            video_similarity_frames: 16,
            geometry_frames: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderConfig {
    #[default]
    Native,
    Subprocess { program: PathBuf, #[serde(default)] args: Vec<String> },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_slice(bytes).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.curation_thresholds.validate()?;
        self.metrics.object_similarity.validate()?;
        self.metrics.geometry.validate()?;
        let s = &self.sampling;
        if s.vbench_frames < 2 || s.video_similarity_frames == 0 || s.geometry_frames < 2 {
            return Err(Error::Config(
                "sampling needs vbench_frames >= 2, video_similarity_frames >= 1, geometry_frames >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.providers.identity_noise) {
            return Err(Error::Config("providers.identity_noise must lie in [0, 1]".into()));
        }
        for d in &self.providers.overrides {
            d.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Geometry parameters with the run seed folded in.
    pub fn geometry_params(&self) -> GeometryParams {
        let mut g = self.metrics.geometry.clone();
        g.seed = g.seed.wrapping_add(self.seed);
        g
    }

    pub fn build_decoder(&self) -> Box<dyn FrameDecoder> {
        match &self.decoder {
            DecoderConfig::Native => Box::new(NativeDecoder),
            DecoderConfig::Subprocess { program, args } => Box::new(SubprocessDecoder::new(program, args.clone())),
        }
    }

    /// The configured provider. Mock runs answer geometry analytically for
    /// every view stored in `scenes`.
    pub fn build_provider(&self, scenes: Option<&Path>) -> Result<Arc<dyn ModelProvider>> {
        let p = &self.providers;
        match p.mode {
            ProviderMode::Mock => {
                let registry = SceneRegistry::new();
                if let Some(path) = scenes {
                    registry.load(path)?;
                }
                let mock = MockProvider::new(MockConfig {
                    seed: self.seed,
                    dims: p.dims,
                    identity_noise: p.identity_noise,
                    disabled: p.disabled.clone(),
                    ..MockConfig::default()
                })
                .with_registry(registry);
                Ok(Arc::new(mock))
            }
            ProviderMode::Live => {
                let mut settings = HttpSettings::new(p.endpoint.clone());
                settings.timeout_ms = p.timeout_ms;
                settings.max_retries = p.max_retries;
                settings.backoff_ms = p.backoff_ms;
                settings.dims = p.dims;
                settings.overrides = p.overrides.iter().map(|d| (d.capability, d.clone())).collect();
                Ok(Arc::new(HttpProvider::new(settings)?))
            }
        }
    }
}
