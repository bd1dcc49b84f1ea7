//! Enrollment, verification, and identification on top of the trained
//! network, plus the on-disk template store.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bcsr::feature::BcFeature;
use crate::bcsr::nn::Network;
use crate::error::{Error, Result};

/// Which activation serves as the speaker embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LayerTag {
    /// Hidden fully-connected activation (width 512 by default).
    #[default]
    #[serde(rename = "layer-1")]
    Layer1,
    /// Final fully-connected logits (width = training speakers).
    #[serde(rename = "layer-2")]
    Layer2,
    /// Softmax output.
    #[serde(rename = "layer-3")]
    Layer3,
}

impl LayerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Layer1 => "layer-1",
            LayerTag::Layer2 => "layer-2",
            LayerTag::Layer3 => "layer-3",
        }
    }

    pub fn parse(s: &str) -> Result<LayerTag> {
        match s {
            "layer-1" | "layer1" | "1" => Ok(LayerTag::Layer1),
            "layer-2" | "layer2" | "2" => Ok(LayerTag::Layer2),
            "layer-3" | "layer3" | "3" => Ok(LayerTag::Layer3),
            other => Err(Error::InvalidParameter {
                name: "layer_tag",
                reason: format!("unknown tag `{other}`"),
            }),
        }
    }

    pub const ALL: [LayerTag; 3] = [LayerTag::Layer1, LayerTag::Layer2, LayerTag::Layer3];
}

/// Fixed-length speaker representation tagged with its source layer;
/// embeddings from different layers never compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    pub vector: Vec<f64>,
    pub layer_tag: LayerTag,
}

impl SpeakerEmbedding {
    pub fn len(&self) -> usize {
        self.vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vector.is_empty()
    }
}

/// Cosine similarity in [-1, 1]; zero vectors compare as 0.
pub fn cosine_similarity(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    if a.layer_tag != b.layer_tag {
        return Err(Error::LayerTagMismatch {
            left: a.layer_tag.as_str().to_string(),
            right: b.layer_tag.as_str().to_string(),
        });
    }
    if a.vector.len() != b.vector.len() {
        return Err(Error::LengthMismatch {
            left: a.vector.len(),
            right: b.vector.len(),
        });
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    let na: f64 = a.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Extracts the tagged layer's activation for a feature.
pub fn embed(feature: &BcFeature, net: &Network, tag: LayerTag) -> SpeakerEmbedding {
    let out = net.forward(&feature.cqt.magnitudes);
    let vector = match tag {
        LayerTag::Layer1 => out.embedding.to_vec(),
        LayerTag::Layer2 => out.speaker_logits.to_vec(),
        LayerTag::Layer3 => out.speaker_probs.to_vec(),
    };
    SpeakerEmbedding {
        vector,
        layer_tag: tag,
    }
}

/// Stored enrollment: the mean embedding over the user's clips.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Template {
    pub user_id: String,
    pub mean_embedding: SpeakerEmbedding,
    pub enrollment_seconds: f64,
    pub created_at: u64,
}

/// Averages the clips' embeddings into a template. Total enrollment
/// duration must reach at least one full segment (8 s by default).
pub fn enroll(
    user_id: &str,
    clips: &[BcFeature],
    net: &Network,
    tag: LayerTag,
    segment_s: f64,
) -> Result<Template> {
    if clips.is_empty() {
        return Err(Error::EnrollmentTooShort {
            got_s: 0.0,
            needed_s: segment_s,
        });
    }
    let total_s = clips.len() as f64 * segment_s;
    if total_s + 1e-9 < segment_s {
        return Err(Error::EnrollmentTooShort {
            got_s: total_s,
            needed_s: segment_s,
        });
    }
    let embeddings: Vec<SpeakerEmbedding> =
        clips.iter().map(|c| embed(c, net, tag)).collect();
    let dim = embeddings[0].len();
    let mut mean = vec![0.0; dim];
    for e in &embeddings {
        for (m, v) in mean.iter_mut().zip(&e.vector) {
            *m += v;
        }
    }
    let inv = 1.0 / embeddings.len() as f64;
    for m in mean.iter_mut() {
        *m *= inv;
    }
    Ok(Template {
        user_id: user_id.to_string(),
        mean_embedding: SpeakerEmbedding {
            vector: mean,
            layer_tag: tag,
        },
        enrollment_seconds: total_s,
        created_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// One stage's score/threshold/decision triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageDecision {
    pub score: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Cosine-similarity verification against a stored template.
pub fn verify(
    probe: &BcFeature,
    template: &Template,
    net: &Network,
    threshold: f64,
) -> Result<StageDecision> {
    let e = embed(probe, net, template.mean_embedding.layer_tag);
    let score = cosine_similarity(&e, &template.mean_embedding)?;
    Ok(StageDecision {
        score,
        threshold,
        accepted: score >= threshold,
    })
}

/// Closed-set identification: speaker-head argmax plus the full softmax.
pub fn identify(probe: &BcFeature, net: &Network) -> (usize, Vec<f64>) {
    let out = net.forward(&probe.cqt.magnitudes);
    let probs = out.speaker_probs.to_vec();
    let best = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    (best, probs)
}

/// JSON-file template store; writes go through a temp file + rename.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    path: PathBuf,
}

impl TemplateStore {
    pub fn at(path: impl Into<PathBuf>) -> Self {
        TemplateStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load_all(&self) -> Result<Vec<Template>> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&self.path)
            .map_err(|e| Error::io(self.path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn get(&self, user_id: &str) -> Result<Template> {
        self.load_all()?
            .into_iter()
            .find(|t| t.user_id == user_id)
            .ok_or_else(|| Error::UserNotEnrolled(user_id.to_string()))
    }

    /// Inserts or replaces the user's template.
    pub fn put(&self, template: Template) -> Result<()> {
        let mut all = self.load_all()?;
        all.retain(|t| t.user_id != template.user_id);
        all.push(template);
        all.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        let tmp = self.path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&all)?;
        fs::write(&tmp, text).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, &self.path).map_err(|e| Error::io(self.path.display().to_string(), e))?;
        Ok(())
    }
}
