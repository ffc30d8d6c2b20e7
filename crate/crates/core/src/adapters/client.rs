use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::transport::{RawResponse, Transport};
use super::wire::{
    decode_feature_map, encode_image, rle_to_mask, EmbedDecodeError, EmbedResponse, ErrorResponse,
    GenerateRequest, GenerateResponse, ImageRequest, ProposeResponse, SegmentRequest, SegmentResponse,
};
use super::{AdapterEndpoint, AdapterError, Endpoint};
use crate::features::{BoundingBox, PatchFeatureMap, PixelMask};

/// Text query sent to the proposal detector.
pub const PROPOSAL_QUERY: &str = "object";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub mask: PixelMask,
    pub score: f64,
}

/// Candidate object box from the proposal detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub detector_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub truncated: bool,
}

/// The four external tools, addressed with encoded image files.
pub trait VisionTools: Send + Sync {
    /// Masks for `category`, best score first. Never empty.
    fn segment(&self, image: &[u8], category: &str) -> Result<Vec<ScoredMask>, AdapterError>;
    fn propose(&self, image: &[u8]) -> Result<Vec<Proposal>, AdapterError>;
    fn embed(&self, image: &[u8]) -> Result<PatchFeatureMap, AdapterError>;
    fn generate(&self, image: &[u8], prompt: &str, max_tokens: u32) -> Result<Generation, AdapterError>;
}

/// [`VisionTools`] over the JSON protocol, one transport per endpoint.
pub struct ToolClient {
    segment: Arc<dyn Transport>,
    propose: Arc<dyn Transport>,
    embed: Arc<dyn Transport>,
    generate: Arc<dyn Transport>,
}

impl ToolClient {
    pub fn new(
        segment: Arc<dyn Transport>,
        propose: Arc<dyn Transport>,
        embed: Arc<dyn Transport>,
        generate: Arc<dyn Transport>,
    ) -> Self {
        Self {
            segment,
            propose,
            embed,
            generate,
        }
    }

    /// Routes every endpoint through one transport.
    pub fn uniform(transport: Arc<dyn Transport>) -> Self {
        Self::new(transport.clone(), transport.clone(), transport.clone(), transport)
    }

    pub fn from_settings(
        segment: &AdapterEndpoint,
        propose: &AdapterEndpoint,
        embed: &AdapterEndpoint,
        generate: &AdapterEndpoint,
    ) -> Result<Self, AdapterError> {
        Ok(Self::new(
            Arc::from(segment.transport(Endpoint::Segment)?),
            Arc::from(propose.transport(Endpoint::Propose)?),
            Arc::from(embed.transport(Endpoint::Embed)?),
            Arc::from(generate.transport(Endpoint::Generate)?),
        ))
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        endpoint: Endpoint,
        req: &Req,
    ) -> Result<Resp, AdapterError> {
        let transport = match endpoint {
            Endpoint::Segment => &self.segment,
            Endpoint::Propose => &self.propose,
            Endpoint::Embed => &self.embed,
            Endpoint::Generate => &self.generate,
        };
        let body: Value = serde_json::to_value(req).expect("request bodies serialize");
        let raw = transport.post(endpoint, &body)?;
        parse_response(endpoint, &raw)
    }
}

/// Interprets a raw response: non-2xx becomes [`AdapterError::Server`].
pub fn parse_response<Resp: DeserializeOwned>(endpoint: Endpoint, raw: &RawResponse) -> Result<Resp, AdapterError> {
    if !raw.is_success() {
        let message = serde_json::from_str::<ErrorResponse>(&raw.body)
            .map(|e| e.error)
            .unwrap_or_else(|_| raw.body.chars().take(200).collect());
        return Err(AdapterError::Server {
            endpoint,
            status: raw.status,
            message,
        });
    }
    serde_json::from_str(&raw.body).map_err(|e| AdapterError::Decode {
        endpoint,
        message: e.to_string(),
    })
}

fn check_score(endpoint: Endpoint, score: f64) -> Result<(), AdapterError> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(AdapterError::Decode {
            endpoint,
            message: format!("score {score} outside [0, 1]"),
        })
    }
}

/// Snaps a floating-point box outward to whole pixels.
fn snap_box(endpoint: Endpoint, b: [f64; 4]) -> Result<BoundingBox, AdapterError> {
    let [x0, y0, x1, y1] = b;
    if b.iter().any(|v| !v.is_finite()) || x1 <= x0 || y1 <= y0 || x1 <= 0.0 || y1 <= 0.0 {
        return Err(AdapterError::Decode {
            endpoint,
            message: format!("invalid box {b:?}"),
        });
    }
    Ok(BoundingBox::new(
        x0.max(0.0).floor() as usize,
        y0.max(0.0).floor() as usize,
        x1.ceil() as usize,
        y1.ceil() as usize,
    ))
}

impl VisionTools for ToolClient {
    fn segment(&self, image: &[u8], category: &str) -> Result<Vec<ScoredMask>, AdapterError> {
        if category.trim().is_empty() {
            return Err(AdapterError::InvalidRequest("segmentation category is empty".into()));
        }
        let endpoint = Endpoint::Segment;
        let resp: SegmentResponse = self.call(
            endpoint,
            &SegmentRequest {
                image_b64: encode_image(image),
                text_query: category.to_string(),
            },
        )?;
        if resp.masks.len() != resp.scores.len() {
            return Err(AdapterError::Decode {
                endpoint,
                message: format!("{} masks but {} scores", resp.masks.len(), resp.scores.len()),
            });
        }
        let mut masks = Vec::with_capacity(resp.masks.len());
        for (rle, score) in resp.masks.iter().zip(resp.scores) {
            check_score(endpoint, score)?;
            let mask = rle_to_mask(rle).map_err(|message| AdapterError::Decode { endpoint, message })?;
            masks.push(ScoredMask { mask, score });
        }
        if masks.is_empty() {
            return Err(AdapterError::NothingFound {
                endpoint,
                category: category.to_string(),
            });
        }
        // stable: equal scores keep server order
        masks.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(masks)
    }

    fn propose(&self, image: &[u8]) -> Result<Vec<Proposal>, AdapterError> {
        let endpoint = Endpoint::Propose;
        let resp: ProposeResponse = self.call(
            endpoint,
            &ImageRequest {
                image_b64: encode_image(image),
            },
        )?;
        if resp.boxes.len() != resp.scores.len() {
            return Err(AdapterError::Decode {
                endpoint,
                message: format!("{} boxes but {} scores", resp.boxes.len(), resp.scores.len()),
            });
        }
        resp.boxes
            .iter()
            .zip(resp.scores)
            .map(|(&b, score)| {
                check_score(endpoint, score)?;
                Ok(Proposal {
                    bbox: snap_box(endpoint, b)?,
                    detector_score: score,
                })
            })
            .collect()
    }

    fn embed(&self, image: &[u8]) -> Result<PatchFeatureMap, AdapterError> {
        let endpoint = Endpoint::Embed;
        let resp: EmbedResponse = self.call(
            endpoint,
            &ImageRequest {
                image_b64: encode_image(image),
            },
        )?;
        decode_feature_map(&resp).map_err(|e| match e {
            EmbedDecodeError::Shape {
                declared,
                actual_bytes,
            } => AdapterError::Shape {
                endpoint,
                message: format!(
                    "declared {}x{}x{} = {declared} floats, payload holds {actual_bytes} bytes",
                    resp.grid_h, resp.grid_w, resp.dim
                ),
            },
            EmbedDecodeError::Base64(message) => AdapterError::Decode { endpoint, message },
            EmbedDecodeError::Invalid(err) => AdapterError::Decode {
                endpoint,
                message: err.to_string(),
            },
        })
    }

    fn generate(&self, image: &[u8], prompt: &str, max_tokens: u32) -> Result<Generation, AdapterError> {
        if prompt.trim().is_empty() {
            return Err(AdapterError::InvalidRequest("prompt is empty".into()));
        }
        let resp: GenerateResponse = self.call(
            Endpoint::Generate,
            &GenerateRequest {
                image_b64: encode_image(image),
                prompt: prompt.to_string(),
                max_tokens,
            },
        )?;
        Ok(Generation {
            text: resp.text.trim_end().to_string(),
            truncated: resp.truncated,
        })
    }
}
