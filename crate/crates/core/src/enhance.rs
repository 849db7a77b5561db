//! Client side of the view-enhancement service and in-process stand-ins.
//!
//! The service in-paints under-observed regions of a render and then
//! removes splatting artifacts. Images travel as base64 PNG, masks as base64
//! 8-bit grayscale PNG with 255 marking pixels to in-paint.

use std::io::Read;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{decode_png, encode_png, Raster};
use crate::render::{masked_fraction, opacity_mask, RenderOutput};

pub const INPAINT_PROMPT: &str = "A photo of [V]";
pub const CLEAN_PROMPT: &str = "Denoise the noisy image and remove all floaters and Gaussian artifacts.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Inpaint,
    Clean,
}

impl Stage {
    pub fn path(self) -> &'static str {
        match self {
            Stage::Inpaint => "/v1/inpaint",
            Stage::Clean => "/v1/clean",
        }
    }
}

/// One enhancement call. `image` is RGB in `[0, 1]`; `mask` (in-paint only)
/// is 1 where pixels should be regenerated.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceRequest {
    pub stage: Stage,
    pub image: Raster<f64>,
    pub mask: Option<Raster<f32>>,
    pub prompt: String,
    pub steps: u32,
    pub image_guidance: f64,
    pub text_guidance: f64,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceResponse {
    pub image: String,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub backend: String,
}

#[derive(Serialize)]
struct InpaintBody<'a> {
    image: &'a str,
    mask: &'a str,
    prompt: &'a str,
    steps: u32,
    t_min: f64,
    t_max: f64,
}

#[derive(Serialize)]
struct CleanBody<'a> {
    image: &'a str,
    prompt: &'a str,
    image_guidance: f64,
    text_guidance: f64,
    steps: u32,
    t_min: f64,
    t_max: f64,
}

/// Base64 of the 8-bit PNG encoding of an RGB raster.
pub fn encode_image(image: &Raster<f64>) -> Result<String> {
    Ok(STANDARD.encode(encode_png(&image.to_f32())?))
}

/// Base64 of the 8-bit grayscale PNG of a binary mask (255 = in-paint).
pub fn encode_mask(mask: &Raster<f32>) -> Result<String> {
    Ok(STANDARD.encode(encode_png(&mask.map(|v| if v > 0.5 { 1.0 } else { 0.0 }))?))
}

pub fn decode_image(payload: &str) -> Result<Raster<f64>> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| Error::ProtocolViolation(format!("bad base64 payload: {e}")))?;
    let img = decode_png(&bytes).map_err(|e| Error::ProtocolViolation(e.to_string()))?;
    if img.channels != 3 {
        return Err(Error::ProtocolViolation(format!("expected an RGB image, got {} channels", img.channels)));
    }
    Ok(img.to_f64())
}

impl EnhanceRequest {
    /// JSON body for the stage's endpoint, fields in protocol order.
    pub fn to_json(&self) -> Result<String> {
        let image = encode_image(&self.image)?;
        let body = match self.stage {
            Stage::Inpaint => {
                let mask = self
                    .mask
                    .as_ref()
                    .ok_or_else(|| Error::ProtocolViolation("in-paint request without a mask".into()))?;
                self.image.ensure_same_shape(&Raster::<f64>::new(mask.width, mask.height, 3))?;
                let mask = encode_mask(mask)?;
                serde_json::to_string(&InpaintBody {
                    image: &image,
                    mask: &mask,
                    prompt: &self.prompt,
                    steps: self.steps,
                    t_min: self.t_min,
                    t_max: self.t_max,
                })
            }
            Stage::Clean => serde_json::to_string(&CleanBody {
                image: &image,
                prompt: &self.prompt,
                image_guidance: self.image_guidance,
                text_guidance: self.text_guidance,
                steps: self.steps,
                t_min: self.t_min,
                t_max: self.t_max,
            }),
        };
        body.map_err(|e| Error::ProtocolViolation(e.to_string()))
    }
}

/// A backend that turns an [`EnhanceRequest`] into an image of the same size.
pub trait Enhancer {
    fn backend(&self) -> String;
    fn enhance(&self, request: &EnhanceRequest) -> Result<Raster<f64>>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStub;

impl Enhancer for IdentityStub {
    fn backend(&self) -> String {
        "stub-identity".into()
    }

    fn enhance(&self, request: &EnhanceRequest) -> Result<Raster<f64>> {
        Ok(request.image.clone())
    }
}

/// Fills masked pixels by repeatedly averaging already-known 4-neighbours,
/// growing inward from the mask boundary. A fully masked image becomes its
/// mean color. The clean stage is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskFillStub;

pub fn mask_fill(image: &Raster<f64>, mask: &Raster<f32>) -> Result<Raster<f64>> {
    let (w, h, c) = (image.width, image.height, image.channels);
    if mask.width != w || mask.height != h {
        return Err(Error::shape("mask and image sizes differ"));
    }
    let mut out = image.clone();
    let mut known: Vec<bool> = mask.data.iter().map(|&m| m <= 0.5).collect();
    if !known.iter().any(|&k| k) {
        let n = (w * h).max(1) as f64;
        for ch in 0..c {
            let mean = (0..w * h).map(|p| image.data[p * c + ch]).sum::<f64>() / n;
            for p in 0..w * h {
                out.data[p * c + ch] = mean;
            }
        }
        return Ok(out);
    }
    loop {
        let mut front = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if known[y * w + x] {
                    continue;
                }
                let mut sum = vec![0.0; c];
                let mut cnt = 0;
                for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                        continue;
                    }
                    let q = yy as usize * w + xx as usize;
                    if known[q] {
                        cnt += 1;
                        for (ch, s) in sum.iter_mut().enumerate() {
                            *s += out.data[q * c + ch];
                        }
                    }
                }
                if cnt > 0 {
                    front.push((y * w + x, sum.into_iter().map(|s| s / cnt as f64).collect::<Vec<_>>()));
                }
            }
        }
        if front.is_empty() {
            return Ok(out);
        }
        for (p, v) in front {
            known[p] = true;
            out.data[p * c..p * c + c].copy_from_slice(&v);
        }
    }
}

impl Enhancer for MaskFillStub {
    fn backend(&self) -> String {
        "stub-maskfill".into()
    }

    fn enhance(&self, request: &EnhanceRequest) -> Result<Raster<f64>> {
        match (&request.stage, &request.mask) {
            (Stage::Inpaint, Some(m)) => mask_fill(&request.image, m),
            _ => Ok(request.image.clone()),
        }
    }
}

/// 5x5 box blur (clamped at the border) on the clean stage, identity on
/// in-painting.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlurStub;

pub fn box_blur(image: &Raster<f64>, radius: usize) -> Raster<f64> {
    let (w, h, c) = (image.width, image.height, image.channels);
    let mut out = image.clone();
    let r = radius as i64;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for ch in 0..c {
                let (mut s, mut n) = (0.0, 0usize);
                for yy in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                        s += image.get(xx as usize, yy as usize, ch);
                        n += 1;
                    }
                }
                out.set(x as usize, y as usize, ch, s / n as f64);
            }
        }
    }
    out
}

impl Enhancer for BlurStub {
    fn backend(&self) -> String {
        "stub-blur".into()
    }

    fn enhance(&self, request: &EnhanceRequest) -> Result<Raster<f64>> {
        Ok(match request.stage {
            Stage::Clean => box_blur(&request.image, 2),
            Stage::Inpaint => request.image.clone(),
        })
    }
}

/// Retry policy for transport failures and server errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Wait before the second attempt; doubled after every failure.
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

/// HTTP+JSON client for a running enhancement service.
pub struct HttpEnhancer {
    base_url: String,
    agent: ureq::Agent,
    pub retry: RetryPolicy,
}

impl HttpEnhancer {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        HttpEnhancer {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Runs `call` until it succeeds, fails permanently or the attempts run
    /// out.
    fn with_retries<T>(&self, mut call: impl FnMut() -> std::result::Result<T, Attempt>) -> Result<T> {
        let mut wait = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(wait);
                wait *= 2;
            }
            match call() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("enhancer attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::EnhancerUnavailable(format!(
            "{} after {} attempts: {last}",
            self.base_url, self.retry.attempts
        )))
    }

    fn exchange(&self, method: &str, path: &str, body: Option<&str>) -> std::result::Result<String, Attempt> {
        let url = format!("{}{}", self.base_url, path);
        let resp = match body {
            Some(b) => self.agent.post(&url).header("Content-Type", "application/json").send(b),
            None => self.agent.get(&url).call(),
        };
        let mut resp = resp.map_err(|e| Attempt::Retry(format!("{method} {path}: {e}")))?;
        let status = resp.status().as_u16();
        let mut text = String::new();
        resp.body_mut()
            .as_reader()
            .read_to_string(&mut text)
            .map_err(|e| Attempt::Retry(format!("{method} {path}: {e}")))?;
        match status {
            200 => Ok(text),
            500.. => Err(Attempt::Retry(format!("{method} {path}: HTTP {status}"))),
            _ => Err(Attempt::Fatal(Error::ProtocolViolation(format!("{method} {path}: HTTP {status}: {text}")))),
        }
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let text = self.with_retries(|| self.exchange("GET", "/v1/health", None))?;
        serde_json::from_str(&text).map_err(|e| Error::ProtocolViolation(e.to_string()))
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl Enhancer for HttpEnhancer {
    fn backend(&self) -> String {
        self.health().map(|h| h.backend).unwrap_or_else(|_| "unreachable".into())
    }

    fn enhance(&self, request: &EnhanceRequest) -> Result<Raster<f64>> {
        let body = request.to_json()?;
        let text = self.with_retries(|| self.exchange("POST", request.stage.path(), Some(&body)))?;
        let resp: EnhanceResponse = serde_json::from_str(&text).map_err(|e| Error::ProtocolViolation(e.to_string()))?;
        let image = decode_image(&resp.image)?;
        if image.width != request.image.width || image.height != request.image.height {
            return Err(Error::ProtocolViolation(format!(
                "sent {}x{}, received {}x{}",
                request.image.width, request.image.height, image.width, image.height
            )));
        }
        Ok(image)
    }
}

/// Guidance and noise-range settings for the two stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceSettings {
    /// Alpha threshold below which pixels are in-painted.
    pub tau: f64,
    pub steps: u32,
    pub image_guidance: f64,
    pub text_guidance: f64,
    pub t_max: f64,
    /// `t_min` for in-painting, linearly decreasing over the fusion steps.
    pub inpaint_t_min: (f64, f64),
    pub clean_t_min: (f64, f64),
    pub inpaint_prompt: String,
    pub clean_prompt: String,
}

impl Default for EnhanceSettings {
    fn default() -> Self {
        EnhanceSettings {
            tau: 0.8,
            steps: 20,
            image_guidance: 2.5,
            text_guidance: 7.0,
            t_max: 0.99,
            inpaint_t_min: (0.98, 0.90),
            clean_t_min: (0.98, 0.70),
            inpaint_prompt: INPAINT_PROMPT.into(),
            clean_prompt: CLEAN_PROMPT.into(),
        }
    }
}

fn lerp_step(range: (f64, f64), step: usize, steps: usize) -> f64 {
    if steps <= 1 {
        return range.0;
    }
    let t = step.min(steps - 1) as f64 / (steps - 1) as f64;
    range.0 + (range.1 - range.0) * t
}

impl EnhanceSettings {
    /// In-paint request for fusion step `step` (0-based) of `steps`.
    pub fn inpaint_request(&self, image: Raster<f64>, mask: Raster<f32>, step: usize, steps: usize) -> EnhanceRequest {
        EnhanceRequest {
            stage: Stage::Inpaint,
            image,
            mask: Some(mask),
            prompt: self.inpaint_prompt.clone(),
            steps: self.steps,
            image_guidance: self.image_guidance,
            text_guidance: self.text_guidance,
            t_min: lerp_step(self.inpaint_t_min, step, steps),
            t_max: self.t_max,
        }
    }

    pub fn clean_request(&self, image: Raster<f64>, step: usize, steps: usize) -> EnhanceRequest {
        EnhanceRequest {
            stage: Stage::Clean,
            image,
            mask: None,
            prompt: self.clean_prompt.clone(),
            steps: self.steps,
            image_guidance: self.image_guidance,
            text_guidance: self.text_guidance,
            t_min: lerp_step(self.clean_t_min, step, steps),
            t_max: self.t_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedView {
    pub image: Raster<f64>,
    pub mask: Raster<f32>,
    pub masked_fraction: f64,
}

/// In-paints the render's under-observed pixels, then cleans the result.
pub fn enhance_view(
    enhancer: &dyn Enhancer,
    render: &RenderOutput,
    settings: &EnhanceSettings,
    step: usize,
    steps: usize,
) -> Result<EnhancedView> {
    let mask = opacity_mask(&render.alpha, settings.tau)?;
    let check = |img: &Raster<f64>| {
        if img.width != render.width() || img.height != render.height() || img.channels != 3 {
            Err(Error::ProtocolViolation(format!(
                "enhancer {} returned {}x{}x{} for a {}x{} view",
                enhancer.backend(),
                img.width,
                img.height,
                img.channels,
                render.width(),
                render.height()
            )))
        } else {
            Ok(())
        }
    };
    let inpainted = enhancer.enhance(&settings.inpaint_request(render.color.clone(), mask.clone(), step, steps))?;
    check(&inpainted)?;
    let cleaned = enhancer.enhance(&settings.clean_request(inpainted, step, steps))?;
    check(&cleaned)?;
    Ok(EnhancedView {
        image: cleaned,
        masked_fraction: masked_fraction(&mask),
        mask,
    })
}
