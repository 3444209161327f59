//! Digest-keyed replay of recorded responses.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, ErrorKind, InferenceError};

/// SHA-256 over the decoded RGB pixels and dimensions, so re-encoding a PNG
/// does not change the key.
pub fn image_digest(path: &Path) -> Result<String, String> {
    let img = image::open(path).map_err(|e| e.to_string())?.to_rgb8();
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize)]
struct DigestInput<'a> {
    system: &'a str,
    user: &'a str,
    images: &'a [String],
}

fn digest_with(req: &ChatRequest, image_digests: &[String]) -> String {
    let canonical = serde_json::to_vec(&DigestInput {
        system: &req.system,
        user: &req.user,
        images: image_digests,
    })
    .expect("strings serialize");
    hex::encode(Sha256::digest(canonical))
}

/// Content digest of `(system, user, image pixel digests)`.
pub fn request_digest(req: &ChatRequest) -> Result<String, InferenceError> {
    let images = req
        .images
        .iter()
        .map(|p| {
            image_digest(p).map_err(|message| {
                InferenceError::new(&req.sample_id, ErrorKind::Image { path: p.clone(), message })
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(digest_with(req, &images))
}

#[derive(Default)]
struct DigestCache(Mutex<HashMap<PathBuf, String>>);

impl DigestCache {
    fn request_digest(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let mut images = Vec::with_capacity(req.images.len());
        for p in &req.images {
            if let Some(d) = self.0.lock().expect("cache lock").get(p) {
                images.push(d.clone());
                continue;
            }
            let d = image_digest(p).map_err(|message| {
                InferenceError::new(&req.sample_id, ErrorKind::Image { path: p.clone(), message })
            })?;
            self.0.lock().expect("cache lock").insert(p.clone(), d.clone());
            images.push(d);
        }
        Ok(digest_with(req, &images))
    }
}

pub struct ReplayBackend {
    entries: BTreeMap<String, String>,
    cache: DigestCache,
}

impl ReplayBackend {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        ReplayBackend {
            entries,
            cache: DigestCache::default(),
        }
    }

    /// Loads a JSON object mapping digests to response text.
    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        let fail = |m: String| InferenceError::new("-", ErrorKind::Config(format!("{}: {m}", path.display())));
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let entries = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        Ok(ReplayBackend::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let digest = self.cache.request_digest(req)?;
        self.entries
            .get(&digest)
            .cloned()
            .ok_or_else(|| InferenceError::new(&req.sample_id, ErrorKind::ReplayMiss { digest }))
    }
}

/// Passes requests through to `inner` and remembers every answer, producing
/// a fixture that [`ReplayBackend`] can serve.
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<BTreeMap<String, String>>,
    cache: DigestCache,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
            cache: DigestCache::default(),
        }
    }

    pub fn into_entries(self) -> BTreeMap<String, String> {
        self.recorded.into_inner().expect("recorder lock")
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<String, InferenceError> {
        let text = self.inner.complete(req)?;
        let digest = self.cache.request_digest(req)?;
        self.recorded.lock().expect("recorder lock").insert(digest, text.clone());
        Ok(text)
    }
}
