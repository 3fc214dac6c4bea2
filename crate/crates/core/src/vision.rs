//! Referring-expression grounding against annotated scenes.
//!
//! [`LexicalGrounder`] scores every object by token-set Jaccard similarity
//! between the refer and the object's phrases, and returns the single best
//! mask when it clears the detection threshold. Anything implementing
//! [`Grounder`] can stand in for it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::edit::{EditError, Image};
use crate::ontology::Refer;

pub const DEFAULT_THRESHOLD: f64 = 0.2;

pub const STOP_WORDS: [&str; 11] = ["the", "a", "an", "of", "in", "on", "at", "to", "that", "this", "it"];

/// Binary pixel membership with a confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: u32,
    height: u32,
    membership: Vec<bool>,
    confidence: f64,
}

impl Mask {
    /// Returns `None` when the raster length does not match the dimensions.
    pub fn new(width: u32, height: u32, membership: Vec<bool>, confidence: f64) -> Option<Self> {
        if membership.len() != width as usize * height as usize {
            return None;
        }
        Some(Mask { width, height, membership, confidence: confidence.clamp(0.0, 1.0) })
    }

    pub fn filled(width: u32, height: u32, confidence: f64) -> Self {
        Mask::from_fn(width, height, confidence, |_, _| true)
    }

    pub fn from_fn(width: u32, height: u32, confidence: f64, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut membership = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                membership.push(f(x, y));
            }
        }
        Mask { width, height, membership, confidence: confidence.clamp(0.0, 1.0) }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.membership[(y * self.width + x) as usize]
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence.clamp(0.0, 1.0);
        self
    }

    /// Number of member pixels.
    pub fn area(&self) -> usize {
        self.membership.iter().filter(|&&m| m).count()
    }

    pub fn load_png(path: &Path) -> Result<Self, image::ImageError> {
        let gray = image::open(path)?.to_luma8();
        let (width, height) = gray.dimensions();
        let membership = gray.pixels().map(|p| p.0[0] != 0).collect();
        Ok(Mask { width, height, membership, confidence: 1.0 })
    }

    /// Writes the fixture convention: 255 for members, 0 elsewhere.
    pub fn save_png(&self, path: &Path) -> Result<(), image::ImageError> {
        let raw = self.membership.iter().map(|&m| if m { 255 } else { 0 }).collect();
        let gray = image::GrayImage::from_raw(self.width, self.height, raw).expect("raster length is an invariant");
        gray.save_with_format(path, image::ImageFormat::Png)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub object_id: String,
    pub phrases: Vec<String>,
    pub mask: Mask,
}

/// An image plus its annotated objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub image: Image,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn object(&self, object_id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("missing file {path}{}", object_suffix(.object_id))]
    MissingFile { object_id: Option<String>, path: PathBuf },
    #[error("mask of object `{object_id}` is {mask_w}x{mask_h}, image is {image_w}x{image_h}")]
    DimensionMismatch { object_id: String, image_w: u32, image_h: u32, mask_w: u32, mask_h: u32 },
    #[error("mask of object `{object_id}` has no member pixels")]
    EmptyMask { object_id: String },
    #[error("object `{object_id}` has no referring phrases")]
    NoPhrases { object_id: String },
    #[error("duplicate object id `{object_id}`")]
    DuplicateObject { object_id: String },
    #[error("malformed scene manifest {path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("cannot decode {path}: {source}")]
    Decode { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Image(#[from] EditError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn object_suffix(id: &Option<String>) -> String {
    id.as_ref().map(|id| format!(" (object `{id}`)")).unwrap_or_default()
}

#[derive(Deserialize)]
struct Manifest {
    image: String,
    objects: Vec<ManifestObject>,
}

#[derive(Deserialize)]
struct ManifestObject {
    id: String,
    phrases: Vec<String>,
    mask: String,
}

pub const MANIFEST_FILE: &str = "scene.json";

/// Loads and validates a scene fixture directory. The directory name is the image id.
pub fn load_scene(dir: &Path) -> Result<Scene, SceneError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = read_required(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_slice(&raw).map_err(|source| SceneError::Manifest { path: manifest_path.clone(), source })?;

    let image_path = dir.join(&manifest.image);
    if !image_path.is_file() {
        return Err(SceneError::MissingFile { object_id: None, path: image_path });
    }
    let image = Image::load_png(&image_path)?;

    let mut objects: Vec<SceneObject> = Vec::with_capacity(manifest.objects.len());
    for obj in manifest.objects {
        if objects.iter().any(|o| o.object_id == obj.id) {
            return Err(SceneError::DuplicateObject { object_id: obj.id });
        }
        let phrases: Vec<String> =
            obj.phrases.iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
        if phrases.is_empty() {
            return Err(SceneError::NoPhrases { object_id: obj.id });
        }
        let mask_path = dir.join(&obj.mask);
        if !mask_path.is_file() {
            return Err(SceneError::MissingFile { object_id: Some(obj.id), path: mask_path });
        }
        let mask = Mask::load_png(&mask_path).map_err(|source| SceneError::Decode { path: mask_path, source })?;
        if mask.width() != image.width() || mask.height() != image.height() {
            return Err(SceneError::DimensionMismatch {
                object_id: obj.id,
                image_w: image.width(),
                image_h: image.height(),
                mask_w: mask.width(),
                mask_h: mask.height(),
            });
        }
        if mask.area() == 0 {
            return Err(SceneError::EmptyMask { object_id: obj.id });
        }
        objects.push(SceneObject { object_id: obj.id, phrases, mask });
    }

    let image_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| manifest.image.clone());
    Ok(Scene { image_id, image, objects })
}

fn read_required(path: &Path) -> Result<Vec<u8>, SceneError> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::MissingFile { object_id: None, path: path.to_path_buf() },
        _ => SceneError::Io(e),
    })
}

/// Lowercased content tokens of a phrase, stop words removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Best Jaccard similarity between the refer and any of the object's phrases.
pub fn score(refer: &Refer, object: &SceneObject) -> f64 {
    let query = content_tokens(refer.as_str());
    object
        .phrases
        .iter()
        .map(|p| jaccard(&query, &content_tokens(p)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no object matched `{refer}` (best score {best_score:.3})")]
pub struct NoDetection {
    pub refer: String,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub object_id: String,
    /// The object's mask, with confidence set to the match score.
    pub mask: Mask,
}

/// Resolves a refer to exactly one mask, or reports that nothing matched.
pub trait Grounder: Send + Sync {
    fn resolve(&self, refer: &Refer, scene: &Scene) -> Result<Detection, NoDetection>;
}

#[derive(Debug, Clone, Copy)]
pub struct LexicalGrounder {
    pub threshold: f64,
}

impl Default for LexicalGrounder {
    fn default() -> Self {
        LexicalGrounder { threshold: DEFAULT_THRESHOLD }
    }
}

impl Grounder for LexicalGrounder {
    fn resolve(&self, refer: &Refer, scene: &Scene) -> Result<Detection, NoDetection> {
        let mut best: Option<(f64, &SceneObject)> = None;
        for obj in &scene.objects {
            let s = score(refer, obj);
            best = match best {
                Some((bs, bo)) if bs > s || (bs == s && bo.object_id <= obj.object_id) => Some((bs, bo)),
                _ => Some((s, obj)),
            };
        }
        match best {
            Some((s, obj)) if s >= self.threshold => Ok(Detection {
                object_id: obj.object_id.clone(),
                mask: obj.mask.clone().with_confidence(s),
            }),
            other => Err(NoDetection {
                refer: refer.as_str().to_string(),
                best_score: other.map_or(0.0, |(s, _)| s),
            }),
        }
    }
}

pub fn resolve(refer: &Refer, scene: &Scene) -> Result<Detection, NoDetection> {
    LexicalGrounder::default().resolve(refer, scene)
}
