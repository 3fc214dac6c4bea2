use std::fs;
use std::path::{Path, PathBuf};

use slotedit_core::vision::{content_tokens, jaccard, LexicalGrounder, SceneError};
use slotedit_core::{load_scene, Grounder, Image, Mask, Refer};

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write_scene(dir: &Path, image: (u32, u32), masks: &[(&str, (u32, u32), bool)]) {
    Image::filled(image.0, image.1, [10, 20, 30]).save_png(&dir.join("img.png")).unwrap();
    let mut objects = Vec::new();
    for (id, (w, h), filled) in masks {
        let file = format!("{id}_mask.png");
        Mask::from_fn(*w, *h, 1.0, |x, _| *filled && x == 0).save_png(&dir.join(&file)).unwrap();
        objects.push(serde_json::json!({"id": id, "phrases": [format!("the {id}")], "mask": file}));
    }
    let manifest = serde_json::json!({"image": "img.png", "objects": objects});
    fs::write(dir.join("scene.json"), manifest.to_string()).unwrap();
}

#[test]
fn fixtures_load() {
    for (name, n) in [("farm", 5), ("street", 3), ("beach", 3)] {
        let scene = load_scene(&fixtures_dir().join(name)).unwrap();
        assert_eq!(scene.image_id, name);
        assert_eq!(scene.objects.len(), n);
        for obj in &scene.objects {
            assert_eq!((obj.mask.width(), obj.mask.height()), (scene.width(), scene.height()));
            assert!(obj.mask.area() > 0);
        }
    }
}

#[test]
fn valid_temp_scene() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), (20, 20), &[("cow", (20, 20), true), ("dog", (20, 20), true)]);
    let scene = load_scene(dir.path()).unwrap();
    assert_eq!(scene.objects[1].object_id, "dog");
    assert_eq!(scene.objects[0].mask.area(), 20);
}

#[test]
fn missing_mask_file() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), (20, 20), &[("cow", (20, 20), true)]);
    fs::remove_file(dir.path().join("cow_mask.png")).unwrap();
    match load_scene(dir.path()) {
        Err(SceneError::MissingFile { object_id: Some(id), .. }) => assert_eq!(id, "cow"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_scene(dir.path()), Err(SceneError::MissingFile { object_id: None, .. })));
}

#[test]
fn mask_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), (20, 20), &[("cow", (10, 10), true)]);
    match load_scene(dir.path()) {
        Err(SceneError::DimensionMismatch { object_id, image_w, mask_w, .. }) => {
            assert_eq!((object_id.as_str(), image_w, mask_w), ("cow", 20, 10));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_mask_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), (8, 8), &[("ghost", (8, 8), false)]);
    assert!(matches!(load_scene(dir.path()), Err(SceneError::EmptyMask { .. })));
}

#[test]
fn malformed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_scene(dir.path(), (8, 8), &[("cow", (8, 8), true)]);
    fs::write(dir.path().join("scene.json"), "{\"image\": 3}").unwrap();
    assert!(matches!(load_scene(dir.path()), Err(SceneError::Manifest { .. })));
}

/// Exhaustive argmax over the scene's objects, reimplemented from the scoring definition.
fn brute_force(refer: &str, scene: &slotedit_core::Scene, threshold: f64) -> Option<String> {
    let q = content_tokens(refer);
    let mut scored: Vec<(f64, &str)> = scene
        .objects
        .iter()
        .map(|o| {
            let best = o.phrases.iter().map(|p| jaccard(&q, &content_tokens(p))).fold(0.0, f64::max);
            (best, o.object_id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.first().filter(|(s, _)| *s >= threshold).map(|(_, id)| id.to_string())
}

#[test]
fn grounding_matches_brute_force() {
    let queries = [
        "the cows",
        "bigger cow",
        "cow",
        "the barn",
        "house or barn",
        "sky",
        "the red car",
        "man",
        "dog",
        "the striped umbrella",
        "ocean water",
        "nothing here",
        "cow on the right side",
    ];
    for name in ["farm", "street", "beach"] {
        let scene = load_scene(&fixtures_dir().join(name)).unwrap();
        for threshold in [0.0, 0.2, 0.5, 1.0] {
            let g = LexicalGrounder { threshold };
            for q in queries {
                let got = g.resolve(&Refer::new(q).unwrap(), &scene).ok().map(|d| d.object_id);
                assert_eq!(got, brute_force(q, &scene, threshold), "{name} / {q} / {threshold}");
            }
        }
    }
}

#[test]
fn farm_grounding_examples() {
    let scene = load_scene(&fixtures_dir().join("farm")).unwrap();
    let g = LexicalGrounder::default();
    let resolve = |q: &str| g.resolve(&Refer::new(q).unwrap(), &scene);
    assert_eq!(resolve("the cows").unwrap().object_id, "herd");
    let barn = resolve("the barn").unwrap();
    assert_eq!(barn.object_id, "fence");
    assert!((barn.mask.confidence() - 1.0 / 3.0).abs() < 1e-12);
    // {house, or, barn} against {fence, front, barn}: exactly at the threshold
    let para = resolve("house or barn").unwrap();
    assert!((para.mask.confidence() - 0.2).abs() < 1e-12);
    let miss = resolve("tractor").unwrap_err();
    assert_eq!(miss.best_score, 0.0);
}
