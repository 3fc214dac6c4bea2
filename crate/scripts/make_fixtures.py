"""Regenerates the scene fixtures under fixtures/. Output is deterministic."""
import json
import random
from pathlib import Path

from PIL import Image

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def rect(x0, y0, x1, y1):
    return lambda x, y: x0 <= x < x1 and y0 <= y < y1


def union(*parts):
    return lambda x, y: any(p(x, y) for p in parts)


def ellipse(cx, cy, rx, ry):
    return lambda x, y: ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0


def build(name, size, background, objects, seed):
    w, h = size
    rng = random.Random(seed)
    out = ROOT / name
    out.mkdir(parents=True, exist_ok=True)
    img = Image.new("RGB", size)
    px = img.load()
    for y in range(h):
        for x in range(w):
            px[x, y] = background(x, y, rng)
    manifest = {"image": "img.png", "objects": []}
    for obj_id, phrases, member, colour in objects:
        mask = Image.new("L", size, 0)
        mp = mask.load()
        for y in range(h):
            for x in range(w):
                if member(x, y):
                    mp[x, y] = 255
                    if colour is not None:
                        jitter = rng.randint(-12, 12)
                        px[x, y] = tuple(max(0, min(255, c + jitter)) for c in colour)
        fname = f"{obj_id}_mask.png"
        mask.save(out / fname)
        manifest["objects"].append({"id": obj_id, "phrases": phrases, "mask": fname})
    img.save(out / "img.png")
    (out / "scene.json").write_text(json.dumps(manifest, indent=2) + "\n")


def farm_bg(x, y, rng):
    if y < 18:
        return (90 + y * 3, 150 + y * 2, 235)
    return (60 + rng.randint(0, 20), 140 + (y - 18) * 2, 50)


def street_bg(x, y, rng):
    if y < 30:
        return (170, 180, 200 - y)
    g = 80 + rng.randint(0, 10)
    return (g, g, g + 5)


def beach_bg(x, y, rng):
    if y < 20:
        return (30, 90 + x * 2, 180 + y * 2)
    return (225, 200 + rng.randint(0, 15), 150)


cow_big = rect(8, 26, 26, 38)
cow_small = rect(38, 30, 50, 38)

build(
    "farm",
    (64, 48),
    farm_bg,
    [
        ("cow_big", ["bigger cow", "the big cow", "cow on the left"], cow_big, (120, 80, 60)),
        ("cow_small", ["smaller cow", "the small cow", "cow on the right"], cow_small, (235, 235, 230)),
        ("herd", ["cows", "the cows", "both cows"], union(cow_big, cow_small), None),
        ("fence", ["fence in front of the barn", "wooden fence"], rect(0, 40, 64, 44), (150, 110, 70)),
        ("sky", ["sky", "the blue sky"], rect(0, 0, 64, 18), None),
    ],
    seed=1,
)

build(
    "street",
    (64, 48),
    street_bg,
    [
        ("car", ["red car", "the car", "parked car"], rect(6, 34, 28, 44), (200, 30, 40)),
        ("person", ["person", "the man walking", "pedestrian"], rect(40, 22, 46, 44), (60, 70, 150)),
        ("building", ["building", "the tall building"], rect(20, 0, 52, 28), (140, 100, 90)),
    ],
    seed=2,
)

build(
    "beach",
    (48, 40),
    beach_bg,
    [
        ("dog", ["dog", "the brown dog"], ellipse(12, 30, 6, 4), (130, 90, 40)),
        ("umbrella", ["umbrella", "the striped umbrella"], ellipse(34, 22, 9, 5), (250, 220, 20)),
        ("sea", ["sea", "the ocean", "water"], rect(0, 0, 48, 20), None),
    ],
    seed=3,
)
