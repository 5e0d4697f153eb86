"""Programmatic corpus of drawn shapes, used by tests and the desk-scale scripts."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .dataset_io import IMAGE_SIZE, write_png
from .tamper_engine import CLASS_LABELS

THEMES = ("urban", "suburban", "rural", "industrial", "residential", "harbor", "airport", "forest", "agricultural", "coastal")


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    # smooth colour field plus pixel noise, so pasted patches differ from what they cover
    coarse = rng.integers(40, 200, size=(9, 9, 3)).astype(np.uint8)
    field = np.array(Image.fromarray(coarse).resize((size, size), Image.BILINEAR), dtype=np.int16)
    noise = rng.integers(-12, 13, size=(size, size, 3))
    return np.clip(field + noise, 0, 255).astype(np.uint8)


def _shape_mask(rng: np.random.Generator, size: int, label: str) -> np.ndarray:
    canvas = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(canvas)
    if label == "road":
        width = int(rng.integers(6, 14))
        if rng.random() < 0.5:
            y = int(rng.integers(40, size - 40))
            draw.line([(0, y), (size - 1, y + int(rng.integers(-30, 31)))], fill=255, width=width)
        else:
            x = int(rng.integers(40, size - 40))
            draw.line([(x, 0), (x + int(rng.integers(-30, 31)), size - 1)], fill=255, width=width)
        return np.array(canvas) > 0
    # side lengths give area ratios of roughly 0.1% .. 12%
    w = int(rng.integers(18, 150))
    h = int(rng.integers(18, 150))
    x0 = int(rng.integers(4, size - w - 4))
    y0 = int(rng.integers(4, size - h - 4))
    box = [x0, y0, x0 + w, y0 + h]
    style = rng.integers(3)
    if style == 0:
        draw.rectangle(box, fill=255)
    elif style == 1:
        draw.ellipse(box, fill=255)
    else:
        draw.polygon([(x0, y0 + h), (x0 + w // 2, y0), (x0 + w, y0 + h)], fill=255)
    return np.array(canvas) > 0


def make_corpus(
    root: Path | str,
    n_images: int = 20,
    instances_per_image: int = 6,
    seed: int = 0,
    size: int = IMAGE_SIZE,
) -> Path:
    """Write ``n_images`` synthetic scenes with non-overlapping instances and an index.json."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n_images):
        image_id = f"img{i:04d}"
        image = _background(rng, size)
        semantic = np.zeros((size, size), dtype=np.uint8)
        occupied = np.zeros((size, size), dtype=bool)
        instances = []
        tries = 0
        while len(instances) < instances_per_image and tries < instances_per_image * 20:
            tries += 1
            label = CLASS_LABELS[int(rng.integers(len(CLASS_LABELS)))]
            mask = _shape_mask(rng, size, label)
            grown = mask.copy()
            grown[1:, :] |= mask[:-1, :]
            grown[:-1, :] |= mask[1:, :]
            grown[:, 1:] |= mask[:, :-1]
            grown[:, :-1] |= mask[:, 1:]
            if (grown & occupied).any() or not mask.any():
                continue
            occupied |= grown
            colour = rng.integers(0, 256, size=3)
            shade = rng.integers(-25, 26, size=(size, size, 3))
            image[mask] = np.clip(colour + shade[mask], 0, 255).astype(np.uint8)
            semantic[mask] = CLASS_LABELS.index(label) + 1
            inst_id = f"{image_id}_i{len(instances):02d}"
            rel = f"instances/{inst_id}.png"
            write_png(root / rel, mask)
            instances.append({"instance_id": inst_id, "class_label": label, "mask": rel})
        write_png(root / f"images/{image_id}.png", image)
        write_png(root / f"semantic/{image_id}.png", semantic)
        items.append(
            {
                "image_id": image_id,
                "image": f"images/{image_id}.png",
                "semantic_mask": f"semantic/{image_id}.png",
                "theme": THEMES[int(rng.integers(len(THEMES)))],
                "instances": instances,
            }
        )
    (root / "index.json").write_text(json.dumps({"items": items}, indent=1, sort_keys=True) + "\n")
    return root
