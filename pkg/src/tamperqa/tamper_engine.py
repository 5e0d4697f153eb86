"""Copy-move and blur tampering with exact source / tampering masks."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import ndimage

from . import rasterops
from .errors import DimensionMismatch, IneligibleInstance, UnknownBlurKind

log = logging.getLogger(__name__)

CLASS_LABELS = ("vehicle", "airplane", "ship", "building", "road", "tree", "farmland")
BLUR_KINDS = ("gaussian", "mosaic", "daub")
COPY_MOVE = "copy_move"
BLUR = "blur"

MIN_AREA_RATIO = 0.001
MAX_AREA_RATIO = 0.15
MAX_OVERLAP = 0.05
SCALE_RANGE = (0.5, 1.5)
ROTATION_RANGE = (5.0, 355.0)
MOSAIC_BLOCKS = (8, 16, 32)
GAUSSIAN_SIGMA = (2.0, 6.0)
DAUB_RADIUS = 4
DAUB_BINS = 8


@dataclass
class SourceInstance:
    instance_id: str
    class_label: str
    mask: np.ndarray
    image_id: str

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        self.mask = rasterops.as_mask(self.mask)


@dataclass
class TamperParams:
    scale: float = 1.0
    rotation_deg: float = 0.0
    translation: tuple[int, int] = (0, 0)
    blur_kind: str | None = None
    blur_strength: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["translation"] = list(self.translation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TamperParams:
        d = dict(d)
        d["translation"] = tuple(d.get("translation", (0, 0)))
        return cls(**d)


@dataclass
class Eligibility:
    eligible: bool
    reason: str | None = None

    def __bool__(self):
        return self.eligible


@dataclass
class Placement:
    translation: tuple[int, int]
    footprint: np.ndarray


@dataclass
class TamperRecord:
    record_id: str
    image_id: str
    instance: SourceInstance
    params: TamperParams
    src_mask: np.ndarray
    tmp_mask: np.ndarray
    kind: str
    degenerate: bool = False
    extra: dict = field(default_factory=dict)


def check_eligibility(instance: SourceInstance, image: tuple[int, int]) -> Eligibility:
    width, height = image
    if instance.mask.shape != (height, width):
        raise DimensionMismatch(f"mask {instance.mask.shape} vs image {(height, width)}")
    area = int(instance.mask.sum())
    ratio = area / (width * height)
    if ratio < MIN_AREA_RATIO:
        return Eligibility(False, "too_small")
    if ratio > MAX_AREA_RATIO:
        return Eligibility(False, "too_large")
    if rasterops.component_count(instance.mask) != 1:
        return Eligibility(False, "fragmented")
    if instance.class_label != "road" and rasterops.touches_border(instance.mask):
        return Eligibility(False, "truncated")
    return Eligibility(True)


def derive_rng(global_seed: int, image_id: str, instance_id: str) -> np.random.Generator:
    """Random stream keyed on (seed, image, instance); independent of scheduling."""
    digest = hashlib.sha256(f"{global_seed}|{image_id}|{instance_id}".encode()).digest()
    return np.random.default_rng(np.random.SeedSequence(int.from_bytes(digest[:16], "little")))


def sample_params(rng: np.random.Generator, kind: str) -> TamperParams:
    if kind == COPY_MOVE:
        scale = 1.0 if rng.random() < 1 / 3 else float(rng.uniform(*SCALE_RANGE))
        rotation = 0.0 if rng.random() < 0.5 else float(rng.uniform(*ROTATION_RANGE))
        return TamperParams(scale=scale, rotation_deg=rotation)
    if kind == BLUR:
        blur_kind = BLUR_KINDS[int(rng.integers(len(BLUR_KINDS)))]
        if blur_kind == "gaussian":
            strength = float(rng.uniform(*GAUSSIAN_SIGMA))
        elif blur_kind == "mosaic":
            strength = float(MOSAIC_BLOCKS[int(rng.integers(len(MOSAIC_BLOCKS)))])
        else:
            strength = float(DAUB_RADIUS)
        return TamperParams(blur_kind=blur_kind, blur_strength=strength)
    raise ValueError(f"unknown tamper kind {kind!r}")


# -- geometry ---------------------------------------------------------------


@dataclass
class _LocalTransform:
    """Transformed instance on a local integer grid at zero translation."""

    origin: tuple[int, int]  # absolute (x, y) of local [0, 0]
    mask: np.ndarray
    src_x: np.ndarray  # source sample coordinates per local pixel
    src_y: np.ndarray


def _local_transform(mask: np.ndarray, params: TamperParams) -> _LocalTransform:
    stats = rasterops.region_stats(mask)
    cx, cy = stats.centroid
    x0, y0, x1, y1 = stats.bbox
    theta = math.radians(params.rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    s = params.scale

    # forward map of bbox corners; rotation is counter-clockwise on screen
    corners = np.array([[x0 - 0.5, y0 - 0.5], [x1 + 0.5, y0 - 0.5], [x0 - 0.5, y1 + 0.5], [x1 + 0.5, y1 + 0.5]])
    rel = corners - (cx, cy)
    fx = s * (cos_t * rel[:, 0] + sin_t * rel[:, 1]) + cx
    fy = s * (-sin_t * rel[:, 0] + cos_t * rel[:, 1]) + cy
    ox, oy = math.floor(fx.min()) - 1, math.floor(fy.min()) - 1
    ex, ey = math.ceil(fx.max()) + 1, math.ceil(fy.max()) + 1

    qy, qx = np.mgrid[oy : ey + 1, ox : ex + 1].astype(np.float64)
    rx, ry = qx - cx, qy - cy
    src_x = (cos_t * rx - sin_t * ry) / s + cx
    src_y = (sin_t * rx + cos_t * ry) / s + cy

    h, w = mask.shape
    nx = np.rint(src_x).astype(np.int64)
    ny = np.rint(src_y).astype(np.int64)
    inside = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
    local = np.zeros(qx.shape, dtype=bool)
    local[inside] = mask[ny[inside], nx[inside]]
    return _LocalTransform((ox, oy), local, src_x, src_y)


def _paste_mask(local: np.ndarray, origin: tuple[int, int], shape: tuple[int, int], clip: bool) -> np.ndarray | None:
    """Place ``local`` at ``origin`` on a canvas; None if it leaves the frame and clip is off."""
    h, w = shape
    ox, oy = origin
    ys, xs = np.nonzero(local)
    if xs.size == 0:
        return None
    if not clip and (ox + xs.min() < 0 or oy + ys.min() < 0 or ox + xs.max() >= w or oy + ys.max() >= h):
        return None
    canvas = np.zeros(shape, dtype=bool)
    ax, ay = xs + ox, ys + oy
    keep = (ax >= 0) & (ax < w) & (ay >= 0) & (ay < h)
    canvas[ay[keep], ax[keep]] = True
    return canvas


def footprint_for(instance: SourceInstance, params: TamperParams) -> np.ndarray | None:
    lt = _local_transform(instance.mask, params)
    dx, dy = params.translation
    return _paste_mask(lt.mask, (lt.origin[0] + dx, lt.origin[1] + dy), instance.mask.shape, clip=True)


def _accept(instance: SourceInstance, footprint: np.ndarray | None, full_area: int, is_road: bool) -> bool:
    if footprint is None:
        return False
    # clipped roads must keep most of their length in frame
    if is_road and footprint.sum() < 0.5 * full_area:
        return False
    if not is_road and rasterops.touches_border(footprint):
        return False
    return rasterops.overlap_fraction(instance.mask, footprint) <= MAX_OVERLAP


def check_translation(
    instance: SourceInstance, params: TamperParams, translation: tuple[int, int]
) -> Placement | None:
    """Evaluate one forced translation against the placement constraints."""
    is_road = instance.class_label == "road"
    lt = _local_transform(instance.mask, params)
    ox, oy = lt.origin[0] + translation[0], lt.origin[1] + translation[1]
    footprint = _paste_mask(lt.mask, (ox, oy), instance.mask.shape, clip=is_road)
    if not _accept(instance, footprint, int(lt.mask.sum()), is_road):
        return None
    return Placement(tuple(translation), footprint)


def place(
    instance: SourceInstance,
    params: TamperParams,
    image: tuple[int, int],
    max_attempts: int = 100,
    rng: np.random.Generator | None = None,
    require_eligible: bool = True,
) -> Placement | None:
    """Draw translations until the transformed footprint satisfies the constraints.

    Returns None (no placement) after ``max_attempts`` rejected draws.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if require_eligible and not check_eligibility(instance, image):
        raise IneligibleInstance(instance.instance_id)
    rng = rng if rng is not None else np.random.default_rng(0)
    width, height = image
    is_road = instance.class_label == "road"
    lt = _local_transform(instance.mask, params)
    ys, xs = np.nonzero(lt.mask)
    if xs.size == 0:
        return None
    lx0, lx1, ly0, ly1 = int(xs.min()), int(xs.max()), int(ys.min()), int(ys.max())

    for _ in range(max_attempts):
        if is_road:
            # any position keeping at least one pixel in frame
            ax = int(rng.integers(-lx1, width - lx0))
            ay = int(rng.integers(-ly1, height - ly0))
        else:
            # one pixel of margin: non-road footprints never touch the border
            lo_x, hi_x = 1 - lx0, width - 2 - lx1
            lo_y, hi_y = 1 - ly0, height - 2 - ly1
            if hi_x < lo_x or hi_y < lo_y:
                return None
            ax = int(rng.integers(lo_x, hi_x + 1))
            ay = int(rng.integers(lo_y, hi_y + 1))
        footprint = _paste_mask(lt.mask, (ax, ay), (height, width), clip=is_road)
        if _accept(instance, footprint, xs.size, is_road):
            return Placement((ax - lt.origin[0], ay - lt.origin[1]), footprint)
    return None


def _bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    img = image.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def apply_copy_move(image: np.ndarray, instance: SourceInstance, params: TamperParams, placement: Placement):
    """Paste the transformed instance at ``placement``.

    Returns (tampered, src_mask, tmp_mask). Pixels outside tmp_mask are
    untouched.
    """
    if image.shape[:2] != instance.mask.shape:
        raise DimensionMismatch(f"image {image.shape[:2]} vs mask {instance.mask.shape}")
    lt = _local_transform(instance.mask, params)
    dx, dy = placement.translation
    ox, oy = lt.origin[0] + dx, lt.origin[1] + dy
    h, w = instance.mask.shape

    ys, xs = np.nonzero(lt.mask)
    ax, ay = xs + ox, ys + oy
    keep = (ax >= 0) & (ax < w) & (ay >= 0) & (ay < h)
    ys, xs, ax, ay = ys[keep], xs[keep], ax[keep], ay[keep]

    values = _bilinear(image, lt.src_x[ys, xs], lt.src_y[ys, xs])
    tampered = image.copy()
    tampered[ay, ax] = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    tmp_mask = np.zeros_like(instance.mask)
    tmp_mask[ay, ax] = True
    return tampered, instance.mask.copy(), tmp_mask


# -- blur -------------------------------------------------------------------


def _box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    """Exact integer sum over a (2r+1)^2 window, zero outside the array."""
    pad = np.pad(arr, [(radius + 1, radius), (radius + 1, radius)] + [(0, 0)] * (arr.ndim - 2))
    c = pad.cumsum(0).cumsum(1)
    k = 2 * radius + 1
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def _gaussian(region: np.ndarray, img: np.ndarray, sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    taps = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(taps**2) / (2 * sigma**2))
    kernel /= kernel.sum()
    weight = region.astype(np.float64)
    num = img.astype(np.float64) * weight[..., None]
    for axis in (0, 1):
        num = ndimage.correlate1d(num, kernel, axis=axis, mode="constant")
        weight = ndimage.correlate1d(weight, kernel, axis=axis, mode="constant")
    out = num / np.maximum(weight, 1e-12)[..., None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _mosaic(region: np.ndarray, img: np.ndarray, block: int) -> np.ndarray:
    h, w = region.shape
    out = img.copy()
    for by in range(0, h, block):
        for bx in range(0, w, block):
            cell = region[by : by + block, bx : bx + block]
            if not cell.any():
                continue
            patch = img[by : by + block, bx : bx + block]
            mean = patch[cell].astype(np.float64).mean(axis=0)
            out[by : by + block, bx : bx + block][cell] = np.clip(np.rint(mean), 0, 255).astype(np.uint8)
    return out


def _daub(region: np.ndarray, img: np.ndarray, radius: int = DAUB_RADIUS, bins: int = DAUB_BINS) -> np.ndarray:
    """Oil-paint filter restricted to the region.

    Each region pixel takes the mean colour of the most populated intensity
    bin in its window; ties go to the lower bin.
    """
    intensity = img.astype(np.int64).sum(axis=2) // 3
    bin_idx = intensity * bins // 256
    counts = np.empty((bins,) + region.shape, dtype=np.int64)
    sums = np.empty((bins,) + img.shape, dtype=np.int64)
    for b in range(bins):
        sel = region & (bin_idx == b)
        counts[b] = _box_sum(sel.astype(np.int64), radius)
        sums[b] = _box_sum(img.astype(np.int64) * sel[..., None], radius)
    best = counts.argmax(axis=0)
    yy, xx = np.indices(region.shape)
    c = counts[best, yy, xx]
    s = sums[best, yy, xx]
    mean = s / np.maximum(c, 1)[..., None]
    return np.clip(np.rint(mean), 0, 255).astype(np.uint8)


_BLURS = {"gaussian": _gaussian, "mosaic": _mosaic, "daub": _daub}


def apply_blur(image: np.ndarray, instance: SourceInstance, kind: str, strength: float):
    """Blur only the instance region. Returns (tampered, region_mask)."""
    if kind not in _BLURS:
        raise UnknownBlurKind(kind)
    region = instance.mask
    if image.shape[:2] != region.shape:
        raise DimensionMismatch(f"image {image.shape[:2]} vs mask {region.shape}")
    x0, y0, x1, y1 = rasterops.region_stats(region).bbox
    if kind == "mosaic":
        block = int(strength)
        # crop aligned to the block grid so blocks stay image-anchored
        x0, y0 = (x0 // block) * block, (y0 // block) * block
        x1, y1 = x1 + block, y1 + block
        arg = block
    elif kind == "gaussian":
        arg = float(strength)
    else:
        arg = int(strength)
    h, w = region.shape
    sl = (slice(y0, min(y1 + 1, h)), slice(x0, min(x1 + 1, w)))
    blurred = _BLURS[kind](region[sl], image[sl], arg)
    tampered = image.copy()
    view = tampered[sl]
    view[region[sl]] = blurred[region[sl]]
    return tampered, region.copy()


def record_id_for(image_id: str, instance_id: str, kind: str) -> str:
    return hashlib.sha1(f"{image_id}|{instance_id}|{kind}".encode()).hexdigest()[:12]


def tamper_instance(
    image: np.ndarray,
    instance: SourceInstance,
    kind: str,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> tuple[TamperRecord, np.ndarray] | None:
    """Run one tamper event end to end. None if no valid placement was found."""
    h, w = instance.mask.shape
    params = sample_params(rng, kind)
    rid = record_id_for(instance.image_id, instance.instance_id, kind)
    if kind == COPY_MOVE:
        placement = place(instance, params, (w, h), max_attempts=max_attempts, rng=rng)
        if placement is None:
            log.info("no placement for %s/%s after %d attempts", instance.image_id, instance.instance_id, max_attempts)
            return None
        params.translation = placement.translation
        tampered, src, tmp = apply_copy_move(image, instance, params, placement)
    else:
        tampered, src = apply_blur(image, instance, params.blur_kind, params.blur_strength)
        tmp = src.copy()
    degenerate = not bool((tampered != image).any())
    if degenerate:
        log.warning("degenerate record %s: no pixel changed", rid)
    record = TamperRecord(rid, instance.image_id, instance, params, src, tmp, kind, degenerate)
    return record, tampered
