import numpy as np
import pytest

from tamperqa import rasterops
from tamperqa import tamper_engine as te
from tamperqa.errors import IneligibleInstance, UnknownBlurKind

from conftest import square_mask

W = H = 512


def inst(mask, label="building", iid="i0"):
    return te.SourceInstance(iid, label, mask, "img")


# -- eligibility -------------------------------------------------------------


def test_building_ten_percent_interior_is_eligible():
    m = np.zeros((H, W), bool)
    side = 162  # 162*162 / 512^2 = 0.1001
    m[100 : 100 + side, 100 : 100 + side] = True
    assert 0.099 < m.sum() / (W * H) < 0.101
    assert te.check_eligibility(inst(m), (W, H)).eligible


def test_tiny_vehicle_rejected():
    m = square_mask((H, W), 50, 50, 11, 12)  # 132 px = 0.0005
    v = te.check_eligibility(inst(m, "vehicle"), (W, H))
    assert (v.eligible, v.reason) == (False, "too_small")


def test_area_bounds_inclusive():
    n_min = int(np.ceil(0.001 * W * H))  # 263 px
    m = np.zeros((H, W), bool)
    m.flat[[r * W + c for r in range(10, 11) for c in range(10, 10 + n_min)]] = True
    assert te.check_eligibility(inst(m), (W, H)).eligible
    big = np.zeros((H, W), bool)
    big.flat[W * 1 + 1 : W * 1 + 1 + int(0.15 * W * H)] = True  # spans rows, touches border
    assert te.check_eligibility(inst(big, "road"), (W, H)).eligible


def test_road_may_touch_border():
    m = np.zeros((H, W), bool)
    m[200:251, 0:257] = True  # ~0.05 of the image, touching the left border
    assert te.check_eligibility(inst(m, "road"), (W, H)).eligible
    v = te.check_eligibility(inst(m, "building"), (W, H))
    assert v.reason == "truncated"


def test_fragmented_rejected():
    m = square_mask((H, W), 50, 50, 30, 30) | square_mask((H, W), 200, 200, 30, 30)
    assert te.check_eligibility(inst(m), (W, H)).reason == "fragmented"


# -- sampling -----------------------------------------------------------------


def test_sampler_deterministic():
    a = te.sample_params(np.random.default_rng(123), te.COPY_MOVE)
    b = te.sample_params(np.random.default_rng(123), te.COPY_MOVE)
    assert a == b


def test_sampler_statistics():
    rng = np.random.default_rng(2024)
    draws = [te.sample_params(rng, te.COPY_MOVE) for _ in range(10_000)]
    zero_rot = sum(p.rotation_deg == 0 for p in draws) / len(draws)
    unit_scale = sum(p.scale == 1.0 for p in draws) / len(draws)
    assert 0.47 <= zero_rot <= 0.53
    assert 0.30 <= unit_scale <= 0.37
    assert all(0.5 <= p.scale <= 1.5 for p in draws)
    assert all(p.rotation_deg == 0 or 5 <= p.rotation_deg <= 355 for p in draws)


def test_blur_sampler():
    rng = np.random.default_rng(1)
    draws = [te.sample_params(rng, te.BLUR) for _ in range(600)]
    kinds = {p.blur_kind for p in draws}
    assert kinds == set(te.BLUR_KINDS)
    for p in draws:
        if p.blur_kind == "gaussian":
            assert 2 <= p.blur_strength <= 6
        elif p.blur_kind == "mosaic":
            assert p.blur_strength in (8, 16, 32)
        else:
            assert p.blur_strength == te.DAUB_RADIUS


def test_derived_rng_depends_on_all_keys():
    a = te.derive_rng(1, "img", "i0").random()
    assert a == te.derive_rng(1, "img", "i0").random()
    assert a != te.derive_rng(2, "img", "i0").random()
    assert a != te.derive_rng(1, "img", "i1").random()


# -- placement ------------------------------------------------------------------


def test_full_image_instance_has_no_placement():
    full = inst(np.ones((H, W), bool))
    assert te.place(full, te.TamperParams(), (W, H), require_eligible=False) is None
    with pytest.raises(IneligibleInstance):
        te.place(full, te.TamperParams(), (W, H))


def test_small_square_placement_pixel_oracle():
    m = square_mask((H, W), 100, 100, 10, 10)
    m2 = m | square_mask((H, W), 110, 100, 10, 20)  # 300 px so it passes the 0.1% floor
    instance = inst(m2)
    p = te.place(instance, te.TamperParams(), (W, H), rng=np.random.default_rng(0))
    assert p is not None
    fp = p.footprint
    assert fp.sum() == m2.sum()
    inter = sum(1 for y, x in zip(*np.nonzero(m2)) if fp[y, x])
    assert inter / m2.sum() <= 0.05
    # pure shift: footprint equals the source rolled by the translation
    dx, dy = p.translation
    assert np.array_equal(np.roll(np.roll(m2, dy, axis=0), dx, axis=1), fp)


def test_forced_six_percent_overlap_rejected():
    m = square_mask((H, W), 100, 100, 50, 20)  # 1000 px
    instance = inst(m)
    # shift right by 47: overlap is 3 columns x 20 rows = 60 px = 6%
    assert te.check_translation(instance, te.TamperParams(), (47, 0)) is None
    # shift by 48: 2 columns = 40 px = 4% -> accepted
    ok = te.check_translation(instance, te.TamperParams(), (48, 0))
    assert ok is not None
    assert rasterops.overlap_fraction(m, ok.footprint) == pytest.approx(0.04)


def test_non_road_footprint_never_touches_border():
    rng = np.random.default_rng(3)
    m = square_mask((H, W), 200, 200, 150, 100)
    for _ in range(30):
        params = te.sample_params(rng, te.COPY_MOVE)
        p = te.place(inst(m), params, (W, H), rng=rng)
        if p is not None:
            assert not rasterops.touches_border(p.footprint)


# -- compositing ------------------------------------------------------------------


def test_identity_copy_onto_itself(textured):
    m = square_mask(textured.shape[:2], 30, 40, 20, 25)
    instance = te.SourceInstance("i", "ship", m, "img")
    placement = te.Placement((0, 0), m.copy())
    out, src, tmp = te.apply_copy_move(textured, instance, te.TamperParams(), placement)
    assert np.array_equal(out, textured)
    assert np.array_equal(src, m) and np.array_equal(tmp, m)


def test_copy_move_diff_support_inside_tmp_mask():
    rng = np.random.default_rng(8)
    image = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    m = square_mask((H, W), 150, 150, 40, 70)
    for seed in range(10):
        r = np.random.default_rng(seed)
        params = te.sample_params(r, te.COPY_MOVE)
        p = te.place(inst(m), params, (W, H), rng=r)
        params.translation = p.translation
        out, src, tmp = te.apply_copy_move(image, inst(m), params, p)
        diff = (out != image).any(axis=2)
        assert not (diff & ~tmp).any()
        assert np.array_equal(tmp, p.footprint)
        assert np.array_equal(out[~tmp], image[~tmp])


def test_rotation_90_swaps_bbox():
    m = square_mask((H, W), 100, 100, 60, 20)
    params = te.TamperParams(rotation_deg=90.0)
    fp = te.footprint_for(inst(m), params)
    x0, y0, x1, y1 = rasterops.region_stats(fp).bbox
    assert abs((x1 - x0 + 1) - 20) <= 1
    assert abs((y1 - y0 + 1) - 60) <= 1


def test_scale_changes_area():
    m = square_mask((H, W), 100, 100, 40, 40)
    for s in (0.5, 1.5):
        fp = te.footprint_for(inst(m), te.TamperParams(scale=s))
        assert fp.sum() == pytest.approx(1600 * s * s, rel=0.1)


# -- blur ------------------------------------------------------------------------


@pytest.mark.parametrize("kind, strength", [("gaussian", 3.7), ("mosaic", 16), ("daub", 4)])
def test_blur_of_constant_region_is_identity(kind, strength):
    image = np.full((H, W, 3), 40, np.uint8)
    m = square_mask((H, W), 100, 120, 60, 50)
    image[m] = (200, 17, 99)
    out, region = te.apply_blur(image, inst(m), kind, strength)
    assert np.array_equal(out, image)
    assert np.array_equal(region, m)


def test_mosaic_blocks_are_block_means():
    image = np.zeros((H, W, 3), np.uint8)
    yy, xx = np.indices((H, W))
    checker = ((yy // 4 + xx // 4) % 2).astype(bool)
    image[checker] = (250, 10, 30)
    image[~checker] = (10, 90, 200)
    m = square_mask((H, W), 64, 96, 64, 48)  # block-aligned: 4 x 3 complete blocks of 16
    out, _ = te.apply_blur(image, inst(m), "mosaic", 16)
    for by in range(96, 144, 16):
        for bx in range(64, 128, 16):
            block = out[by : by + 16, bx : bx + 16].reshape(-1, 3)
            expected = np.rint(image[by : by + 16, bx : bx + 16].reshape(-1, 3).astype(float).mean(axis=0))
            assert (block == block[0]).all()
            assert np.array_equal(block[0], expected.astype(np.uint8))
    assert np.array_equal(out[~m], image[~m])


@pytest.mark.parametrize("kind, strength", [("gaussian", 2.5), ("mosaic", 8), ("daub", 4)])
def test_blur_changes_only_region(kind, strength):
    rng = np.random.default_rng(4)
    image = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    m = np.zeros((H, W), bool)
    yy, xx = np.indices((H, W))
    m[(yy - 250) ** 2 + (xx - 300) ** 2 < 40**2] = True
    out, region = te.apply_blur(image, inst(m), kind, strength)
    diff = (out != image).any(axis=2)
    assert diff.any()
    assert not (diff & ~m).any()


def test_gaussian_ignores_outside_pixels():
    # region is uniform; outside is wildly different -> a leaking blur would change the region
    image = np.zeros((H, W, 3), np.uint8)
    image[:] = (255, 255, 255)
    m = square_mask((H, W), 100, 100, 30, 30)
    image[m] = (10, 20, 30)
    out, _ = te.apply_blur(image, inst(m), "gaussian", 6.0)
    assert np.array_equal(out, image)


def test_daub_matches_naive_oil_paint():
    rng = np.random.default_rng(9)
    img = rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
    region = np.zeros((24, 24), bool)
    region[3:20, 5:22] = True
    region[10:14, 8:12] = False
    fast = te._daub(region, img)
    inten = img.astype(int).sum(axis=2) // 3
    bins = inten * 8 // 256
    r = te.DAUB_RADIUS
    for y in range(24):
        for x in range(24):
            if not region[y, x]:
                continue
            members = {}
            for yy in range(max(0, y - r), min(24, y + r + 1)):
                for xx in range(max(0, x - r), min(24, x + r + 1)):
                    if region[yy, xx]:
                        members.setdefault(bins[yy, xx], []).append(img[yy, xx].astype(int))
            best = min(members, key=lambda b: (-len(members[b]), b))
            expected = np.rint(np.mean(members[best], axis=0))
            assert np.array_equal(fast[y, x], expected.astype(np.uint8)), (y, x)


def test_unknown_blur_kind():
    with pytest.raises(UnknownBlurKind):
        te.apply_blur(np.zeros((H, W, 3), np.uint8), inst(square_mask((H, W), 5, 5, 30, 30)), "swirl", 1)


def test_tamper_instance_replay_is_bit_identical():
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
    m = square_mask((H, W), 220, 60, 45, 80)
    for kind in (te.COPY_MOVE, te.BLUR):
        r1, img1 = te.tamper_instance(image, inst(m), kind, te.derive_rng(5, "img", "i0"))
        r2, img2 = te.tamper_instance(image, inst(m), kind, te.derive_rng(5, "img", "i0"))
        assert np.array_equal(img1, img2)
        assert np.array_equal(r1.tmp_mask, r2.tmp_mask)
        assert r1.params == r2.params
        if kind == te.BLUR:
            assert np.array_equal(r1.src_mask, r1.tmp_mask)
        else:
            assert rasterops.overlap_fraction(r1.src_mask, r1.tmp_mask) <= 0.05
