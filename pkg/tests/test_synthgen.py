import itertools

import numpy as np
import pytest

from meanprint.geometry import IDENTITY, SimilarityTransform, exact_two_point, validate_range
from meanprint.minutiae import BIFURCATION, TERMINATION, crossing_map
from meanprint.raster import thin
from meanprint.synthgen import (
    NoiseParams,
    OutOfRangeError,
    gen_impression,
    gen_master,
    render_gray,
    sample_transform,
    transport_skeleton,
)

TRUTH = SimilarityTransform(1.05, 12, 20, -15)


def test_master_shape_and_minutiae(master):
    assert master.shape == (384, 288)
    kinds = [m.kind for m in master.minutiae]
    assert len(kinds) >= 20
    assert kinds.count(TERMINATION) >= 5 and kinds.count(BIFURCATION) >= 5
    assert not (master.skeleton & ~master.mask).any()
    sk = master.skeleton
    assert not (sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]).any()
    assert np.array_equal(thin(sk), sk)


def test_master_deterministic_and_seeded():
    a, b = gen_master(seed=11), gen_master(seed=11)
    assert np.array_equal(a.skeleton, b.skeleton) and a.minutiae == b.minutiae
    assert not np.array_equal(a.skeleton, gen_master(seed=12).skeleton)


def test_master_rejects_tiny_period():
    with pytest.raises(ValueError):
        gen_master(ridge_period=2)


def test_identity_impression_equals_master(master):
    imp = gen_impression(master, IDENTITY)
    assert np.array_equal(imp.template.skeleton, master.skeleton)
    assert imp.template.minutiae == master.minutiae
    assert imp.truth == IDENTITY


def test_known_transform_recovered_from_minutiae(master):
    imp = gen_impression(master, TRUTH)
    t = imp.truth
    pts = [(m.x, m.y) for m in master.minutiae[:6]]
    for p, q in itertools.combinations(pts, 2):
        got = exact_two_point(p, q, t.apply(*p), t.apply(*q))
        assert np.allclose(got.as_tuple(), TRUTH.as_tuple(), rtol=0, atol=1e-6)
    # the re-extracted minutiae sit where the master's were carried
    found = [(m.x, m.y, m.kind) for m in imp.template.minutiae]
    hits = 0
    for m in master.minutiae:
        x, y = t.apply(m.x, m.y)
        hits += any(k == m.kind and (fx - x) ** 2 + (fy - y) ** 2 <= 9 for fx, fy, k in found)
    assert hits >= 0.8 * len(master.minutiae)


def test_full_dropout_is_empty(master):
    imp = gen_impression(master, IDENTITY, NoiseParams(dropout=1.0))
    assert not imp.template.skeleton.any() and imp.template.minutiae == []


def test_out_of_range_transform(master):
    with pytest.raises(OutOfRangeError):
        gen_impression(master, SimilarityTransform(1.5, 0, 0, 0))


def test_noise_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(dropout=1.5)
    with pytest.raises(ValueError):
        NoiseParams(breaks=-1)


def test_crop_and_breaks(master):
    imp = gen_impression(master, IDENTITY, NoiseParams(crop=(0, 0, 144, 384)))
    assert not imp.template.skeleton[:, 144:].any()
    broken = gen_impression(master, IDENTITY, NoiseParams(breaks=5), seed=3).template
    assert broken.skeleton.sum() < master.skeleton.sum()
    assert not (broken.skeleton & ~master.skeleton).any()
    # each break adds ridge ends
    assert (crossing_map(broken.skeleton) == 1).sum() > (crossing_map(master.skeleton) == 1).sum()


def test_transport_keeps_ridges_connected(master):
    sk = transport_skeleton(master.skeleton, TRUTH)
    assert sk.any()
    assert not (sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]).any()


def test_sample_transform_in_box():
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert validate_range(sample_transform(rng, (384, 288))) is None


def test_render_gray(master):
    img = render_gray(master, seed=1)
    assert img.dtype == np.uint8 and img.shape == master.shape
    assert img[master.skeleton].mean() < 80 < 170 < img[~master.mask].mean()
    assert np.array_equal(img, render_gray(master, seed=1))
