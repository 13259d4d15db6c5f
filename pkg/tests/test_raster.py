import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from meanprint.raster import area, binarize, preprocess, prune_spurs, segment, thin
from meanprint.synthgen import render_gray

EIGHT = np.ones((3, 3), dtype=bool)


def n_components(b):
    return ndimage.label(b, structure=EIGHT)[1]


def has_2x2(sk):
    return bool((sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]).any())


# -- segment --------------------------------------------------------------


def test_segment_uniform_is_empty():
    assert not segment(np.full((64, 48), 128, np.uint8)).any()


def test_segment_one_stripe_block():
    img = np.full((16, 32), 100, np.uint8)
    img[:, 16:24] = 0  # left block uniform, right block half 0 / half 100
    # right block variance = 50^2 = 2500, left block 0
    mask = segment(img, block=16, var_threshold=100)
    assert not mask[:, :16].any()
    assert mask[:, 16:].all()


def test_segment_real_impression(master):
    mask = segment(render_gray(master, seed=0))
    assert 0 < area(mask) < mask.size


def test_segment_block_too_small():
    with pytest.raises(ValueError):
        segment(np.zeros((8, 8), np.uint8), block=3)


# -- binarize -------------------------------------------------------------


def test_binarize_black_region_is_all_false():
    img = np.zeros((16, 16), np.uint8)
    assert not binarize(img, np.ones_like(img, bool), 16).any()


def test_binarize_half_black_half_white():
    img = np.zeros((16, 16), np.uint8)
    img[:, 8:] = 255  # block mean 127.5
    b = binarize(img, np.ones_like(img, bool), 16)
    assert b[:, :8].all() and not b[:, 8:].any()


def test_binarize_empty_mask():
    img = np.random.default_rng(1).integers(0, 256, (20, 20)).astype(np.uint8)
    assert not binarize(img, np.zeros((20, 20), bool)).any()


@given(arrays(np.uint8, (20, 24)), arrays(bool, (20, 24)))
def test_binarize_false_outside_mask(img, mask):
    assert not (binarize(img, mask, 8) & ~mask).any()


# -- thin -----------------------------------------------------------------


def test_thin_three_wide_bar():
    b = np.zeros((9, 30), bool)
    b[3:6, 2:20] = True
    sk = thin(b)
    cols = np.nonzero(sk)[1]
    assert not has_2x2(sk)
    assert cols.min() == 2
    assert cols.max() >= 19 - 1
    # one pixel per column along the bar
    assert all(sk[:, c].sum() == 1 for c in range(cols.min(), cols.max() + 1))


def test_thin_single_pixel_and_empty():
    b = np.zeros((5, 5), bool)
    assert not thin(b).any()
    b[2, 2] = True
    assert np.array_equal(thin(b), b)


def test_thin_keeps_two_by_two_square_connected():
    b = np.zeros((6, 6), bool)
    b[2:4, 2:4] = True
    sk = thin(b)
    assert sk.sum() >= 1 and n_components(sk) == 1 and not has_2x2(sk)


def test_thin_x_junction_block_is_left():
    # each pixel of the block carries its own diagonal branch: no deletion can
    # remove a block pixel without disconnecting a branch
    b = np.zeros((8, 8), bool)
    b[3:5, 3:5] = True
    for (y, x) in ((2, 2), (1, 1), (2, 5), (1, 6), (5, 2), (6, 1), (5, 5), (6, 6)):
        b[y, x] = True
    sk = thin(b)
    assert n_components(sk) == 1


def _strokes(draw_pts, w):
    h = 40
    out = np.zeros((h, 48), bool)
    for x0, y0, x1, y1 in draw_pts:
        n = max(abs(x1 - x0), abs(y1 - y0)) + 1
        xs = np.round(np.linspace(x0, x1, n)).astype(int)
        ys = np.round(np.linspace(y0, y1, n)).astype(int)
        out[ys, xs] = True
    return ndimage.binary_dilation(out, EIGHT, iterations=w)


strokes = st.builds(
    _strokes,
    st.lists(st.tuples(st.integers(4, 43), st.integers(4, 35), st.integers(4, 43), st.integers(4, 35)), min_size=1, max_size=4),
    st.integers(1, 2),
)


@given(arrays(bool, st.tuples(st.integers(1, 16), st.integers(1, 16))))
def test_thin_properties_random(b):
    sk = thin(b)
    assert not (sk & ~b).any()
    assert n_components(sk) == n_components(b)
    assert np.array_equal(thin(sk), sk)


@given(strokes)
def test_thin_properties_strokes(b):
    sk = thin(b)
    assert not has_2x2(sk)
    assert not (sk & ~b).any()
    assert n_components(sk) == n_components(b)
    assert np.array_equal(thin(sk), sk)


def test_thin_master_is_fixed_point(master):
    sk = thin(master.skeleton)
    assert np.array_equal(sk, master.skeleton)
    assert not has_2x2(sk)


# -- prune_spurs / preprocess ---------------------------------------------


def test_prune_removes_short_spur_only():
    sk = np.zeros((12, 30), bool)
    sk[6, 2:28] = True
    sk[4:6, 10] = True  # 2-px side branch
    sk[0:6, 20] = True  # 6-px side branch
    out = prune_spurs(sk, 4)
    assert not out[4:6, 10].any()
    assert out[0:6, 20].all()
    assert out[6, 2:28].all()


def test_prune_keeps_plain_line_and_drops_tiny_fragment():
    sk = np.zeros((10, 30), bool)
    sk[5, 2:25] = True
    sk[1, 1:3] = True
    out = prune_spurs(sk, 4)
    assert out[5, 2:25].all() and not out[1].any()


def test_preprocess_shapes_and_containment(master):
    img = render_gray(master, seed=0)
    mask, binary, sk = preprocess(img)
    assert mask.shape == binary.shape == sk.shape == img.shape
    assert not (binary & ~mask).any() and not (sk & ~mask).any()
    assert not has_2x2(sk)


def test_area():
    assert area(np.zeros((3, 3), bool)) == 0
    assert area(np.ones((10, 10), bool)) == 100
    checker = (np.indices((4, 4)).sum(axis=0) % 2).astype(bool)
    assert area(checker) == 8
