"""Procedural master prints and damaged impressions with known ground truth.

A master is a field of wavy, roughly parallel 1-pixel ridges clipped to an
elliptical finger area, with planted ridge gaps (two terminations each) and
forks where a ridge branches off its neighbour (a bifurcation plus the
termination of the ridge it replaces).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import SimilarityTransform, invert, validate_range
from .minutiae import extract_minutiae
from .raster import thin
from .template import FingerprintTemplate

MIN_PERIOD = 5
FEATURE_SPACING = 24  # px between planted features


class OutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    dropout: float = 0.0  # per-pixel removal probability
    breaks: int = 0  # number of 3-pixel ridge gaps
    crop: tuple[int, int, int, int] | None = None  # (x0, y0, x1, y1), exclusive end

    def __post_init__(self):
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError(f"dropout must lie in [0, 1], got {self.dropout}")
        if self.breaks < 0:
            raise ValueError("break count must be non-negative")


@dataclass
class Impression:
    template: FingerprintTemplate
    truth: SimilarityTransform  # maps master coordinates into this impression


def _ellipse(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[:height, :width]
    cx = width / 2 + rng.uniform(-4, 4)
    cy = height / 2 + rng.uniform(-4, 4)
    ax = width * rng.uniform(0.40, 0.44)
    ay = height * rng.uniform(0.43, 0.46)
    return ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0


def gen_master(width: int = 288, height: int = 384, ridge_period: int = 8, seed: int = 0) -> FingerprintTemplate:
    """Procedural master print; ``ridge_period`` is the ridge spacing in pixels."""
    if ridge_period < MIN_PERIOD:
        raise ValueError(f"ridge period {ridge_period} is below the thinning resolution ({MIN_PERIOD} px)")
    rng = np.random.default_rng(seed)
    mask = _ellipse(width, height, rng)

    amp, wave = rng.uniform(6, 10), rng.uniform(150, 190)
    amp2, wave2 = rng.uniform(3, 6), rng.uniform(200, 260)
    ph, ph2 = rng.uniform(0, 2 * math.pi, size=2)
    xs = np.arange(width)
    n_lines = height // ridge_period + 4
    offset = -2 * ridge_period + rng.uniform(0, ridge_period)
    lines = []
    for k in range(n_lines):
        y = (
            offset
            + k * ridge_period
            + amp * np.sin(2 * math.pi * xs / wave + ph)
            + amp2 * np.sin(2 * math.pi * xs / wave2 + ph2) * (k / n_lines)
        )
        lines.append(np.floor(y + 0.5).astype(int))
    lines = np.array(lines)  # (n_lines, width) row of each ridge per column

    sk = np.zeros((height, width), dtype=bool)
    for k in range(n_lines):
        ok = (lines[k] >= 0) & (lines[k] < height)
        sk[lines[k][ok], xs[ok]] = True
    sk &= mask

    interior = ndimage.minimum_filter(mask.astype(np.uint8), size=2 * 20 + 1, mode="constant").astype(bool)
    planted: list[tuple[int, int]] = []

    def far_enough(x, y):
        return all((x - px) ** 2 + (y - py) ** 2 >= FEATURE_SPACING**2 for px, py in planted)

    def flat(k, x):
        return lines[k][x - 2] == lines[k][x - 1] == lines[k][x] == lines[k][x + 1] == lines[k][x + 2]

    n_gaps, n_forks = 12, 10
    tries = 0
    while (n_gaps or n_forks) and tries < 20000:
        tries += 1
        k = int(rng.integers(1, n_lines - 2))
        x = int(rng.integers(48, width - 48))
        y = lines[k][x]
        if not (0 <= y < height) or not interior[y, x]:
            continue
        if n_forks and tries % 2 == 0:
            # ridge k+1 starts by branching off ridge k: a bifurcation at
            # (x, y) plus a termination where the cut part of ridge k+1 resumes
            x_join = x + ridge_period
            x_end = x_join - int(rng.integers(18, 25))
            y_join, y_end = lines[k + 1][x_join], lines[k + 1][x_end]
            if not (0 <= y_end < height and interior[y_end, x_end] and flat(k, x)):
                continue
            if not (far_enough(x, y) and far_enough(x_end, y_end)):
                continue
            sk[lines[k + 1][x_end + 1 : x_join], np.arange(x_end + 1, x_join)] = False
            sk |= _draw_segments(sk.shape, np.array([[x, y]]), np.array([[x_join, y_join]]))
            planted += [(x, y), (x_end, y_end)]
            n_forks -= 1
        elif n_gaps:
            g = int(rng.integers(12, 17))
            x2 = x + g + 1
            y2 = lines[k][x2]
            if not (0 <= y2 < height and interior[y2, x2]):
                continue
            if not (far_enough(x, y) and far_enough(x2, y2)):
                continue
            sk[lines[k][x + 1 : x2], np.arange(x + 1, x2)] = False
            planted += [(x, y), (x2, y2)]
            n_gaps -= 1
    sk = thin(sk & mask)
    return FingerprintTemplate(f"master{seed}", mask, sk, extract_minutiae(sk, mask))


def _draw_segments(shape, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rasterize straight segments p[i] -> q[i] (integer (x, y) rows)."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    steps = max(int(np.max(np.abs(q - p), initial=0)), 1)  # DDA: one sample per major-axis pixel
    for k in range(steps + 1):
        f = k / steps
        pts = np.floor(p + (q - p) * f + 0.5).astype(int)
        ok = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
        out[pts[ok, 1], pts[ok, 0]] = True
    return out


def transport_skeleton(sk: np.ndarray, t: SimilarityTransform, shape=None) -> np.ndarray:
    """Move ridge pixels by ``t`` (rounded), reconnect former neighbours, re-thin."""
    shape = sk.shape if shape is None else shape
    ys, xs = np.nonzero(sk)
    if len(xs) == 0:
        return np.zeros(shape, dtype=bool)
    mapped = t.apply_round_array(np.column_stack([xs, ys]))
    out = np.zeros(shape, dtype=bool)
    h, w = sk.shape
    for dy, dx in ((0, 1), (1, -1), (1, 0), (1, 1)):
        ny, nx = ys + dy, xs + dx
        ok = (ny >= 0) & (ny < h) & (nx >= 0) & (nx < w)
        ok[ok] = sk[ny[ok], nx[ok]]
        if ok.any():
            q = t.apply_round_array(np.column_stack([nx[ok], ny[ok]]))
            out |= _draw_segments(shape, mapped[ok], q)
    inb = (mapped[:, 0] >= 0) & (mapped[:, 0] < shape[1]) & (mapped[:, 1] >= 0) & (mapped[:, 1] < shape[0])
    out[mapped[inb, 1], mapped[inb, 0]] = True
    return thin(out)


def transport_mask(mask: np.ndarray, t: SimilarityTransform, shape=None) -> np.ndarray:
    """Nearest-neighbour backward warp of a mask."""
    shape = mask.shape if shape is None else shape
    ys, xs = np.mgrid[: shape[0], : shape[1]]
    src = invert(t).apply_round_array(np.column_stack([xs.ravel(), ys.ravel()]))
    h, w = mask.shape
    ok = (src[:, 0] >= 0) & (src[:, 0] < w) & (src[:, 1] >= 0) & (src[:, 1] < h)
    out = np.zeros(shape[0] * shape[1], dtype=bool)
    out[ok] = mask[src[ok, 1], src[ok, 0]]
    return out.reshape(shape)


def gen_impression(
    master: FingerprintTemplate,
    t: SimilarityTransform,
    noise: NoiseParams = NoiseParams(),
    seed: int = 0,
    id: str | None = None,
) -> Impression:
    """One damaged impression of ``master`` seen through ``t``."""
    bad = validate_range(t)
    if bad is not None:
        raise OutOfRangeError(f"transform parameter {bad} outside the legal range: {t}")
    rng = np.random.default_rng(seed)
    shape = master.skeleton.shape
    sk = transport_skeleton(master.skeleton, t, shape)
    mask = transport_mask(master.mask, t, shape)
    if noise.crop is not None:
        x0, y0, x1, y1 = noise.crop
        keep = np.zeros(shape, dtype=bool)
        keep[max(y0, 0) : max(y1, 0), max(x0, 0) : max(x1, 0)] = True
        mask &= keep
    sk &= mask
    if noise.dropout > 0:
        sk &= rng.random(shape) >= noise.dropout
    for _ in range(noise.breaks):
        ys, xs = np.nonzero(sk)
        if len(xs) == 0:
            break
        i = int(rng.integers(len(xs)))
        sk[max(ys[i] - 1, 0) : ys[i] + 2, max(xs[i] - 1, 0) : xs[i] + 2] = False
    tmpl = FingerprintTemplate(id or f"{master.id}_imp", mask, sk, extract_minutiae(sk, mask))
    return Impression(tmpl, t)


def sample_transform(
    rng: np.random.Generator,
    shape: tuple[int, int],
    theta_range=(-30.0, 30.0),
    s_range=(0.97, 1.2),
    shift=20.0,
    max_tries: int = 1000,
) -> SimilarityTransform:
    """Random in-range transform keeping the canvas centre near the centre.

    Rotation and scale act about the top-left origin, so the translation is
    chosen to bring the centre back (plus up to ``shift`` px); draws whose
    translation leaves the legal box are rejected.
    """
    h, w = shape
    cx, cy = w / 2, h / 2
    for _ in range(max_tries):
        s = rng.uniform(*s_range)
        theta = rng.uniform(*theta_range)
        lin = SimilarityTransform(s, theta, 0, 0)
        mx, my = lin.apply(cx, cy)
        tx = cx - mx + rng.uniform(-shift, shift)
        ty = cy - my + rng.uniform(-shift, shift)
        t = SimilarityTransform(s, theta, tx, ty)
        if validate_range(t) is None:
            return t
    raise RuntimeError("could not sample an in-range transform")


def render_gray(tmpl: FingerprintTemplate, seed: int = 0, ridge: int = 50, valley: int = 200, noise: float = 6.0) -> np.ndarray:
    """Grayscale image: 3-pixel dark ridges on a flat light background.

    The background outside the finger carries the valley level too, so block
    variance (not brightness) separates the finger and no tile mixes ridges
    with a brighter surround.
    """
    rng = np.random.default_rng(seed)
    ridges = ndimage.binary_dilation(tmpl.skeleton, structure=np.ones((3, 3), dtype=bool))
    img = np.full(tmpl.shape, float(valley))
    img[ridges & tmpl.mask] = ridge
    img += rng.normal(0, noise, size=tmpl.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
