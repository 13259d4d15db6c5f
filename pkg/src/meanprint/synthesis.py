"""Fuse several impressions of one finger into a single mean fingerprint.

Pipeline: pick the largest-area impression as the base, align every other
impression to it, transport ridge pixels the base lacks, reconnect ridges
broken by that transport, transport minutiae, then drop minutiae that no
longer sit on a matching skeleton point.
"""

from __future__ import annotations

import logging
from concurrent.futures import Executor
from typing import Sequence

import numpy as np
from scipy import ndimage

from .alignment import AlignmentError, GAConfig, align_pair, choose_mean, derive_seed
from .geometry import SimilarityTransform, invert
from .minutiae import BIFURCATION, TERMINATION, Minutia, crossing_map
from .template import FingerprintTemplate, MeanFingerprint, ParamEntry

log = logging.getLogger(__name__)

DEFAULT_R = 3  # ridge-fusion dedup radius, px
WALK_CAP = 512
JOIN_PASSES = 8

_GROW = np.ones((3, 3), dtype=bool)


class SynthesisError(ValueError):
    pass


def _disk(radius: float) -> np.ndarray:
    """Footprint of offsets with Euclidean length strictly below ``radius``."""
    k = int(np.ceil(radius))
    yy, xx = np.mgrid[-k : k + 1, -k : k + 1]
    return (xx * xx + yy * yy) < radius * radius


def _near(sk: np.ndarray, radius: float) -> np.ndarray:
    """Pixels with some true pixel of ``sk`` at distance ``< radius``."""
    if radius <= 0:
        return np.zeros_like(sk)
    return ndimage.binary_dilation(sk, structure=_disk(radius))


def _fill(mean: MeanFingerprint, xs: np.ndarray, ys: np.ndarray) -> int:
    """Set pixels in meanF, growing its mask around them; returns pixels added."""
    if len(xs) == 0:
        return 0
    new = np.zeros_like(mean.skeleton)
    new[ys, xs] = True
    new &= ~mean.skeleton
    added = int(new.sum())
    if added:
        mean.skeleton |= new
        mean.mask |= ndimage.binary_dilation(new, structure=_GROW)
    return added


def _in_bounds(pts: np.ndarray, shape) -> np.ndarray:
    h, w = shape
    return (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)


def add_ridges(mean: MeanFingerprint, tmpl: FingerprintTemplate, t: SimilarityTransform, r: float = DEFAULT_R) -> int:
    """Copy template ridge pixels that have no meanF ridge within ``r``; returns count added.

    Candidates are judged against meanF as it was before this call, then all
    filled at once.
    """
    ys, xs = np.nonzero(tmpl.skeleton)
    if len(xs) == 0:
        return 0
    pts = t.apply_round_array(np.column_stack([xs, ys]))
    pts = pts[_in_bounds(pts, mean.skeleton.shape)]
    taken = _near(mean.skeleton, r)
    pts = pts[~taken[pts[:, 1], pts[:, 0]]]
    return _fill(mean, pts[:, 0], pts[:, 1])


def _touched(sk: np.ndarray, x: int, y: int) -> set[tuple[int, int]]:
    """meanF pixels equal or 8-adjacent to ``(x, y)``."""
    h, w = sk.shape
    return {
        (xx, yy)
        for yy in range(max(y - 1, 0), min(y + 2, h))
        for xx in range(max(x - 1, 0), min(x + 2, w))
        if sk[yy, xx]
    }


def _ring_neighbours(sk: np.ndarray, x: int, y: int) -> list[tuple[int, int]]:
    h, w = sk.shape
    out = []
    for yy in range(y - 1, y + 2):
        for xx in range(x - 1, x + 2):
            if (xx, yy) != (x, y) and 0 <= yy < h and 0 <= xx < w and sk[yy, xx]:
                out.append((xx, yy))
    return out


def trace_connected(
    tmpl_skeleton: np.ndarray,
    start: tuple[int, int],
    t: SimilarityTransform,
    mean_skeleton: np.ndarray,
    anchor: tuple[int, int] | None = None,
) -> list[tuple[int, int]]:
    """Walk template ridges leaving ``start`` and return the walked pixels in meanF space.

    Each walk begins at a true neighbour of ``start`` and steps to the first
    unvisited true neighbour (row-major order).  The pixel whose mapped
    position touches (equals or is 8-adjacent to) an existing meanF pixel is
    kept and ends the walk, as does a dead end or ``WALK_CAP`` steps.

    ``anchor`` is the meanF endpoint being extended: it never counts as a
    touch, and a walk whose first pixel touches the anchor's own ridge
    neighbours is dropped, since it runs back along the ridge being extended.
    """
    reach = ndimage.binary_dilation(mean_skeleton, structure=_GROW)
    return _trace(tmpl_skeleton, start, t, mean_skeleton, reach, anchor)


def _trace(tmpl_skeleton, start, t, mean_skeleton, reach, anchor):
    x0, y0 = start
    if not tmpl_skeleton[y0, x0]:
        raise ValueError(f"start pixel {start} is not a ridge pixel")
    skip, home = set(), set()
    if anchor is not None:
        skip = {anchor}
        home = _touched(mean_skeleton, *anchor) - skip
    h, w = mean_skeleton.shape
    out: list[tuple[int, int]] = []
    for first in _ring_neighbours(tmpl_skeleton, x0, y0):
        visited = {start, first}
        cur = first
        walk: list[tuple[int, int]] = []
        for step in range(WALK_CAP):
            mx, my = t.apply_round(*cur)
            if not (0 <= mx < w and 0 <= my < h):
                break
            # reach is the 3x3 dilation of meanF: a cheap test before the exact set
            hit = _touched(mean_skeleton, mx, my) - skip if reach[my, mx] else set()
            if step == 0 and hit & home:
                break
            walk.append((mx, my))
            if hit:
                break
            nxt = [p for p in _ring_neighbours(tmpl_skeleton, *cur) if p not in visited]
            if not nxt:
                break
            cur = nxt[0]
            visited.add(cur)
        out.extend(walk)
    return out


def _offsets_by_distance(r: float) -> np.ndarray:
    """``(dx, dy)`` rows with length ``< r``, nearest first, ties in row-major order."""
    k = int(np.ceil(r))
    offs = [(dx, dy) for dy in range(-k, k + 1) for dx in range(-k, k + 1) if dx * dx + dy * dy < r * r]
    return np.array(sorted(offs, key=lambda o: (o[0] ** 2 + o[1] ** 2, o[1], o[0])), dtype=int).reshape(-1, 2)


def _nearest_ridge(sk: np.ndarray, pts: np.ndarray, r: float) -> np.ndarray:
    """Closest true pixel of ``sk`` within ``r`` of each point (lowest row-major on ties), or -1."""
    h, w = sk.shape
    found = np.full(pts.shape, -1, dtype=int)
    open_ = np.ones(len(pts), dtype=bool)
    for dx, dy in _offsets_by_distance(r):
        cx, cy = pts[:, 0] + dx, pts[:, 1] + dy
        ok = open_ & (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        ok[ok] = sk[cy[ok], cx[ok]]
        found[ok] = np.column_stack([cx[ok], cy[ok]])
        open_ &= ~ok
    return found


def join_ridges(
    mean: MeanFingerprint,
    templates: Sequence[FingerprintTemplate],
    transforms: Sequence[SimilarityTransform],
    r: float = DEFAULT_R,
) -> int:
    """Extend meanF ridge endpoints along the template ridges they came from.

    Repeats full passes until one adds nothing (at most ``JOIN_PASSES``);
    returns the number of pixels added.
    """
    total = 0
    for _ in range(JOIN_PASSES):
        added = 0
        for tmpl, t in zip(templates, transforms):
            back = invert(t)
            ends = np.argwhere(crossing_map(mean.skeleton) == 1)[:, ::-1]  # (x, y) rows
            if len(ends) == 0:
                break
            if not tmpl.skeleton.any():
                continue
            starts = _nearest_ridge(tmpl.skeleton, back.apply_round_array(ends), r)
            linked: list[tuple[int, int]] = []
            snapshot = mean.skeleton.copy()
            reach = ndimage.binary_dilation(snapshot, structure=_GROW)
            for (ex, ey), (kx, ky) in zip(ends.tolist(), starts.tolist()):
                if kx >= 0:
                    linked += _trace(tmpl.skeleton, (kx, ky), t, snapshot, reach, anchor=(ex, ey))
            if linked:
                arr = np.array(linked)
                added += _fill(mean, arr[:, 0], arr[:, 1])
        total += added
        if added == 0:
            break
    return total


def merge_minutiae(mean: MeanFingerprint, tmpl: FingerprintTemplate, t: SimilarityTransform, dist_threshold: float = 10.0) -> int:
    """Append transported template minutiae with no same-kind meanF minutia within ``dist_threshold``."""
    h, w = mean.skeleton.shape
    added = 0
    for m in tmpl.minutiae:
        x, y = t.apply_round(m.x, m.y)
        if not (0 <= x < w and 0 <= y < h):
            continue
        clash = any(
            e.kind == m.kind and (e.x - x) ** 2 + (e.y - y) ** 2 < dist_threshold**2 for e in mean.minutiae
        )
        if not clash:
            mean.minutiae.append(Minutia(x, y, m.kind, t.map_angle(m.angle), m.degraded))
            added += 1
    return added


def validate_minutiae(mean: MeanFingerprint) -> int:
    """Keep terminations on CN=1 pixels and bifurcations on CN>=3 pixels; returns count dropped."""
    cn = crossing_map(mean.skeleton)
    kept = []
    for m in mean.minutiae:
        c = cn[m.y, m.x] if mean.skeleton[m.y, m.x] else -1
        if (m.kind == TERMINATION and c == 1) or (m.kind == BIFURCATION and c >= 3):
            kept.append(m)
    dropped = len(mean.minutiae) - len(kept)
    mean.minutiae = kept
    return dropped


def _align_one(args):
    tmpl, base, cfg, refine_mode = args
    rng = np.random.default_rng(derive_seed(cfg.seed, tmpl.id))
    try:
        res = align_pair(tmpl.minutiae, base.minutiae, cfg, rng, refine_mode)
    except AlignmentError as exc:
        return ParamEntry(tmpl.id, None, 0, str(exc).replace("\n", " "))
    return ParamEntry(tmpl.id, res.transform, res.fitness)


def build_param_list(
    templates: Sequence[FingerprintTemplate],
    mean_index: int,
    cfg: GAConfig = GAConfig(),
    refine_mode: str = "paper",
    executor: Executor | None = None,
) -> list[ParamEntry]:
    """Transform of every non-base template into the base's frame, in input order."""
    base = templates[mean_index]
    jobs = [(tm, base, cfg, refine_mode) for i, tm in enumerate(templates) if i != mean_index]
    if executor is None:
        return [_align_one(j) for j in jobs]
    return list(executor.map(_align_one, jobs))


def synthesize(
    templates: Sequence[FingerprintTemplate],
    cfg: GAConfig = GAConfig(),
    r: float = DEFAULT_R,
    refine_mode: str = "paper",
    executor: Executor | None = None,
) -> MeanFingerprint:
    if not templates:
        raise SynthesisError("no templates to synthesize from")
    base_i = choose_mean([tm.area for tm in templates])
    mean = MeanFingerprint.from_template(templates[base_i])
    if len(templates) == 1:
        return mean
    mean.params = build_param_list(templates, base_i, cfg, refine_mode, executor)
    by_id = {tm.id: tm for tm in templates}
    usable = [(by_id[p.id], p.transform) for p in mean.params if not p.failed]
    for p in mean.params:
        if p.failed:
            log.warning("template %s not aligned: %s", p.id, p.error)
    if not usable:
        raise SynthesisError("every alignment failed")
    for tm, t in usable:
        add_ridges(mean, tm, t, r)
    join_ridges(mean, [tm for tm, _ in usable], [t for _, t in usable], r)
    for tm, t in usable:
        merge_minutiae(mean, tm, t, cfg.dist_threshold)
    validate_minutiae(mean)
    return mean
