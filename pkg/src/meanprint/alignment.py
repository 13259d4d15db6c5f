"""Genetic-algorithm search for the similarity transform between two minutiae
sets, and the two-correspondence refinement of its result."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (
    PARAM_RANGES,
    SimilarityTransform,
    clamp,
    exact_two_point,
    validate_range,
)
from .minutiae import Minutia, as_arrays

DEFAULT_SEED = 42
CHROMOSOME_BITS = (("s", 8), ("theta", 8), ("tx", 9), ("ty", 9))
TOURNAMENT = 3
SOFT_SCALE = 1.0  # width of the proximity tie-break, in units of T_d


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class GAConfig:
    pop_size: int = 500  # N_p
    generations: int = 15  # N_t
    p_mutation: float = 0.1  # P_m, spread over the chromosome bits
    p_crossover: float = 0.8  # P_s
    dist_threshold: float = 10.0  # T_d, pixels
    angle_tol: float = 15.0  # degrees
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("population must hold at least 2 individuals")
        if self.generations < 0:
            raise ValueError("generation count must be non-negative")
        for name in ("p_mutation", "p_crossover"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class AlignmentResult:
    transform: SimilarityTransform
    fitness: int
    generations_run: int
    history: list[int] = field(default_factory=list)  # best-ever fitness after each generation


def derive_seed(seed: int, *keys) -> np.random.SeedSequence:
    """Independent RNG stream for ``keys`` (ints or strings) under ``seed``."""
    words = [seed & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(k if isinstance(k, int) else zlib.crc32(str(k).encode()))
    return np.random.SeedSequence(words)


# -- matching -------------------------------------------------------------


def _batch_match(params: np.ndarray, query, ref, dist_threshold: float, angle_tol: float):
    """Greedy match counts and proximity scores for every row of ``params``.

    Rows are ``(s, theta, tx, ty)``; returns ``(counts, closeness)``.
    """
    qxy, qkind, qang = query
    rxy, rkind, rang = ref
    counts = np.zeros(params.shape[0], dtype=np.int64)
    near = np.zeros(params.shape[0])
    # kinds never compete for the same ref minutia, so each kind is matched alone
    for kind in (False, True):
        qs, rs = qkind == kind, rkind == kind
        if qs.any() and rs.any():
            c, g = _greedy_counts(params, qxy[qs], qang[qs], rxy[rs], rang[rs], dist_threshold, angle_tol)
            counts += c
            near += g
    return counts, near


_CHUNK_CELLS = 2_000_000  # bound on population x query x ref cells per block


def _greedy_counts(params, qxy, qang, rxy, rang, dist_threshold, angle_tol):
    step = max(1, _CHUNK_CELLS // max(1, len(qxy) * len(rxy)))
    if params.shape[0] > step:
        parts = [
            _greedy_block(params[i : i + step], qxy, qang, rxy, rang, dist_threshold, angle_tol)
            for i in range(0, params.shape[0], step)
        ]
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(2))
    return _greedy_block(params, qxy, qang, rxy, rang, dist_threshold, angle_tol)


def _greedy_block(params, qxy, qang, rxy, rang, dist_threshold, angle_tol):
    npop, m = params.shape[0], len(rxy)
    s, th, tx, ty = params.T
    rad = np.radians(th)
    c, sn = s * np.cos(rad), s * np.sin(rad)
    # same operation order as SimilarityTransform.apply
    mx = c[:, None] * qxy[:, 0] - sn[:, None] * qxy[:, 1] + tx[:, None]
    my = sn[:, None] * qxy[:, 0] + c[:, None] * qxy[:, 1] + ty[:, None]
    dx = mx[:, :, None] - rxy[:, 0]
    d2 = dx * dx
    dy = my[:, :, None] - rxy[:, 1]
    d2 += dy * dy  # (P, n, m)
    # proximity of each transported query to its closest ref, matched or not
    closeness = np.exp(-d2.min(axis=2) / (2 * (SOFT_SCALE * dist_threshold) ** 2)).sum(axis=1)
    near = d2 < dist_threshold**2
    p_i, q_i, r_i = np.nonzero(near)
    # transported query angle is qang - theta
    da = np.abs(np.mod(qang[q_i] - th[p_i] - rang[r_i], 360.0))
    da = np.minimum(da, 360.0 - da)
    bad = da >= angle_tol
    near[p_i[bad], q_i[bad], r_i[bad]] = False
    active = np.nonzero(near.any(axis=(0, 2)))[0]
    cost = np.where(near, d2, np.inf)
    claimed = np.zeros((npop, m), dtype=bool)
    counts = np.zeros(npop, dtype=np.int64)
    rows = np.arange(npop)
    for qi in active:
        row = np.where(claimed, np.inf, cost[:, qi, :])
        j = np.argmin(row, axis=1)
        best = row[rows, j]
        hit = np.isfinite(best)
        claimed[rows[hit], j[hit]] = True
        counts += hit
    return counts, closeness


def match_pairs(
    t: SimilarityTransform,
    query: Sequence[Minutia],
    ref: Sequence[Minutia],
    dist_threshold: float = 10.0,
    angle_tol: float = 15.0,
) -> list[tuple[int, int]]:
    """Greedy assignment ``[(query index, ref index), ...]`` under ``t``.

    Query minutiae are taken in list order; each claims the nearest unclaimed
    ref minutia of the same kind within ``dist_threshold`` whose direction
    differs by less than ``angle_tol``.  Ties go to the lower ref index.
    """
    pairs = []
    claimed: set[int] = set()
    for qi, q in enumerate(query):
        mx, my = t.apply(q.x, q.y)
        mang = t.map_angle(q.angle)
        best, best_d2 = -1, math.inf
        for ri, r in enumerate(ref):
            if ri in claimed or r.kind != q.kind:
                continue
            dx, dy = mx - r.x, my - r.y
            d2 = dx * dx + dy * dy
            da = abs((mang - r.angle) % 360.0)
            da = min(da, 360.0 - da)
            if d2 < dist_threshold**2 and da < angle_tol and d2 < best_d2:
                best, best_d2 = ri, d2
        if best >= 0:
            claimed.add(best)
            pairs.append((qi, best))
    return pairs


def fitness(
    t: SimilarityTransform,
    query: Sequence[Minutia],
    ref: Sequence[Minutia],
    dist_threshold: float = 10.0,
    angle_tol: float = 15.0,
) -> int:
    return len(match_pairs(t, query, ref, dist_threshold, angle_tol))


# -- genetic search -------------------------------------------------------


def _field_layout():
    layout, pos = [], 0
    for name, bits in CHROMOSOME_BITS:
        layout.append((name, pos, bits))
        pos += bits
    return layout, pos


_LAYOUT, N_BITS = _field_layout()


def decode(pop: np.ndarray) -> np.ndarray:
    """Bit rows ``(P, N_BITS)`` -> parameter rows ``(P, 4)`` inside the legal box."""
    out = np.empty((pop.shape[0], 4))
    for k, (name, pos, bits) in enumerate(_LAYOUT):
        weights = 1 << np.arange(bits - 1, -1, -1)
        # Gray code: neighbouring values differ by a single bit flip
        gray = pop[:, pos : pos + bits].astype(np.int64)
        binary = np.bitwise_xor.accumulate(gray, axis=1)
        v = binary @ weights
        lo, hi = PARAM_RANGES[name]
        out[:, k] = lo + (hi - lo) * v / ((1 << bits) - 1)
    return out


def _tournament(rng: np.random.Generator, keys: np.ndarray, count: int) -> np.ndarray:
    picks = rng.integers(0, len(keys), size=(count, TOURNAMENT))
    winners = np.argmax(keys[picks], axis=1)
    return picks[np.arange(count), winners]


def _score(params, q, r, cfg):
    """Selection key: match count, ties broken by a smooth proximity score.

    The tie-break averages a Gaussian of each transported query minutia's
    distance to its nearest same-kind ref.  It lies in [0, 1), so ordering
    by key never trades away a matched pair, while unmatched minutiae still
    pull the search towards them.
    """
    counts, close = _batch_match(params, q, r, cfg.dist_threshold, cfg.angle_tol)
    return counts, counts + 0.999 * close / max(len(q[0]), 1)


def ga_align(
    query: Sequence[Minutia],
    ref: Sequence[Minutia],
    cfg: GAConfig = GAConfig(),
    rng: np.random.Generator | None = None,
) -> AlignmentResult:
    """Search the transform mapping ``query`` onto ``ref`` that matches most minutiae.

    Generational GA over a 34-bit Gray-coded chromosome with tournament
    selection, single-point crossover, per-bit mutation and one elite.
    """
    if len(query) < 2 or len(ref) < 2:
        raise AlignmentError(f"need >= 2 minutiae on each side (got {len(query)} and {len(ref)})")
    if rng is None:
        rng = np.random.default_rng(derive_seed(cfg.seed))
    q, r = as_arrays(list(query)), as_arrays(list(ref))
    p_bit = cfg.p_mutation / N_BITS

    pop = rng.integers(0, 2, size=(cfg.pop_size, N_BITS), dtype=np.uint8)
    params = decode(pop)
    counts, key = _score(params, q, r, cfg)
    b = int(np.argmax(key))
    best_bits, best_params, best_key, best_count = pop[b].copy(), params[b].copy(), key[b], int(counts[b])
    history = [best_count]

    n_pairs = cfg.pop_size // 2
    for _ in range(cfg.generations):
        mothers = pop[_tournament(rng, key, n_pairs)]
        fathers = pop[_tournament(rng, key, n_pairs)]
        cross = rng.random(n_pairs) < cfg.p_crossover
        cuts = rng.integers(1, N_BITS, size=n_pairs)
        swap = cross[:, None] & (np.arange(N_BITS)[None, :] >= cuts[:, None])
        kids = np.concatenate([np.where(swap, fathers, mothers), np.where(swap, mothers, fathers)])
        kids = kids[: cfg.pop_size - 1]
        kids ^= (rng.random(kids.shape) < p_bit).astype(np.uint8)
        pop = np.concatenate([best_bits[None, :], kids])  # elite survives unchanged
        params = decode(pop)
        counts, key = _score(params, q, r, cfg)
        b = int(np.argmax(key))
        if key[b] > best_key:
            best_bits, best_params, best_key, best_count = pop[b].copy(), params[b].copy(), key[b], int(counts[b])
        history.append(best_count)

    t = clamp(SimilarityTransform(*(float(v) for v in best_params)))
    return AlignmentResult(t, fitness(t, query, ref, cfg.dist_threshold, cfg.angle_tol), cfg.generations, history)


# -- refinement -----------------------------------------------------------


def select_correspondences(
    query: Sequence[Minutia],
    ref: Sequence[Minutia],
    t: SimilarityTransform,
    dist_threshold: float = 10.0,
    angle_tol: float = 15.0,
):
    """Two matched pairs ``(A, B, C, D)`` with ``A<->C``, ``B<->D`` and ``|AB|`` maximal.

    Points are ``(x, y)`` tuples; returns ``None`` with fewer than two matches.
    """
    pairs = match_pairs(t, query, ref, dist_threshold, angle_tol)
    best, best_d2 = None, 0.0
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            a, b = query[pairs[i][0]], query[pairs[j][0]]
            d2 = (a.x - b.x) ** 2 + (a.y - b.y) ** 2
            if d2 > best_d2:
                best, best_d2 = (i, j), d2
    if best is None:
        return None
    (qa, rc), (qb, rd) = pairs[best[0]], pairs[best[1]]
    pt = lambda m: (m.x, m.y)  # noqa: E731
    return pt(query[qa]), pt(query[qb]), pt(ref[rc]), pt(ref[rd])


def _sign(v: float) -> float:
    return -1.0 if v < 0 else 1.0


def refine(old: SimilarityTransform, a, b, c, d) -> SimilarityTransform:
    """Recompute ``old`` from correspondences ``a<->c`` and ``b<->d``, keeping its signs.

    Scale is the length ratio ``|cd| / |ab|``, rotation the unsigned angle
    between the two segments, translation the absolute coordinate offsets
    of ``a`` and ``c``; each takes the sign of the old value (zero counts as
    positive).  The result is clamped into the legal box.
    """
    abx, aby = b[0] - a[0], b[1] - a[1]
    cdx, cdy = d[0] - c[0], d[1] - c[1]
    ab, cd = math.hypot(abx, aby), math.hypot(cdx, cdy)
    if ab == 0:
        raise AlignmentError("coincident correspondence points")
    s = _sign(old.s) * cd / ab
    # unsigned angle between the segments, in [0, 180]
    angle = math.degrees(math.atan2(abs(abx * cdy - aby * cdx), abx * cdx + aby * cdy))
    theta = _sign(old.theta) * angle
    tx = _sign(old.tx) * abs(a[0] - c[0])
    ty = _sign(old.ty) * abs(a[1] - c[1])
    return clamp(SimilarityTransform(s, theta, tx, ty))


REFINE_MODES = ("paper", "exact")


def align_pair(
    query: Sequence[Minutia],
    ref: Sequence[Minutia],
    cfg: GAConfig,
    rng: np.random.Generator,
    refine_mode: str = "paper",
) -> AlignmentResult:
    """GA search followed by two-correspondence refinement when possible."""
    if refine_mode not in REFINE_MODES:
        raise ValueError(f"unknown refine mode {refine_mode!r}")
    res = ga_align(query, ref, cfg, rng)
    corr = select_correspondences(query, ref, res.transform, cfg.dist_threshold, cfg.angle_tol)
    if corr is None:
        return res
    if refine_mode == "paper":
        t = refine(res.transform, *corr)
    else:
        t = clamp(exact_two_point(*corr))
    assert validate_range(t) is None
    return replace(res, transform=t, fitness=fitness(t, query, ref, cfg.dist_threshold, cfg.angle_tol))


def choose_mean(areas: Sequence[int]) -> int:
    """Index of the largest area; the first one wins ties."""
    if len(areas) == 0:
        raise ValueError("no templates to choose from")
    return int(np.argmax(np.asarray(areas)))
