"""Crossing-number minutiae extraction on 1-pixel-wide skeletons."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import ndimage

from .netpbm import atomic_write
from .raster import RING, neighbour_codes

TERMINATION = "T"
BIFURCATION = "B"

DEFAULT_TRACE_LEN = 5
DEFAULT_BORDER_MARGIN = 8


@dataclass(frozen=True)
class Minutia:
    x: int
    y: int
    kind: str  # TERMINATION or BIFURCATION
    angle: float  # degrees in (-180, 180], counter-clockwise from +x
    degraded: bool = False


def _crossing_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint8)
    for code in range(256):
        n = [(code >> i) & 1 for i in range(8)]
        table[code] = sum(abs(n[i] - n[(i + 1) % 8]) for i in range(8)) // 2
    return table


_CN = _crossing_table()


def crossing_number(sk: np.ndarray, x: int, y: int) -> int:
    """Half the number of 0/1 changes around the 8-neighbour ring of ``(x, y)``."""
    h, w = sk.shape
    ring = []
    for dr, dc in RING:
        r, c = y + dr, x + dc
        ring.append(1 if 0 <= r < h and 0 <= c < w and sk[r, c] else 0)
    return sum(abs(ring[i] - ring[(i + 1) % 8]) for i in range(8)) // 2


def crossing_map(sk: np.ndarray) -> np.ndarray:
    """Crossing number of every pixel (0 where the pixel itself is false)."""
    cn = _CN[neighbour_codes(sk)]
    return np.where(sk, cn, 0)


def endpoints(sk: np.ndarray) -> np.ndarray:
    return crossing_map(sk) == 1


def _neighbours(sk: np.ndarray, x: int, y: int) -> list[tuple[int, int]]:
    """True 8-neighbours of ``(x, y)`` in row-major order."""
    h, w = sk.shape
    out = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            r, c = y + dy, x + dx
            if 0 <= r < h and 0 <= c < w and sk[r, c]:
                out.append((c, r))
    return out


def _walk(sk: np.ndarray, start: tuple[int, int], first: tuple[int, int], steps: int, blocked: set) -> tuple[int, int, int]:
    """Follow a ridge from ``start`` through ``first``; return (x, y, steps taken)."""
    visited = set(blocked)
    visited.add(start)
    cur = first
    visited.add(cur)
    taken = 1
    while taken < steps:
        nxt = [p for p in _neighbours(sk, *cur) if p not in visited]
        if not nxt:
            break
        # prefer 4-connected continuation so staircase corners are not skipped
        four = [p for p in nxt if p[0] == cur[0] or p[1] == cur[1]]
        cur = (four or nxt)[0]
        visited.add(cur)
        taken += 1
    return cur[0], cur[1], taken


def _branches(sk: np.ndarray, x: int, y: int) -> list[list[tuple[int, int]]]:
    """Group the true ring neighbours of ``(x, y)`` into contiguous runs."""
    h, w = sk.shape
    ring = []
    for dr, dc in RING:
        r, c = y + dr, x + dc
        ring.append((c, r) if 0 <= r < h and 0 <= c < w and sk[r, c] else None)
    if all(p is not None for p in ring):
        return [[p for p in ring]]
    # rotate so the ring starts right after an empty slot
    k = next(i for i, p in enumerate(ring) if p is None)
    ring = ring[k + 1 :] + ring[: k + 1]
    runs, cur = [], []
    for p in ring:
        if p is None:
            if cur:
                runs.append(cur)
            cur = []
        else:
            cur.append(p)
    if cur:
        runs.append(cur)
    return runs


def _run_head(run: list[tuple[int, int]], x: int, y: int) -> tuple[int, int]:
    # a 4-neighbour in the run leads along the ridge; fall back to the first
    for p in run:
        if p[0] == x or p[1] == y:
            return p
    return run[0]


def _direction(x: int, y: int, ex: int, ey: int) -> float:
    return math.degrees(math.atan2(y - ey, ex - x))


def minutia_angle(sk: np.ndarray, x: int, y: int, trace_len: int = DEFAULT_TRACE_LEN) -> tuple[float, bool]:
    """Ridge direction at a minutia as ``(degrees, degraded)``.

    A termination points from the minutia into its ridge, ``trace_len`` steps
    along it, with y flipped so angles turn counter-clockwise.  A bifurcation
    takes the branch pointing most against the mean of the other two.  Traces
    shorter than 2 pixels give angle 0 and ``degraded=True``.
    """
    runs = _branches(sk, x, y)
    if not runs:
        return 0.0, True
    heads = [_run_head(run, x, y) for run in runs]
    ends = []
    for i, head in enumerate(heads):
        # keep other branches' ring pixels out of this trace
        blocked = {p for j, run in enumerate(runs) if j != i for p in run}
        ends.append(_walk(sk, (x, y), head, trace_len, blocked))
    if len(ends) == 1 or len(ends) == 2:
        ex, ey, taken = max(ends, key=lambda e: e[2]) if len(ends) == 2 else ends[0]
        if taken < 2:
            return 0.0, True
        return _wrap(_direction(x, y, ex, ey)), False
    vecs = []
    for ex, ey, _ in ends:
        dx, dy = ex - x, y - ey
        n = math.hypot(dx, dy)
        vecs.append((dx / n, dy / n) if n else (0.0, 0.0))
    best, best_dot = 0, math.inf
    for i, v in enumerate(vecs):
        others = [u for j, u in enumerate(vecs) if j != i]
        mx = sum(u[0] for u in others) / len(others)
        my = sum(u[1] for u in others) / len(others)
        dot = v[0] * mx + v[1] * my
        if dot < best_dot - 1e-12:
            best, best_dot = i, dot
    ex, ey, taken = ends[best]
    if taken < 2:
        return 0.0, True
    return _wrap(_direction(x, y, ex, ey)), False


def _wrap(a: float) -> float:
    return 180.0 if a <= -180.0 else a


def _interior(mask: np.ndarray | None, shape, margin: int) -> np.ndarray:
    if mask is None:
        mask = np.ones(shape, dtype=bool)
    if margin <= 0:
        return mask.astype(bool)
    return ndimage.minimum_filter(mask.astype(np.uint8), size=2 * margin + 1, mode="constant", cval=0).astype(bool)


def extract_minutiae(
    sk: np.ndarray,
    mask: np.ndarray | None = None,
    border_margin: int = DEFAULT_BORDER_MARGIN,
    trace_len: int = DEFAULT_TRACE_LEN,
) -> list[Minutia]:
    """Terminations (CN=1) and bifurcations (CN=3) in row-major order.

    Pixels closer than ``border_margin`` (chessboard distance) to the outside
    of ``mask`` or the image edge are skipped.
    """
    cn = crossing_map(sk)
    keep = _interior(mask, sk.shape, border_margin) & ((cn == 1) | (cn == 3))
    out = []
    for y, x in zip(*np.nonzero(keep)):
        x, y = int(x), int(y)
        kind = TERMINATION if cn[y, x] == 1 else BIFURCATION
        angle, degraded = minutia_angle(sk, x, y, trace_len)
        out.append(Minutia(x, y, kind, angle, degraded))
    return out


def dedupe(minutiae: Iterable[Minutia]) -> list[Minutia]:
    """Keep the first minutia at each coordinate."""
    seen, out = set(), []
    for m in minutiae:
        if (m.x, m.y) not in seen:
            seen.add((m.x, m.y))
            out.append(m)
    return out


def as_arrays(minutiae: list[Minutia]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(xy float (n,2), is_bifurcation bool (n,), angle float (n,))``."""
    if not minutiae:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool), np.zeros(0)
    xy = np.array([(m.x, m.y) for m in minutiae], dtype=float)
    kind = np.array([m.kind == BIFURCATION for m in minutiae])
    ang = np.array([m.angle for m in minutiae], dtype=float)
    return xy, kind, ang


def format_minutiae(minutiae: list[Minutia]) -> str:
    lines = [f"MINUTIAE v1 {len(minutiae)}"]
    lines += [f"{m.x} {m.y} {m.kind} {m.angle:.2f}" for m in minutiae]
    return "\n".join(lines) + "\n"


def parse_minutiae(text: str) -> list[Minutia]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty minutiae file")
    head = lines[0].split()
    if len(head) != 3 or head[:2] != ["MINUTIAE", "v1"]:
        raise ValueError(f"bad minutiae header {lines[0]!r}")
    count = int(head[2])
    if count != len(lines) - 1:
        raise ValueError(f"header says {count} minutiae, found {len(lines) - 1}")
    out = []
    for ln in lines[1:]:
        x, y, kind, angle = ln.split()
        if kind not in (TERMINATION, BIFURCATION):
            raise ValueError(f"bad minutia kind {kind!r}")
        out.append(Minutia(int(x), int(y), kind, float(angle)))
    return out


def write_minutiae(path: str | os.PathLike, minutiae: list[Minutia]) -> None:
    atomic_write(path, format_minutiae(minutiae))


def read_minutiae(path: str | os.PathLike) -> list[Minutia]:
    return parse_minutiae(Path(path).read_text())
