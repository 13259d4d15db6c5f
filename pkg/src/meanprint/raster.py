"""Fingerprint area segmentation, binarization and ridge thinning.

Grayscale images are ``(h, w)`` uint8 arrays; masks, binary rasters and
skeletons are ``(h, w)`` bool arrays sharing the image's top-left origin.
"""

from __future__ import annotations

import os

import numpy as np
from scipy import ndimage

from .netpbm import read_pgm

DEFAULT_BLOCK = 16
DEFAULT_VAR_THRESHOLD = 100.0
DEFAULT_SPUR = 4  # longest side branch treated as a thinning artefact, px

# Neighbour offsets (drow, dcol) in the order P2..P9: N, NE, E, SE, S, SW, W, NW.
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def load_image(path: str | os.PathLike) -> np.ndarray:
    return read_pgm(path)


def _block_stat(img: np.ndarray, block: int, fn) -> np.ndarray:
    h, w = img.shape
    out = np.empty((h, w), dtype=float)
    for r0 in range(0, h, block):
        for c0 in range(0, w, block):
            out[r0 : r0 + block, c0 : c0 + block] = fn(img[r0 : r0 + block, c0 : c0 + block])
    return out


def segment(img: np.ndarray, block: int = DEFAULT_BLOCK, var_threshold: float = DEFAULT_VAR_THRESHOLD) -> np.ndarray:
    """Mark every ``block x block`` tile whose intensity variance reaches ``var_threshold``.

    Edge tiles are measured over the pixels they actually contain.
    """
    if block < 4:
        raise ValueError(f"block must be >= 4, got {block}")
    var = _block_stat(np.asarray(img, dtype=float), block, np.var)
    return var >= var_threshold


def binarize(img: np.ndarray, mask: np.ndarray, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Ridge pixels are those strictly darker than their tile mean, inside ``mask``."""
    img = np.asarray(img, dtype=float)
    if img.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != image shape {img.shape}")
    mean = _block_stat(img, block, np.mean)
    return (img < mean) & mask


def area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def neighbour_codes(bits: np.ndarray) -> np.ndarray:
    """8-bit code per pixel; bit ``i`` set when neighbour ``RING[i]`` is true."""
    p = np.pad(bits.astype(np.uint8), 1)
    h, w = bits.shape
    code = np.zeros((h, w), dtype=np.uint8)
    for i, (dr, dc) in enumerate(RING):
        code |= p[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] << i
    return code


def _ring(code: int) -> list[int]:
    return [(code >> i) & 1 for i in range(8)]


def _build_tables():
    count = np.zeros(256, dtype=np.uint8)
    trans = np.zeros(256, dtype=np.uint8)  # 0->1 transitions around the ring
    simple = np.zeros(256, dtype=bool)
    zs1 = np.zeros(256, dtype=bool)
    zs2 = np.zeros(256, dtype=bool)
    for code in range(256):
        n = _ring(code)
        p2, p3, p4, p5, p6, p7, p8, p9 = n
        count[code] = sum(n)
        trans[code] = sum(1 for i in range(8) if n[i] == 0 and n[(i + 1) % 8] == 1)
        # Yokoi connectivity number for 8-connectivity, counter-clockwise from E.
        x = [p4, p3, p2, p9, p8, p7, p6, p5]
        xb = [1 - v for v in x] + [1 - x[0]]
        yokoi = sum(xb[k] - xb[k] * xb[k + 1] * xb[k + 2] for k in (0, 2, 4, 6))
        simple[code] = yokoi == 1
        base = 3 <= count[code] <= 6 and trans[code] == 1
        zs1[code] = base and p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
        zs2[code] = base and p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
    return count, trans, simple, zs1, zs2


def _ring_joined(code: int) -> bool:
    """True when the set neighbours form one 8-connected group among themselves."""
    on = [i for i, v in enumerate(_ring(code)) if v]
    if not on:
        return False
    pos = {i: RING[i] for i in on}
    seen, todo = {on[0]}, [on[0]]
    while todo:
        a = todo.pop()
        for b in on:
            if b not in seen and max(abs(pos[a][0] - pos[b][0]), abs(pos[a][1] - pos[b][1])) == 1:
                seen.add(b)
                todo.append(b)
    return len(seen) == len(on)


_COUNT, _TRANS, _SIMPLE, _ZS1, _ZS2 = _build_tables()
_DELETABLE = _SIMPLE & (_COUNT >= 2)
# last resort for 2x2 blocks ringed by holes: keeps components, may merge holes
_JOINED = np.array([_ring_joined(c) for c in range(256)]) & (_COUNT >= 2)


def _subfields(shape):
    rows, cols = np.indices(shape)
    return [((rows % 2) == a) & ((cols % 2) == b) for a in (0, 1) for b in (0, 1)]


def _delete_by_subfield(sk: np.ndarray, candidates: np.ndarray, fields, table=_DELETABLE) -> bool:
    # Pixels of one subfield are never 8-adjacent, so deleting the simple
    # ones in parallel is equivalent to deleting them one at a time.
    changed = False
    for field in fields:
        cand = candidates & field & sk
        if not cand.any():
            continue
        kill = cand & table[neighbour_codes(sk)]
        if kill.any():
            sk[kill] = False
            changed = True
    return changed


def _two_by_two(sk: np.ndarray) -> np.ndarray:
    """Pixels belonging to at least one all-true 2x2 block."""
    blk = sk[:-1, :-1] & sk[1:, :-1] & sk[:-1, 1:] & sk[1:, 1:]
    out = np.zeros_like(sk)
    out[:-1, :-1] |= blk
    out[1:, :-1] |= blk
    out[:-1, 1:] |= blk
    out[1:, 1:] |= blk
    return out


def thin(bits: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning down to 1-pixel-wide, 8-connected ridges.

    Deletions are re-checked for simplicity on a 2x2 subfield schedule, which
    keeps components (and holes) intact where plain parallel Zhang-Suen erases
    2x2 squares and 2-pixel diagonals.  Residual 2x2 blocks are then trimmed,
    merging enclosed holes if that is the only way.  A block whose four pixels
    each carry their own diagonal branch (an X) cannot be trimmed by deletion
    without cutting a branch, and is left in place.
    """
    sk = np.array(bits, dtype=bool, copy=True)
    if sk.size == 0 or not sk.any():
        return sk
    fields = _subfields(sk.shape)
    while True:
        changed = False
        for table in (_ZS1, _ZS2):
            cand = sk & table[neighbour_codes(sk)]
            if cand.any():
                changed |= _delete_by_subfield(sk, cand, fields)
        if not changed:
            blocks = _two_by_two(sk)
            if blocks.any():
                changed = _delete_by_subfield(sk, blocks, fields) or _delete_by_subfield(
                    sk, blocks, fields, _JOINED
                )
        if not changed:
            return sk


def _neighbour_count(sk: np.ndarray) -> np.ndarray:
    return ndimage.convolve(sk.astype(np.uint8), _RING8, mode="constant") * sk


_RING8 = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.uint8)


def prune_spurs(sk: np.ndarray, max_len: int = DEFAULT_SPUR) -> np.ndarray:
    """Drop side branches of at most ``max_len`` pixels, and fragments that short.

    A branch is walked from its free end until it reaches a junction pixel
    (three or more neighbours); it is removed when the walk is short enough.
    All walks are taken on the input skeleton, then the result is re-thinned
    to clear corners left at the junctions.
    """
    sk = np.array(sk, dtype=bool, copy=True)
    if max_len <= 0 or not sk.any():
        return sk
    h, w = sk.shape
    nbr = _neighbour_count(sk)
    drop = np.zeros_like(sk)
    for y, x in np.argwhere(nbr == 1):
        path = [(y, x)]
        prev, cur = None, (y, x)
        while len(path) <= max_len:
            cy, cx = cur
            nxt = [
                (cy + dy, cx + dx)
                for dy, dx in RING
                if 0 <= cy + dy < h and 0 <= cx + dx < w and sk[cy + dy, cx + dx] and (cy + dy, cx + dx) != prev
                and (cy + dy, cx + dx) not in path
            ]
            if not nxt:  # isolated fragment, short enough
                drop[tuple(np.array(path).T)] = True
                break
            if nbr[nxt[0]] >= 3 or len(nxt) > 1:
                drop[tuple(np.array(path).T)] = True
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
    if not drop.any():
        return sk
    return thin(sk & ~drop)


def preprocess(
    img: np.ndarray,
    block: int = DEFAULT_BLOCK,
    var_threshold: float = DEFAULT_VAR_THRESHOLD,
    spur_len: int = DEFAULT_SPUR,
):
    """Return ``(mask, binary, skeleton)`` for a grayscale impression."""
    mask = segment(img, block, var_threshold)
    binary = binarize(img, mask, block)
    return mask, binary, prune_spurs(thin(binary), spur_len)
