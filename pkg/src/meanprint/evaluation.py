"""Matching scores, FVC-style database handling and the GAR/FAR protocol."""

from __future__ import annotations

import itertools
import json
import logging
import os
import re
from concurrent.futures import Executor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .alignment import AlignmentError, GAConfig, derive_seed, ga_align
from .geometry import SimilarityTransform
from .minutiae import extract_minutiae
from .netpbm import atomic_write, read_pgm, write_pgm
from .raster import DEFAULT_BLOCK, preprocess
from .synthesis import DEFAULT_R, synthesize
from .synthgen import NoiseParams, gen_impression, gen_master, render_gray, sample_transform
from .template import FingerprintTemplate, MeanFingerprint

log = logging.getLogger(__name__)

IMPRESSIONS = 8
DEFAULT_IMPOSTORS = 1000
GENUINE_MODES = ("meanf", "pairs")
INGEST_MARGIN = DEFAULT_BLOCK  # segmentation blocks overshoot the ridge area by up to one block
THRESHOLDS = np.round(np.arange(0, 101) / 100.0, 2)

_NAME = re.compile(r"^(\d+)_(\d+)\.pgm$")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class DbEntry:
    finger: int
    impression: int
    image: np.ndarray

    @property
    def id(self) -> str:
        return f"{self.finger}_{self.impression}"


def scan_db(directory: str | os.PathLike) -> list[tuple[int, int, Path]]:
    """Valid ``<finger>_<impression>.pgm`` paths, sorted; other names are logged and skipped."""
    d = Path(directory)
    if not d.is_dir():
        raise EvalError(f"{d} is not a directory")
    names = sorted(p.name for p in d.iterdir())
    if not names:
        raise EvalError(f"{d} is empty")
    found = []
    for name in names:
        m = _NAME.match(name)
        if m is None:
            if name.endswith(".pgm"):
                log.warning("skipping %s: name is not <finger>_<impression>.pgm", name)
            continue
        finger, imp = int(m.group(1)), int(m.group(2))
        if finger < 1 or not 1 <= imp <= IMPRESSIONS:
            log.warning("skipping %s: finger must be >= 1 and impression in 1..%d", name, IMPRESSIONS)
            continue
        found.append((finger, imp, d / name))
    if not found:
        raise EvalError(f"no <finger>_<impression>.pgm images in {d}")
    return sorted(found)


def ingest_db(directory: str | os.PathLike) -> list[DbEntry]:
    """Load every valid impression image, sorted by (finger, impression)."""
    return [DbEntry(f, i, read_pgm(p)) for f, i, p in scan_db(directory)]


def entry_template(entry: DbEntry, border_margin: int = INGEST_MARGIN) -> FingerprintTemplate:
    mask, _, sk = preprocess(entry.image)
    return FingerprintTemplate(entry.id, mask, sk, extract_minutiae(sk, mask, border_margin))


def group_by_finger(templates: Sequence[FingerprintTemplate]) -> dict[int, list[FingerprintTemplate]]:
    out: dict[int, list[FingerprintTemplate]] = {}
    for tm in templates:
        out.setdefault(int(tm.id.split("_")[0]), []).append(tm)
    return out


# -- scoring --------------------------------------------------------------


@dataclass(frozen=True)
class MatchScore:
    score: float
    matched: int
    query_size: int
    ref_size: int
    transform: SimilarityTransform | None


def match_score(
    mean: MeanFingerprint,
    query: FingerprintTemplate,
    cfg: GAConfig = GAConfig(),
    rng: np.random.Generator | None = None,
) -> MatchScore:
    """GA-align ``query`` onto ``mean``; score is matched / max(set sizes)."""
    nq, nr = len(query.minutiae), len(mean.minutiae)
    if nq == 0 or nr == 0:
        return MatchScore(0.0, 0, nq, nr, None)
    try:
        res = ga_align(query.minutiae, mean.minutiae, cfg, rng)
    except AlignmentError:
        return MatchScore(0.0, 0, nq, nr, None)
    return MatchScore(res.fitness / max(nq, nr), res.fitness, nq, nr, res.transform)


# -- protocol -------------------------------------------------------------


@dataclass(frozen=True)
class Protocol:
    genuine_mode: str = "meanf"
    impostor_pairs: int = DEFAULT_IMPOSTORS
    r: float = DEFAULT_R
    refine_mode: str = "paper"

    def __post_init__(self):
        if self.genuine_mode not in GENUINE_MODES:
            raise ValueError(f"unknown genuine mode {self.genuine_mode!r}")
        if self.impostor_pairs < 0:
            raise ValueError("impostor pair count must be non-negative")


@dataclass(frozen=True)
class ScoredPair:
    kind: str  # "genuine" or "impostor"
    ref: str  # meanF base finger ("meanF:<finger>") or impression id
    query: str
    score: float
    matched: int


@dataclass
class EvalReport:
    genuine: list[float]
    impostor: list[float]
    rows: list[tuple[float, float, float]]  # (threshold, GAR, FAR)
    seed: int
    counts: dict = field(default_factory=dict)
    pairs: list[ScoredPair] = field(default_factory=list)

    def operating_point(self, max_far: float) -> tuple[float, float, float] | None:
        """Row with the best GAR among thresholds whose FAR is at most ``max_far``."""
        ok = [row for row in self.rows if row[2] <= max_far]
        return max(ok, key=lambda row: (row[1], -row[0])) if ok else None

    def to_csv(self) -> str:
        lines = ["threshold,gar,far"]
        lines += [f"{th:.2f},{gar:.6f},{far:.6f}" for th, gar, far in self.rows]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        mean = lambda v: float(np.mean(v)) if v else None  # noqa: E731
        ops = {}
        for x in (0.01, 0.05, 0.10):
            row = self.operating_point(x)
            ops[f"far<={x:.2f}"] = None if row is None else {"threshold": row[0], "gar": row[1], "far": row[2]}
        return {
            "record": "summary",
            "seed": self.seed,
            **self.counts,
            "genuine_mean": mean(self.genuine),
            "impostor_mean": mean(self.impostor),
            "operating_points": ops,
        }

    def to_jsonl(self) -> str:
        recs = [self.summary()]
        recs += [{"record": "score", **p.__dict__} for p in self.pairs]
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in recs)


def sweep(genuine: Sequence[float], impostor: Sequence[float]) -> list[tuple[float, float, float]]:
    """GAR and FAR (fraction of scores >= threshold) over 0.00..1.00 in steps of 0.01."""
    g, im = np.asarray(genuine, dtype=float), np.asarray(impostor, dtype=float)
    rows = []
    for th in THRESHOLDS:
        gar = float(np.mean(g >= th)) if len(g) else 0.0
        far = float(np.mean(im >= th)) if len(im) else 0.0
        rows.append((float(th), gar, far))
    return rows


def _map(executor: Executor | None, fn, jobs: list):
    if executor is None:
        return [fn(j) for j in jobs]
    return list(executor.map(fn, jobs, chunksize=max(1, len(jobs) // 64)))


def _synth_job(args):
    finger, templates, cfg, r, refine_mode = args
    cfg = GAConfig(**{**cfg.__dict__, "seed": int(derive_seed(cfg.seed, "synth", finger).generate_state(1)[0])})
    return synthesize(templates, cfg, r, refine_mode)


def _score_job(args):
    kind, ref_id, ref, query, cfg = args
    rng = np.random.default_rng(derive_seed(cfg.seed, kind, ref_id, query.id))
    ms = match_score(ref, query, cfg, rng)
    return ScoredPair(kind, ref_id, query.id, ms.score, ms.matched)


def evaluate(
    by_finger: dict[int, list[FingerprintTemplate]],
    cfg: GAConfig = GAConfig(),
    protocol: Protocol = Protocol(),
    executor: Executor | None = None,
) -> EvalReport:
    """Genuine and impostor scores plus the GAR/FAR sweep.

    Every alignment draws from its own stream derived from the seed and the
    ids involved, so the report does not depend on scheduling.
    """
    fingers = sorted(by_finger)
    if protocol.impostor_pairs and len(fingers) < 2:
        raise EvalError("impostor scoring needs at least 2 fingers")
    counts = {"fingers": len(fingers), "impressions": sum(len(by_finger[f]) for f in fingers)}

    refs: dict[int, list[tuple[str, MeanFingerprint]]] = {}
    if protocol.genuine_mode == "meanf":
        means = _map(executor, _synth_job, [(f, by_finger[f], cfg, protocol.r, protocol.refine_mode) for f in fingers])
        counts["synthesizings"] = len(means)
        counts["alignments"] = sum(len(m.params) for m in means)
        counts["failed_alignments"] = sum(p.failed for m in means for p in m.params)
        for f, mean in zip(fingers, means):
            refs[f] = [(f"meanF:{f}", mean)]
        genuine_jobs = [("genuine", f"meanF:{f}", refs[f][0][1], q, cfg) for f in fingers for q in by_finger[f]]
    else:
        for f in fingers:
            refs[f] = [(tm.id, MeanFingerprint.from_template(tm)) for tm in by_finger[f]]
        genuine_jobs = [
            ("genuine", a.id, MeanFingerprint.from_template(a), b, cfg)
            for f in fingers
            for a, b in itertools.combinations(by_finger[f], 2)
        ]

    rng = np.random.default_rng(derive_seed(cfg.seed, "impostor-draw"))
    impostor_jobs = []
    for _ in range(protocol.impostor_pairs):
        ia, ib = int(rng.integers(len(fingers))), int(rng.integers(len(fingers) - 1))
        ib += ib >= ia  # any finger but the reference's
        fa, fb = fingers[ia], fingers[ib]
        ref_id, ref = refs[fa][int(rng.integers(len(refs[fa])))]
        query = by_finger[fb][int(rng.integers(len(by_finger[fb])))]
        impostor_jobs.append(("impostor", ref_id, ref, query, cfg))

    scored = _map(executor, _score_job, genuine_jobs + impostor_jobs)
    genuine = [p.score for p in scored if p.kind == "genuine"]
    impostor = [p.score for p in scored if p.kind == "impostor"]
    counts.update(genuine=len(genuine), impostor=len(impostor), genuine_mode=protocol.genuine_mode)
    return EvalReport(genuine, impostor, sweep(genuine, impostor), cfg.seed, counts, scored)


# -- synthetic database ---------------------------------------------------


def _int_seed(seed: int, *keys) -> int:
    return int(derive_seed(seed, *keys).generate_state(1)[0])


def gen_synthetic_db(
    out_dir: str | os.PathLike,
    fingers: int = 10,
    impressions: int = IMPRESSIONS,
    noise: NoiseParams = NoiseParams(0.05, 3),
    seed: int = 42,
    theta_range=(-12.0, 12.0),
    s_range=(1.0, 1.03),
) -> list[Path]:
    """Write ``<finger>_<impression>.pgm`` images plus ``<finger>_truth.txt``.

    Each truth line is ``<impression> TRANSFORM v1 s theta tx ty``: the map
    from the finger's master print into that impression.  Impression poses
    are kept moderate so any two of them differ by an in-range transform.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for f in range(1, fingers + 1):
        master = gen_master(seed=_int_seed(seed, "master", f))
        rng = np.random.default_rng(derive_seed(seed, "pose", f))
        truth = []
        for i in range(1, impressions + 1):
            t = sample_transform(rng, master.shape, theta_range, s_range)
            imp = gen_impression(master, t, noise, _int_seed(seed, "noise", f, i), f"{f}_{i}")
            path = out / f"{f}_{i}.pgm"
            write_pgm(path, render_gray(imp.template, _int_seed(seed, "render", f, i)))
            written.append(path)
            truth.append(f"{i} {t.to_text()}\n")
        tpath = out / f"{f}_truth.txt"
        atomic_write(tpath, "".join(truth).encode())
        written.append(tpath)
    return written


def read_truth(path: str | os.PathLike) -> dict[int, SimilarityTransform]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            imp, rest = line.split(maxsplit=1)
            out[int(imp)] = SimilarityTransform.from_text(rest)
    return out
