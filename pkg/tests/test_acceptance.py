"""Acceptance suite: one PASS/FAIL line per criterion, at its stated tolerance."""

import json
import math
import time

import numpy as np
import pytest

from meanprint.alignment import GAConfig, align_pair
from meanprint.cli import EXIT_OK, main
from meanprint.evaluation import Protocol, evaluate, ingest_db
from meanprint.geometry import IDENTITY, S_RANGE, THETA_RANGE, TX_RANGE, TY_RANGE, SimilarityTransform, exact_two_point, invert
from meanprint.minutiae import BIFURCATION, TERMINATION, Minutia, crossing_map
from meanprint.netpbm import write_pgm
from meanprint.synthesis import add_ridges, join_ridges, synthesize, validate_minutiae
from meanprint.synthgen import NoiseParams, gen_impression, gen_master, sample_transform
from meanprint.template import FingerprintTemplate, MeanFingerprint

pytestmark = pytest.mark.acceptance


def _endpoints(sk):
    return int((crossing_map(sk) == 1).sum())


def _cn_valid(mean):
    cn = crossing_map(mean.skeleton)
    ok = [
        bool(mean.skeleton[m.y, m.x]) and (cn[m.y, m.x] == 1 if m.kind == TERMINATION else cn[m.y, m.x] >= 3)
        for m in mean.minutiae
    ]
    return sum(ok), len(ok)


# 1 ------------------------------------------------------------------------


def test_transform_correctness(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_inv = worst_exact = 0.0
    for _ in range(1000):
        t = SimilarityTransform(
            rng.uniform(*S_RANGE), rng.uniform(*THETA_RANGE), rng.uniform(*TX_RANGE), rng.uniform(*TY_RANGE)
        )
        a, b = rng.uniform(0, 288, 2), rng.uniform(0, 384, 2)
        back = invert(t).apply(*t.apply(*a))
        worst_inv = max(worst_inv, abs(back[0] - a[0]), abs(back[1] - a[1]))
        if math.dist(a, b) > 1:
            got = exact_two_point(a, b, t.apply(*a), t.apply(*b))
            worst_exact = max(worst_exact, *np.abs(np.subtract(got.as_tuple(), t.as_tuple())))
    elapsed = time.perf_counter() - start
    ok = worst_inv <= 1e-9 and worst_exact <= 1e-9 and elapsed < 1.0
    criterion(
        "transform correctness",
        ok,
        f"max invert err {worst_inv:.1e}, max two-point err {worst_exact:.1e}, {elapsed:.2f}s",
    )
    assert ok


# 2 ------------------------------------------------------------------------


def test_alignment_recovery(criterion):
    good, slowest, lines = 0, 0.0, []
    for i in range(20):
        master = gen_master(seed=100 + i)
        t = sample_transform(np.random.default_rng(1000 + i), master.shape)
        imp = gen_impression(master, t, NoiseParams(), seed=i)
        start = time.perf_counter()
        # query = master, ref = impression: the recovered map is the ground truth itself
        res = align_pair(master.minutiae, imp.template.minutiae, GAConfig(seed=i), np.random.default_rng(i), "exact")
        slowest = max(slowest, time.perf_counter() - start)
        got = res.transform
        ds, dth, dt = abs(got.s - t.s), abs(got.theta - t.theta), math.hypot(got.tx - t.tx, got.ty - t.ty)
        hit = ds <= 0.02 and dth <= 2 and dt <= 3
        good += hit
        lines.append(f"{i}:{'ok' if hit else 'miss'}")
    ok = good >= 18 and slowest < 60
    criterion("alignment recovery", ok, f"{good}/20 within tolerance, slowest alignment {slowest:.2f}s")
    assert ok, lines


# 3 ------------------------------------------------------------------------


def _gap_suite():
    """meanF/template pairs whose template spans gaps in meanF ridges."""

    def pair(mean_pts, tmpl_pts, shape=(24, 40)):
        m, t = np.zeros(shape, bool), np.zeros(shape, bool)
        for x, y in mean_pts:
            m[y, x] = True
        for x, y in tmpl_pts:
            t[y, x] = True
        return MeanFingerprint("m", m, m.copy(), []), FingerprintTemplate("t", t, t.copy(), [])

    row = lambda y, a, b: [(x, y) for x in range(a, b + 1)]  # noqa: E731
    suite = [
        pair(row(10, 2, 12) + row(10, 15, 30), row(10, 2, 30)),  # 2-px gap
        pair(row(10, 2, 12) + row(10, 16, 30), row(10, 2, 30)),  # 3-px gap
        pair([(5 + k, 5 + k) for k in range(6)] + [(14 + k, 14 + k) for k in range(6)], [(5 + k, 5 + k) for k in range(18)]),
        pair(row(8, 2, 12) + row(8, 15, 30) + row(16, 2, 20), row(8, 2, 30) + row(16, 2, 36)),
        pair(row(10, 2, 30), row(18, 2, 30)),  # template elsewhere: nothing to join
    ]
    return suite


def test_fusion_invariants(criterion):
    start = time.perf_counter()
    master = gen_master(seed=3)
    failures = []

    # add_ridges idempotence on every fixture
    fixtures = [(mean, tmpl, IDENTITY) for mean, tmpl in _gap_suite()]
    for k in range(4):
        t = sample_transform(np.random.default_rng(k), master.shape, (-10, 10), (1.0, 1.04), 10)
        imp = gen_impression(master, t, NoiseParams(0.05, 3), seed=k).template
        fixtures.append((MeanFingerprint.from_template(master), imp, invert(t)))
    for mean, tmpl, t in fixtures:
        add_ridges(mean, tmpl, t)
        if add_ridges(mean, tmpl, t) != 0:
            failures.append("add_ridges not idempotent")

    # single-template synthesize is bit-identical
    single = synthesize([master])
    if not (np.array_equal(single.skeleton, master.skeleton) and single.minutiae == master.minutiae):
        failures.append("single-template synthesize changed its input")

    # join never increases endpoints on the gap suite
    for mean, tmpl in _gap_suite():
        before = _endpoints(mean.skeleton)
        join_ridges(mean, [tmpl], [IDENTITY])
        if _endpoints(mean.skeleton) > before:
            failures.append("join_ridges added endpoints")

    # every post-validated minutia satisfies its CN rule
    valid = total = 0
    cfg = GAConfig(pop_size=150, generations=8)
    for f in range(3):
        small = gen_master(width=160, height=200, seed=50 + f)
        rng = np.random.default_rng(f)
        imps = []
        for i in range(4):
            t = sample_transform(rng, small.shape, (-5, 5), (1.0, 1.02), 5)
            imps.append(gen_impression(small, t, NoiseParams(breaks=2), seed=i, id=f"{f}_{i}").template)
        v, n = _cn_valid(synthesize(imps, cfg))
        valid, total = valid + v, total + n
    for mean, tmpl in _gap_suite():
        # terminations at every pre-join endpoint plus a stray bifurcation mid-ridge
        ends = np.argwhere(crossing_map(mean.skeleton) == 1)
        ys, xs = np.nonzero(mean.skeleton)
        mean.minutiae = [Minutia(int(x), int(y), TERMINATION, 0.0) for y, x in ends]
        mean.minutiae.append(Minutia(int(xs[len(xs) // 2]), int(ys[len(ys) // 2]), BIFURCATION, 0.0))
        join_ridges(mean, [tmpl], [IDENTITY])
        validate_minutiae(mean)
        v, n = _cn_valid(mean)
        valid, total = valid + v, total + n
    if valid != total:
        failures.append(f"{total - valid} minutiae violate the CN rule")

    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 10
    criterion("fusion invariants", ok, f"{len(fixtures)} fixtures, {total} validated minutiae, {elapsed:.1f}s")
    assert ok, failures


# 4 ------------------------------------------------------------------------


def test_degenerate_oracle(criterion):
    master = gen_master(seed=3)
    copies = [gen_impression(master, IDENTITY, NoiseParams(), id=f"1_{i}").template for i in range(1, 9)]
    mean = synthesize(copies, GAConfig())
    base = copies[0]
    added_px = int((mean.skeleton & ~base.skeleton).sum())
    extra_min = len(mean.minutiae) - len(base.minutiae)
    ok = added_px == 0 and extra_min == 0 and mean.minutiae == base.minutiae
    criterion("degenerate-pipeline oracle", ok, f"{added_px} pixels and {extra_min} minutiae added")
    assert ok


# 5 and 7 ------------------------------------------------------------------


@pytest.fixture(scope="module")
def eval_run(db10, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval") / "report.csv"
    start = time.perf_counter()
    code = main(["evaluate", str(db10), "-o", str(out), "--jobs", "1"])
    return code, out, time.perf_counter() - start, db10


def test_evaluation_protocol(eval_run, criterion):
    code, out, elapsed, _ = eval_run
    rows = [tuple(map(float, ln.split(","))) for ln in out.read_text().splitlines()[1:]]
    summary = json.loads(out.with_suffix(".jsonl").read_text().splitlines()[0])
    monotone = all(b[1] <= a[1] and b[2] <= a[2] for a, b in zip(rows, rows[1:]))
    hits = [r for r in rows if r[1] >= 0.95 and r[2] <= 0.05]
    ok = code == EXIT_OK and len(rows) == 101 and monotone and bool(hits) and elapsed < 15 * 60
    best = max(hits, key=lambda r: r[1] - r[2]) if hits else None
    detail = (
        f"threshold {best[0]:.2f}: GAR {best[1]:.4f} FAR {best[2]:.4f}" if best else "no threshold meets GAR>=0.95, FAR<=0.05"
    )
    detail += f"; genuine mean {summary['genuine_mean']:.3f} vs impostor {summary['impostor_mean']:.3f}; {elapsed:.0f}s"
    criterion("evaluation protocol shape", ok, detail)
    assert ok


def test_determinism_across_jobs(eval_run, tmp_path, criterion):
    _, first, _, db = eval_run
    second = tmp_path / "report.csv"
    code = main(["evaluate", str(db), "-o", str(second), "--jobs", "2", "--no-figure"])
    same_csv = second.read_bytes() == first.read_bytes()
    same_scores = second.with_suffix(".jsonl").read_bytes() == first.with_suffix(".jsonl").read_bytes()
    ok = code == EXIT_OK and same_csv and same_scores
    criterion("determinism across --jobs", ok, f"csv identical={same_csv}, score records identical={same_scores}")
    assert ok


# 6 ------------------------------------------------------------------------


def test_full_scale_counts(tmp_path, criterion):
    start = time.perf_counter()
    px = np.zeros((2, 2), np.uint8)
    for f in range(1, 101):
        for i in range(1, 9):
            write_pgm(tmp_path / f"{f}_{i}.pgm", px)
    n_entries = len(ingest_db(tmp_path))

    # one synthesizing per finger over small seeded prints; counts only, so a
    # light GA suffices
    by_finger = {}
    for f in range(1, 101):
        m = gen_master(width=128, height=160, seed=f)
        rng = np.random.default_rng(f)
        by_finger[f] = []
        for i in range(1, 9):
            t = sample_transform(rng, m.shape, (-3, 3), (1.0, 1.01), 3)
            by_finger[f].append(gen_impression(m, t, NoiseParams(breaks=1), seed=i, id=f"{f}_{i}").template)
    rep = evaluate(by_finger, GAConfig(pop_size=100, generations=6), Protocol(impostor_pairs=0))
    c = rep.counts
    ok = n_entries == 800 and c["synthesizings"] == 100 and c["alignments"] == 700
    criterion(
        "full-scale count check",
        ok,
        f"{n_entries} entries, {c['synthesizings']} synthesizings, {c['alignments']} alignments, "
        f"{time.perf_counter() - start:.0f}s",
    )
    assert ok
