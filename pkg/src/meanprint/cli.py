"""Command-line front end: ``meanprint <command> ...``.

Exit status: 0 success, 1 usage error, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

from .alignment import DEFAULT_SEED, REFINE_MODES, GAConfig
from .evaluation import (
    DEFAULT_IMPOSTORS,
    GENUINE_MODES,
    IMPRESSIONS,
    INGEST_MARGIN,
    EvalError,
    Protocol,
    entry_template,
    evaluate,
    gen_synthetic_db,
    group_by_finger,
    ingest_db,
    match_score,
)
from .geometry import S_RANGE, THETA_RANGE
from .minutiae import extract_minutiae
from .netpbm import NetpbmError, atomic_write, read_pgm
from .raster import preprocess
from .synthesis import SynthesisError, synthesize
from .synthgen import NoiseParams
from .template import (
    FingerprintTemplate,
    bundle_payloads,
    load_bundle,
    load_template,
    template_ids,
    template_payloads,
    write_files,
)

log = logging.getLogger("meanprint")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# option name -> (type, default); shared by flags and the key=value config file
OPTIONS = {
    "seed": (int, DEFAULT_SEED),
    "pop": (int, 500),
    "gens": (int, 15),
    "pm": (float, 0.1),
    "ps": (float, 0.8),
    "td": (float, 10.0),
    "angle-tol": (float, 15.0),
    "r": (float, 3.0),
    "refine-mode": (str, "paper"),
    "genuine-mode": (str, "meanf"),
    "jobs": (int, 1),
    "impostors": (int, DEFAULT_IMPOSTORS),
    "margin": (int, INGEST_MARGIN),
}
CHOICES = {"refine-mode": REFINE_MODES, "genuine-mode": GENUINE_MODES}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    ga: GAConfig
    r: float
    refine_mode: str
    genuine_mode: str
    jobs: int
    impostors: int
    margin: int


def read_config(path: str) -> dict[str, str]:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    from_file = read_config(args.config) if getattr(args, "config", None) else {}
    vals = {}
    for key, (typ, default) in OPTIONS.items():
        flag = getattr(args, key.replace("-", "_"), None)
        raw = flag if flag is not None else from_file.get(key, default)
        try:
            vals[key] = typ(raw)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
        if key in CHOICES and vals[key] not in CHOICES[key]:
            raise UsageError(f"{key} must be one of {', '.join(CHOICES[key])}")
    if vals["jobs"] < 1:
        raise UsageError("jobs must be >= 1")
    try:
        ga = GAConfig(
            pop_size=vals["pop"],
            generations=vals["gens"],
            p_mutation=vals["pm"],
            p_crossover=vals["ps"],
            dist_threshold=vals["td"],
            angle_tol=vals["angle-tol"],
            seed=vals["seed"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return RunConfig(
        args.command,
        vals["seed"],
        ga,
        vals["r"],
        vals["refine-mode"],
        vals["genuine-mode"],
        vals["jobs"],
        vals["impostors"],
        vals["margin"],
    )


def _pool(jobs: int):
    return ProcessPoolExecutor(jobs) if jobs > 1 else nullcontext(None)


def _image_template(path: Path, margin: int) -> FingerprintTemplate:
    img = read_pgm(path)
    mask, _, sk = preprocess(img)
    if not mask.any():
        log.warning("%s: no fingerprint area found (empty mask)", path)
    return FingerprintTemplate(path.stem, mask, sk, extract_minutiae(sk, mask, margin))


def _load_templates(directory: Path, margin: int) -> list[FingerprintTemplate]:
    """Template triples in ``directory``, or else its PGM images preprocessed."""
    if not directory.is_dir():
        raise DataError(f"{directory} is not a readable directory")
    ids = template_ids(directory)
    if ids:
        return [load_template(directory, i) for i in ids]
    return [_image_template(p, margin) for p in sorted(directory.glob("*.pgm"))]


# -- commands -------------------------------------------------------------


def cmd_preprocess(args, cfg: RunConfig) -> int:
    tmpls = [_image_template(Path(p), cfg.margin) for p in args.images]
    payloads = {}
    for tm in tmpls:
        payloads.update(template_payloads(tm))
    write_files(args.out, payloads)
    print("id,area,minutiae")
    for tm in tmpls:
        print(f"{tm.id},{tm.area},{len(tm.minutiae)}")
    return EXIT_OK


def cmd_synthesize(args, cfg: RunConfig) -> int:
    tmpls = _load_templates(Path(args.templates), cfg.margin)
    if not tmpls:
        raise DataError(f"no templates or images in {args.templates}")
    with _pool(cfg.jobs) as ex:
        mean = synthesize(tmpls, cfg.ga, cfg.r, cfg.refine_mode, ex)
    write_files(args.out, bundle_payloads(mean, len(tmpls), cfg.seed))
    if not args.no_figure:
        from .plotting import plot_mean

        plot_mean(mean, Path(args.out) / "meanf.png")
    failed = sum(p.failed for p in mean.params)
    print("base,templates,aligned,failed,minutiae")
    print(f"{mean.base_id},{len(tmpls)},{len(mean.params) - failed},{failed},{len(mean.minutiae)}")
    return EXIT_OK


def cmd_match(args, cfg: RunConfig) -> int:
    mean = load_bundle(args.bundle)
    q = Path(args.query)
    if q.suffix == ".pgm":
        query = _image_template(q, cfg.margin)
    else:
        query = load_template(q.parent, q.name)
    ms = match_score(mean, query, cfg.ga)
    t = ms.transform.to_text() if ms.transform is not None else "NONE"
    print("score,matched,query_size,ref_size,transform")
    print(f"{ms.score:.6f},{ms.matched},{ms.query_size},{ms.ref_size},{t}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    entries = ingest_db(args.db)
    protocol = Protocol(cfg.genuine_mode, cfg.impostors, cfg.r, cfg.refine_mode)
    with _pool(cfg.jobs) as ex:
        tmpls = list(ex.map(entry_template, entries, [cfg.margin] * len(entries))) if ex else [
            entry_template(e, cfg.margin) for e in entries
        ]
        report = evaluate(group_by_finger(tmpls), cfg.ga, protocol, ex)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    atomic_write(out, report.to_csv())
    atomic_write(out.with_suffix(".jsonl"), report.to_jsonl())
    op = report.operating_point(0.05)
    if not args.no_figure:
        from .plotting import plot_scores

        plot_scores(report.genuine, report.impostor, out.with_suffix(".png"), op[0] if op else None)
    c = report.counts
    print(f"genuine={c['genuine']} impostor={c['impostor']} mode={c['genuine_mode']} seed={report.seed}")
    if op is None:
        print("operating point FAR<=0.05: none")
    else:
        print(f"operating point FAR<=0.05: threshold={op[0]:.2f} GAR={op[1]:.4f} FAR={op[2]:.4f}")
    return EXIT_OK


def cmd_gen(args, cfg: RunConfig) -> int:
    theta, scale = tuple(args.theta), tuple(args.scale)
    if not (THETA_RANGE[0] <= theta[0] <= theta[1] <= THETA_RANGE[1]):
        raise DataError(f"theta range {theta} is outside the legal box {THETA_RANGE}")
    if not (S_RANGE[0] <= scale[0] <= scale[1] <= S_RANGE[1]):
        raise DataError(f"scale range {scale} is outside the legal box {S_RANGE}")
    if not 1 <= args.impressions <= IMPRESSIONS:
        raise DataError(f"impressions must lie in 1..{IMPRESSIONS}")
    if args.fingers < 1:
        raise DataError("fingers must be >= 1")
    try:
        noise = NoiseParams(args.dropout, args.breaks)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    try:
        paths = gen_synthetic_db(args.out, args.fingers, args.impressions, noise, cfg.seed, theta, scale)
    except RuntimeError as exc:  # no in-range pose found
        raise DataError(str(exc)) from exc
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, ga: bool = True) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value defaults; flags take precedence")
    p.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    if not ga:
        return
    p.add_argument("--pop", type=int, help="GA population size (default 500)")
    p.add_argument("--gens", type=int, help="GA generations (default 15)")
    p.add_argument("--pm", type=float, help="mutation probability per chromosome (default 0.1)")
    p.add_argument("--ps", type=float, help="crossover probability (default 0.8)")
    p.add_argument("--td", type=float, help="minutia match distance in px (default 10)")
    p.add_argument("--angle-tol", type=float, help="minutia match angle tolerance in degrees (default 15)")
    p.add_argument("--r", type=float, help="ridge fusion radius in px (default 3)")
    p.add_argument("--refine-mode", help="paper | exact (default paper)")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")
    p.add_argument("--margin", type=int, help=f"minutia border margin for images (default {INGEST_MARGIN})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meanprint", description="Mean-fingerprint synthesis and matching.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="image(s) -> mask, skeleton and minutiae files")
    p.add_argument("images", nargs="+", help="PGM images")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--config")
    p.add_argument("--margin", type=int, help=f"minutia border margin in px (default {INGEST_MARGIN})")

    p = sub.add_parser("synthesize", help="one finger's templates -> meanF bundle")
    p.add_argument("templates", help="directory of template files or PGM images")
    p.add_argument("-o", "--out", required=True, help="bundle directory")
    p.add_argument("--no-figure", action="store_true", help="skip meanf.png")
    _add_common(p)

    p = sub.add_parser("match", help="score a query against a meanF bundle")
    p.add_argument("bundle", help="meanF bundle directory")
    p.add_argument("query", help="PGM image, or template path without extension")
    _add_common(p)

    p = sub.add_parser("evaluate", help="GAR/FAR protocol over a <finger>_<impression>.pgm database")
    p.add_argument("db", help="database directory")
    p.add_argument("-o", "--out", required=True, help="CSV path; .jsonl and .png written alongside")
    p.add_argument("--genuine-mode", help="meanf | pairs (default meanf)")
    p.add_argument("--impostors", type=int, help=f"impostor pairs (default {DEFAULT_IMPOSTORS})")
    p.add_argument("--no-figure", action="store_true", help="skip the score histogram")
    _add_common(p)

    p = sub.add_parser("gen", help="write a synthetic database with ground truth")
    p.add_argument("out", help="output directory")
    p.add_argument("--fingers", type=int, default=10)
    p.add_argument("--impressions", type=int, default=IMPRESSIONS)
    p.add_argument("--dropout", type=float, default=0.05, help="per-pixel ridge dropout probability")
    p.add_argument("--breaks", type=int, default=3, help="3-px ridge breaks per impression")
    p.add_argument("--theta", type=float, nargs=2, default=(-12.0, 12.0), metavar=("LO", "HI"))
    p.add_argument("--scale", type=float, nargs=2, default=(1.0, 1.03), metavar=("LO", "HI"))
    _add_common(p, ga=False)
    return parser


COMMANDS = {
    "preprocess": cmd_preprocess,
    "synthesize": cmd_synthesize,
    "match": cmd_match,
    "evaluate": cmd_evaluate,
    "gen": cmd_gen,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"meanprint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, cfg)
    except (DataError, NetpbmError, EvalError, SynthesisError, OSError, ValueError) as exc:
        print(f"meanprint: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"meanprint: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
