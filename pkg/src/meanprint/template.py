"""Preprocessed impressions and the fused mean fingerprint."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import SimilarityTransform
from .minutiae import Minutia, extract_minutiae, format_minutiae, parse_minutiae
from .netpbm import atomic_write, encode_pbm, read_pbm
from .raster import area, preprocess

MASK_EXT, SKEL_EXT, MIN_EXT = ".mask.pbm", ".skel.pbm", ".min.txt"
BUNDLE_STEM = "meanf"
PARAMS_FILE, MANIFEST_FILE = "params.txt", "MANIFEST"


@dataclass
class FingerprintTemplate:
    id: str
    mask: np.ndarray
    skeleton: np.ndarray
    minutiae: list[Minutia]

    @property
    def shape(self) -> tuple[int, int]:
        return self.skeleton.shape

    @property
    def area(self) -> int:
        return area(self.mask)

    def copy(self) -> "FingerprintTemplate":
        return FingerprintTemplate(self.id, self.mask.copy(), self.skeleton.copy(), list(self.minutiae))


@dataclass
class ParamEntry:
    """One line of a ParamList: a transform into meanF space, or a failure."""

    id: str
    transform: SimilarityTransform | None
    fitness: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.transform is None

    def to_text(self) -> str:
        if self.failed:
            return f"{self.id} FAILED {self.error or 'unknown'}"
        return f"{self.id} {self.transform.to_text()} {self.fitness}"

    @classmethod
    def from_text(cls, line: str) -> "ParamEntry":
        parts = line.split()
        if len(parts) >= 2 and parts[1] == "FAILED":
            return cls(parts[0], None, 0, " ".join(parts[2:]))
        if len(parts) != 8:
            raise ValueError(f"bad ParamList line {line!r}")
        return cls(parts[0], SimilarityTransform.from_text(" ".join(parts[1:7])), int(parts[7]))


def format_param_list(entries: list[ParamEntry]) -> str:
    return "".join(e.to_text() + "\n" for e in entries)


def parse_param_list(text: str) -> list[ParamEntry]:
    return [ParamEntry.from_text(ln) for ln in text.splitlines() if ln.strip()]


@dataclass
class MeanFingerprint:
    base_id: str
    skeleton: np.ndarray
    mask: np.ndarray
    minutiae: list[Minutia]
    params: list[ParamEntry] = field(default_factory=list)

    @classmethod
    def from_template(cls, tmpl: FingerprintTemplate) -> "MeanFingerprint":
        return cls(tmpl.id, tmpl.skeleton.copy(), tmpl.mask.copy(), list(tmpl.minutiae))

    def manifest(self, n_templates: int, seed: int) -> str:
        return f"MEANF v1 base={self.base_id} templates={n_templates} seed={seed}\n"


def template_from_image(img: np.ndarray, id: str, **extract_kw) -> FingerprintTemplate:
    mask, _, skeleton = preprocess(img)
    return FingerprintTemplate(id, mask, skeleton, extract_minutiae(skeleton, mask, **extract_kw))


def write_files(out_dir: str | os.PathLike, payloads: dict[str, bytes | str]) -> list[Path]:
    """Write already-encoded payloads into ``out_dir``, each by temp-file rename."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, data in payloads.items():
        atomic_write(out / name, data)
        paths.append(out / name)
    return paths


def template_payloads(tmpl: FingerprintTemplate) -> dict[str, bytes | str]:
    return {
        tmpl.id + MASK_EXT: encode_pbm(tmpl.mask),
        tmpl.id + SKEL_EXT: encode_pbm(tmpl.skeleton),
        tmpl.id + MIN_EXT: format_minutiae(tmpl.minutiae),
    }


def save_template(out_dir: str | os.PathLike, tmpl: FingerprintTemplate) -> list[Path]:
    return write_files(out_dir, template_payloads(tmpl))


def load_template(directory: str | os.PathLike, id: str) -> FingerprintTemplate:
    d = Path(directory)
    mask, sk = read_pbm(d / (id + MASK_EXT)), read_pbm(d / (id + SKEL_EXT))
    if mask.shape != sk.shape:
        raise ValueError(f"template {id}: mask {mask.shape} and skeleton {sk.shape} differ in size")
    return FingerprintTemplate(id, mask, sk, parse_minutiae((d / (id + MIN_EXT)).read_text()))


def template_ids(directory: str | os.PathLike) -> list[str]:
    """Ids of complete template triples in ``directory``, sorted."""
    d = Path(directory)
    ids = sorted(p.name[: -len(SKEL_EXT)] for p in d.glob("*" + SKEL_EXT))
    return [i for i in ids if (d / (i + MASK_EXT)).exists() and (d / (i + MIN_EXT)).exists()]


def bundle_payloads(mean: MeanFingerprint, n_templates: int, seed: int) -> dict[str, bytes | str]:
    return {
        BUNDLE_STEM + MASK_EXT: encode_pbm(mean.mask),
        BUNDLE_STEM + SKEL_EXT: encode_pbm(mean.skeleton),
        BUNDLE_STEM + MIN_EXT: format_minutiae(mean.minutiae),
        PARAMS_FILE: format_param_list(mean.params),
        MANIFEST_FILE: mean.manifest(n_templates, seed),
    }


def load_bundle(directory: str | os.PathLike) -> MeanFingerprint:
    d = Path(directory)
    head = (d / MANIFEST_FILE).read_text().split()
    if head[:2] != ["MEANF", "v1"]:
        raise ValueError(f"{d / MANIFEST_FILE} is not a MEANF v1 manifest")
    fields = dict(kv.split("=", 1) for kv in head[2:])
    base = load_template(d, BUNDLE_STEM)
    params = parse_param_list((d / PARAMS_FILE).read_text())
    return MeanFingerprint(fields.get("base", ""), base.skeleton, base.mask, base.minutiae, params)
