"""Landmark-pair data model, TRE computation, paired statistics and census."""

from __future__ import annotations

import enum
import json
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from vesselmark.errors import (
    EmptySelectionError,
    LengthMismatchError,
    MalformedRowError,
    MissingFileError,
    UndefinedStatisticError,
    UnitMismatchError,
)
from vesselmark.volume import VectorField, as_point, sample_vector_trilinear


class PairType(enum.Enum):
    TYPE1 = "type1"
    TYPE2 = "type2"


class LandmarkStatus(enum.Enum):
    NORMAL = "normal"
    FLAGGED = "flagged"


class Provenance(enum.Enum):
    SPHERE_GROWN_ORIGINAL = "sphere_grown_original"
    SPHERE_GROWN_AUTO_MASK = "sphere_grown_auto_mask"
    SPHERE_GROWN_MANUAL_MASK = "sphere_grown_manual_mask"
    MANUAL = "manual"


@dataclass
class LandmarkPair:
    """Matched world-mm points in image 1 and image 2 plus metadata."""

    id: int
    p1: np.ndarray
    p2: np.ndarray
    pair_type: PairType = PairType.TYPE1
    status: LandmarkStatus = LandmarkStatus.NORMAL
    provenance: Provenance = Provenance.MANUAL

    def __post_init__(self):
        self.p1 = as_point(self.p1)
        self.p2 = as_point(self.p2)
        self.id = int(self.id)


@dataclass
class CaseRecord:
    case_index: int
    image1_path: Path
    image2_path: Path
    landmarks: list
    scan_interval_days: int = 0


@dataclass
class TREReport:
    """Per-landmark target registration errors and summary statistics (mm)."""

    ids: list
    errors_mm: np.ndarray
    filter_desc: str

    @property
    def n(self) -> int:
        return len(self.errors_mm)

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors_mm))

    @property
    def sd(self) -> float:
        return float(np.std(self.errors_mm, ddof=1)) if self.n > 1 else 0.0

    @property
    def median(self) -> float:
        return float(np.median(self.errors_mm))

    @property
    def p95(self) -> float:
        return float(np.percentile(self.errors_mm, 95))

    @property
    def max(self) -> float:
        return float(np.max(self.errors_mm))

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "filter": self.filter_desc,
            "mean_mm": self.mean,
            "sd_mm": self.sd,
            "median_mm": self.median,
            "p95_mm": self.p95,
            "max_mm": self.max,
            "per_landmark": [
                {"id": int(i), "error_mm": float(e)}
                for i, e in zip(self.ids, self.errors_mm)
            ],
        }

    def to_text(self) -> str:
        lines = [
            f"TRE report ({self.filter_desc}, n={self.n})",
            f"  mean   {self.mean:8.3f} mm",
            f"  sd     {self.sd:8.3f} mm",
            f"  median {self.median:8.3f} mm",
            f"  p95    {self.p95:8.3f} mm",
            f"  max    {self.max:8.3f} mm",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class PairedTestResult:
    t: float
    df: int
    p_two_sided: float
    mean_diff: float
    sd_diff: float
    degenerate: bool = False


def warp_points_with_dvf(points, dvf: VectorField):
    """Displace each world point by the trilinearly sampled DVF vector (mm)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    disp = sample_vector_trilinear(dvf, pts)
    return pts + disp


def compute_tre(pairs, dvf: VectorField, include_flagged: bool = False) -> TREReport:
    """Euclidean distance between each warped p1 and its matched p2.

    Flagged pairs are excluded unless include_flagged; raises
    EmptySelectionError if nothing remains.
    """
    selected = [
        p for p in pairs
        if include_flagged or p.status is LandmarkStatus.NORMAL
    ]
    if not selected:
        raise EmptySelectionError("no landmark pairs after filtering")
    p1 = np.array([p.p1 for p in selected])
    p2 = np.array([p.p2 for p in selected])
    warped = warp_points_with_dvf(p1, dvf)
    errors = np.linalg.norm(warped - p2, axis=1)
    desc = "all pairs" if include_flagged else "normal pairs only"
    return TREReport([p.id for p in selected], errors, desc)


def t_distribution_two_sided_p(t: float, df: int) -> float:
    """Two-sided p for Student's t via the regularized incomplete beta."""
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a, b) -> PairedTestResult:
    """Two-sided paired t-test.

    Zero-variance differences with a nonzero mean report p = 0 with the
    degenerate flag; all-zero differences are undefined and raise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError(f"paired samples differ: {a.shape} vs {b.shape}")
    n = len(a)
    if n < 2:
        raise LengthMismatchError(f"need at least 2 pairs, got {n}")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            raise UndefinedStatisticError("all paired differences are zero")
        return PairedTestResult(
            math.copysign(math.inf, mean), df, 0.0, mean, 0.0, degenerate=True
        )
    t = mean / (sd / math.sqrt(n))
    return PairedTestResult(t, df, t_distribution_two_sided_p(t, df), mean, sd)


LANDMARK_HEADER = "id,x1_mm,y1_mm,z1_mm,x2_mm,y2_mm,z2_mm,type,status,provenance"


def save_landmark_table(pairs, path):
    path = Path(path)
    lines = [LANDMARK_HEADER]
    for p in pairs:
        coords = [repr(float(v)) for v in (*p.p1, *p.p2)]
        lines.append(
            ",".join(
                [str(p.id), *coords, p.pair_type.value, p.status.value,
                 p.provenance.value]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def load_landmark_table(path):
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"landmark table {path} not found")
    lines = path.read_text().splitlines()
    if not lines:
        raise MalformedRowError(1, "empty landmark table")
    header = [h.strip() for h in lines[0].split(",")]
    expected = LANDMARK_HEADER.split(",")
    if len(header) != len(expected):
        raise MalformedRowError(1, f"expected {len(expected)} columns, got {len(header)}")
    for col in header[1:7]:
        if not col.endswith("_mm"):
            raise UnitMismatchError(f"coordinate column {col!r} does not declare mm")
    if header != expected:
        raise MalformedRowError(1, f"unexpected header {header}")

    pairs = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 10:
            raise MalformedRowError(lineno, f"expected 10 fields, got {len(fields)}")
        try:
            pair_id = int(fields[0])
            coords = [float(v) for v in fields[1:7]]
            ptype = PairType(fields[7])
            status = LandmarkStatus(fields[8])
            prov = Provenance(fields[9])
        except (ValueError, KeyError) as exc:
            raise MalformedRowError(lineno, str(exc)) from exc
        if not all(math.isfinite(c) for c in coords):
            raise MalformedRowError(lineno, "non-finite coordinate")
        if pair_id in seen:
            raise MalformedRowError(lineno, f"duplicate landmark id {pair_id}")
        seen.add(pair_id)
        pairs.append(
            LandmarkPair(pair_id, coords[:3], coords[3:], ptype, status, prov)
        )
    return pairs


_VOLUME_SUFFIXES = (".nii.gz", ".nii", ".raw")


def _find_volume(case_dir: Path, stem: str) -> Path:
    for suffix in _VOLUME_SUFFIXES:
        candidate = case_dir / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    raise MissingFileError(f"no {stem}.nii[.gz]/.raw found in {case_dir}")


def load_case(dir_path) -> CaseRecord:
    """Parse a case directory: image1.*, image2.*, landmarks.csv, case.json.

    Coordinates are world mm; case.json (optional) supplies case_index and
    scan_interval_days, defaulting to trailing digits of the directory name
    and 0.
    """
    case_dir = Path(dir_path)
    if not case_dir.is_dir():
        raise MissingFileError(f"case directory {case_dir} not found")
    image1 = _find_volume(case_dir, "image1")
    image2 = _find_volume(case_dir, "image2")
    pairs = load_landmark_table(case_dir / "landmarks.csv")

    case_index = 0
    interval = 0
    meta_path = case_dir / "case.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        case_index = int(meta.get("case_index", 0))
        interval = int(meta.get("scan_interval_days", 0))
    else:
        digits = "".join(ch for ch in case_dir.name if ch.isdigit())
        case_index = int(digits) if digits else 0
    return CaseRecord(case_index, image1, image2, pairs, interval)


def save_case(case: CaseRecord, dir_path):
    """Write a case directory (copies the referenced volume files)."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    for src in (case.image1_path, case.image2_path):
        src = Path(src)
        shutil.copyfile(src, out / src.name)
        sidecar = src.with_name(src.name + ".json")
        if sidecar.exists():
            shutil.copyfile(sidecar, out / sidecar.name)
    save_landmark_table(case.landmarks, out / "landmarks.csv")
    (out / "case.json").write_text(
        json.dumps(
            {"case_index": case.case_index,
             "scan_interval_days": case.scan_interval_days},
            indent=2, sort_keys=True,
        )
        + "\n"
    )


# Published per-case landmark census: case index -> (normal, flagged, source,
# scan interval in days). Totals: 1895 normal + 107 flagged pairs.
PUBLISHED_CASE_CENSUS = {
    1: (52, 5, "melanoma", 111),
    2: (58, 2, "melanoma", 84),
    3: (52, 5, "melanoma", 104),
    4: (51, 6, "melanoma", 97),
    5: (73, 6, "melanoma", 98),
    6: (47, 7, "melanoma", 98),
    7: (56, 4, "melanoma", 115),
    8: (64, 5, "melanoma", 111),
    9: (114, 8, "melanoma", 99),
    10: (42, 1, "melanoma", 37),
    11: (60, 4, "melanoma", 42),
    12: (82, 3, "melanoma", 104),
    13: (50, 6, "melanoma", 83),
    14: (53, 3, "melanoma", 50),
    15: (114, 3, "lung", 76),
    16: (44, 3, "lung", 40),
    17: (72, 6, "melanoma", 97),
    18: (86, 4, "melanoma", 89),
    19: (77, 2, "melanoma", 98),
    20: (62, 2, "melanoma", 198),
    21: (65, 0, "bjh", 1831),
    22: (90, 3, "bjh", 97),
    23: (58, 2, "bjh", 278),
    24: (30, 0, "bjh", 92),
    25: (43, 2, "bjh", 564),
    26: (56, 3, "bjh", 143),
    27: (60, 2, "bjh", 2198),
    28: (74, 4, "bjh", 168),
    29: (71, 1, "bjh", 2324),
    30: (39, 5, "bjh", 506),
}

PUBLISHED_NORMAL_TOTAL = 1895
PUBLISHED_FLAGGED_TOTAL = 107
# the release notes state both 510 and 507 type-2 pairs; neither is asserted
PUBLISHED_TYPE2_FIGURES = (507, 510)


@dataclass
class CensusSummary:
    per_case: dict
    total: int = 0
    normal: int = 0
    flagged: int = 0
    type1: int = 0
    type2: int = 0
    by_provenance: dict = field(default_factory=dict)
    discrepancies: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "per_case": {
                str(k): v for k, v in sorted(self.per_case.items())
            },
            "total": self.total,
            "normal": self.normal,
            "flagged": self.flagged,
            "type1": self.type1,
            "type2": self.type2,
            "by_provenance": dict(sorted(self.by_provenance.items())),
            "discrepancies": self.discrepancies,
            "notes": self.notes,
        }

    def to_text(self) -> str:
        lines = ["case  total  normal  flagged"]
        for idx in sorted(self.per_case):
            c = self.per_case[idx]
            lines.append(
                f"{idx:4d}  {c['total']:5d}  {c['normal']:6d}  {c['flagged']:7d}"
            )
        lines.append(
            f"all   {self.total:5d}  {self.normal:6d}  {self.flagged:7d}"
        )
        lines.append(f"type1 {self.type1}, type2 {self.type2}")
        if self.by_provenance:
            prov = ", ".join(f"{k}={v}" for k, v in sorted(self.by_provenance.items()))
            lines.append(f"provenance: {prov}")
        for d in self.discrepancies:
            lines.append(f"DISCREPANCY: {d}")
        for n in self.notes:
            lines.append(f"note: {n}")
        return "\n".join(lines) + "\n"


def dataset_census(cases) -> CensusSummary:
    """Totals by case, type, status and provenance, compared against the
    published per-case census; discrepancies are reported, never raised."""
    summary = CensusSummary(per_case={})
    for case in cases:
        normal = sum(1 for p in case.landmarks if p.status is LandmarkStatus.NORMAL)
        flagged = len(case.landmarks) - normal
        summary.per_case[case.case_index] = {
            "total": len(case.landmarks),
            "normal": normal,
            "flagged": flagged,
        }
        summary.total += len(case.landmarks)
        summary.normal += normal
        summary.flagged += flagged
        for p in case.landmarks:
            if p.pair_type is PairType.TYPE1:
                summary.type1 += 1
            else:
                summary.type2 += 1
            key = p.provenance.value
            summary.by_provenance[key] = summary.by_provenance.get(key, 0) + 1

        expected = PUBLISHED_CASE_CENSUS.get(case.case_index)
        if expected is not None:
            exp_normal, exp_flagged = expected[0], expected[1]
            if (normal, flagged) != (exp_normal, exp_flagged):
                summary.discrepancies.append(
                    f"case {case.case_index}: found {normal} normal + {flagged} "
                    f"flagged, published {exp_normal} + {exp_flagged}"
                )

    if summary.per_case:
        if summary.normal != PUBLISHED_NORMAL_TOTAL:
            summary.discrepancies.append(
                f"normal total {summary.normal} differs from published "
                f"{PUBLISHED_NORMAL_TOTAL}"
            )
        summary.notes.append(
            f"dataset type-2 count {summary.type2}; the release documentation "
            f"states both {PUBLISHED_TYPE2_FIGURES[0]} and "
            f"{PUBLISHED_TYPE2_FIGURES[1]} (internally inconsistent), so "
            "neither is asserted"
        )
    return summary
