"""Finding records: data model, file ingestion, synthetic corpora, splits.

A *finding* is one deficiency raised about an internal credit-risk model
(PD/LGD/EAD), labeled with one of nine validation dimensions and an
ordinal severity.  This module owns the record type, JSONL/CSV ingestion
and rendering, a deterministic synthetic-corpus generator, and the
stratified train/valid/test split.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import warnings
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np

from ._util import derive_seed, largest_remainder
from .errors import DataError


class DimensionLabel(str, Enum):
    """The nine validation dimensions a finding can be assigned to."""

    DOCUMENTATION = "documentation"
    MODEL_INPUT = "model_input"
    MODEL_ENVIRONMENT = "model_environment"
    MODEL_OUTPUT = "model_output"
    MODEL_DESIGN = "model_design"
    IMPACT_ASSESSMENT = "impact_assessment"
    MARGIN_OF_CONSERVATISM = "margin_of_conservatism"
    MODEL_USE = "model_use"
    MODEL_IMPLEMENTATION = "model_implementation"

    @classmethod
    def parse(cls, text: str) -> "DimensionLabel":
        try:
            return cls(text)
        except ValueError:
            valid = ", ".join(d.value for d in cls)
            raise DataError(
                f"unknown dimension {text!r}; valid values are: {valid}"
            ) from None


class ModelCategory(str, Enum):
    """Credit-risk model family a finding refers to."""

    PD = "PD"
    LGD = "LGD"
    EAD = "EAD"

    @classmethod
    def parse(cls, text: str) -> "ModelCategory":
        try:
            return cls(text)
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise DataError(
                f"unknown model category {text!r}; valid values are: {valid}"
            ) from None


@dataclass(frozen=True)
class SeverityScale:
    """Ordered severity level set; index 0 is the least severe."""

    levels: tuple[str, ...] = ("low", "medium", "high")

    def __post_init__(self):
        if len(self.levels) < 2:
            raise DataError("severity scale needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise DataError("severity scale levels must be distinct")

    def validate(self, name: str) -> str:
        if name not in self.levels:
            raise DataError(
                f"unknown severity {name!r}; valid levels are: "
                + ", ".join(self.levels)
            )
        return name

    def index(self, name: str) -> int:
        return self.levels.index(self.validate(name))


DEFAULT_SEVERITY_SCALE = SeverityScale()


@dataclass(frozen=True)
class Finding:
    """One validation finding record."""

    id: str
    title: str
    description: str
    dimension: DimensionLabel | None = None
    severity: str | None = None
    model_category: ModelCategory | None = None
    finding_date: dt.date | None = None
    due_date: dt.date | None = None
    person_to_act: str | None = None
    action_plan: str | None = None

    def __post_init__(self):
        if not self.id or not self.id.strip():
            raise DataError("finding id must be nonempty")
        if not self.title.strip():
            raise DataError(f"finding {self.id!r}: title must be nonempty")
        if not self.description.strip():
            raise DataError(f"finding {self.id!r}: description must be nonempty")
        if (
            self.finding_date is not None
            and self.due_date is not None
            and self.due_date < self.finding_date
        ):
            raise DataError(
                f"finding {self.id!r}: due_date {self.due_date} precedes "
                f"finding_date {self.finding_date}"
            )


@dataclass(frozen=True)
class SplitRatios:
    """Train/valid/test fractions; must sum to 1."""

    train: float = 0.6
    valid: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DataError(f"split ratio {name}={v} must lie in (0,1)")
        if abs(self.train + self.valid + self.test - 1.0) > 1e-9:
            raise DataError("split ratios must sum to 1 within 1e-9")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.valid, self.test)


_JSONL_KEYS = (
    "id",
    "title",
    "description",
    "dimension",
    "severity",
    "model_category",
    "finding_date",
    "due_date",
    "person_to_act",
    "action_plan",
)


def _parse_date(value: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise DataError(f"{where}: invalid ISO date {value!r}") from None


def _finding_from_record(rec: dict, where: str, scale: SeverityScale) -> Finding:
    for key in ("id", "title", "description"):
        if not rec.get(key):
            raise DataError(f"{where}: missing required field {key!r}")
    try:
        return Finding(
            id=str(rec["id"]),
            title=str(rec["title"]),
            description=str(rec["description"]),
            dimension=(
                DimensionLabel.parse(rec["dimension"])
                if rec.get("dimension")
                else None
            ),
            severity=(
                scale.validate(rec["severity"]) if rec.get("severity") else None
            ),
            model_category=(
                ModelCategory.parse(rec["model_category"])
                if rec.get("model_category")
                else None
            ),
            finding_date=(
                _parse_date(rec["finding_date"], where)
                if rec.get("finding_date")
                else None
            ),
            due_date=(
                _parse_date(rec["due_date"], where) if rec.get("due_date") else None
            ),
            person_to_act=rec.get("person_to_act") or None,
            action_plan=rec.get("action_plan") or None,
        )
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def load_findings(path, format: str = "jsonl",
                  severity_scale: SeverityScale = DEFAULT_SEVERITY_SCALE
                  ) -> list[Finding]:
    """Load findings from a JSONL or CSV file, order preserved.

    Unknown fields are ignored.  Malformed lines, duplicate ids, and
    invalid label strings raise :class:`DataError` naming the offending
    line.
    """
    path = Path(path)
    if format not in ("jsonl", "csv"):
        raise DataError(f"unknown findings format {format!r}")
    text = path.read_text(encoding="utf-8")
    findings: list[Finding] = []
    if format == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not a JSON object")
            findings.append(_finding_from_record(rec, f"{path}:{lineno}", severity_scale))
    else:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None:
            raise DataError(f"{path}: CSV file has no header row")
        missing = {"id", "title", "description"} - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path}: CSV header missing columns {sorted(missing)}")
        for rec in reader:
            lineno = reader.line_num
            findings.append(_finding_from_record(rec, f"{path}:{lineno}", severity_scale))
    seen: dict[str, int] = {}
    for i, f in enumerate(findings):
        if f.id in seen:
            raise DataError(
                f"{path}: duplicate finding id {f.id!r} (records {seen[f.id] + 1} and {i + 1})"
            )
        seen[f.id] = i
    return findings


def _record_from_finding(f: Finding) -> dict:
    rec = {}
    for key in _JSONL_KEYS:
        value = getattr(f, key)
        if value is None:
            continue
        if isinstance(value, Enum):
            value = value.value
        elif isinstance(value, dt.date):
            value = value.isoformat()
        rec[key] = value
    return rec


def write_findings(findings, path, format: str = "jsonl") -> None:
    """Render findings to JSONL or CSV; inverse of :func:`load_findings`."""
    path = Path(path)
    if format == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for f in findings:
                fh.write(json.dumps(_record_from_finding(f), ensure_ascii=False))
                fh.write("\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_JSONL_KEYS, lineterminator="\n")
            writer.writeheader()
            for f in findings:
                writer.writerow({k: v for k, v in _record_from_finding(f).items()})
    else:
        raise DataError(f"unknown findings format {format!r}")


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

# Keyword pools per dimension.  Weight 2 marks words that are distinctive
# for the dimension; weight 1 words are shared vocabulary that keeps the
# labels from being trivially separable.
_DIMENSION_POOLS: dict[DimensionLabel, list[tuple[str, float]]] = {
    DimensionLabel.DOCUMENTATION: [
        ("document", 2), ("documentation", 2), ("description", 2), ("code", 2),
        ("order", 2), ("update", 1), ("level", 1), ("model", 1), ("data", 1),
        ("default", 1),
    ],
    DimensionLabel.MODEL_INPUT: [
        ("customer", 2), ("portfolio", 2), ("development", 1), ("missing", 2),
        ("quality", 2), ("model", 1), ("use", 1), ("data", 1), ("default", 1),
        ("moc", 1), ("perform", 1), ("lgd", 1),
    ],
    DimensionLabel.MODEL_DESIGN: [
        ("md", 2), ("downturn", 2), ("estimation", 2), ("calibration", 2),
        ("process", 1), ("risk", 1), ("use", 1), ("model", 1), ("moc", 1),
        ("default", 1), ("data", 1), ("lgd", 1),
    ],
    DimensionLabel.MODEL_OUTPUT: [
        ("observe", 2), ("threshold", 2), ("rating", 2), ("grade", 2),
        ("test", 2), ("month", 1), ("perform", 1), ("data", 1), ("lgd", 1),
        ("model", 1),
    ],
    DimensionLabel.MODEL_ENVIRONMENT: [
        ("representativeness", 2), ("scope", 2), ("within", 1), ("credit", 1),
        ("portfolio", 1), ("development", 1), ("risk", 1), ("analysis", 1),
        ("include", 1), ("model", 1),
    ],
    DimensionLabel.IMPACT_ASSESSMENT: [
        ("impact", 2), ("calculate", 2), ("definition", 2), ("different", 1),
        ("deficiency", 1), ("analysis", 1), ("development", 1),
        ("description", 1), ("model", 1), ("default", 1),
    ],
    DimensionLabel.MARGIN_OF_CONSERVATISM: [
        ("moc", 2), ("conservatism", 2), ("deficiency", 2), ("driver", 2),
        ("apply", 1), ("analysis", 1), ("development", 1), ("md", 1),
        ("model", 1), ("perform", 1), ("default", 1),
    ],
    DimensionLabel.MODEL_USE: [
        ("decision", 2), ("new", 2), ("need", 2), ("process", 1), ("use", 1),
        ("customer", 1), ("credit", 1), ("update", 1), ("model", 1),
        ("data", 1),
    ],
    DimensionLabel.MODEL_IMPLEMENTATION: [
        ("isd", 2), ("implementation", 2), ("implement", 2), ("deployment", 2),
        ("plan", 1), ("scope", 1), ("include", 1), ("update", 1),
        ("perform", 1), ("model", 1),
    ],
}

_FILLER_WORDS = (
    "finding", "review", "team", "report", "bank", "internal", "annual",
    "period", "issue", "evidence", "follow", "action", "noted", "observed",
)

_SEVERITY_MARKERS: dict[str, tuple[str, ...]] = {
    "low": ("minor", "cosmetic", "limited", "housekeeping"),
    "medium": ("moderate", "material", "notable"),
    "high": ("critical", "severe", "significant", "breach"),
}

_PERSON_POOL = (
    "a.kowalski", "j.nowak", "m.visser", "p.janssen", "r.smith", "k.tanaka",
)

# Default label mix for synthetic corpora (fractions of the corpus).
DEFAULT_DIMENSION_PROFILE: dict[DimensionLabel, float] = {
    DimensionLabel.DOCUMENTATION: 52 / 657,
    DimensionLabel.MODEL_INPUT: 181 / 657,
    DimensionLabel.MODEL_ENVIRONMENT: 45 / 657,
    DimensionLabel.MODEL_OUTPUT: 103 / 657,
    DimensionLabel.MODEL_DESIGN: 139 / 657,
    DimensionLabel.IMPACT_ASSESSMENT: 21 / 657,
    DimensionLabel.MARGIN_OF_CONSERVATISM: 69 / 657,
    DimensionLabel.MODEL_USE: 18 / 657,
    DimensionLabel.MODEL_IMPLEMENTATION: 29 / 657,
}

_SEVERITY_WEIGHTS = (0.45, 0.35, 0.20)
_CATEGORY_WEIGHTS = (0.5, 0.3, 0.2)


def _normalize_profile(profile) -> dict[DimensionLabel, float]:
    if not profile:
        raise DataError("label profile must not be empty")
    out: dict[DimensionLabel, float] = {}
    for key, frac in profile.items():
        label = key if isinstance(key, DimensionLabel) else DimensionLabel.parse(str(key))
        out[label] = float(frac)
    total = sum(out.values())
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"profile fractions sum to {total}, expected 1 within 1e-9")
    return out


def _draw_words(rng, pool: list[tuple[str, float]], count: int) -> list[str]:
    words = [w for w, _ in pool]
    weights = np.array([wt for _, wt in pool], dtype=float)
    weights /= weights.sum()
    idx = rng.choice(len(words), size=count, replace=True, p=weights)
    return [words[i] for i in idx]


def _marker_token(dim: DimensionLabel) -> str:
    return dim.value.replace("_", "")


def generate_synthetic_corpus(
    n: int,
    seed: int,
    profile=None,
    severity_scale: SeverityScale = DEFAULT_SEVERITY_SCALE,
    separable: bool = False,
) -> list[Finding]:
    """Generate ``n`` labeled findings with keyword-pool text.

    Deterministic for fixed ``(n, seed, profile)``.  Per-dimension counts
    follow the profile with largest-remainder rounding.  Titles and
    descriptions are drawn from dimension-specific keyword pools plus
    filler words, so the labels are learnable without being trivially
    separable; ``separable=True`` additionally injects a unique marker
    token per dimension, which makes the classes exactly separable.
    """
    if n < 1:
        raise DataError(f"corpus size n={n} must be >= 1")
    prof = _normalize_profile(profile if profile is not None else DEFAULT_DIMENSION_PROFILE)
    # Canonical dimension order keeps the apportionment deterministic.
    order = [d for d in DimensionLabel if d in prof]
    counts = largest_remainder([prof[d] for d in order], n)

    dims: list[DimensionLabel] = []
    for d, c in zip(order, counts):
        dims.extend([d] * c)
    rng = np.random.default_rng(derive_seed(seed, "synthetic-corpus"))
    dims = [dims[i] for i in rng.permutation(n)]

    width = max(4, len(str(n)))
    base_date = dt.date(2019, 1, 1)
    levels = severity_scale.levels
    sev_weights = list(_SEVERITY_WEIGHTS[: len(levels)])
    if len(sev_weights) < len(levels):
        sev_weights += [sev_weights[-1]] * (len(levels) - len(sev_weights))
    sev_p = np.array(sev_weights, dtype=float)
    sev_p /= sev_p.sum()
    categories = list(ModelCategory)

    findings: list[Finding] = []
    for i, dim in enumerate(dims):
        pool = _DIMENSION_POOLS[dim]
        severity = levels[rng.choice(len(levels), p=sev_p)]
        category = categories[rng.choice(3, p=np.array(_CATEGORY_WEIGHTS))]

        title_words = _draw_words(rng, pool, int(rng.integers(2, 4)))
        title_words += list(rng.choice(_FILLER_WORDS, size=int(rng.integers(1, 3))))
        desc_words = _draw_words(rng, pool, int(rng.integers(6, 11)))
        desc_words += list(rng.choice(_FILLER_WORDS, size=int(rng.integers(2, 5))))
        markers = _SEVERITY_MARKERS.get(severity)
        if markers is not None:
            for _ in range(2):
                if rng.random() < 0.8:
                    desc_words.append(str(rng.choice(markers)))
        if rng.random() < 0.6:
            desc_words.append(category.value.lower())
        if separable:
            marker = _marker_token(dim)
            title_words.append(marker)
            desc_words.append(marker)
        desc_idx = rng.permutation(len(desc_words))
        desc_words = [desc_words[j] for j in desc_idx]

        finding_date = base_date + dt.timedelta(days=int(rng.integers(0, 1430)))
        due_date = finding_date + dt.timedelta(days=int(rng.integers(30, 361)))
        findings.append(
            Finding(
                id=f"F{i:0{width}d}",
                title=" ".join(title_words).capitalize(),
                description=" ".join(desc_words).capitalize() + ".",
                dimension=dim,
                severity=severity,
                model_category=category,
                finding_date=finding_date,
                due_date=due_date,
                person_to_act=str(rng.choice(_PERSON_POOL)),
                action_plan="remediate " + " ".join(_draw_words(rng, pool, 2)),
            )
        )
    return findings


# ---------------------------------------------------------------------------
# Stratified splitting
# ---------------------------------------------------------------------------


class SmallStratumWarning(UserWarning):
    """A stratum had fewer than 3 members and went entirely to train."""


def _stratum_key(f: Finding, stratify_on: str):
    if stratify_on == "dimension":
        value = f.dimension
    elif stratify_on == "severity":
        value = f.severity
    else:
        raise DataError(f"unknown stratification field {stratify_on!r}")
    if value is None:
        raise DataError(f"finding {f.id!r} has no {stratify_on} label")
    return value.value if isinstance(value, Enum) else value


def stratified_split(
    findings,
    ratios: SplitRatios,
    stratify_on: str = "dimension",
    seed: int = 0,
) -> tuple[list[Finding], list[Finding], list[Finding]]:
    """Split into (train, valid, test), stratum by stratum.

    Each stratum is shuffled by a hash keyed on (seed, stratum, id) — so
    the outcome is independent of input order — and cut with
    largest-remainder rounding.  Strata with fewer than 3 members go to
    train and raise :class:`SmallStratumWarning`.
    """
    strata: dict[str, list[Finding]] = {}
    for f in findings:
        strata.setdefault(_stratum_key(f, stratify_on), []).append(f)

    subsets: tuple[list[Finding], ...] = ([], [], [])
    for name in sorted(strata):
        members = strata[name]
        if len(members) < 3:
            warnings.warn(
                f"stratum {name!r} has only {len(members)} member(s); assigning all to train",
                SmallStratumWarning,
                stacklevel=2,
            )
            subsets[0].extend(members)
            continue
        members = sorted(
            members, key=lambda f: derive_seed(seed, name, f.id)
        )
        counts = largest_remainder(ratios.as_tuple(), len(members))
        pos = 0
        for subset, c in zip(subsets, counts):
            subset.extend(members[pos : pos + c])
            pos += c

    order = {f.id: i for i, f in enumerate(findings)}
    train, valid, test = (
        sorted(s, key=lambda f: order[f.id]) for s in subsets
    )
    return train, valid, test
