"""Benchmark harness: the executability ladder and novelty-coverage metrics.

Rows report, per paper, the four ladder predicates plus C (correct), I
(incomplete), M (missing), W (hyperparameter fidelity) and the weighted
completeness score. Metric columns are presented at two decimals with
half-up rounding, matching how such tables are printed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Sequence

from .sandbox import InvalidReport, SmokeReport

DEFAULT_PSNR_TOLERANCE_DB = 0.5
DEFAULT_SMOKE_ITERS = 3000

LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
STATUSES = ("correct", "incorrect-partial", "missing")


class EmptyItemSet(Exception):
    pass


class ZeroWeightSum(Exception):
    pass


class ManifestError(Exception):
    pass


def round2(value: float) -> float:
    """Two-decimal presentation rounding, half away from zero."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class NoveltyItem:
    id: str
    description: str
    weight: float
    status: str
    level: float
    theta: float | None = None
    theta_hat: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight out of [0,1]: {self.weight}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if not any(abs(self.level - l) < 1e-12 for l in LEVELS):
            raise ValueError(f"level {self.level} not on the six-level scale")
        if self.status == "missing" and self.level != 0.0:
            raise ValueError("missing components must sit at level 0")

    @classmethod
    def from_dict(cls, data: dict) -> "NoveltyItem":
        return cls(
            id=data["id"],
            description=data.get("description", ""),
            weight=float(data["w"]),
            status=data["status"],
            level=float(data["level"]),
            theta=data.get("theta"),
            theta_hat=data.get("theta_hat"),
        )


def load_judgments(path: str | Path) -> list[NoveltyItem]:
    return [NoveltyItem.from_dict(d) for d in json.loads(Path(path).read_text())]


@dataclass(frozen=True)
class NoveltyCoverage:
    C: float
    I: float
    M: float
    W: float
    w_undefined: bool = False


def novelty_coverage(items: Sequence[NoveltyItem]) -> NoveltyCoverage:
    """Fractions of correct / incomplete / missing components plus the
    hyperparameter-fidelity rate W over items with both values present."""
    if not items:
        raise EmptyItemSet("novelty coverage needs at least one item")
    n = len(items)
    c = sum(1 for i in items if i.status == "correct") / n
    i_ = sum(1 for i in items if i.status == "incorrect-partial") / n
    m = sum(1 for i in items if i.status == "missing") / n
    paired = [i for i in items if i.theta is not None and i.theta_hat is not None]
    if not paired:
        return NoveltyCoverage(C=c, I=i_, M=m, W=0.0, w_undefined=True)
    within = sum(1 for i in paired if abs(i.theta - i.theta_hat) < 0.1 * abs(i.theta))
    return NoveltyCoverage(C=c, I=i_, M=m, W=within / len(paired))


def llm_score(items: Sequence[NoveltyItem]) -> float:
    """Weighted mean of six-level completeness scores."""
    total_weight = sum(i.weight for i in items)
    if total_weight <= 0:
        raise ZeroWeightSum("sum of weights must be positive")
    return sum(i.weight * i.level for i in items) / total_weight


@dataclass(frozen=True)
class LadderResult:
    imports_resolve: bool
    trainable: bool
    stable: bool
    converged: bool

    def __post_init__(self):
        ok = (not self.converged or self.stable) and (not self.stable or self.trainable) and (
            not self.trainable or self.imports_resolve
        )
        if not ok:
            raise ValueError(f"ladder not monotone: {self}")


def ladder_evaluate(
    report: SmokeReport | dict,
    psnr_target: float | None,
    tolerance: float = DEFAULT_PSNR_TOLERANCE_DB,
) -> LadderResult:
    """Four monotone predicates: imports resolve, trainable, stable (no NaN
    and non-increasing loss), converged (PSNR within tolerance of target)."""
    if isinstance(report, dict):
        report = SmokeReport.from_dict(report)
    if not isinstance(report, SmokeReport):
        raise InvalidReport(f"expected SmokeReport, got {type(report)}")
    imports_resolve = report.imports_resolve
    trainable = imports_resolve and report.train_started and report.steps_completed > 0
    stable = (
        trainable
        and not report.nan_detected
        and report.loss_first is not None
        and report.loss_last is not None
        and report.loss_last <= report.loss_first
    )
    converged = (
        stable
        and psnr_target is not None
        and report.psnr_eval is not None
        and report.psnr_eval >= psnr_target - tolerance
    )
    return LadderResult(
        imports_resolve=imports_resolve, trainable=trainable, stable=stable, converged=converged
    )


REPORT_COLUMNS = ["id", "imports", "trainable", "stable", "converged", "C", "I", "M", "W", "score"]


@dataclass
class BenchRow:
    id: str
    ladder: LadderResult
    coverage: NoveltyCoverage
    score: float

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "imports": self.ladder.imports_resolve,
            "trainable": self.ladder.trainable,
            "stable": self.ladder.stable,
            "converged": self.ladder.converged,
            "C": round2(self.coverage.C),
            "I": round2(self.coverage.I),
            "M": round2(self.coverage.M),
            "W": round2(self.coverage.W),
            "score": round2(self.score),
        }


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    w_flags: dict = field(default_factory=dict)

    def aggregate(self) -> dict:
        if not self.rows:
            return {}
        n = len(self.rows)
        return {
            "papers": n,
            "imports": sum(r.ladder.imports_resolve for r in self.rows) / n,
            "trainable": sum(r.ladder.trainable for r in self.rows) / n,
            "stable": sum(r.ladder.stable for r in self.rows) / n,
            "converged": sum(r.ladder.converged for r in self.rows) / n,
            "C": sum(r.coverage.C for r in self.rows) / n,
            "I": sum(r.coverage.I for r in self.rows) / n,
            "M": sum(r.coverage.M for r in self.rows) / n,
            "W": sum(r.coverage.W for r in self.rows) / n,
            "score": sum(r.score for r in self.rows) / n,
        }

    def to_json_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "aggregate": self.aggregate(),
            "w_undefined": self.w_flags,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                record = row.to_dict()
                record = {
                    k: (str(v).lower() if isinstance(v, bool) else f"{v:.2f}" if isinstance(v, float) else v)
                    for k, v in record.items()
                }
                writer.writerow(record)


def load_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        entries = json.loads(path.read_text())
    except ValueError as exc:
        raise ManifestError(f"unreadable manifest: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ManifestError("manifest must be a nonempty list")
    base = path.parent
    for entry in entries:
        if "id" not in entry:
            raise ManifestError(f"manifest entry missing id: {entry}")
        for key in ("paper_md", "judgments", "dataset"):
            if entry.get(key) and not Path(entry[key]).is_absolute():
                entry[key] = str(base / entry[key])
    return entries


def default_stub_runner(entry: dict) -> SmokeReport:
    """Deterministic runner for fixture benches: the stub trainer's canonical
    smoke report, independent of the paper under evaluation."""
    from .sandbox import StubSandbox
    import math

    stub = StubSandbox()
    return SmokeReport(
        imports_resolve=True,
        registered=True,
        train_started=True,
        steps_completed=DEFAULT_SMOKE_ITERS,
        nan_detected=False,
        loss_first=stub.loss_start * math.exp(-stub.decay),
        loss_last=stub.loss_start * math.exp(-stub.decay * DEFAULT_SMOKE_ITERS),
        psnr_eval=stub.psnr_schedule[0],
        wall_time_s=round(DEFAULT_SMOKE_ITERS * 1e-5, 6),
        error=None,
    )


def run_bench(
    manifest: str | Path | list[dict],
    runner: Callable[[dict], SmokeReport] = default_stub_runner,
    judgments_source: Callable[[dict], list[NoveltyItem]] | None = None,
    tolerance: float = DEFAULT_PSNR_TOLERANCE_DB,
) -> BenchReport:
    """Evaluate every manifest entry: ladder from the runner's smoke report,
    novelty metrics from the judgments source. Deterministic under fixtures."""
    entries = load_manifest(manifest) if not isinstance(manifest, list) else manifest
    if not entries:
        raise ManifestError("empty manifest")

    def fixture_judgments(entry: dict) -> list[NoveltyItem]:
        if not entry.get("judgments"):
            raise ManifestError(f"entry {entry['id']} has no judgments fixture")
        return load_judgments(entry["judgments"])

    source = judgments_source or fixture_judgments
    report = BenchReport()
    for entry in entries:
        smoke = runner(entry)
        ladder = ladder_evaluate(smoke, entry.get("psnr_target"), tolerance)
        items = source(entry)
        coverage = novelty_coverage(items)
        score = llm_score(items)
        report.rows.append(BenchRow(id=entry["id"], ladder=ladder, coverage=coverage, score=score))
        if coverage.w_undefined:
            report.w_flags[entry["id"]] = True
    return report
