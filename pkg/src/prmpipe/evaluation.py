"""First-error evaluation: per-subset error/correct accuracies and F1.

Consumes ProcessBench-style records (problem, tagged steps, gold first-error
label), drives a verifier to predict first errors under Pass@1 or Maj@N, and
reports the harmonic-mean F1 per subset the way the benchmark family does.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .rewards import aggregate_paths, predicted_first_error

log = logging.getLogger(__name__)

KNOWN_SUBSETS = ("GSM8K", "MATH", "OlympiadBench", "Omni-MATH", "other")


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    subset: str
    gold_first_error: int  # -1 (no error) or 1-based step index
    predicted_first_error: int

    def __post_init__(self) -> None:
        if self.gold_first_error != -1 and self.gold_first_error < 1:
            raise ValueError("gold_first_error must be -1 or >= 1")


@dataclass(frozen=True)
class EvalSample:
    """One benchmark item before prediction."""

    sample_id: str
    subset: str
    problem_statement: str
    step_texts: tuple[str, ...]
    gold_first_error: int


@dataclass
class SubsetMetrics:
    err_acc: float
    corr_acc: float
    f1: float
    err_total: int
    corr_total: int


@dataclass
class MetricsReport:
    per_subset: dict[str, SubsetMetrics]
    average_f1: float
    total_samples: int
    failures: int = 0


def judge_sample(record: EvalRecord) -> bool:
    """Correct iff the predicted first error matches gold exactly; the record
    lands in the error bucket when gold >= 1 and the correct bucket at -1."""
    return record.predicted_first_error == record.gold_first_error


def compute_f1(err_acc: float, corr_acc: float) -> float:
    """Harmonic mean of the two bucket accuracies (in percent); 0 when either is 0."""
    for value in (err_acc, corr_acc):
        if not 0.0 <= value <= 100.0:
            raise ValueError(f"accuracy out of range: {value}")
    if err_acc == 0.0 or corr_acc == 0.0:
        return 0.0
    return 2.0 * err_acc * corr_acc / (err_acc + corr_acc)


def normalize_subset(name: str | None) -> str:
    return name if name in KNOWN_SUBSETS else "other"


def build_report(records: Sequence[EvalRecord], failures: int = 0) -> MetricsReport:
    """Aggregate judged records into per-subset accuracies and F1."""
    buckets: dict[str, dict[str, int]] = {}
    for record in records:
        bucket = buckets.setdefault(
            normalize_subset(record.subset),
            {"err_hit": 0, "err_total": 0, "corr_hit": 0, "corr_total": 0},
        )
        hit = judge_sample(record)
        if record.gold_first_error == -1:
            bucket["corr_total"] += 1
            bucket["corr_hit"] += int(hit)
        else:
            bucket["err_total"] += 1
            bucket["err_hit"] += int(hit)
    per_subset: dict[str, SubsetMetrics] = {}
    for name in sorted(buckets):
        bucket = buckets[name]
        err_acc = 100.0 * bucket["err_hit"] / bucket["err_total"] if bucket["err_total"] else 0.0
        corr_acc = 100.0 * bucket["corr_hit"] / bucket["corr_total"] if bucket["corr_total"] else 0.0
        per_subset[name] = SubsetMetrics(
            err_acc=err_acc,
            corr_acc=corr_acc,
            f1=compute_f1(err_acc, corr_acc),
            err_total=bucket["err_total"],
            corr_total=bucket["corr_total"],
        )
    average = (
        sum(m.f1 for m in per_subset.values()) / len(per_subset) if per_subset else 0.0
    )
    return MetricsReport(
        per_subset=per_subset,
        average_f1=average,
        total_samples=len(records),
        failures=failures,
    )


# A verifier driver maps (sample, path_index) to one path's per-step rewards.
VerifierDriver = Callable[[EvalSample, int], Sequence[float]]


def run_protocol(
    samples: Sequence[EvalSample],
    verifier_driver: VerifierDriver,
    mode: str = "pass1",
    n: int = 1,
    threshold: float = 0.5,
) -> MetricsReport:
    """Evaluate samples under Pass@1 (one path) or Maj@N (average of n paths).

    Maj@N averages per-step rewards across paths before thresholding; per-path
    first errors are never voted directly. A verifier failure scores the
    sample incorrect and is counted, never dropped silently.
    """
    if mode not in ("pass1", "maj_n"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "maj_n" and n < 2:
        raise ValueError("maj_n requires n >= 2")
    paths = 1 if mode == "pass1" else n
    records: list[EvalRecord] = []
    failures = 0
    for sample in samples:
        per_path: list[Sequence[float]] = []
        try:
            for path in range(paths):
                per_path.append(list(verifier_driver(sample, path)))
            vector = aggregate_paths(per_path, solution_id=sample.sample_id)
            predicted = predicted_first_error(vector, threshold)
        except Exception as exc:  # noqa: BLE001 - failures become wrong predictions
            log.warning("verifier failed on %s: %s", sample.sample_id, exc)
            failures += 1
            # An impossible prediction index so the sample scores incorrect.
            predicted = 0
        records.append(
            EvalRecord(
                sample_id=sample.sample_id,
                subset=sample.subset,
                gold_first_error=sample.gold_first_error,
                predicted_first_error=predicted,
            )
        )
    return build_report(records, failures=failures)


def sample_from_record(record: Mapping) -> EvalSample:
    """Build an :class:`EvalSample` from a ProcessBench-style JSONL record.

    Expected fields: ``id``, ``problem``, ``steps`` (list of step texts), and
    ``label`` (gold first error, -1 when every step is fine); ``subset`` is
    optional and defaults to "other".
    """
    for key in ("problem", "steps", "label"):
        if key not in record:
            raise ValueError(f"eval record missing field {key!r}")
    steps = tuple(str(s) for s in record["steps"])
    if not steps:
        raise ValueError("eval record has no steps")
    return EvalSample(
        sample_id=str(record.get("id", record.get("sample_id", ""))),
        subset=normalize_subset(record.get("subset")),
        problem_statement=str(record["problem"]),
        step_texts=steps,
        gold_first_error=int(record["label"]),
    )


def format_report_table(report: MetricsReport) -> str:
    """Human-readable table, percentages to one decimal."""
    lines = [
        f"{'subset':<15} {'err acc':>8} {'corr acc':>9} {'F1':>6} {'n(err)':>7} {'n(corr)':>8}"
    ]
    for name, metrics in report.per_subset.items():
        lines.append(
            f"{name:<15} {metrics.err_acc:>8.1f} {metrics.corr_acc:>9.1f} "
            f"{metrics.f1:>6.1f} {metrics.err_total:>7d} {metrics.corr_total:>8d}"
        )
    lines.append(f"{'average F1':<15} {report.average_f1:>25.1f}")
    if report.failures:
        lines.append(f"verifier failures: {report.failures}")
    return "\n".join(lines)
