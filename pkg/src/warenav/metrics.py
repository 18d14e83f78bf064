"""Success, distance, step, collision and warning ratios over episode records."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

from .world import SUCCESS_DELTA

CSV_COLUMNS = ("model", "sr", "dr", "as", "cr", "wr", "n", "delta")
TERMINATIONS = ("stop_action", "step_cap")


class EmptyRunSetError(ValueError):
    pass


class MatrixMismatchError(ValueError):
    def __init__(self, missing: Sequence[tuple[str, str, int]]):
        self.missing = list(missing)
        cells = ", ".join(f"{m}: ({s}, pair {p})" for m, s, p in self.missing)
        super().__init__(f"scene x pair matrices differ; missing cells: {cells}")


@dataclass(frozen=True)
class RunRecord:
    scene: str
    pair_index: int
    T: int
    d_final: float
    D_init: float
    C: int
    F: int
    W: int
    terminated_by: str = "step_cap"

    def __post_init__(self):
        if not 0 <= self.C <= self.F <= self.T:
            raise ValueError(f"need 0 <= C <= F <= T, got C={self.C} F={self.F} T={self.T}")
        if not 0 <= self.W <= self.T:
            raise ValueError(f"need 0 <= W <= T, got W={self.W} T={self.T}")
        if self.terminated_by not in TERMINATIONS:
            raise ValueError(f"terminated_by must be one of {TERMINATIONS}")

    def to_dict(self) -> dict:
        return asdict(self)


def _nonempty(runs: Sequence[RunRecord]) -> Sequence[RunRecord]:
    runs = list(runs)
    if not runs:
        raise EmptyRunSetError("metrics need at least one run")
    return runs


def compute_sr(runs: Iterable[RunRecord], delta: float = SUCCESS_DELTA) -> float:
    runs = _nonempty(runs)
    return sum(r.d_final <= delta for r in runs) / len(runs)


def compute_dr(runs: Iterable[RunRecord]) -> float:
    runs = _nonempty(runs)
    for r in runs:
        if r.D_init <= 0:
            raise ValueError(f"run {r.scene}/{r.pair_index} has zero initial distance")
    return sum((r.D_init - r.d_final) / r.D_init for r in runs) / len(runs)


def compute_as(runs: Iterable[RunRecord]) -> float:
    runs = _nonempty(runs)
    return sum(r.T for r in runs) / len(runs)


def compute_cr(runs: Iterable[RunRecord]) -> float:
    # a run without forward attempts contributes 0
    runs = _nonempty(runs)
    return sum(r.C / r.F if r.F else 0.0 for r in runs) / len(runs)


def compute_wr(runs: Iterable[RunRecord]) -> float:
    runs = _nonempty(runs)
    for r in runs:
        if r.T <= 0:
            raise ValueError(f"run {r.scene}/{r.pair_index} has zero steps")
    return sum(r.W / r.T for r in runs) / len(runs)


@dataclass(frozen=True)
class ReportRow:
    model: str
    sr: float
    dr: float
    as_: float
    cr: float
    wr: float
    n: int
    delta: float
    expected: int | None = None

    @property
    def completeness(self) -> str:
        return f"{self.n}/{self.expected if self.expected is not None else self.n} complete"


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[ReportRow, ...]
    delta: float

    @property
    def n(self) -> int:
        return sum(r.n for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(
                [
                    r.model,
                    f"{100 * r.sr:.2f}",
                    f"{100 * r.dr:.2f}",
                    f"{r.as_:.2f}",
                    f"{100 * r.cr:.2f}",
                    f"{100 * r.wr:.2f}",
                    r.n,
                    f"{r.delta:g}",
                ]
            )
        return buf.getvalue()

    def to_table(self) -> str:
        head = ("Model", "SR(%)↑", "DR(%)↑", "AS↓", "CR(%)↓", "WR(%)↓", "N", "Runs")
        body = [
            (
                r.model,
                f"{100 * r.sr:.2f}",
                f"{100 * r.dr:.2f}",
                f"{r.as_:.2f}",
                f"{100 * r.cr:.2f}",
                f"{100 * r.wr:.2f}",
                str(r.n),
                r.completeness,
            )
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in [head, *body]) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
        lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(row) for row in body]
        return "\n".join(lines) + f"\n(delta = {self.delta:g} px)\n"


def report_row(model: str, runs: Sequence[RunRecord], delta: float, expected: int | None = None) -> ReportRow:
    return ReportRow(
        model=model,
        sr=compute_sr(runs, delta),
        dr=compute_dr(runs),
        as_=compute_as(runs),
        cr=compute_cr(runs),
        wr=compute_wr(runs),
        n=len(runs),
        delta=delta,
        expected=expected,
    )


def aggregate_report(
    runs_by_model: Mapping[str, Sequence[RunRecord]],
    delta: float = SUCCESS_DELTA,
    expected: Mapping[str, int] | None = None,
    strict: bool = True,
) -> BenchReport:
    """One row per model, in insertion order.

    With ``strict`` every model must cover the same (scene, pair) cells.
    """
    if strict:
        cells = {m: {(r.scene, r.pair_index) for r in runs} for m, runs in runs_by_model.items()}
        union = set().union(*cells.values()) if cells else set()
        missing = sorted((m, s, p) for m, have in cells.items() for s, p in union - have)
        if missing:
            raise MatrixMismatchError(missing)
    rows = tuple(
        report_row(m, runs, delta, None if expected is None else expected.get(m))
        for m, runs in runs_by_model.items()
    )
    return BenchReport(rows, delta)
