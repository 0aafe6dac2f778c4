"""Reference-value reproduction reports.

Each report recomputes one stored reference table from the analytic
models or the Monte Carlo study and scores every cell against its
reference value at a documented tolerance. Rendering is plain aligned
text or CSV; a report passes only if every row does, which is what
drives the command-line exit status.
"""

import dataclasses

import numpy as np

from .compiler import CompileOptions, compile_partition
from .oracle import ExperimentConfig, statistical_experiment
from .perf import (
    LARGE_N,
    PlatformParams,
    improvement_factors,
    large_runtime,
    optext_runtime,
    small_runtime,
    standard_workloads,
)
from .resources import decomposition_savings

__all__ = [
    "ReproReport",
    "ReproRow",
    "TABLES",
    "reproduce_table",
    "table1",
    "table2",
    "table6",
    "table7",
    "table8",
]


@dataclasses.dataclass(frozen=True)
class ReproRow:
    """One reproduced cell: reference vs computed under a criterion."""

    quantity: str
    reference: float
    computed: float
    criterion: str
    passed: bool

    @property
    def relative_error(self) -> float | None:
        if self.reference == 0:
            return None
        return (self.computed - self.reference) / self.reference


def _within(quantity, reference, computed, tol) -> ReproRow:
    ok = abs(computed - reference) <= tol * abs(reference)
    return ReproRow(quantity, reference, computed,
                    f"within {tol:.0%}", ok)


def _within_points(quantity, reference, computed, points) -> ReproRow:
    ok = abs(computed - reference) <= points
    return ReproRow(quantity, reference, computed,
                    f"within {points:g} points", ok)


def _at_least(quantity, reference, computed, bound) -> ReproRow:
    return ReproRow(quantity, reference, computed,
                    f"at least {bound:g}", computed >= bound)


def _at_most(quantity, reference, computed, bound) -> ReproRow:
    return ReproRow(quantity, reference, computed,
                    f"at most {bound:g}", computed <= bound)


def _exact(quantity, reference, computed, decimals=None) -> ReproRow:
    if decimals is None:
        ok = computed == reference
        label = "exact"
    else:
        ok = round(computed, decimals) == reference
        label = f"exact to {decimals} decimals"
    return ReproRow(quantity, reference, computed, label, ok)


@dataclasses.dataclass
class ReproReport:
    table: str
    rows: list

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_text(self) -> str:
        head = ("quantity", "reference", "computed", "error", "criterion",
                "result")
        body = []
        for r in self.rows:
            err = "n/a" if r.relative_error is None \
                else f"{r.relative_error:+.2%}"
            body.append((r.quantity, f"{r.reference:g}", f"{r.computed:.4g}",
                         err, r.criterion, "pass" if r.passed else "FAIL"))
        widths = [max(len(head[c]), *(len(row[c]) for row in body))
                  for c in range(len(head))]
        lines = [f"{self.table} reproduction"]
        for row in (head, tuple("-" * w for w in widths), *body):
            lines.append("  ".join(cell.ljust(w)
                                   for cell, w in zip(row, widths)).rstrip())
        verdict = "PASS" if self.passed else "FAIL"
        failed = sum(not r.passed for r in self.rows)
        lines.append(f"{verdict}: {len(self.rows) - failed}/{len(self.rows)} "
                     f"rows within tolerance")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["quantity,reference,computed,relative_error,criterion,"
                 "result"]
        for r in self.rows:
            err = "" if r.relative_error is None \
                else f"{r.relative_error:.6f}"
            crit = r.criterion.replace(",", ";")
            lines.append(f"{r.quantity},{r.reference:g},{r.computed:.6g},"
                         f"{err},{crit},{'pass' if r.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


_SMALL_MS = {"WordEmbed": 1.97, "SIFT": 3.94, "TagSpace": 7.88}
_GEN1_S = {"WordEmbed": 48.10, "SIFT": 50.11, "TagSpace": 108.31}
_GEN2_S = {"WordEmbed": 2.48, "SIFT": 4.50, "TagSpace": 17.07}
_OPTEXT_S = {"WordEmbed": 0.039, "SIFT": 0.062, "TagSpace": 0.23}
_FAILURE_PCT = {"kNN-WordEmbed": (100, 1, 0, 0),
                "kNN-SIFT": (100, 1, 0, 0),
                "kNN-TagSpace": (100, 72, 5, 0)}
_DECOMP = {"WordEmbed": (1.0, 1.98, 3.86, 7.38, 13.56, 23.34),
           "SIFT": (1.0, 1.99, 3.93, 7.67, 14.68, 27.00),
           "TagSpace": (1.0, 1.99, 3.96, 7.83, 15.31, 29.26)}
_DECOMP_X = (1, 2, 4, 8, 16, 32)
_PACKING = {"WordEmbed": 2.93, "SIFT": 3.28, "TagSpace": 3.31}
_TOTAL = {"WordEmbed": 63.14, "SIFT": 71.96, "TagSpace": 73.17}


def table1(params: PlatformParams | None = None) -> ReproReport:
    """Small-dataset query run times."""
    rows = [
        _within(f"{w.name} small-dataset run time [ms]", _SMALL_MS[w.name],
                small_runtime(w, params) * 1e3, 0.02)
        for w in standard_workloads()]
    return ReproReport("table1", rows)


def table2(params: PlatformParams | None = None) -> ReproReport:
    """Large-dataset run times across platform generations."""
    rows = []
    for w in standard_workloads(n=LARGE_N):
        rows.append(_within(f"{w.name} generation-1 run time [s]",
                            _GEN1_S[w.name], large_runtime(w, 1, params),
                            0.02))
    for w in standard_workloads(n=LARGE_N):
        rows.append(_within(f"{w.name} generation-2 run time [s]",
                            _GEN2_S[w.name], large_runtime(w, 2, params),
                            0.02))
    for w in standard_workloads(n=LARGE_N):
        rows.append(_within(f"{w.name} optimized+extended run time [s]",
                            _OPTEXT_S[w.name], optext_runtime(w, params),
                            0.20))
    return ReproReport("table2", rows)


def table6(config: ExperimentConfig | None = None) -> ReproReport:
    """Grouped-report failure rates from the Monte Carlo study.

    Cells with an acceptance bound use it directly; the remaining small
    cells get a 15-point band, the same slack the bounded mid-table cell
    is given.
    """
    cfg = config if config is not None else ExperimentConfig()
    outcome = statistical_experiment(cfg)
    rows = []
    for name, refs in _FAILURE_PCT.items():
        for kp, ref in zip((1, 2, 3, 4), refs):
            got = outcome.rate(name, kp)
            quantity = f"{name} failure rate at report budget {kp} [%]"
            if kp == 1:
                rows.append(_at_least(quantity, ref, got, 95))
            elif kp == 4:
                rows.append(_exact(quantity, ref, got))
            elif name == "kNN-WordEmbed" and kp == 2:
                rows.append(_at_most(quantity, ref, got, 5))
            elif name == "kNN-TagSpace" and kp == 2:
                rows.append(_within_points(quantity, ref, got, 15))
            elif name == "kNN-TagSpace" and kp == 3:
                rows.append(_at_most(quantity, ref, got, 10))
            else:
                rows.append(_within_points(quantity, ref, got, 15))
    return ReproReport("table6", rows)


def table7() -> ReproReport:
    """STE decomposition savings over the factor grid."""
    rows = []
    for w in standard_workloads():
        image = compile_partition(np.zeros((1, w.d), dtype=np.uint8),
                                  CompileOptions())
        for x, ref in zip(_DECOMP_X, _DECOMP[w.name]):
            rows.append(_within(
                f"{w.name} decomposition saving at x={x}", ref,
                decomposition_savings(image, x),
                0.10 if x <= 8 else 0.15))
    return ReproReport("table7", rows)


def table8(params: PlatformParams | None = None) -> ReproReport:
    """Combined improvement factors of the optimized, extended design."""
    workloads = standard_workloads(n=LARGE_N)
    factors = {w.name: improvement_factors(w, params=params)
               for w in workloads}
    first = factors[workloads[0].name]
    rows = [
        _exact("technology scaling factor", 3.19, first["technology"],
               decimals=2),
        _exact("counter-extension latency factor", 1.75,
               first["counter_increment"]),
    ]
    for w in workloads:
        rows.append(_within(f"{w.name} vector packing factor",
                            _PACKING[w.name],
                            factors[w.name]["vector_packing"], 0.20))
    for w in workloads:
        rows.append(_within(f"{w.name} STE decomposition factor",
                            _DECOMP[w.name][2],
                            factors[w.name]["ste_decomposition"], 0.10))
    for w in workloads:
        rows.append(_within(f"{w.name} total improvement", _TOTAL[w.name],
                            factors[w.name]["total"], 0.20))
    return ReproReport("table8", rows)


TABLES = {
    "table1": table1,
    "table2": table2,
    "table6": table6,
    "table7": table7,
    "table8": table8,
}


def reproduce_table(name: str, **kwargs) -> ReproReport:
    key = name if name.startswith("table") else f"table{name}"
    if key not in TABLES:
        raise ValueError(f"unknown table {name!r}; choose from "
                         f"{sorted(TABLES)}")
    return TABLES[key](**kwargs)
