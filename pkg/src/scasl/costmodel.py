"""Comparison of the analytic cost model against published figures.

The bundled fixture file transcribes the reference design's published
cycle counts and theoretical savings for a 6-layer network at base length
1024 (three image datasets, coarse- and fine-grained plans, plus the
uniform-length baseline rows). ``compare_published`` recomputes every
quantity from the formulas in :mod:`scasl.planner` and reports the
differences, so the cost model can be validated without any network or
hardware access.
"""

import csv
from dataclasses import dataclass
from importlib import resources

from . import planner
from .scinfer import LengthConfig


@dataclass(frozen=True)
class PublishedRow:
    label: str
    dataset: str
    layer_sizes: tuple
    base_length: int
    lengths: tuple
    expected_cycles: int | None
    expected_saving_energy: float | None   # fraction in [0, 1]
    expected_saving_latency: float | None
    citation: str


@dataclass(frozen=True)
class ComparisonRow:
    row: PublishedRow
    computed_cycles: int
    computed_saving_energy: float
    computed_saving_latency: float

    @property
    def cycles_diff(self) -> int | None:
        if self.row.expected_cycles is None:
            return None
        return self.computed_cycles - self.row.expected_cycles

    @property
    def saving_energy_diff(self) -> float | None:
        if self.row.expected_saving_energy is None:
            return None
        return self.computed_saving_energy - self.row.expected_saving_energy

    @property
    def saving_latency_diff(self) -> float | None:
        if self.row.expected_saving_latency is None:
            return None
        return self.computed_saving_latency - self.row.expected_saving_latency


def default_fixture_path():
    return resources.files("scasl") / "data" / "published_tables.csv"


def load_published_rows(path=None) -> list:
    """Parse the fixture CSV; empty numeric cells mean 'not published'."""
    if path is None:
        text = default_fixture_path().read_text()
        lines = text.splitlines()
    else:
        with open(path, newline="") as f:
            lines = f.read().splitlines()
    rows = []
    for rec in csv.DictReader(lines):
        rows.append(PublishedRow(
            label=rec["label"],
            dataset=rec["dataset"],
            layer_sizes=tuple(int(s) for s in rec["layer_sizes"].split("-")),
            base_length=int(rec["base_length"]),
            lengths=tuple(int(s) for s in rec["lengths"].split("-")),
            expected_cycles=int(rec["expected_cycles"])
            if rec["expected_cycles"] else None,
            expected_saving_energy=float(rec["expected_saving_energy_pct"]) / 100.0
            if rec["expected_saving_energy_pct"] else None,
            expected_saving_latency=float(rec["expected_saving_latency_pct"]) / 100.0
            if rec["expected_saving_latency_pct"] else None,
            citation=rec["citation"],
        ))
    return rows


def compare_published(rows) -> list:
    """Computed-vs-published savings and cycles for each fixture row."""
    out = []
    for row in rows:
        cfg = LengthConfig(row.lengths, row.base_length)
        out.append(ComparisonRow(
            row=row,
            computed_cycles=planner.cycles(cfg),
            computed_saving_energy=planner.saving_energy(cfg, row.layer_sizes),
            computed_saving_latency=planner.saving_latency(cfg),
        ))
    return out


def all_within_tolerance(comparisons, savings_tol: float = 0.001) -> bool:
    """True when cycles match exactly and savings match to 0.1 points."""
    for c in comparisons:
        if c.cycles_diff is not None and c.cycles_diff != 0:
            return False
        for diff in (c.saving_energy_diff, c.saving_latency_diff):
            if diff is not None and abs(diff) > savings_tol:
                return False
    return True
