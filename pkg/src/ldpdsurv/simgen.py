"""Synthetic doubly-interval-censored data with known ground truth.

Two benchmark truths are built in.  Each assigns a two-group population a
joint law for (log onset, log gap): in the first, group A mixes two bivariate
normals (bimodal onsets) while group B is a single normal; in the second the
bimodality moves to the gaps of group A and group B mixes two components
sharing a mean.  Observation happens through a per-subject schedule of visit
times; true times are only known to lie between consecutive visits, before
the first, or after the last.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CensoringInterval, CsvSchema, Dataset, IntervalObservation, export_csv
from .model import GroupTruth, ScenarioTruth

__all__ = [
    "VisitSchedule",
    "SimulatedData",
    "scenario_truth",
    "generate",
    "default_schema",
]

_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class VisitSchedule:
    """Per-subject examination times: a first visit plus normal gaps.

    Nonpositive gap draws are rejected and redrawn so schedules are strictly
    increasing.
    """

    n_visits: int = 6
    first_visit_mean: float = 7.0
    first_visit_sd: float = 0.2
    gap_mean: float = 1.0
    gap_sd: float = 0.05

    def __post_init__(self):
        if self.n_visits < 1:
            raise ValueError("n_visits must be at least 1")
        if self.first_visit_sd <= 0 or self.gap_sd <= 0:
            raise ValueError("schedule standard deviations must be positive")

    def sample(self, n_subjects: int, rng: np.random.Generator) -> np.ndarray:
        """Visit-time matrix of shape (n_subjects, n_visits), rows increasing."""
        first = rng.normal(self.first_visit_mean, self.first_visit_sd, size=n_subjects)
        for _ in range(_MAX_REDRAWS):
            bad = first <= 0
            if not np.any(bad):
                break
            first[bad] = rng.normal(self.first_visit_mean, self.first_visit_sd, bad.sum())
        else:
            raise RuntimeError("could not draw a positive first visit time")
        gaps = rng.normal(self.gap_mean, self.gap_sd, size=(n_subjects, self.n_visits - 1))
        for _ in range(_MAX_REDRAWS):
            bad = gaps <= 0
            if not np.any(bad):
                break
            gaps[bad] = rng.normal(self.gap_mean, self.gap_sd, int(bad.sum()))
        else:
            raise RuntimeError("could not draw positive visit gaps")
        return np.cumsum(np.hstack([first[:, None], gaps]), axis=1)


# exact benchmark mixture parameters for the two scenarios, on the
# (log onset, log gap) scale
_SCENARIOS = {
    "I": {
        "A": {
            "weights": [0.5, 0.5],
            "means": [[1.80, 0.75], [2.40, 3.00]],
            "covariances": [
                [[5.00e-3, 2.50e-3], [2.50e-3, 3.00e-1]],
                [[2.50e-3, 1.25e-3], [1.25e-3, 1.00e-1]],
            ],
        },
        "B": {
            "weights": [1.0],
            "means": [[2.1, 2.2]],
            "covariances": [[[3.24e-2, 8.10e-2], [8.10e-2, 6.40e-1]]],
        },
    },
    "II": {
        "A": {
            "weights": [0.5, 0.5],
            "means": [[1.8, 2.2], [2.4, 2.2]],
            "covariances": [
                [[5.50e-3, 2.50e-3], [2.50e-3, 6.40e-1]],
                [[2.50e-3, 1.25e-3], [1.25e-3, 6.40e-1]],
            ],
        },
        "B": {
            "weights": [0.5, 0.5],
            "means": [[2.10, 0.75], [2.10, 0.75]],
            "covariances": [
                [[3.24e-2, 8.10e-2], [8.10e-2, 3.00e-1]],
                [[3.24e-2, 1.25e-3], [1.25e-3, 1.00e-1]],
            ],
        },
    },
}


def scenario_truth(which: str, group: str | None = None):
    """Exact generating mixture for a benchmark scenario.

    With ``group`` given returns that group's :class:`GroupTruth`; otherwise a
    :class:`ScenarioTruth` holding both groups.
    """
    key = str(which).upper()
    if key not in _SCENARIOS:
        raise ValueError(f"unknown scenario {which!r}; choose 'I' or 'II'")
    spec = _SCENARIOS[key]
    groups = {
        label: GroupTruth(
            weights=np.asarray(params["weights"]),
            means=np.asarray(params["means"]),
            covariances=np.asarray(params["covariances"]),
        )
        for label, params in spec.items()
    }
    if group is not None:
        g = str(group).upper()
        if g not in groups:
            raise ValueError(f"unknown group {group!r}; choose 'A' or 'B'")
        return groups[g]
    return ScenarioTruth(name=key, groups=groups)


def default_schema(n_groups: int = 2) -> CsvSchema:
    """Column layout written by the generator: intercept plus group indicators
    on both the onset and the gap block."""
    return CsvSchema(
        onset_covariates=[f"onset_x{k}" for k in range(n_groups)],
        event_covariates=[f"event_x{k}" for k in range(n_groups)],
    )


@dataclass
class SimulatedData:
    """A censored dataset together with everything hidden from the analyst."""

    dataset: Dataset
    truth: ScenarioTruth
    group_labels: np.ndarray
    onset_times: np.ndarray
    gap_times: np.ndarray
    visit_times: np.ndarray

    @property
    def event_times(self) -> np.ndarray:
        return self.onset_times + self.gap_times

    @property
    def schema(self) -> CsvSchema:
        return CsvSchema(
            onset_covariates=list(self.dataset.onset_covariate_names),
            event_covariates=list(self.dataset.event_covariate_names),
        )

    def write_data_csv(self, path) -> None:
        export_csv(self.dataset, path)

    def write_truth_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["unit_id", "group", "onset_time", "gap_time", "event_time"])
            for i, unit in enumerate(self.dataset.units):
                writer.writerow(
                    [
                        unit.unit_id,
                        self.group_labels[i],
                        repr(float(self.onset_times[i])),
                        repr(float(self.gap_times[i])),
                        repr(float(self.event_times[i])),
                    ]
                )


def _bracket(times: np.ndarray, visits: np.ndarray):
    """Interval endpoints that the visit schedule assigns to each true time.

    A time before the first visit gets (0, first]; one after the last visit
    gets (last, inf); otherwise the pair of consecutive visits around it.
    """
    n_visits = visits.shape[1]
    pos = np.sum(visits < times[:, None], axis=1)
    rows = np.arange(times.size)
    lower = np.where(pos == 0, 0.0, visits[rows, np.maximum(pos - 1, 0)])
    upper = np.where(
        pos == n_visits, np.inf, visits[rows, np.minimum(pos, n_visits - 1)]
    )
    return lower, upper


def generate(
    truth="I",
    n_per_group: int = 250,
    schedule: VisitSchedule | None = None,
    seed=None,
    group_order=None,
) -> SimulatedData:
    """Draw true times per group, censor them through visit schedules.

    ``truth`` may be a scenario name, a :class:`ScenarioTruth`, or a mapping
    from group label to :class:`GroupTruth`.  Subjects are numbered
    consecutively, one block per group; each carries an intercept and a group
    indicator (reference level first) on both the onset and the gap block.
    """
    if isinstance(truth, str):
        truth = scenario_truth(truth)
    elif isinstance(truth, dict):
        truth = ScenarioTruth(name="custom", groups=dict(truth))
    if n_per_group < 1:
        raise ValueError("n_per_group must be at least 1")
    if schedule is None:
        schedule = VisitSchedule()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = list(group_order) if group_order is not None else truth.labels
    if sorted(labels) != sorted(truth.labels):
        raise ValueError("group_order must be a permutation of the truth's groups")
    n_groups = len(labels)
    m = n_per_group * n_groups

    onset = np.empty(m)
    gap = np.empty(m)
    group_labels = np.empty(m, dtype=object)
    for g, label in enumerate(labels):
        block = slice(g * n_per_group, (g + 1) * n_per_group)
        times = truth.groups[label].sample(n_per_group, rng)
        onset[block] = times[:, 0]
        gap[block] = times[:, 1]
        group_labels[block] = label
    event = onset + gap

    visits = schedule.sample(m, rng)
    onset_lo, onset_hi = _bracket(onset, visits)
    event_lo, event_hi = _bracket(event, visits)

    units = []
    for i in range(m):
        g = i // n_per_group
        x = np.array([[1.0] + [1.0 if g == k else 0.0 for k in range(1, n_groups)]])
        units.append(
            IntervalObservation(
                unit_id=str(i + 1),
                present=np.array([True]),
                onset=[CensoringInterval(onset_lo[i], onset_hi[i])],
                event=[CensoringInterval(event_lo[i], event_hi[i])],
                onset_covariates=x,
                event_covariates=x.copy(),
            )
        )
    schema = default_schema(n_groups)
    dataset = Dataset(
        units=units,
        n_items=1,
        onset_covariate_names=schema.onset_covariates,
        event_covariate_names=schema.event_covariates,
    )
    return SimulatedData(
        dataset=dataset,
        truth=truth,
        group_labels=np.asarray(group_labels, dtype=str),
        onset_times=onset,
        gap_times=gap,
        visit_times=visits,
    )
