"""Containers and CSV ingestion for doubly-interval-censored survival data.

Each study unit carries a fixed number of items (teeth within a mouth, say).
For every present item two censoring intervals are recorded, one bracketing
the unobserved onset time and one bracketing the unobserved event time.  The
event time equals the onset time plus a strictly positive gap, so the two
intervals must leave a nonempty feasible region in the (onset, gap) plane.
That is checked at ingestion and violations are rejected, never widened.

CSV layout
----------
One row per present (unit, item) pair, with a header.  The first six columns
are fixed::

    unit_id, item, onset_lo, onset_hi, event_lo, event_hi

followed by covariate columns named in a :class:`CsvSchema`.  ``item`` is a
1-based index.  An empty field or the string ``inf`` (any case) in an upper
bound means plus infinity; ``onset_lo = 0`` encodes a left-censored onset.
Absent items simply have no row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "CensoringInterval",
    "IntervalObservation",
    "Dataset",
    "CsvSchema",
    "build_design",
    "ingest_csv",
    "export_csv",
    "feasible_point",
]

FIXED_COLUMNS = ("unit_id", "item", "onset_lo", "onset_hi", "event_lo", "event_hi")


class DataError(ValueError):
    """Raised when input data violate the interval-censoring contract."""


@dataclass(frozen=True)
class CensoringInterval:
    """Half-open interval ``(lower, upper]`` known to contain a positive time.

    ``lower == 0`` means left-censored, ``upper == inf`` means right-censored.
    """

    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi):
            raise DataError("interval bounds must not be NaN")
        if lo < 0.0 or math.isinf(lo):
            raise DataError(f"interval lower bound must be finite and >= 0, got {lo}")
        if hi <= lo:
            raise DataError(f"interval must satisfy lower < upper, got ({lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def is_left_censored(self) -> bool:
        return self.lower == 0.0

    @property
    def is_right_censored(self) -> bool:
        return math.isinf(self.upper)

    def contains(self, t: float) -> bool:
        return self.lower < t <= self.upper

    def log_bounds(self) -> tuple[float, float]:
        """Bounds on the log scale; a zero lower bound maps to ``-inf``."""
        lo = -math.inf if self.lower == 0.0 else math.log(self.lower)
        hi = math.inf if math.isinf(self.upper) else math.log(self.upper)
        return lo, hi


def _pair_feasible(onset: CensoringInterval, event: CensoringInterval) -> bool:
    # A point (t_onset, t_gap) with t_onset in (u_lo, u_hi], t_gap > 0 and
    # t_onset + t_gap in (v_lo, v_hi] exists iff u_lo < v_hi.  Both intervals
    # are individually nonempty by construction.
    return onset.lower < event.upper


def feasible_point(onset: CensoringInterval, event: CensoringInterval) -> tuple[float, float]:
    """Return an interior (onset, gap) pair consistent with both intervals.

    Used to initialise latent times and to repair states that drift outside
    the feasible region by a rounding error.
    """
    if not _pair_feasible(onset, event):
        raise DataError(
            f"no feasible (onset, gap) for onset {onset} and event {event}"
        )
    t_hi = min(onset.upper, event.upper)
    if math.isinf(t_hi):
        t_onset = onset.lower + 1.0
    else:
        t_onset = 0.5 * (onset.lower + t_hi)
    g_lo = max(event.lower - t_onset, 0.0)
    g_hi = event.upper - t_onset
    if math.isinf(g_hi):
        t_gap = g_lo + 1.0
    else:
        t_gap = 0.5 * (g_lo + g_hi)
    return t_onset, t_gap


@dataclass
class IntervalObservation:
    """All recorded information for one study unit.

    Attributes
    ----------
    unit_id : str
        Identifier carried through from the source file.
    present : ndarray of bool, shape (n_items,)
        Which items were observed at all.  Absent items keep ``None`` in the
        interval lists and zero covariate rows; the model treats their latent
        times as unconstrained.
    onset, event : list of CensoringInterval or None
        Censoring intervals per item.
    onset_covariates : ndarray, shape (n_items, n_onset_covariates)
    event_covariates : ndarray, shape (n_items, n_event_covariates)
    """

    unit_id: str
    present: np.ndarray
    onset: list
    event: list
    onset_covariates: np.ndarray
    event_covariates: np.ndarray

    def __post_init__(self):
        self.present = np.asarray(self.present, dtype=bool)
        self.onset_covariates = np.atleast_2d(np.asarray(self.onset_covariates, dtype=float))
        self.event_covariates = np.atleast_2d(np.asarray(self.event_covariates, dtype=float))
        self.validate()

    @property
    def n_items(self) -> int:
        return self.present.size

    def validate(self):
        n = self.n_items
        if len(self.onset) != n or len(self.event) != n:
            raise DataError(f"unit {self.unit_id}: interval lists must have length {n}")
        if self.onset_covariates.shape[0] != n or self.event_covariates.shape[0] != n:
            raise DataError(f"unit {self.unit_id}: covariate rows must match n_items={n}")
        if not (np.isfinite(self.onset_covariates).all() and np.isfinite(self.event_covariates).all()):
            raise DataError(f"unit {self.unit_id}: covariates must be finite")
        for j in range(n):
            has_onset = self.onset[j] is not None
            has_event = self.event[j] is not None
            if self.present[j]:
                if not (has_onset and has_event):
                    raise DataError(
                        f"unit {self.unit_id}, item {j + 1}: present items need both intervals"
                    )
                if self.onset[j].lower > self.event[j].upper:
                    raise DataError(
                        f"unit {self.unit_id}, item {j + 1}: event interval ends "
                        f"before the onset interval begins"
                    )
                if not _pair_feasible(self.onset[j], self.event[j]):
                    raise DataError(
                        f"unit {self.unit_id}, item {j + 1}: censoring intervals leave "
                        f"no feasible (onset, gap) region"
                    )
            elif has_onset or has_event:
                raise DataError(
                    f"unit {self.unit_id}, item {j + 1}: absent items must not carry intervals"
                )


def build_design(onset_covariates: np.ndarray, event_covariates: np.ndarray) -> np.ndarray:
    """Block-diagonal design mapping stacked coefficients to item log-time means.

    With n items, p onset covariates and q event covariates per item, the
    coefficient vector stacks n onset blocks of length p followed by n gap
    blocks of length q.  Row j of the result (the onset of item j) carries the
    item's onset covariates in its onset block; row n + j (the gap of item j)
    carries the event covariates in its gap block.  One item with onset
    covariates (1, v) and event covariates (1, v, z) gives::

        [[1, v, 0, 0, 0],
         [0, 0, 1, v, z]]
    """
    oc = np.atleast_2d(np.asarray(onset_covariates, dtype=float))
    ec = np.atleast_2d(np.asarray(event_covariates, dtype=float))
    n, p = oc.shape
    n2, q = ec.shape
    if n2 != n:
        raise DataError("onset and event covariate arrays must have the same number of rows")
    design = np.zeros((2 * n, n * (p + q)))
    for j in range(n):
        design[j, j * p:(j + 1) * p] = oc[j]
        design[n + j, n * p + j * q:n * p + (j + 1) * q] = ec[j]
    return design


@dataclass
class Dataset:
    """A validated collection of interval observations with shared dimensions."""

    units: list
    n_items: int
    onset_covariate_names: list = field(default_factory=list)
    event_covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_items < 1:
            raise DataError("n_items must be at least 1")
        if not self.units:
            raise DataError("dataset must contain at least one unit")
        p = self.n_onset_covariates
        q = self.n_event_covariates
        seen = set()
        for obs in self.units:
            if obs.unit_id in seen:
                raise DataError(f"duplicate unit_id {obs.unit_id!r}")
            seen.add(obs.unit_id)
            if obs.n_items != self.n_items:
                raise DataError(f"unit {obs.unit_id}: expected {self.n_items} items")
            if obs.onset_covariates.shape[1] != p or obs.event_covariates.shape[1] != q:
                raise DataError(f"unit {obs.unit_id}: covariate width mismatch")
        if self.onset_covariate_names and len(self.onset_covariate_names) != p:
            raise DataError("onset covariate names do not match covariate width")
        if self.event_covariate_names and len(self.event_covariate_names) != q:
            raise DataError("event covariate names do not match covariate width")

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_onset_covariates(self) -> int:
        return self.units[0].onset_covariates.shape[1]

    @property
    def n_event_covariates(self) -> int:
        return self.units[0].event_covariates.shape[1]

    @property
    def coefficient_dim(self) -> int:
        """Length of a stacked coefficient vector, n_items * (p + q)."""
        return self.n_items * (self.n_onset_covariates + self.n_event_covariates)

    def design(self, i: int) -> np.ndarray:
        obs = self.units[i]
        return build_design(obs.onset_covariates, obs.event_covariates)

    def design_tensor(self) -> np.ndarray:
        """All unit designs stacked, shape (n_units, 2 * n_items, coefficient_dim)."""
        return np.stack([self.design(i) for i in range(self.n_units)])

    def interval_arrays(self):
        """Censoring bounds as arrays of shape (n_units, n_items).

        Returns a dict with keys ``onset_lo``, ``onset_hi``, ``event_lo``,
        ``event_hi`` and ``present``.  Absent items get the vacuous bounds
        (0, inf) so downstream code can treat every slot uniformly.
        """
        m, n = self.n_units, self.n_items
        out = {
            "onset_lo": np.zeros((m, n)),
            "onset_hi": np.full((m, n), np.inf),
            "event_lo": np.zeros((m, n)),
            "event_hi": np.full((m, n), np.inf),
            "present": np.zeros((m, n), dtype=bool),
        }
        for i, obs in enumerate(self.units):
            for j in range(n):
                if obs.present[j]:
                    out["present"][i, j] = True
                    out["onset_lo"][i, j] = obs.onset[j].lower
                    out["onset_hi"][i, j] = obs.onset[j].upper
                    out["event_lo"][i, j] = obs.event[j].lower
                    out["event_hi"][i, j] = obs.event[j].upper
        return out

    def feasible_times(self) -> np.ndarray:
        """An interior (onset, gap) point per (unit, item), shape (m, n, 2).

        Absent items get (1, 1), which is as good as any unconstrained value.
        """
        out = np.ones((self.n_units, self.n_items, 2))
        for i, obs in enumerate(self.units):
            for j in range(self.n_items):
                if obs.present[j]:
                    out[i, j] = feasible_point(obs.onset[j], obs.event[j])
        return out


@dataclass
class CsvSchema:
    """Names of the covariate columns following the six fixed columns."""

    onset_covariates: list
    event_covariates: list

    def __post_init__(self):
        if not self.onset_covariates or not self.event_covariates:
            raise DataError("schema needs at least one onset and one event covariate column")
        overlap = set(self.onset_covariates + self.event_covariates) & set(FIXED_COLUMNS)
        if overlap:
            raise DataError(f"covariate columns clash with fixed columns: {sorted(overlap)}")


def _parse_bound(text: str, column: str, where: str) -> float:
    s = text.strip()
    if s == "" or s.lower() == "inf":
        return math.inf
    try:
        return float(s)
    except ValueError:
        raise DataError(f"{where}: cannot parse {column}={text!r} as a number") from None


def _parse_float(text: str, column: str, where: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DataError(f"{where}: cannot parse {column}={text!r} as a number") from None


def ingest_csv(path, schema: CsvSchema, n_items: int | None = None) -> Dataset:
    """Read a dataset from ``path`` and validate it.

    Parameters
    ----------
    path : str or Path
        CSV file following the layout in the module docstring.
    schema : CsvSchema
        Which trailing columns hold onset and event covariates.
    n_items : int, optional
        Number of item slots per unit.  Defaults to the largest item index
        seen in the file.

    Raises
    ------
    DataError
        On malformed rows, duplicate (unit, item) pairs, or intervals that
        leave no feasible onset/gap region.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in reader.fieldnames]
        needed = list(FIXED_COLUMNS) + list(schema.onset_covariates) + list(schema.event_covariates)
        missing = [c for c in needed if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for lineno, raw in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            row = {k.strip(): (v if v is not None else "") for k, v in raw.items() if k is not None}
            unit_id = row["unit_id"].strip()
            if not unit_id:
                raise DataError(f"{where}: empty unit_id")
            try:
                item = int(row["item"])
            except ValueError:
                raise DataError(f"{where}: item must be an integer, got {row['item']!r}") from None
            if item < 1:
                raise DataError(f"{where}: item index must be >= 1, got {item}")
            onset = CensoringInterval(
                _parse_float(row["onset_lo"], "onset_lo", where),
                _parse_bound(row["onset_hi"], "onset_hi", where),
            )
            event = CensoringInterval(
                _parse_float(row["event_lo"], "event_lo", where),
                _parse_bound(row["event_hi"], "event_hi", where),
            )
            x_onset = [_parse_float(row[c], c, where) for c in schema.onset_covariates]
            x_event = [_parse_float(row[c], c, where) for c in schema.event_covariates]
            rows.append((unit_id, item, onset, event, x_onset, x_event))

    if not rows:
        raise DataError(f"{path}: no data rows")
    max_item = max(r[1] for r in rows)
    if n_items is None:
        n_items = max_item
    elif max_item > n_items:
        raise DataError(f"{path}: item index {max_item} exceeds n_items={n_items}")

    p = len(schema.onset_covariates)
    q = len(schema.event_covariates)
    order = []
    by_unit = {}
    for unit_id, item, onset, event, x_onset, x_event in rows:
        if unit_id not in by_unit:
            by_unit[unit_id] = {}
            order.append(unit_id)
        if item in by_unit[unit_id]:
            raise DataError(f"{path}: duplicate row for unit {unit_id!r}, item {item}")
        by_unit[unit_id][item] = (onset, event, x_onset, x_event)

    units = []
    for unit_id in order:
        present = np.zeros(n_items, dtype=bool)
        onset_iv = [None] * n_items
        event_iv = [None] * n_items
        xo = np.zeros((n_items, p))
        xe = np.zeros((n_items, q))
        for item, (onset, event, x_onset, x_event) in by_unit[unit_id].items():
            j = item - 1
            present[j] = True
            onset_iv[j] = onset
            event_iv[j] = event
            xo[j] = x_onset
            xe[j] = x_event
        units.append(IntervalObservation(unit_id, present, onset_iv, event_iv, xo, xe))

    return Dataset(
        units,
        n_items,
        onset_covariate_names=list(schema.onset_covariates),
        event_covariate_names=list(schema.event_covariates),
    )


def _format_value(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def export_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` back out in the canonical column order.

    Ingesting the result reproduces the dataset exactly; only column order
    and float formatting may differ from the original file.
    """
    names_o = dataset.onset_covariate_names or [
        f"x_onset_{k + 1}" for k in range(dataset.n_onset_covariates)
    ]
    names_e = dataset.event_covariate_names or [
        f"x_event_{k + 1}" for k in range(dataset.n_event_covariates)
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FIXED_COLUMNS) + names_o + names_e)
        for obs in dataset.units:
            for j in range(dataset.n_items):
                if not obs.present[j]:
                    continue
                row = [
                    obs.unit_id,
                    j + 1,
                    _format_value(obs.onset[j].lower),
                    _format_value(obs.onset[j].upper),
                    _format_value(obs.event[j].lower),
                    _format_value(obs.event[j].upper),
                ]
                row += [_format_value(v) for v in obs.onset_covariates[j]]
                row += [_format_value(v) for v in obs.event_covariates[j]]
                writer.writerow(row)
