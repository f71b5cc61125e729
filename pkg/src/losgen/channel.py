"""Two-state (LOS / NLOS) Markov model of the land-mobile-satellite link.

Link parameters are the dense-urban, 2.2 GHz set measured in France for five
elevation angles.  Each angle carries the lognormal state-length statistics
(location ``mu`` and scale ``sigma`` of ln(meters)), the minimum state lengths
in meters, and the per-step transition probabilities

* ``g`` -- NLOS -> LOS  (bad -> good)
* ``b`` -- LOS -> NLOS  (good -> bad)

Only ``g`` and ``b`` drive trace generation; the length statistics are kept
for reference and for :func:`derive_transition_prob`.

States are encoded as ``+1`` (LOS) and ``-1`` (NLOS) everywhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._rng import as_generator, substream

__all__ = [
    "ChannelState",
    "LOS",
    "NLOS",
    "ElevationParams",
    "TransitionMatrix",
    "TraceDataset",
    "DegenerateChainError",
    "MarkovSampler",
    "builtin_table",
    "params_for",
    "transition_matrix",
    "stationary_los_probability",
    "generate_trace",
    "generate_dataset",
    "derive_transition_prob",
    "EXPERIMENT_ANGLES",
]


class ChannelState(enum.IntEnum):
    LOS = 1
    NLOS = -1


LOS = int(ChannelState.LOS)
NLOS = int(ChannelState.NLOS)

#: angles used for model training and evaluation
EXPERIMENT_ANGLES = (70, 60, 45)


class DegenerateChainError(ValueError):
    """Raised when a chain with ``g = b = 0`` has no unique stationary law."""


@dataclass(frozen=True)
class ElevationParams:
    """Link statistics and transition probabilities for one elevation angle."""

    angle_deg: int
    mu_g: float
    mu_b: float
    sigma_g: float
    sigma_b: float
    durmin_g: float
    durmin_b: float
    g: float
    b: float

    def __post_init__(self):
        for name in ("g", "b"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} is not a probability in [0, 1]")
        if self.sigma_g < 0 or self.sigma_b < 0:
            raise ValueError("sigma_g and sigma_b must be non-negative")
        if self.durmin_g < 0 or self.durmin_b < 0:
            raise ValueError("minimum durations must be non-negative")


# (angle, mu_G, mu_B, sigma_G, sigma_B, durmin_G, durmin_B, g, b)
_TABLE = (
    (20, 2.0042, 3.6890, 1.2049, 0.9796, 3.9889, 10.3114, 0.00014310, 0.00047466),
    (30, 2.7332, 2.7582, 1.1030, 1.2210, 7.3174, 5.7276, 0.00024460, 0.00027570),
    (45, 3.0639, 2.9108, 1.6980, 1.2602, 10.0, 6.0, 0.00020318, 0.00007556),
    (60, 2.8135, 2.0211, 1.9595, 0.6568, 10.0, 1.9126, 0.00105161, 0.00010797),
    (70, 4.2919, 2.1012, 2.4703, 1.0341, 118.3312, 4.8569, 0.00052923, 2.76683e-6),
)


def builtin_table() -> list[ElevationParams]:
    """Dense-urban 2.2 GHz link parameters for 20, 30, 45, 60 and 70 degrees."""
    return [
        ElevationParams(angle, mu_g, mu_b, s_g, s_b, d_g, d_b, g, b)
        for angle, mu_g, mu_b, s_g, s_b, d_g, d_b, g, b in _TABLE
    ]


def params_for(angle: int) -> ElevationParams:
    for row in builtin_table():
        if row.angle_deg == angle:
            return row
    known = ", ".join(str(r[0]) for r in _TABLE)
    raise KeyError(f"unknown elevation angle {angle} (built-in angles: {known})")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic 2x2 matrix, rows/columns ordered (LOS, NLOS)."""

    p_stay_los: float
    p_los_to_nlos: float
    p_nlos_to_los: float
    p_stay_nlos: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [[self.p_stay_los, self.p_los_to_nlos], [self.p_nlos_to_los, self.p_stay_nlos]]
        )


def transition_matrix(params: ElevationParams) -> TransitionMatrix:
    g, b = params.g, params.b
    if not (0.0 <= g <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError(f"transition probabilities out of range: g={g}, b={b}")
    return TransitionMatrix(
        p_stay_los=1.0 - b, p_los_to_nlos=b, p_nlos_to_los=g, p_stay_nlos=1.0 - g
    )


def stationary_los_probability(params: ElevationParams) -> float:
    """Long-run LOS share ``g / (g + b)`` of the chain."""
    total = params.g + params.b
    if total == 0:
        raise DegenerateChainError("degenerate chain: no unique stationary distribution")
    return params.g / total


def generate_trace(
    params: ElevationParams,
    n: int,
    seed,
    initial: int | None = None,
) -> np.ndarray:
    """Simulate ``n`` steps of the chain and return an int8 array of +1/-1.

    The first state is drawn from the stationary distribution unless
    ``initial`` is given.  Sojourns are drawn directly as geometric run
    lengths, which is exact for a memoryless two-state chain and avoids a
    Python-level loop over steps.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rng = as_generator(seed)
    if n == 0:
        return np.empty(0, dtype=np.int8)

    if initial is None:
        if params.g + params.b == 0:
            raise DegenerateChainError(
                "degenerate chain (g = b = 0) needs an explicit initial state"
            )
        state = LOS if rng.random() < stationary_los_probability(params) else NLOS
    else:
        state = int(initial)
        if state not in (LOS, NLOS):
            raise ValueError(f"initial state must be +1 or -1, got {initial!r}")

    # exit probability of each state; a zero exit probability means absorbing
    exit_p = {LOS: params.b, NLOS: params.g}
    pieces_s, pieces_len = [], []
    filled = 0
    chunk = 64
    while filled < n:
        states = state * np.where(np.arange(chunk) % 2 == 0, 1, -1)
        p = np.where(states == LOS, exit_p[LOS], exit_p[NLOS])
        runs = rng.geometric(np.where(p > 0, p, 1.0))
        runs = np.where(p > 0, runs, n)
        csum = np.cumsum(runs)
        stop = int(np.searchsorted(csum, n - filled))
        k = min(stop + 1, chunk)
        pieces_s.append(states[:k])
        pieces_len.append(runs[:k])
        filled += int(csum[k - 1])
        state = int(-states[k - 1])
        chunk = min(chunk * 2, 1 << 16)
    out = np.repeat(np.concatenate(pieces_s), np.concatenate(pieces_len))
    return out[:n].astype(np.int8)


@dataclass
class TraceDataset:
    """Rows are time steps, columns are elevation angles, cells are +1/-1."""

    angles: tuple[int, ...]
    cells: np.ndarray
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        self.angles = tuple(int(a) for a in self.angles)
        cells = np.asarray(self.cells)
        if cells.size == 0:
            cells = cells.reshape(cells.shape[0] if cells.ndim == 2 else 0, len(self.angles))
        if cells.ndim != 2 or cells.shape[1] != len(self.angles):
            raise ValueError(
                f"cells must have shape (rows, {len(self.angles)}), got {cells.shape}"
            )
        if len(set(self.angles)) != len(self.angles):
            raise ValueError(f"duplicate angle column in {list(self.angles)}")
        if cells.size and not np.isin(cells, (LOS, NLOS)).all():
            r, c = np.argwhere(~np.isin(cells, (LOS, NLOS)))[0]
            raise ValueError(f"invalid state value {cells[r, c]!r} at row {r + 1}, column {c + 1}")
        self.cells = cells.astype(np.int8, copy=False)

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def columns(self) -> list[str]:
        return [f"angle_{a}" for a in self.angles]

    def column(self, angle: int) -> np.ndarray:
        return self.cells[:, self.angles.index(angle)]

    def los_fraction(self) -> dict[int, float]:
        if self.rows == 0:
            return {a: float("nan") for a in self.angles}
        return {a: float(np.mean(self.cells[:, i] == LOS)) for i, a in enumerate(self.angles)}

    def __eq__(self, other):
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return self.angles == other.angles and np.array_equal(self.cells, other.cells)


def _resolve(angles: Iterable, table: Sequence[ElevationParams] | None):
    lookup = {p.angle_deg: p for p in (table if table is not None else builtin_table())}
    out = []
    for a in angles:
        if isinstance(a, ElevationParams):
            out.append(a)
        elif a in lookup:
            out.append(lookup[a])
        else:
            raise KeyError(f"unknown elevation angle {a}; known: {sorted(lookup)}")
    return out


def generate_dataset(
    angles: Iterable,
    n: int,
    seed: int,
    table: Sequence[ElevationParams] | None = None,
) -> TraceDataset:
    """One independent Markov column per angle.

    ``angles`` may mix integer degrees (looked up in ``table``, the built-in
    rows by default) and :class:`ElevationParams` instances.  Column ``i`` uses
    the substream ``(seed, i)``.
    """
    params = _resolve(angles, table)
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    cols = [generate_trace(p, n, substream(seed, i)) for i, p in enumerate(params)]
    cells = np.stack(cols, axis=1) if cols else np.empty((n, 0), dtype=np.int8)
    return TraceDataset(tuple(p.angle_deg for p in params), cells, seed=seed)


class MarkovSampler:
    """The Markov generator itself, exposed with the same ``sample`` API as a trained model."""

    family = "markov"

    def __init__(self, angles=EXPERIMENT_ANGLES, table=None):
        self.params = _resolve(angles, table)
        self.angles = tuple(p.angle_deg for p in self.params)

    def sample(self, n: int, seed: int) -> TraceDataset:
        return generate_dataset(self.params, n, seed)

    def __call__(self, n: int, seed: int) -> TraceDataset:
        return self.sample(n, seed)


def derive_transition_prob(mu: float, sigma: float, step_m: float) -> float:
    """Per-step exit probability from lognormal state-length statistics.

    Takes the mean state length ``exp(mu + sigma**2 / 2)`` meters and returns
    ``min(1, step_m / mean)``.  Exploratory only: it does not reproduce the
    tabulated ``g``/``b`` at any single step length.
    """
    if step_m <= 0:
        raise ValueError(f"step_m must be positive, got {step_m}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    mean_len = math.exp(mu + 0.5 * sigma * sigma)
    return min(1.0, step_m / mean_len)
