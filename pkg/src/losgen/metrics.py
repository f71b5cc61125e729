"""Per-column distribution distances and the repeated-evaluation harness.

Distributions live on the ordered support ``(-1, +1)``.  Wasserstein and KS
are computed generically from CDFs over the support, so they would carry over
unchanged to a wider support; the two-point closed forms are only used as
test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._rng import substream
from .channel import TraceDataset

SUPPORT = (-1, 1)
METRICS = ("ks_complement", "wasserstein", "kl")
DEFAULT_KL_EPSILON = 1e-9


@dataclass(frozen=True)
class EmpiricalDistribution:
    support: tuple[int, ...]
    pmf: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64)
        if pmf.shape != (len(self.support),):
            raise ValueError(f"pmf has shape {pmf.shape}, support has {len(self.support)} points")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf must be non-negative and sum to 1, got {pmf}")
        if list(self.support) != sorted(self.support):
            raise ValueError("support must be sorted")
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def two_point(cls, p_los: float, sample_count: int = 0):
        """Distribution with LOS (+1) probability ``p_los``."""
        return cls(SUPPORT, np.array([1.0 - p_los, p_los]), sample_count)

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    def prob(self, value) -> float:
        return float(self.pmf[self.support.index(value)])


def empirical(column) -> EmpiricalDistribution:
    """Category frequencies of a +1/-1 column."""
    col = np.asarray(column)
    if col.size == 0:
        raise ValueError("cannot build an empirical distribution from an empty column")
    counts = np.array([np.count_nonzero(col == v) for v in SUPPORT], dtype=np.float64)
    if counts.sum() != col.size:
        raise ValueError("column contains values outside {-1, +1}")
    return EmpiricalDistribution(SUPPORT, counts / col.size, int(col.size))


def _check_support(p, q):
    if tuple(p.support) != tuple(q.support):
        raise ValueError(f"support mismatch: {p.support} vs {q.support}")


def wasserstein(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """1-D earth mover's distance: sum of |CDF_p - CDF_q| over support gaps."""
    _check_support(p, q)
    gaps = np.diff(np.asarray(p.support, dtype=np.float64))
    return float(np.sum(np.abs(p.cdf[:-1] - q.cdf[:-1]) * gaps))


def ks_complement(p: EmpiricalDistribution, q: EmpiricalDistribution) -> float:
    """``1 - max |CDF_p - CDF_q|``; 1 means identical distributions."""
    _check_support(p, q)
    return float(1.0 - np.max(np.abs(p.cdf - q.cdf)))


def kl_divergence(
    p: EmpiricalDistribution, q: EmpiricalDistribution, epsilon: float = DEFAULT_KL_EPSILON
) -> float:
    """KL(p || q) in nats, with additive smoothing ``epsilon`` then renormalisation."""
    _check_support(p, q)
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    k = len(p.support)
    ps = (p.pmf + epsilon) / (1.0 + k * epsilon)
    qs = (q.pmf + epsilon) / (1.0 + k * epsilon)
    if np.any((qs == 0) & (ps > 0)):
        raise ValueError("KL undefined: zero-probability mismatch")
    nz = ps > 0
    kl = float(np.sum(ps[nz] * (np.log(ps[nz]) - np.log(qs[nz]))))
    return max(kl, 0.0)


def column_metrics(real_col, synth_col, epsilon: float = DEFAULT_KL_EPSILON) -> dict[str, float]:
    p, q = empirical(real_col), empirical(synth_col)
    return {
        "ks_complement": ks_complement(p, q),
        "wasserstein": wasserstein(p, q),
        "kl": kl_divergence(p, q, epsilon),
    }


def compare_datasets(
    real: TraceDataset, synth: TraceDataset, epsilon: float = DEFAULT_KL_EPSILON
) -> dict[int, dict[str, float]]:
    """All three metrics for every angle; columns must match by name and order."""
    if real.columns != synth.columns:
        raise ValueError(
            f"column mismatch: real has {real.columns}, synthetic has {synth.columns}"
        )
    return {
        a: column_metrics(real.cells[:, i], synth.cells[:, i], epsilon)
        for i, a in enumerate(real.angles)
    }


@dataclass
class MetricReport:
    """Mean and population variance of each metric per angle over repetitions.

    ``values[(angle, metric)]`` keeps the per-repetition values.
    """

    angles: tuple[int, ...]
    repetitions: int
    mean: dict[tuple[int, str], float]
    variance: dict[tuple[int, str], float]
    values: dict[tuple[int, str], list[float]] = field(default_factory=dict, compare=False)
    label: str = ""

    @classmethod
    def from_values(cls, angles, values: dict[tuple[int, str], Sequence[float]], label=""):
        reps = {len(v) for v in values.values()}
        if len(reps) != 1:
            raise ValueError("every (angle, metric) cell needs the same number of repetitions")
        mean = {k: float(np.mean(v)) for k, v in values.items()}
        var = {k: float(np.var(v)) for k, v in values.items()}
        return cls(tuple(angles), reps.pop(), mean, var, {k: list(v) for k, v in values.items()}, label)

    def check(self) -> None:
        for (angle, metric), v in self.variance.items():
            if v < 0:
                raise ValueError(f"negative variance for {metric} at {angle}")
        for (angle, metric), m in self.mean.items():
            if metric == "ks_complement" and not 0 <= m <= 1:
                raise ValueError(f"ks_complement mean {m} outside [0, 1] at {angle}")
            if metric in ("wasserstein", "kl") and m < 0:
                raise ValueError(f"{metric} mean {m} is negative at {angle}")


def evaluate_repeated(
    real_source: Callable[[int, int], TraceDataset],
    model,
    reps: int = 50,
    n: int = 100_000,
    seed: int = 0,
    epsilon: float = DEFAULT_KL_EPSILON,
    label: str = "",
) -> MetricReport:
    """Fresh real test set vs fresh synthetic set, ``reps`` times.

    ``real_source(n, seed)`` returns a real dataset; ``model`` is anything
    with ``sample(n, seed)`` (a trained model or a
    :class:`~losgen.channel.MarkovSampler`).  Repetition ``r`` draws its real
    set from substream ``(seed, r, 0)`` and its synthetic set from
    ``(seed, r, 1)``.
    """
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    sampler = model.sample if hasattr(model, "sample") else model
    values: dict[tuple[int, str], list[float]] = {}
    angles = None
    for r in range(reps):
        real = real_source(n, _subseed(seed, r, 0))
        synth = sampler(n, _subseed(seed, r, 1))
        try:
            per_angle = compare_datasets(real, synth, epsilon)
        except ValueError as exc:
            raise ValueError(f"repetition {r}: {exc}") from exc
        angles = real.angles
        for a, m in per_angle.items():
            for name in METRICS:
                values.setdefault((a, name), []).append(m[name])
    return MetricReport.from_values(angles, values, label)


@dataclass
class MetricCurve:
    """Per-epoch training records ``(epoch, metric, value)``."""

    records: list[tuple[int, str, float]] = field(default_factory=list)

    def add(self, epoch: int, metric: str, value: float) -> None:
        self.records.append((int(epoch), str(metric), float(value)))

    @property
    def metrics(self) -> list[str]:
        return list(dict.fromkeys(m for _, m, _ in self.records))

    def series(self, metric: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [(e, v) for e, m, v in self.records if m == metric]
        if not pts:
            return np.empty(0, dtype=int), np.empty(0)
        e, v = zip(*pts)
        return np.array(e), np.array(v)

    def first_epoch_below(self, metric: str, threshold: float) -> int | None:
        for e, v in zip(*self.series(metric)):
            if v <= threshold:
                return int(e)
        return None


def _subseed(seed: int, *keys: int) -> int:
    return int(substream(seed, *keys).integers(0, 2**63 - 1))


def distribution_summary(real: TraceDataset, synth: TraceDataset) -> list[dict]:
    """Per-angle LOS/NLOS frequencies of real and synthetic data."""
    rows = []
    for i, a in enumerate(real.angles):
        p, q = empirical(real.cells[:, i]), empirical(synth.column(a))
        rows.append(
            {
                "angle": a,
                "real_los": p.prob(1),
                "real_nlos": p.prob(-1),
                "synthetic_los": q.prob(1),
                "synthetic_nlos": q.prob(-1),
            }
        )
    return rows
