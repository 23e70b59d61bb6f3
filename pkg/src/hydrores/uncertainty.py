"""Budgeted net-load deviation set, enumeration, sampling and persistence.

The deviation set contains vectors whose entries are -lambda_max, 0 or
+lambda_max with at most `gamma` nonzero periods. Sampled scenarios are
continuous deviations used for the stochastic models and the Monte Carlo
evaluation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb
from typing import Iterable, Optional

import numpy as np

ORIGINS = ("sampled", "robust", "manual")

NORMAL_ALIASES = ("normal", "truncated_normal")
UNIFORM = "uniform"

# Sampled deviations use sigma = lambda_max / NORMAL_SIGMA_DIVISOR before
# clipping to the +-lambda_max support.
NORMAL_SIGMA_DIVISOR = 2.5


class ScenarioFormatError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintySet:
    lambda_max: float  # MW, per-period deviation magnitude
    gamma: int         # budget: max simultaneous deviating periods

    def __post_init__(self):
        if self.lambda_max < 0:
            raise ValueError(f"lambda_max must be >= 0, got {self.lambda_max}")
        if self.gamma < 0 or self.gamma != int(self.gamma):
            raise ValueError(f"gamma must be a nonnegative integer, got {self.gamma}")


@dataclass
class NetLoadScenario:
    deltas: np.ndarray
    probability: float
    origin: str = "manual"

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float)
        if self.probability < 0:
            raise ValueError("scenario probability must be >= 0")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")


def contains(uset: UncertaintySet, deltas, tol: float = 1e-9) -> bool:
    """Membership test: entries in {-lambda_max, 0, +lambda_max}, <= gamma nonzero."""
    d = np.asarray(deltas, dtype=float)
    lam = uset.lambda_max
    at_zero = np.abs(d) <= tol
    at_vertex = np.abs(np.abs(d) - lam) <= tol
    if lam <= tol:
        return bool(at_zero.all())
    if not (at_zero | at_vertex).all():
        return False
    return int((~at_zero).sum()) <= uset.gamma


def set_size(uset: UncertaintySet, T: int) -> int:
    """Number of distinct deviation vectors: sum over k of C(T,k)*2^k."""
    if uset.lambda_max == 0:
        return 1
    k_max = min(uset.gamma, T)
    return sum(comb(T, k) * 2 ** k for k in range(k_max + 1))


def enumerate_deviations(uset: UncertaintySet, T: int,
                         guard: int = 10 ** 6) -> list[np.ndarray]:
    """All distinct deviation vectors, deterministic order, guarded by size."""
    n = set_size(uset, T)
    if n > guard:
        raise ValueError(
            f"deviation set has {n} vectors, exceeding the guard of {guard}")
    if uset.lambda_max == 0:
        return [np.zeros(T)]
    out = []
    for k in range(min(uset.gamma, T) + 1):
        for positions in combinations(range(T), k):
            for signs in product((1.0, -1.0), repeat=k):
                d = np.zeros(T)
                for pos, s in zip(positions, signs):
                    d[pos] = s * uset.lambda_max
                out.append(d)
    return out


def sample_one(dist: str, lambda_max: float, T: int, seed: int,
               index: int) -> np.ndarray:
    """Deviation vector for sample `index`, independent of evaluation order.

    Each index gets its own generator seeded with seed XOR index, so any
    subset of samples can be drawn in any order or process and still match
    a sequential run elementwise.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    if dist not in NORMAL_ALIASES and dist != UNIFORM:
        raise ValueError(f"unknown distribution {dist!r}")
    if lambda_max == 0:
        return np.zeros(T)
    rng = np.random.default_rng(seed ^ index)
    if dist == UNIFORM:
        return rng.uniform(-lambda_max, lambda_max, T)
    sigma = lambda_max / NORMAL_SIGMA_DIVISOR
    return np.clip(rng.normal(0.0, sigma, T), -lambda_max, lambda_max)


def sample(dist: str, lambda_max: float, T: int, count: int,
           seed: int) -> list[NetLoadScenario]:
    """`count` equiprobable scenarios; deterministic given (dist, seed)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    prob = 1.0 / count
    return [NetLoadScenario(sample_one(dist, lambda_max, T, seed, i),
                            prob, "sampled")
            for i in range(count)]


def scenario_matrix(scenarios: Iterable[NetLoadScenario]) -> tuple[np.ndarray, np.ndarray]:
    """(deltas, probabilities) arrays; deltas shaped (S, T)."""
    scen = list(scenarios)
    return (np.array([s.deltas for s in scen]),
            np.array([s.probability for s in scen]))


def save_scenarios(path, scenarios: list[NetLoadScenario],
                   manifest_id: Optional[str] = None) -> None:
    T = len(scenarios[0].deltas) if scenarios else 0
    with open(path, "w", newline="") as f:
        if manifest_id:
            f.write(f"# manifest: {manifest_id}\n")
        writer = csv.writer(f)
        writer.writerow(["scenario", "probability", "origin"]
                        + [f"t{t+1}" for t in range(T)])
        for i, s in enumerate(scenarios):
            writer.writerow([i, repr(float(s.probability)), s.origin]
                            + [repr(float(x)) for x in s.deltas])


def load_scenarios(path) -> list[NetLoadScenario]:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(line for line in f
                                      if not line.startswith("#"))
                if r]
    if not rows:
        raise ScenarioFormatError(f"{path}: missing header row")
    header = rows[0]
    if header[:3] != ["scenario", "probability", "origin"]:
        raise ScenarioFormatError(
            f"{path}: expected header scenario,probability,origin,t1.., got {header[:3]}")
    T = len(header) - 3
    out = []
    for r in rows[1:]:
        if len(r) != 3 + T:
            raise ScenarioFormatError(
                f"{path}: row {r[0]!r} has {len(r)} fields, expected {3 + T}")
        try:
            out.append(NetLoadScenario(
                np.array([float(x) for x in r[3:]]), float(r[1]), r[2]))
        except ValueError as exc:
            raise ScenarioFormatError(f"{path}: row {r[0]!r}: {exc}") from exc
    return out
