"""Shapley-value engines for data valuation.

Two routes to per-player values over an arbitrary set function:

* :func:`exact_shapley` enumerates all subsets (memoized, ``2^n`` utility
  evaluations) and applies the combinatorial permutation weights directly.
* :func:`monte_carlo_shapley` samples uniform permutations, scans each one
  computing every player's raw marginal contribution once, and averages.

Both accept an aggregation mode that transforms each raw marginal before
averaging: ORIGINAL keeps it, ZERO clamps negatives to zero, ABSOLUTE takes
the magnitude. A single Monte Carlo pass serves any set of modes, since the
raw marginals are shared.

Set functions are called with a strictly increasing tuple of player indices
(the canonical coalition form) and must return a float.
"""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .randomness import stream

SetFunction = Callable[[tuple[int, ...]], float]

#: Exact enumeration refuses larger player counts unless overridden.
DEFAULT_EXACT_CAP = 12

_CHUNK = 32


class AggregationMode(Enum):
    """How a raw marginal contribution enters the average."""

    ORIGINAL = "ori"
    ZERO = "zero"
    ABSOLUTE = "abs"


class UtilityEvaluationError(RuntimeError):
    """A set-function call failed; carries the offending coalition."""

    def __init__(self, coalition: tuple[int, ...], message: str):
        super().__init__(f"utility evaluation failed for coalition {coalition}: {message}")
        self.coalition = tuple(coalition)
        self._message = message

    def __reduce__(self):
        return (UtilityEvaluationError, (self.coalition, self._message))


def transform_marginal(delta: float, mode: AggregationMode) -> float:
    """Apply the mode's per-marginal transform to a single delta."""
    if mode is AggregationMode.ORIGINAL:
        return delta
    if mode is AggregationMode.ZERO:
        return max(0.0, delta)
    return abs(delta)


def _transform_array(deltas: np.ndarray, mode: AggregationMode) -> np.ndarray:
    if mode is AggregationMode.ORIGINAL:
        return deltas
    if mode is AggregationMode.ZERO:
        return np.maximum(deltas, 0.0)
    return np.abs(deltas)


def _mask_members(mask: int, n: int) -> tuple[int, ...]:
    return tuple(i for i in range(n) if mask >> i & 1)


def exact_shapley(
    u: SetFunction,
    n: int,
    mode: AggregationMode = AggregationMode.ORIGINAL,
    *,
    max_players: int = DEFAULT_EXACT_CAP,
) -> np.ndarray:
    """Exact per-player values by full subset enumeration.

    Equivalent to averaging the transformed marginal over all n!
    permutations: grouping permutations by the set of predecessors S of
    player i turns the average into a sum over subsets weighted by
    1 / (n * C(n-1, |S|)). Utilities are memoized, so u is evaluated exactly
    ``2^n`` times, in ascending bitmask order.
    """
    if n < 1:
        raise ValueError("player count must be at least 1")
    if n > max_players:
        raise ValueError(
            f"exact enumeration capped at n={max_players} players (got n={n}); "
            "raise max_players to override"
        )
    size = 1 << n
    utilities = np.empty(size, dtype=np.float64)
    for mask in range(size):
        utilities[mask] = u(_mask_members(mask, n))

    weights = [1.0 / (n * math.comb(n - 1, s)) for s in range(n)]
    values = np.empty(n, dtype=np.float64)
    for i in range(n):
        bit = 1 << i
        values[i] = math.fsum(
            weights[mask.bit_count()]
            * transform_marginal(float(utilities[mask | bit] - utilities[mask]), mode)
            for mask in range(size)
            if not mask & bit
        )
    return values


def loo_values(u: SetFunction, n: int) -> np.ndarray:
    """Leave-one-out baseline: u(N) - u(N without i), n + 1 evaluations."""
    if n < 1:
        raise ValueError("player count must be at least 1")
    full = tuple(range(n))
    base = u(full)
    values = np.empty(n, dtype=np.float64)
    for i in range(n):
        values[i] = base - u(full[:i] + full[i + 1 :])
    return values


def sample_permutation(seed_stream: np.random.Generator, n: int) -> np.ndarray:
    """Uniform permutation of 0..n-1 drawn from the given stream."""
    if n < 1:
        raise ValueError("permutation length must be at least 1")
    return seed_stream.permutation(n)


def has_converged(
    history: Sequence[np.ndarray], epsilon: float, window: int
) -> bool:
    """Whether the rolling estimates have settled.

    True iff more than ``window`` estimates exist and no tuple's estimate
    moved by ``epsilon`` or more over the last ``window`` permutations.
    ``epsilon=0`` never converges (early stopping disabled).
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if len(history) <= window:
        return False
    drift = np.abs(np.asarray(history[-1]) - np.asarray(history[-1 - window]))
    return bool(drift.max() < epsilon)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo estimator configuration."""

    max_permutations: int
    master_seed: int = 0
    convergence_epsilon: float = 1e-3
    convergence_window: int = 100
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_permutations < 1:
            raise ValueError("max_permutations must be at least 1")
        if self.convergence_epsilon < 0:
            raise ValueError("convergence_epsilon must be nonnegative")
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass(frozen=True, eq=False)
class ShapleyEstimate:
    """Per-tuple estimate under one aggregation mode.

    ``values`` is the mean transformed marginal over the permutations used;
    ``variances`` holds the sample variance of those per-permutation
    marginals, so ``sqrt(variances / permutations_used)`` is the standard
    error of each value.
    """

    mode: AggregationMode
    seed: int
    values: np.ndarray
    sample_counts: np.ndarray
    variances: np.ndarray
    permutations_used: int
    converged: bool

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(self.variances / self.permutations_used)

    def to_json_dict(self, ids: Sequence[int] | None = None) -> dict:
        """Fixed wire schema; ``ids`` defaults to player indices 0..n-1."""
        if ids is None:
            ids = range(len(self.values))
        ids = [int(i) for i in ids]
        if len(ids) != len(self.values):
            raise ValueError("ids length must match the number of players")
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "permutations": self.permutations_used,
            "converged": self.converged,
            "values": [
                {"id": i, "value": float(v), "variance": float(s)}
                for i, v, s in zip(ids, self.values, self.variances)
            ],
        }

    def to_json(self, ids: Sequence[int] | None = None) -> str:
        return json.dumps(self.to_json_dict(ids), indent=2)


def _permutation_deltas(
    u: SetFunction, n: int, master_seed: int, start: int, stop: int, u_empty: float
) -> np.ndarray:
    """Raw marginal vectors (player-indexed) for permutations start..stop-1."""
    out = np.empty((stop - start, n), dtype=np.float64)
    members: list[int] = []
    for row, k in enumerate(range(start, stop)):
        perm = sample_permutation(stream(master_seed, k), n)
        members.clear()
        previous = u_empty
        for idx in perm:
            idx = int(idx)
            _insort(members, idx)
            coalition = tuple(members)
            try:
                current = float(u(coalition))
            except UtilityEvaluationError:
                raise
            except Exception as exc:
                raise UtilityEvaluationError(coalition, str(exc)) from exc
            out[row, idx] = current - previous
            previous = current
    return out


def _insort(members: list[int], value: int) -> None:
    lo, hi = 0, len(members)
    while lo < hi:
        mid = (lo + hi) // 2
        if members[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    members.insert(lo, value)


def _iter_delta_batches(
    u: SetFunction, n: int, cfg: McConfig, u_empty: float
) -> Iterator[np.ndarray]:
    """Delta batches in ascending permutation order, optionally from a pool.

    Permutation k's content depends only on (master_seed, k), and batches are
    consumed in order, so the fold downstream is identical for any worker
    count; extra workers only overlap the evaluation.
    """
    bounds = [
        (s, min(s + _CHUNK, cfg.max_permutations))
        for s in range(0, cfg.max_permutations, _CHUNK)
    ]
    if cfg.workers == 1:
        for start, stop in bounds:
            yield _permutation_deltas(u, n, cfg.master_seed, start, stop, u_empty)
        return

    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        pending = deque()
        next_submit = 0
        try:
            while next_submit < len(bounds) and len(pending) < cfg.workers + 2:
                start, stop = bounds[next_submit]
                pending.append(
                    pool.submit(_permutation_deltas, u, n, cfg.master_seed, start, stop, u_empty)
                )
                next_submit += 1
            while pending:
                batch = pending.popleft().result()
                if next_submit < len(bounds):
                    start, stop = bounds[next_submit]
                    pending.append(
                        pool.submit(_permutation_deltas, u, n, cfg.master_seed, start, stop, u_empty)
                    )
                    next_submit += 1
                yield batch
        finally:
            for fut in pending:
                fut.cancel()


def monte_carlo_shapley(
    u: SetFunction,
    n: int,
    modes: Sequence[AggregationMode],
    cfg: McConfig,
) -> dict[AggregationMode, ShapleyEstimate]:
    """Permutation-sampling estimates, one per requested mode.

    Each sampled permutation is scanned once: the raw delta at every
    position is computed a single time and fanned out to all requested
    modes, so multi-mode runs cost the same model training as one mode.
    Accumulation runs in ascending permutation order with compensated
    summation, making the result bytewise identical for any worker count.

    Per-mode values are the accumulated transformed marginals divided by the
    number of permutations actually used. Sampling stops early once every
    requested mode satisfies :func:`has_converged` (with the configured
    epsilon and window), otherwise at ``cfg.max_permutations``.
    """
    if n < 1:
        raise ValueError("player count must be at least 1")
    mode_list = list(dict.fromkeys(modes))
    if not mode_list:
        raise ValueError("at least one aggregation mode is required")

    try:
        u_empty = float(u(()))
    except Exception as exc:
        raise UtilityEvaluationError((), str(exc)) from exc

    sums = {mode: np.zeros(n) for mode in mode_list}
    comps = {mode: np.zeros(n) for mode in mode_list}
    means = {mode: np.zeros(n) for mode in mode_list}
    m2s = {mode: np.zeros(n) for mode in mode_list}
    check_convergence = cfg.convergence_epsilon > 0
    histories: dict[AggregationMode, deque] = {
        mode: deque(maxlen=cfg.convergence_window + 1) for mode in mode_list
    }
    converged = {mode: False for mode in mode_list}

    used = 0
    batches = _iter_delta_batches(u, n, cfg, u_empty)
    for batch in batches:
        for deltas in batch:
            used += 1
            for mode in mode_list:
                transformed = _transform_array(deltas, mode)
                # Kahan step: sums/comps stay exact enough that the fold
                # order is the only thing that matters for reproducibility.
                y = transformed - comps[mode]
                t = sums[mode] + y
                comps[mode] = (t - sums[mode]) - y
                sums[mode] = t
                # Welford step for the per-tuple marginal variance.
                d1 = transformed - means[mode]
                means[mode] += d1 / used
                m2s[mode] += d1 * (transformed - means[mode])
                if check_convergence:
                    histories[mode].append(sums[mode] / used)
                    converged[mode] = has_converged(
                        histories[mode], cfg.convergence_epsilon, cfg.convergence_window
                    )
            if check_convergence and all(converged.values()):
                batches.close()
                break
        else:
            continue
        break

    counts = np.full(n, used, dtype=np.int64)
    estimates = {}
    for mode in mode_list:
        variances = m2s[mode] / (used - 1) if used > 1 else np.zeros(n)
        estimates[mode] = ShapleyEstimate(
            mode=mode,
            seed=cfg.master_seed,
            values=sums[mode] / used,
            sample_counts=counts,
            variances=variances,
            permutations_used=used,
            converged=converged[mode],
        )
    return estimates
