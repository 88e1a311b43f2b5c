"""Experimental harness: rank tuples by value, retrain on selections,
and compare aggregation modes on one grid.

The grid mirrors the retraining experiment: for every (mode, model kind)
pair, train on the K highest-valued and K lowest-valued tuples and score
both on the held-out test set. When a linear SVM spec is present, the
report also counts how many of the top/bottom tuples are support vectors of
the full-data SVM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from .datasets import Dataset, subset
from .models import (
    DEFAULT_SV_TOL,
    CoalitionUtility,
    ModelKind,
    ModelSpec,
    accuracy,
    support_vectors,
    train,
)
from .shapley import AggregationMode, McConfig, monte_carlo_shapley

#: Size of the highest/lowest selections used for support-vector overlap.
DEFAULT_OVERLAP_K = 10


class SelectionDirection(Enum):
    HIGHEST = "highest"
    LOWEST = "lowest"


def rank_topk(
    values: Sequence[float] | np.ndarray,
    ids: Sequence[int] | np.ndarray,
    k: int,
    direction: SelectionDirection,
) -> list[int]:
    """Ids of the k largest (HIGHEST) or smallest (LOWEST) values.

    Ordered by value, ties broken by ascending id.
    """
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    if values.shape != ids.shape or values.ndim != 1:
        raise ValueError("values and ids must be 1-D and the same length")
    n = values.size
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    sign = -1.0 if direction is SelectionDirection.HIGHEST else 1.0
    order = np.lexsort((ids, sign * values))
    return [int(i) for i in ids[order[:k]]]


def retrain_with_selection(
    train_set: Dataset,
    test_set: Dataset,
    values: Sequence[float] | np.ndarray,
    k: int,
    direction: SelectionDirection,
    spec: ModelSpec,
) -> float:
    """Test accuracy of ``spec`` trained on the k selected tuples."""
    selected = rank_topk(values, train_set.ids, k, direction)
    id_to_pos = {int(tid): pos for pos, tid in enumerate(train_set.ids)}
    positions = sorted(id_to_pos[tid] for tid in selected)
    return accuracy(train(spec, subset(train_set, positions)), test_set)


def support_vector_overlap(
    values: Sequence[float] | np.ndarray,
    ids: Sequence[int] | np.ndarray,
    k: int,
    direction: SelectionDirection,
    sv_ids: set[int],
) -> int:
    """How many of the k selected tuples are support vectors."""
    return len(set(rank_topk(values, ids, k, direction)) & set(sv_ids))


_MODE_ROWS = [AggregationMode.ORIGINAL, AggregationMode.ZERO, AggregationMode.ABSOLUTE]
_KIND_LABELS = {ModelKind.LOGISTIC: "LR", ModelKind.LINEAR_SVM: "SVM"}


@dataclass(frozen=True)
class EvaluationReport:
    """Accuracy grid plus overlap counts for one train/test split.

    ``accuracies`` maps mode token -> model token -> direction token to a
    fraction in [0, 1]; ``overlaps`` maps mode token -> direction token to a
    support-vector count (None when no SVM spec was evaluated).
    """

    k: int
    accuracies: Mapping[str, Mapping[str, Mapping[str, float]]]
    overlaps: Mapping[str, Mapping[str, float]] | None
    metadata: Mapping[str, Any]

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "accuracies": _as_plain(self.accuracies),
            "overlaps": _as_plain(self.overlaps) if self.overlaps is not None else None,
            "metadata": _as_plain(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_text_table(self) -> str:
        """Aligned grid, modes as rows and (model, direction) as columns."""
        kinds = list(self.accuracies[next(iter(self.accuracies))])
        headers = [""]
        for kind in kinds:
            label = _KIND_LABELS.get(ModelKind(kind), kind.upper())
            headers += [f"{label} (highestK)", f"{label} (lowestK)"]
        rows = [headers]
        for mode in self.accuracies:
            row = [mode.upper()]
            for kind in kinds:
                cell = self.accuracies[mode][kind]
                row += [f"{100 * cell['highest']:.2f}%", f"{100 * cell['lowest']:.2f}%"]
            rows.append(row)
        widths = [max(len(r[c]) for r in rows) for c in range(len(headers))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows
        )


def _as_plain(obj):
    if isinstance(obj, Mapping):
        return {key: _as_plain(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(value) for value in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def compare_modes(
    train_set: Dataset,
    test_set: Dataset,
    specs: Sequence[ModelSpec],
    k: int,
    cfg: McConfig,
    *,
    overlap_k: int = DEFAULT_OVERLAP_K,
    sv_tol: float = DEFAULT_SV_TOL,
    extra_metadata: Mapping[str, Any] | None = None,
) -> EvaluationReport:
    """Fill the full (mode x model x direction) grid in one MC pass per model.

    Values for a model kind are estimated with that same kind's utility and
    drive that kind's retraining. Overlap counts are computed against the
    support vectors of the SVM trained on the full training set, using the
    SVM-utility values, and are omitted when no SVM spec is given.
    """
    n = len(train_set)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    kinds = [spec.kind for spec in specs]
    if len(set(kinds)) != len(kinds):
        raise ValueError("specs must have distinct model kinds")

    accuracies: dict[str, dict[str, dict[str, float]]] = {
        mode.value: {} for mode in _MODE_ROWS
    }
    estimates_by_kind = {}
    for spec in specs:
        u = CoalitionUtility(spec, train_set, test_set)
        estimates = monte_carlo_shapley(u, n, _MODE_ROWS, cfg)
        estimates_by_kind[spec.kind] = estimates
        for mode in _MODE_ROWS:
            values = estimates[mode].values
            accuracies[mode.value][spec.kind.value] = {
                direction.value: retrain_with_selection(
                    train_set, test_set, values, k, direction, spec
                )
                for direction in SelectionDirection
            }

    overlaps = None
    svm_specs = [s for s in specs if s.kind is ModelKind.LINEAR_SVM]
    if svm_specs:
        full_model = train(svm_specs[0], train_set)
        sv_ids = support_vectors(full_model, train_set, sv_tol)
        kb = min(overlap_k, n)
        overlaps = {
            mode.value: {
                direction.value: support_vector_overlap(
                    estimates_by_kind[ModelKind.LINEAR_SVM][mode].values,
                    train_set.ids,
                    kb,
                    direction,
                    sv_ids,
                )
                for direction in SelectionDirection
            }
            for mode in _MODE_ROWS
        }

    metadata = {
        "k": k,
        "overlap_k": overlap_k,
        "max_permutations": cfg.max_permutations,
        "master_seed": cfg.master_seed,
        "workers": cfg.workers,
        "models": [spec.to_config() for spec in specs],
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return EvaluationReport(k, accuracies, overlaps, metadata)


def aggregate_reports(reports: Sequence[EvaluationReport]) -> EvaluationReport:
    """Mean accuracy grid (and mean overlaps) across per-split reports."""
    if not reports:
        raise ValueError("at least one report is required")
    first = reports[0]
    mean_acc = {
        mode: {
            kind: {
                direction: float(
                    np.mean([r.accuracies[mode][kind][direction] for r in reports])
                )
                for direction in first.accuracies[mode][kind]
            }
            for kind in first.accuracies[mode]
        }
        for mode in first.accuracies
    }
    mean_overlap = None
    if first.overlaps is not None:
        mean_overlap = {
            mode: {
                direction: float(
                    np.mean([r.overlaps[mode][direction] for r in reports])
                )
                for direction in first.overlaps[mode]
            }
            for mode in first.overlaps
        }
    metadata = {
        "aggregated_over": len(reports),
        "split_seeds": [r.metadata.get("split_seed") for r in reports],
        "k": first.k,
        "overlap_k": first.metadata.get("overlap_k"),
        "max_permutations": first.metadata.get("max_permutations"),
        "master_seed": first.metadata.get("master_seed"),
        "models": first.metadata.get("models"),
    }
    return EvaluationReport(first.k, mean_acc, mean_overlap, metadata)
