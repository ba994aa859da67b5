"""Balanced factorial design tables with -1/+1 sum coding.

Three layouts are supported:

* D1: within-subject 2x2 design, every condition repeated in blocks, no items.
* D2: one 2-level factor, subjects crossed with items in a Latin square.
* D3: 2x2 design, subjects crossed with items, items rotated through the four
  conditions over four counterbalanced subject groups.

Row order is fixed (subject, block/item, condition), so tables are
deterministic and order-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Design configuration that cannot produce a balanced table."""


@dataclass(frozen=True)
class DesignSpec:
    design_id: str
    n_subjects: int
    n_items: int = 0
    n_reps: int = 0
    fixed_effect_labels: tuple[str, ...] = ("intercept", "meA", "meB", "int")
    likelihood: str = "normal"

    def __post_init__(self):
        if self.design_id not in ("D1", "D2", "D3"):
            raise ConfigurationError(f"unknown design id {self.design_id!r}")
        if self.likelihood not in ("normal", "lognormal"):
            raise ConfigurationError(f"unknown likelihood {self.likelihood!r}")
        if self.fixed_effect_labels[0] != "intercept":
            raise ConfigurationError("first fixed effect must be the intercept")
        known = {"intercept", "meA", "meB", "int", "X"}
        bad = set(self.fixed_effect_labels) - known
        if bad:
            raise ConfigurationError(f"unknown fixed effect labels {sorted(bad)}")

    @property
    def has_items(self) -> bool:
        return self.design_id in ("D2", "D3")

    @property
    def n_fixed(self) -> int:
        return len(self.fixed_effect_labels)


@dataclass(frozen=True)
class DesignTable:
    subject: np.ndarray          # (N,) 0-based subject index
    item: np.ndarray | None      # (N,) 0-based item index, None for D1
    block: np.ndarray | None     # (N,) 0-based repetition block, D1 only
    condition: np.ndarray        # (N,) condition index
    X: np.ndarray                # (N, K) design matrix, intercept first
    labels: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def d1_spec(n_subjects: int = 10, n_reps: int = 5) -> DesignSpec:
    return DesignSpec("D1", n_subjects=n_subjects, n_reps=n_reps)


def d2_spec(n_subjects: int = 42, n_items: int = 16) -> DesignSpec:
    return DesignSpec(
        "D2",
        n_subjects=n_subjects,
        n_items=n_items,
        fixed_effect_labels=("intercept", "X"),
        likelihood="lognormal",
    )


def d3_spec(n_subjects: int = 16, n_items: int = 8) -> DesignSpec:
    return DesignSpec("D3", n_subjects=n_subjects, n_items=n_items)


def _n_conditions(labels: tuple[str, ...]) -> int:
    if "meA" in labels or "meB" in labels:
        return 4
    if "X" in labels:
        return 2
    return 1


def _codes(labels: tuple[str, ...], cond: np.ndarray) -> np.ndarray:
    """Map condition indices to a (N, K) matrix of sum-coded columns."""
    n = cond.shape[0]
    cols = []
    a = (cond // 2) * 2.0 - 1.0
    b = (cond % 2) * 2.0 - 1.0
    x = cond * 2.0 - 1.0
    for label in labels:
        if label == "intercept":
            cols.append(np.ones(n))
        elif label == "meA":
            cols.append(a)
        elif label == "meB":
            cols.append(b)
        elif label == "int":
            cols.append(a * b)
        elif label == "X":
            cols.append(x)
    return np.column_stack(cols)


def build_design(spec: DesignSpec) -> DesignTable:
    """Build the balanced design table for a spec.

    Raises ConfigurationError when the requested counts cannot be balanced
    (odd item count for D2; item or subject count not divisible by four
    for D3).
    """
    if spec.n_subjects < 1:
        raise ConfigurationError("n_subjects must be >= 1")
    n_cond = _n_conditions(spec.fixed_effect_labels)

    if spec.design_id == "D1":
        if spec.n_reps < 1:
            raise ConfigurationError("D1 requires n_reps >= 1")
        subj, block, cond = np.meshgrid(
            np.arange(spec.n_subjects),
            np.arange(spec.n_reps),
            np.arange(n_cond),
            indexing="ij",
        )
        subject = subj.ravel()
        block = block.ravel()
        condition = cond.ravel()
        item = None
    else:
        if spec.n_items < 1:
            raise ConfigurationError(f"{spec.design_id} requires n_items >= 1")
        if spec.design_id == "D2" and spec.n_items % 2 != 0:
            raise ConfigurationError("D2 requires an even number of items")
        if spec.design_id == "D3":
            if spec.n_items % 4 != 0:
                raise ConfigurationError("D3 requires n_items divisible by 4")
            if spec.n_subjects % 4 != 0:
                raise ConfigurationError("D3 requires n_subjects divisible by 4")
        subj, it = np.meshgrid(
            np.arange(spec.n_subjects), np.arange(spec.n_items), indexing="ij"
        )
        subject = subj.ravel()
        item = it.ravel()
        # Latin-square rotation: the subject group shifts which condition an
        # item appears in, keeping subjects and items balanced.
        condition = (subject % n_cond + item) % n_cond
        block = None

    X = _codes(spec.fixed_effect_labels, condition.astype(float))
    for k, label in enumerate(spec.fixed_effect_labels):
        if label == "intercept":
            continue
        col = X[:, k]
        if not np.all(np.abs(col) == 1.0) or col.sum() != 0.0:
            raise ConfigurationError(f"contrast column {label} is not balanced")
    return DesignTable(
        subject=subject,
        item=item,
        block=block,
        condition=condition,
        X=X,
        labels=spec.fixed_effect_labels,
    )
