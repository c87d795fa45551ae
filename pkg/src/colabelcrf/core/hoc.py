"""P^n-Potts higher-order potentials over segment cliques.

A clique costs ``gamma_low[l]`` when all members take label ``l`` and
``gamma_max = alpha * |c|`` otherwise. Mean-field needs, for every member
``i`` and label ``l``, the expected clique cost given ``x_i = l``; the product
over the other members is formed from prefix and suffix products so that no
division by ``Q_i(l)`` is needed.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from colabelcrf.core.errors import (
    DimensionError,
    ErrorCodes,
    SizeGuardError,
    ValueRangeError,
)

logger = logging.getLogger(__name__)

LOG_DOMAIN_MIN_SIZE = 65
ENUMERATION_MAX_ASSIGNMENTS = 1 << 20


@dataclass(frozen=True)
class PnPottsParams:
    """Clique cost parameters: ``gamma_low`` per label and ``alpha``."""

    alpha: float = 0.05
    gamma_low: tuple[float, ...] | float = 0.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueRangeError(f"alpha must be finite and >= 0, got {self.alpha}", parameter="alpha")
        low = np.atleast_1d(np.asarray(self.gamma_low, dtype=np.float64))
        if low.size == 0 or not np.isfinite(low).all() or (low < 0).any():
            raise ValueRangeError("gamma_low entries must be finite and >= 0", parameter="gamma_low")
        value = tuple(float(v) for v in low) if low.size > 1 else float(low[0])
        object.__setattr__(self, "gamma_low", value)

    def gamma_vector(self, labels: int) -> np.ndarray:
        low = np.atleast_1d(np.asarray(self.gamma_low, dtype=np.float64))
        if low.size == 1:
            return np.full(labels, float(low[0]))
        if low.size != labels:
            raise DimensionError(
                f"gamma_low has {low.size} entries for {labels} labels",
                expected=labels,
                actual=low.size,
            )
        return low

    def gamma_max(self, size: int | np.ndarray) -> np.ndarray:
        return self.alpha * np.asarray(size, dtype=np.float64)

    def check_sizes(self, min_size: int) -> None:
        low = np.atleast_1d(np.asarray(self.gamma_low, dtype=np.float64))
        if float(self.gamma_max(min_size)) < float(low.max()):
            raise ValueRangeError(
                f"gamma_max = alpha*|c| = {float(self.gamma_max(min_size))} is below "
                f"gamma_low {float(low.max())} for cliques of size {min_size}",
                parameter="alpha",
            )


@dataclass(frozen=True)
class CliqueSet:
    """Cliques stored as flat members with offsets, each tagged with a layer."""

    members: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    layer: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tags: tuple[str, ...] = ()
    params: PnPottsParams = field(default_factory=PnPottsParams)

    def __post_init__(self) -> None:
        members = np.asarray(self.members, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.int64)
        layer = np.asarray(self.layer, dtype=np.int64)
        if offsets.ndim != 1 or offsets.size < 1 or offsets[0] != 0 or offsets[-1] != members.size:
            raise DimensionError("Clique offsets must start at 0 and end at the member count")
        sizes = np.diff(offsets)
        if (sizes < 1).any():
            clique = int(np.argmax(sizes < 1))
            raise ValueRangeError(f"Clique {clique} is empty", clique=clique)
        if layer.shape != sizes.shape:
            raise DimensionError("One layer index is required per clique")
        if members.size and members.min() < 0:
            raise ValueRangeError("Clique members must be non-negative variable ids",
                                  code=ErrorCodes.VALUE_MEMBERSHIP)
        if layer.size and (layer.min() < 0 or layer.max() >= len(self.tags)):
            raise ValueRangeError("Clique layer index without a tag")
        if sizes.size:
            self.params.check_sizes(int(sizes.min()))
        for name, arr in (("members", members), ("offsets", offsets), ("layer", layer)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # ------------------------------------------------------------------ #
    @classmethod
    def empty(cls, params: PnPottsParams | None = None) -> CliqueSet:
        return cls(params=params or PnPottsParams())

    @classmethod
    def from_lists(
        cls, cliques: Sequence[Sequence[int]], tag: str = "layer0", params: PnPottsParams | None = None
    ) -> CliqueSet:
        sizes = [len(c) for c in cliques]
        members = (
            np.concatenate([np.asarray(c, dtype=np.int64) for c in cliques])
            if cliques
            else np.zeros(0, dtype=np.int64)
        )
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        return cls(
            members=members,
            offsets=offsets,
            layer=np.zeros(len(sizes), dtype=np.int64),
            tags=(tag,) if cliques else (),
            params=params or PnPottsParams(),
        )

    @classmethod
    def concat(cls, sets: Sequence[CliqueSet], params: PnPottsParams | None = None) -> CliqueSet:
        """Join layers; cliques of different sets may overlap."""
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls.empty(params)
        tags: list[str] = []
        layers = []
        offsets = [np.zeros(1, dtype=np.int64)]
        base = 0
        for s in sets:
            layers.append(s.layer + len(tags))
            tags.extend(s.tags)
            offsets.append(s.offsets[1:] + base)
            base += s.members.size
        return cls(
            members=np.concatenate([s.members for s in sets]),
            offsets=np.concatenate(offsets),
            layer=np.concatenate(layers),
            tags=tuple(tags),
            params=params or sets[0].params,
        )

    def __len__(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def layers(self) -> tuple[str, ...]:
        return self.tags

    def clique(self, index: int) -> np.ndarray:
        return self.members[self.offsets[index] : self.offsets[index + 1]]

    def max_member(self) -> int:
        return int(self.members.max()) if self.members.size else -1

    def restrict(self, start: int, stop: int) -> CliqueSet:
        """Cliques cut to variables in [start, stop), renumbered from 0."""
        if not len(self):
            return self
        keep = (self.members >= start) & (self.members < stop)
        owner = np.repeat(np.arange(len(self)), self.sizes)
        counts = np.bincount(owner[keep], minlength=len(self))
        alive = counts > 0
        offsets = np.concatenate([[0], np.cumsum(counts[alive])]).astype(np.int64)
        return CliqueSet(
            members=self.members[keep] - start,
            offsets=offsets,
            layer=self.layer[alive],
            tags=self.tags,
            params=self.params,
        )

    @cached_property
    def size_groups(self) -> list[tuple[int, np.ndarray]]:
        """(size, members matrix) per distinct clique size, in increasing size."""
        sizes = self.sizes
        groups = []
        for size in np.unique(sizes):
            which = np.flatnonzero(sizes == size)
            idx = self.offsets[which][:, None] + np.arange(size)[None, :]
            groups.append((int(size), self.members[idx]))
        return groups

    @cached_property
    def memberships(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR map from variable id to the cliques containing it."""
        owner = np.repeat(np.arange(len(self)), self.sizes)
        order = np.argsort(self.members, kind="stable")
        n = self.max_member() + 1
        counts = np.bincount(self.members, minlength=n)
        return owner[order], np.concatenate([[0], np.cumsum(counts)])

    def cliques_of(self, var: int) -> np.ndarray:
        owners, starts = self.memberships
        if var + 1 >= starts.size:
            return np.zeros(0, dtype=np.int64)
        return owners[starts[var] : starts[var + 1]]


# ---------------------------------------------------------------------- #
def _exclusive_products(values: np.ndarray) -> np.ndarray:
    """Product over axis 1 of all entries but one, shape preserved.

    ``values`` is (cliques, size, labels). Long cliques are handled in the log
    domain with an explicit count of zero factors.
    """
    count, size, labels = values.shape
    if size == 1:
        return np.ones_like(values)
    if size < LOG_DOMAIN_MIN_SIZE:
        prefix = np.ones_like(values)
        suffix = np.ones_like(values)
        prefix[:, 1:] = np.cumprod(values[:, :-1], axis=1)
        suffix[:, :-1] = np.cumprod(values[:, :0:-1], axis=1)[:, ::-1]
        return prefix * suffix

    zero = values <= 0.0
    logs = np.log(np.where(zero, 1.0, values))
    total_log = logs.sum(axis=1, keepdims=True)
    total_zero = zero.sum(axis=1, keepdims=True)
    excl_zero = total_zero - zero
    return np.where(excl_zero > 0, 0.0, np.exp(total_log - logs))


def _clique_product(values: np.ndarray) -> np.ndarray:
    """Product over axis 1 (all members), log domain for long cliques."""
    if values.shape[1] < LOG_DOMAIN_MIN_SIZE:
        return values.prod(axis=1)
    zero = (values <= 0.0).any(axis=1)
    logs = np.log(np.where(values <= 0.0, 1.0, values)).sum(axis=1)
    return np.where(zero, 0.0, np.exp(logs))


def _member_index(clique: np.ndarray, pixel: int) -> int:
    hits = np.flatnonzero(clique == pixel)
    if not hits.size:
        raise ValueRangeError(
            f"Variable {pixel} is not a member of the clique",
            code=ErrorCodes.VALUE_MEMBERSHIP,
            variable=pixel,
        )
    return int(hits[0])


def expected_clique_cost(
    q: np.ndarray, clique: Sequence[int] | np.ndarray, pixel: int, label: int,
    params: PnPottsParams | None = None,
) -> float:
    """Expected clique cost given that ``pixel`` takes ``label``."""
    params = params or PnPottsParams()
    members = np.asarray(clique, dtype=np.int64)
    if members.size == 0:
        raise ValueRangeError("Clique is empty")
    pos = _member_index(members, pixel)
    others = np.delete(members, pos)
    values = np.asarray(q, dtype=np.float64)[others, label][None, :, None]
    prob = float(_clique_product(values)[0, 0]) if others.size else 1.0
    gamma = params.gamma_vector(np.asarray(q).shape[1])[label]
    return float(gamma * prob + float(params.gamma_max(members.size)) * (1.0 - prob))


def hoc_update_field(q: np.ndarray, cliques: CliqueSet) -> np.ndarray:
    """Additive per-pixel cost field h = sum of expected costs of enclosing cliques."""
    q = np.asarray(q, dtype=np.float64)
    n, labels = q.shape
    h = np.zeros((n, labels))
    if not len(cliques):
        return h
    if cliques.max_member() >= n:
        raise ValueRangeError(
            f"Clique member {cliques.max_member()} outside {n} variables",
            code=ErrorCodes.VALUE_MEMBERSHIP,
        )
    gamma = cliques.params.gamma_vector(labels)
    members = []
    costs = []
    for size, matrix in cliques.size_groups:
        prob = _exclusive_products(q[matrix])
        gmax = float(cliques.params.gamma_max(size))
        costs.append((gamma[None, None, :] * prob + gmax * (1.0 - prob)).reshape(-1, labels))
        members.append(matrix.reshape(-1))
    # One accumulation over (variable, label) cells for all sizes.
    cells = (np.concatenate(members)[:, None] * labels + np.arange(labels)[None, :]).reshape(-1)
    summed = np.bincount(cells, weights=np.concatenate(costs).reshape(-1), minlength=n * labels)
    return summed.reshape(n, labels)


def clique_energy(
    clique: Sequence[int] | np.ndarray, labeling: np.ndarray, params: PnPottsParams | None = None
) -> float:
    params = params or PnPottsParams()
    members = np.asarray(clique, dtype=np.int64)
    if members.size == 0:
        raise ValueRangeError("Clique is empty")
    labels = np.asarray(labeling)[members]
    if (labels == labels[0]).all():
        low = np.atleast_1d(np.asarray(params.gamma_low, dtype=np.float64))
        return float(low[0] if low.size == 1 else low[int(labels[0])])
    return float(params.gamma_max(members.size))


def total_clique_energy(cliques: CliqueSet, labeling: np.ndarray) -> float:
    """Sum of clique costs of a hard labeling."""
    if not len(cliques):
        return 0.0
    lab = np.asarray(labeling, dtype=np.int64)
    low = np.atleast_1d(np.asarray(cliques.params.gamma_low, dtype=np.float64))
    total = 0.0
    for size, matrix in cliques.size_groups:
        values = lab[matrix]
        unanimous = (values == values[:, :1]).all(axis=1)
        first = values[:, 0]
        unanimous_cost = low[0] if low.size == 1 else low[first]
        costs = np.where(unanimous, unanimous_cost, float(cliques.params.gamma_max(size)))
        total += float(costs.sum())
    return total


def expected_clique_energy(
    q: np.ndarray, clique: Sequence[int] | np.ndarray, params: PnPottsParams | None = None
) -> float:
    """E_Q[cost] of one clique under independent marginals."""
    params = params or PnPottsParams()
    members = np.asarray(clique, dtype=np.int64)
    q = np.asarray(q, dtype=np.float64)
    unanimous = _clique_product(q[members][None, :, :])[0]
    gamma = params.gamma_vector(q.shape[1])
    gmax = float(params.gamma_max(members.size))
    return float((gamma * unanimous).sum() + gmax * (1.0 - unanimous.sum()))


def expected_total_energy(q: np.ndarray, cliques: CliqueSet) -> float:
    """Sum of E_Q[cost] over all cliques."""
    if not len(cliques):
        return 0.0
    q = np.asarray(q, dtype=np.float64)
    gamma = cliques.params.gamma_vector(q.shape[1])
    total = 0.0
    for size, matrix in cliques.size_groups:
        unanimous = _clique_product(q[matrix])
        gmax = float(cliques.params.gamma_max(size))
        total += float((unanimous @ gamma).sum() + gmax * (1.0 - unanimous.sum(axis=1)).sum())
    return total


def enumerate_clique_expectation(
    q: np.ndarray, clique: Sequence[int] | np.ndarray, pixel: int, label: int,
    params: PnPottsParams | None = None,
) -> float:
    """Exhaustive expectation over the other members' labels (small cliques only)."""
    params = params or PnPottsParams()
    q = np.asarray(q, dtype=np.float64)
    members = np.asarray(clique, dtype=np.int64)
    pos = _member_index(members, pixel)
    others = np.delete(members, pos)
    labels = q.shape[1]
    if labels ** others.size > ENUMERATION_MAX_ASSIGNMENTS:
        raise SizeGuardError(
            f"Enumeration over {labels}^{others.size} assignments exceeds "
            f"{ENUMERATION_MAX_ASSIGNMENTS}",
            members=int(others.size),
        )
    low = params.gamma_vector(labels)[label]
    if not others.size:
        return float(low)
    # One row per joint assignment of the other members.
    grid = np.indices((labels,) * others.size).reshape(others.size, -1).T
    weights = np.prod(q[others[None, :], grid], axis=1)
    unanimous = (grid == label).all(axis=1)
    costs = np.where(unanimous, low, float(params.gamma_max(members.size)))
    return float((weights * costs).sum())


__all__ = [
    "PnPottsParams",
    "CliqueSet",
    "expected_clique_cost",
    "hoc_update_field",
    "clique_energy",
    "total_clique_energy",
    "expected_clique_energy",
    "expected_total_energy",
    "enumerate_clique_expectation",
]
