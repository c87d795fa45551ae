"""Mean-field inference over the joint field.

The fast path updates every variable simultaneously; pairwise messages are
Gaussian filterings of the current marginals over one lattice per kernel. The
oracle path updates one variable at a time with exact O(n) messages, which
never increases the mean-field free energy.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from colabelcrf.core.errors import DimensionError, ErrorCodes, ValueRangeError
from colabelcrf.core.hoc import (
    CliqueSet,
    expected_clique_cost,
    expected_total_energy,
    hoc_update_field,
    total_clique_energy,
)
from colabelcrf.core.lattice import (
    BlockLattice,
    FeatureMatrix,
    GaussianFilter,
    PermutohedralLattice,
)
from colabelcrf.core.model import (
    Compatibility,
    CrfProblem,
    KernelSpec,
    UnaryField,
    VideoVolume,
    embed_volume,
    pairwise_matrix,
    validate_labeling,
)
from colabelcrf.core.performance import PerformanceMonitor

logger = logging.getLogger(__name__)

PHASES = ("lattice_build", "filtering", "hoc", "normalization")


@dataclass(frozen=True)
class MarginalField:
    """Per-variable label distributions, shape (F*N, L)."""

    q: np.ndarray
    frames: int
    pixels: int

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != self.frames * self.pixels:
            raise DimensionError(
                f"Marginals must be ({self.frames * self.pixels}, L), got {q.shape}",
                shape=q.shape,
            )
        if not np.isfinite(q).all() or (q < 0).any():
            raise ValueRangeError("Marginals must be finite and non-negative")
        sums = q.sum(axis=1)
        if np.abs(sums - 1.0).max(initial=0.0) > 1e-6:
            row = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueRangeError(f"Marginal row {row} sums to {sums[row]}", variable=row)
        object.__setattr__(self, "q", q)

    @property
    def labels(self) -> int:
        return int(self.q.shape[1])


@dataclass
class SolverReport:
    """Iterations, per-phase seconds and (oracle mode) free-energy trace."""

    iterations: int = 0
    timings: dict[str, float] = field(default_factory=lambda: dict.fromkeys(PHASES, 0.0))
    free_energy_trace: list[float] = field(default_factory=list)
    energy: float | None = None

    @property
    def seconds(self) -> float:
        return float(sum(self.timings.values()))

    def merge(self, other: SolverReport) -> SolverReport:
        merged = SolverReport(iterations=self.iterations + other.iterations)
        for phase in PHASES:
            merged.timings[phase] = self.timings.get(phase, 0.0) + other.timings.get(phase, 0.0)
        merged.free_energy_trace = self.free_energy_trace + other.free_energy_trace
        if self.energy is not None or other.energy is not None:
            merged.energy = (self.energy or 0.0) + (other.energy or 0.0)
        return merged


@dataclass(frozen=True)
class SolverOptions:
    iterations: int | None = None
    damping: float = 1.0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.iterations is not None and self.iterations < 1:
            raise ValueRangeError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueRangeError(f"damping must lie in (0, 1], got {self.damping}", parameter="damping")
        if self.threads < 1:
            raise ValueRangeError(f"threads must be >= 1, got {self.threads}", parameter="threads")


def softmax_costs(costs: np.ndarray) -> np.ndarray:
    """Row-wise exp(-cost) normalised."""
    return special.softmax(-np.asarray(costs, dtype=np.float64), axis=1)


def init_marginals(unary: UnaryField) -> MarginalField:
    return MarginalField(softmax_costs(unary.flat()), unary.frames, unary.width * unary.height)


def decode(q: MarginalField | np.ndarray) -> np.ndarray:
    """Per-variable argmax; ties go to the smaller label id."""
    arr = q.q if isinstance(q, MarginalField) else np.asarray(q)
    return np.argmax(arr, axis=1).astype(np.int64)


def build_kernel_filter(volume: VideoVolume, kernel: KernelSpec) -> GaussianFilter:
    """Lattice for one kernel.

    When the kernel does not couple frames every frame gets its own lattice,
    embedded as a one-frame volume so it matches a single-frame run exactly.
    """
    if volume.frames > 1 and not kernel.couples_frames():
        pixels = volume.pixels
        blocks = [(t * pixels, (t + 1) * pixels) for t in range(volume.frames)]
        lattices = [
            PermutohedralLattice(FeatureMatrix(embed_volume(volume.frames_slice(t, t + 1), kernel)))
            for t in range(volume.frames)
        ]
        return BlockLattice(blocks, lattices)
    return PermutohedralLattice(FeatureMatrix(embed_volume(volume, kernel)))


class MeanFieldSolver:
    """Filter-based parallel mean-field over one :class:`CrfProblem`."""

    def __init__(
        self,
        problem: CrfProblem,
        options: SolverOptions | None = None,
        monitor: PerformanceMonitor | None = None,
    ):
        self.problem = problem
        self.options = options or SolverOptions()
        self.monitor = monitor or PerformanceMonitor()
        self._costs = problem.unary.flat()
        self._active = [k for k in problem.kernels if k.weight > 0]
        with self.monitor.time_operation("lattice_build"):
            self.filters: list[GaussianFilter] = [
                build_kernel_filter(problem.volume, k) for k in self._active
            ]
        for kernel, filt in zip(self._active, self.filters):
            logger.info(
                "%s kernel: %d points, %d lattice vertices",
                kernel.kind.value,
                filt.count,
                getattr(filt, "num_vertices", 0),
            )

    # ------------------------------------------------------------------ #
    def _check(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != self._costs.shape:
            raise DimensionError(
                f"Marginals of shape {q.shape} do not match the problem {self._costs.shape}",
                expected=self._costs.shape,
                actual=q.shape,
            )
        return q

    def pairwise_mass(self, q: np.ndarray) -> np.ndarray:
        """sum_m w_m (filter_m(Q) - Q): kernel-weighted label mass of all other variables."""
        q = self._check(q)
        mass = np.zeros_like(q)
        if not self.filters:
            return mass
        with self.monitor.time_operation("filtering"):
            if self.options.threads > 1 and len(self.filters) > 1:
                with ThreadPoolExecutor(max_workers=self.options.threads) as pool:
                    filtered = list(pool.map(lambda f: f.filter_array(q), self.filters))
            else:
                filtered = [f.filter_array(q) for f in self.filters]
            for kernel, out in zip(self._active, filtered):
                mass += kernel.weight * (out - q)
        return mass

    def message(self, q: np.ndarray) -> np.ndarray:
        """Pairwise message; the Potts case drops the per-pixel constant."""
        mass = self.pairwise_mass(q)
        if self.problem.compatibility.potts:
            return -mass
        return mass @ self.problem.compatibility.matrix

    def message_explicit(self, q: np.ndarray) -> np.ndarray:
        """Unfolded message sum_l' mu(l, l') * mass(l') for any compatibility."""
        return self.pairwise_mass(q) @ self.problem.compatibility.matrix

    def hoc_field(self, q: np.ndarray) -> np.ndarray:
        if not len(self.problem.cliques):
            return np.zeros_like(q)
        with self.monitor.time_operation("hoc"):
            return hoc_update_field(q, self.problem.cliques)

    def step(self, q: np.ndarray, explicit: bool = False) -> np.ndarray:
        """One simultaneous update of every variable."""
        q = self._check(q)
        msg = self.message_explicit(q) if explicit else self.message(q)
        h = self.hoc_field(q)
        with self.monitor.time_operation("normalization"):
            new = softmax_costs(self._costs + msg + h)
            damping = self.options.damping
            if damping < 1.0:
                new = damping * new + (1.0 - damping) * q
                new /= new.sum(axis=1, keepdims=True)
        return new

    def run(self, q0: np.ndarray | None = None) -> tuple[np.ndarray, SolverReport]:
        iterations = self.options.iterations or self.problem.iterations
        with self.monitor.time_operation("normalization"):
            q = softmax_costs(self._costs) if q0 is None else self._check(q0)
        for it in range(iterations):
            start = time.perf_counter()
            q = self.step(q)
            logger.info("iteration %d/%d: %.3fs", it + 1, iterations, time.perf_counter() - start)
        report = SolverReport(iterations=iterations)
        for phase in PHASES:
            report.timings[phase] = self.monitor.total(phase)
        return q, report

    def energy(self, labeling: np.ndarray) -> float:
        """Energy of a hard labeling with lattice-approximated pairwise sums."""
        n, labels = self._costs.shape
        lab = validate_labeling(labeling, n, labels)
        total = float(self._costs[np.arange(n), lab].sum())
        if self.filters:
            onehot = np.zeros((n, labels))
            onehot[np.arange(n), lab] = 1.0
            mass = self.pairwise_mass(onehot)
            mu = self.problem.compatibility.matrix
            total += 0.5 * float((mass @ mu)[np.arange(n), lab].sum())
        return total + total_clique_energy(self.problem.cliques, lab)


# ---------------------------------------------------------------------- #
def mf_step_parallel(
    problem: CrfProblem, q: MarginalField | np.ndarray, solver: MeanFieldSolver | None = None
) -> MarginalField:
    solver = solver or MeanFieldSolver(problem)
    if solver.problem is not problem:
        raise DimensionError("Solver was built for a different problem")
    arr = q.q if isinstance(q, MarginalField) else q
    return MarginalField(solver.step(arr), problem.volume.frames, problem.volume.pixels)


def _exact_hoc_costs(q: np.ndarray, cliques: CliqueSet, var: int) -> np.ndarray:
    labels = q.shape[1]
    h = np.zeros(labels)
    for index in cliques.cliques_of(var):
        members = cliques.clique(int(index))
        for label in range(labels):
            h[label] += expected_clique_cost(q, members, var, label, cliques.params)
    return h


def mf_step_sequential(
    problem: CrfProblem,
    q: MarginalField | np.ndarray,
    order: Sequence[int] | np.ndarray | None = None,
    trace: list[float] | None = None,
    pairwise: np.ndarray | None = None,
) -> MarginalField:
    """Exact coordinate updates in ``order``; appends free energy per update to ``trace``."""
    arr = np.array(q.q if isinstance(q, MarginalField) else q, dtype=np.float64)
    n = problem.num_variables
    if arr.shape != (n, problem.labels):
        raise DimensionError(
            f"Marginals of shape {arr.shape} do not match ({n}, {problem.labels})"
        )
    k = pairwise_matrix(problem) if pairwise is None else pairwise
    mu = problem.compatibility.matrix
    costs = problem.unary.flat()
    sequence = np.arange(n) if order is None else np.asarray(order, dtype=np.int64)
    for var in sequence:
        e = costs[var] + (k[var] @ arr) @ mu
        if len(problem.cliques):
            e = e + _exact_hoc_costs(arr, problem.cliques, int(var))
        arr[var] = softmax_costs(e[None, :])[0]
        if trace is not None:
            trace.append(free_energy(problem, arr, pairwise=k))
    return MarginalField(arr, problem.volume.frames, problem.volume.pixels)


def free_energy(
    problem: CrfProblem, q: MarginalField | np.ndarray, pairwise: np.ndarray | None = None
) -> float:
    """E_Q[energy] - H(Q) with 0 * ln 0 = 0."""
    arr = np.asarray(q.q if isinstance(q, MarginalField) else q, dtype=np.float64)
    costs = problem.unary.flat()
    value = float((arr * costs).sum())
    if any(kern.weight > 0 for kern in problem.kernels):
        k = pairwise_matrix(problem) if pairwise is None else pairwise
        mu = problem.compatibility.matrix
        value += 0.5 * float((k * (arr @ mu @ arr.T)).sum())
    value += expected_total_energy(arr, problem.cliques)
    value += float(special.xlogy(arr, arr).sum())
    return value


def run_sequential(
    problem: CrfProblem,
    sweeps: int | None = None,
    order: Sequence[int] | np.ndarray | None = None,
    record_trace: bool = True,
) -> tuple[MarginalField, SolverReport]:
    """Oracle solver: repeated exact sweeps with a free-energy trace."""
    q = init_marginals(problem.unary)
    k = pairwise_matrix(problem) if any(kern.weight > 0 for kern in problem.kernels) else np.zeros(
        (problem.num_variables, problem.num_variables)
    )
    report = SolverReport()
    trace: list[float] | None = [free_energy(problem, q, pairwise=k)] if record_trace else None
    for _ in range(sweeps or problem.iterations):
        q = mf_step_sequential(problem, q, order=order, trace=trace, pairwise=k)
        report.iterations += 1
    report.free_energy_trace = trace or []
    return q, report


def run_inference(
    problem: CrfProblem, options: SolverOptions | None = None
) -> tuple[np.ndarray, MarginalField, SolverReport]:
    """Parallel mean-field over the whole batch, then argmax decoding."""
    solver = MeanFieldSolver(problem, options)
    q, report = solver.run()
    labeling = decode(q)
    report.energy = solver.energy(labeling)
    marginals = MarginalField(q, problem.volume.frames, problem.volume.pixels)
    return labeling, marginals, report


def run_video(
    volume: VideoVolume,
    unary: UnaryField,
    kernels: Sequence[KernelSpec],
    compatibility: Compatibility | None = None,
    cliques: CliqueSet | None = None,
    *,
    batch: int = 50,
    iterations: int = 5,
    options: SolverOptions | None = None,
) -> tuple[np.ndarray, MarginalField, list[SolverReport]]:
    """Inference over disjoint consecutive windows of ``batch`` frames."""
    if batch < 1:
        raise ValueRangeError(f"batch must be >= 1, got {batch}", code=ErrorCodes.VALUE_PARAMETER)
    problem = CrfProblem(
        volume=volume,
        unary=unary,
        kernels=tuple(kernels),
        compatibility=compatibility or Compatibility.potts_model(unary.labels),
        cliques=cliques if cliques is not None else CliqueSet.empty(),
        iterations=iterations,
        batch=batch,
    )
    labelings = []
    marginals = []
    reports = []
    for start in range(0, volume.frames, batch):
        stop = min(start + batch, volume.frames)
        logger.info("batch frames [%d, %d)", start, stop)
        window = problem.frames_slice(start, stop) if (start, stop) != (0, volume.frames) else problem
        labeling, q, report = run_inference(window, options)
        labelings.append(labeling)
        marginals.append(q.q)
        reports.append(report)
    field_ = MarginalField(np.concatenate(marginals), volume.frames, volume.pixels)
    return np.concatenate(labelings), field_, reports


__all__ = [
    "PHASES",
    "MarginalField",
    "SolverReport",
    "SolverOptions",
    "MeanFieldSolver",
    "softmax_costs",
    "init_marginals",
    "decode",
    "build_kernel_filter",
    "mf_step_parallel",
    "mf_step_sequential",
    "free_energy",
    "run_sequential",
    "run_inference",
    "run_video",
]
