"""Tests for mean-field inference."""

import math

import numpy as np
import pytest

from colabelcrf.core.errors import DimensionError, ValueRangeError
from colabelcrf.core.hoc import CliqueSet, PnPottsParams
from colabelcrf.core.lattice import BlockLattice, PermutohedralLattice
from colabelcrf.core.model import (
    Compatibility,
    CrfProblem,
    KernelKind,
    KernelSpec,
    UnaryField,
    VideoVolume,
    energy,
    pairwise_matrix,
)
from colabelcrf.core.solver import (
    PHASES,
    MarginalField,
    MeanFieldSolver,
    SolverOptions,
    SolverReport,
    build_kernel_filter,
    decode,
    free_energy,
    init_marginals,
    mf_step_parallel,
    mf_step_sequential,
    run_inference,
    run_sequential,
    run_video,
    softmax_costs,
)

ZERO_KERNEL = (KernelSpec(KernelKind.SMOOTHNESS, 0.0, 1.0, 1.0),)
DECOUPLED = (
    KernelSpec(KernelKind.SMOOTHNESS, 2.0, 2.0, 1e-3),
    KernelSpec(KernelKind.APPEARANCE, 3.0, 5.0, 1e-3, 40.0),
)
WEAK = (
    KernelSpec(KernelKind.SMOOTHNESS, 0.1, 2.0, 1.0),
    KernelSpec(KernelKind.APPEARANCE, 0.1, 4.0, 2.0, 60.0),
)


def _exact_parallel_step(problem, q):
    k = pairwise_matrix(problem)
    e = problem.unary.flat() + (k @ q) @ problem.compatibility.matrix
    return softmax_costs(e)


class TestMarginals:
    """Initialisation, decoding and validation."""

    def test_softmax_of_costs(self):
        unary = UnaryField(np.array([[[0.0, math.log(3.0)]]]), 1, 1)
        np.testing.assert_allclose(init_marginals(unary).q, [[0.75, 0.25]])

    def test_uniform_costs(self):
        q = init_marginals(UnaryField(np.zeros((2, 4, 5)), 2, 2))
        np.testing.assert_allclose(q.q, 0.2)
        assert (q.frames, q.pixels, q.labels) == (2, 4, 5)

    def test_shift_invariance(self, rng):
        costs = rng.uniform(0, 5, size=(1, 6, 3))
        a = init_marginals(UnaryField(costs, 3, 2)).q
        b = init_marginals(UnaryField(costs + 17.5, 3, 2)).q
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_large_costs_stay_finite(self):
        q = softmax_costs(np.array([[1e6, 1e6 + 1.0]]))
        np.testing.assert_allclose(q, [[1 / (1 + math.exp(-1)), 1 / (1 + math.exp(1))]])

    def test_decode_breaks_ties_towards_smaller_label(self):
        np.testing.assert_array_equal(decode(np.array([[0.5, 0.5], [0.2, 0.8]])), [0, 1])

    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValueRangeError):
            MarginalField(np.array([[0.5, 0.4]]), 1, 1)

    def test_shape_must_match(self):
        with pytest.raises(DimensionError):
            MarginalField(np.full((3, 2), 0.5), 1, 2)


class TestOptionsAndReports:
    """Solver options and timing reports."""

    @pytest.mark.parametrize("kwargs", [{"iterations": 0}, {"damping": 0.0}, {"damping": 1.5},
                                        {"threads": 0}])
    def test_invalid_options(self, kwargs):
        with pytest.raises(ValueRangeError):
            SolverOptions(**kwargs)

    def test_merge_adds_up(self):
        a = SolverReport(iterations=2, energy=1.0)
        a.timings["filtering"] = 0.5
        b = SolverReport(iterations=3, energy=2.0, free_energy_trace=[1.0])
        b.timings["filtering"] = 0.25
        merged = a.merge(b)
        assert merged.iterations == 5
        assert merged.timings["filtering"] == pytest.approx(0.75)
        assert merged.energy == pytest.approx(3.0)
        assert merged.free_energy_trace == [1.0]
        assert merged.seconds == pytest.approx(0.75)


class TestParallelStep:
    """Simultaneous filter-based updates."""

    def test_zero_weights_give_unary_softmax(self, make_problem, rng):
        problem = make_problem(kernels=ZERO_KERNEL)
        q = rng.dirichlet(np.ones(problem.labels), size=problem.num_variables)
        out = mf_step_parallel(problem, q)
        np.testing.assert_allclose(out.q, init_marginals(problem.unary).q, atol=1e-14)

    def test_two_pixel_step_matches_exact_messages(self, two_pixel_problem):
        q = init_marginals(two_pixel_problem.unary)
        fast = mf_step_parallel(two_pixel_problem, q).q
        exact = _exact_parallel_step(two_pixel_problem, q.q)
        np.testing.assert_allclose(fast, exact, atol=0.05)

    def test_potts_folding_matches_explicit_compatibility(self, make_problem, rng):
        problem = make_problem(frames=2, cliques=4)
        solver = MeanFieldSolver(problem)
        q = rng.dirichlet(np.ones(problem.labels), size=problem.num_variables)
        np.testing.assert_allclose(solver.step(q), solver.step(q, explicit=True), atol=1e-10)

    def test_rows_are_normalized(self, make_problem):
        problem = make_problem(frames=2, cliques=5)
        solver = MeanFieldSolver(problem)
        q = solver.step(init_marginals(problem.unary).q)
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        assert (q >= 0).all()

    def test_rows_stay_normalized_at_every_iteration(self, make_problem):
        problem = make_problem(frames=3, width=6, height=5, labels=4, cliques=8, alpha=0.5,
                               unary_scale=3.0)
        solver = MeanFieldSolver(problem, SolverOptions(damping=0.7))
        q = init_marginals(problem.unary).q
        for _ in range(10):
            q = solver.step(q)
            np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
            assert (q >= 0).all()
            assert np.isfinite(q).all()

    def test_general_compatibility(self, make_problem):
        base = make_problem(width=3, height=3, kernels=WEAK)
        mu = np.array([[0.0, 0.5, 2.0], [0.5, 0.0, 1.0], [2.0, 1.0, 0.0]])
        problem = CrfProblem(base.volume, base.unary, base.kernels, Compatibility(mu))
        q = init_marginals(problem.unary).q
        fast = MeanFieldSolver(problem).step(q)
        np.testing.assert_allclose(fast, _exact_parallel_step(problem, q), atol=0.05)

    def test_damping_mixes_with_previous(self, make_problem):
        problem = make_problem()
        q = init_marginals(problem.unary).q
        full = MeanFieldSolver(problem).step(q)
        half = MeanFieldSolver(problem, SolverOptions(damping=0.5)).step(q)
        np.testing.assert_allclose(half, 0.5 * full + 0.5 * q, atol=1e-12)

    def test_threads_do_not_change_the_result(self, make_problem):
        problem = make_problem(frames=2)
        q = init_marginals(problem.unary).q
        serial = MeanFieldSolver(problem).step(q)
        threaded = MeanFieldSolver(problem, SolverOptions(threads=2)).step(q)
        np.testing.assert_array_equal(serial, threaded)

    def test_wrong_solver(self, make_problem):
        a, b = make_problem(), make_problem()
        with pytest.raises(DimensionError):
            mf_step_parallel(a, init_marginals(a.unary), MeanFieldSolver(b))

    def test_marginal_shape_checked(self, make_problem):
        problem = make_problem()
        with pytest.raises(DimensionError):
            MeanFieldSolver(problem).step(np.full((3, problem.labels), 1.0 / problem.labels))


class TestKernelFilters:
    """Lattice selection per kernel."""

    def test_decoupled_kernel_uses_blocks(self, make_problem):
        problem = make_problem(frames=3, kernels=DECOUPLED)
        for kernel in DECOUPLED:
            assert isinstance(build_kernel_filter(problem.volume, kernel), BlockLattice)

    def test_coupled_kernel_uses_one_lattice(self, make_problem):
        problem = make_problem(frames=3)
        assert isinstance(build_kernel_filter(problem.volume, problem.kernels[0]), PermutohedralLattice)


class TestSequentialOracle:
    """Exact coordinate updates and the free energy."""

    def test_single_variable(self):
        unary = UnaryField(np.array([[[0.3, 1.2, 0.0]]]), 1, 1)
        kernels = (KernelSpec(KernelKind.SMOOTHNESS, 1.0, 1.0, 1.0),)
        problem = CrfProblem(VideoVolume(np.zeros((1, 1, 1, 3))), unary, kernels,
                             Compatibility.potts_model(3))
        expected = softmax_costs(unary.flat())
        first = mf_step_sequential(problem, np.full((1, 3), 1.0 / 3.0))
        np.testing.assert_allclose(first.q, expected)
        np.testing.assert_allclose(mf_step_sequential(problem, first).q, expected)

    def test_free_energy_never_increases(self, make_problem):
        problem = make_problem(frames=2, width=10, height=10, cliques=12, clique_size=5,
                               unary_scale=2.0)
        assert problem.num_variables == 200
        _, report = run_sequential(problem, sweeps=2)
        trace = np.asarray(report.free_energy_trace)
        assert trace.size == 1 + 2 * 200
        assert (np.diff(trace) <= 1e-9).all()
        assert trace[-1] <= trace[0]

    def test_order_is_respected(self, make_problem, rng):
        problem = make_problem(width=4, height=3)
        order = rng.permutation(problem.num_variables)
        q0 = init_marginals(problem.unary)
        trace: list[float] = []
        mf_step_sequential(problem, q0, order=order, trace=trace)
        assert len(trace) == problem.num_variables
        assert (np.diff(trace) <= 1e-9).all()

    def test_one_hot_free_energy_is_energy(self, make_problem, rng):
        problem = make_problem(width=4, height=4, cliques=3)
        labeling = rng.integers(0, problem.labels, size=problem.num_variables)
        q = np.eye(problem.labels)[labeling]
        assert free_energy(problem, q) == pytest.approx(energy(problem, labeling))

    def test_uniform_single_variable_entropy(self):
        problem = CrfProblem(
            VideoVolume(np.zeros((1, 1, 1, 3))),
            UnaryField(np.zeros((1, 1, 2)), 1, 1),
            (),
            Compatibility.potts_model(2),
        )
        assert free_energy(problem, np.array([[0.5, 0.5]])) == pytest.approx(-math.log(2.0))

    def test_converged_sweep_is_a_fixed_point(self, make_problem):
        problem = make_problem(frames=2, width=3, height=3, kernels=WEAK, cliques=3,
                               clique_size=3, alpha=0.1)
        q, _ = run_sequential(problem, sweeps=300, record_trace=False)
        again = mf_step_sequential(problem, q)
        assert np.abs(again.q - q.q).max() < 1e-9


class TestRunInference:
    """Whole-batch inference and windows."""

    def test_report_phases(self, make_problem):
        problem = make_problem(frames=2, cliques=3)
        labeling, marginals, report = run_inference(problem, SolverOptions(iterations=3))
        assert report.iterations == 3
        assert set(report.timings) == set(PHASES)
        assert labeling.shape == (problem.num_variables,)
        np.testing.assert_array_equal(labeling, decode(marginals))
        assert report.energy is not None

    def test_zero_weights_decode_unary_argmax(self, make_problem):
        problem = make_problem(frames=2, kernels=ZERO_KERNEL)
        labeling, _, report = run_inference(problem)
        np.testing.assert_array_equal(labeling, np.argmin(problem.unary.flat(), axis=1))
        assert report.energy == pytest.approx(energy(problem, labeling))

    def test_decoupled_frames_match_single_frame_runs(self, make_problem):
        problem = make_problem(frames=3, width=7, height=5, kernels=DECOUPLED)
        _, joint, _ = run_inference(problem)
        pixels = problem.volume.pixels
        for t in range(3):
            _, single, _ = run_inference(problem.frames_slice(t, t + 1))
            np.testing.assert_allclose(joint.q[t * pixels:(t + 1) * pixels], single.q, atol=1e-3)

    def test_strong_clique_enforces_agreement(self):
        unary = UnaryField(np.array([[[0.0, 0.4], [0.0, 0.4], [0.4, 0.0], [0.0, 0.4]]]), 4, 1)
        cliques = CliqueSet.from_lists([[0, 1, 2, 3]], params=PnPottsParams(alpha=2.0))
        problem = CrfProblem(VideoVolume(np.zeros((1, 1, 4, 3))), unary, ZERO_KERNEL,
                             Compatibility.potts_model(2), cliques)
        labeling, _, _ = run_inference(problem, SolverOptions(iterations=10))
        np.testing.assert_array_equal(labeling, [0, 0, 0, 0])


class TestRunVideo:
    """Consecutive frame windows."""

    def test_batch_of_one_equals_per_frame_runs(self, make_problem):
        problem = make_problem(frames=3, width=5, height=4)
        labels, marginals, reports = run_video(problem.volume, problem.unary, problem.kernels,
                                               batch=1)
        assert len(reports) == 3
        pixels = problem.volume.pixels
        for t in range(3):
            expected_labels, expected_q, _ = run_inference(problem.frames_slice(t, t + 1))
            np.testing.assert_array_equal(labels[t * pixels:(t + 1) * pixels], expected_labels)
            np.testing.assert_allclose(marginals.q[t * pixels:(t + 1) * pixels], expected_q.q)

    def test_single_frame_video_is_single_batch(self, make_problem):
        problem = make_problem(frames=1)
        labels, _, reports = run_video(problem.volume, problem.unary, problem.kernels, batch=50)
        expected, _, _ = run_inference(problem)
        assert len(reports) == 1
        np.testing.assert_array_equal(labels, expected)

    def test_partial_last_window(self, make_problem):
        problem = make_problem(frames=5, width=4, height=3)
        labels, marginals, reports = run_video(problem.volume, problem.unary, problem.kernels,
                                               batch=2)
        assert len(reports) == 3
        assert labels.shape == (problem.num_variables,)
        assert marginals.frames == 5

    def test_cliques_are_cut_at_window_edges(self, make_problem):
        problem = make_problem(frames=2, width=2, height=2)
        cliques = CliqueSet.from_lists([[0, 4], [1, 2]], params=PnPottsParams(alpha=0.5))
        labels, _, reports = run_video(problem.volume, problem.unary, problem.kernels,
                                       cliques=cliques, batch=1)
        assert len(reports) == 2
        assert labels.shape == (8,)

    def test_invalid_batch(self, make_problem):
        problem = make_problem()
        with pytest.raises(ValueRangeError):
            run_video(problem.volume, problem.unary, problem.kernels, batch=0)
