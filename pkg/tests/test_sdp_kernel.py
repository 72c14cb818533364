import numpy as np
import pytest

from lpvds.models.sdp import AffineBlock, QuadraticObjective, SdpProblem, SolverStatus
from lpvds.services.sdp_kernel import sdp_kernel
from lpvds.utils.exceptions import InvalidMatrixError, InvalidProblemError


def scalar_block(constant: float, coefficient: float) -> AffineBlock:
    return AffineBlock(constant=np.array([[constant]]), coefficients=np.array([[[coefficient]]]))


class TestEigenTools:
    def test_eigvals_sorted(self):
        values = sdp_kernel.eigvals(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert values == pytest.approx([1.0, 3.0])

    def test_empty_matrix(self):
        assert sdp_kernel.eigvals(np.zeros((0, 0))).size == 0
        assert sdp_kernel.max_eig(np.zeros((0, 0))) == float("-inf")
        with pytest.raises(InvalidMatrixError):
            sdp_kernel.min_eig(np.zeros((0, 0)))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidMatrixError):
            sdp_kernel.eigvals(np.array([[np.nan]]))
        with pytest.raises(InvalidMatrixError):
            sdp_kernel.symmetrize(np.ones((2, 3)))

    def test_symmetrize(self):
        result = sdp_kernel.symmetrize([[1.0, 2.0], [0.0, 1.0]])
        assert np.array_equal(result, result.T)
        assert result[0, 1] == 1.0

    def test_is_nsd(self):
        assert sdp_kernel.is_nsd(-np.eye(3))
        assert not sdp_kernel.is_nsd(np.diag([-1.0, 1e-3]))
        assert sdp_kernel.is_nsd(np.diag([-1.0, 1e-9]), tol=1e-8)
        with pytest.raises(InvalidMatrixError):
            sdp_kernel.is_nsd(np.eye(2), tol=-1.0)

    @pytest.mark.parametrize("matrix, expected", [
        (np.eye(2), 1.0),
        (np.diag([3.0, -2.0]), -2.0),
        (np.array([[2.0, 1.0], [1.0, 2.0]]), 1.0),
    ])
    def test_min_eig_examples(self, matrix, expected):
        assert sdp_kernel.min_eig(matrix) == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_is_nsd_examples(self):
        assert sdp_kernel.is_nsd(np.zeros((3, 3)), tol=0.0)
        assert not sdp_kernel.is_nsd(np.diag([0.1, -1.0]), tol=1e-8)

    def test_rayleigh_quotient_bounds(self, rng):
        for size in (1, 3, 6):
            root = rng.normal(size=(size, size))
            matrix = root + root.T
            lowest = sdp_kernel.min_eig(matrix)
            highest = sdp_kernel.max_eig(matrix)
            vectors = rng.normal(size=(100, size))
            vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
            quotients = np.einsum("si,ij,sj->s", vectors, matrix, vectors)
            assert np.all(quotients >= lowest - 1e-12)
            assert np.all(quotients <= highest + 1e-12)

    def test_top_eigvec(self):
        vector = sdp_kernel.top_eigvec(np.diag([1.0, 5.0, 2.0]))
        assert vector == pytest.approx([0.0, 1.0, 0.0])

    def test_affine_block_probe(self):
        block = sdp_kernel.affine_block(lambda z: np.array([[z[0], z[1]], [z[1], 1.0 - z[0]]]), 2)
        assert np.array_equal(block.constant, np.array([[0.0, 0.0], [0.0, 1.0]]))
        z = np.array([0.3, -0.7])
        assert block.evaluate(z) == pytest.approx(np.array([[0.3, -0.7], [-0.7, 0.7]]))


class TestProblemValidation:
    def test_lower_must_be_below_upper(self):
        with pytest.raises(InvalidProblemError):
            SdpProblem(
                decision_dim=1,
                objective=QuadraticObjective.linear_only(np.zeros(1)),
                lower=np.array([1.0]),
                upper=np.array([1.0]),
            )

    def test_hessian_must_be_psd(self):
        with pytest.raises(InvalidProblemError):
            SdpProblem(
                decision_dim=1,
                objective=QuadraticObjective(hessian=np.array([[-1.0]]), linear=np.zeros(1)),
            )

    def test_block_must_be_symmetric(self):
        block = AffineBlock(constant=np.array([[0.0, 1.0], [0.0, 0.0]]), coefficients=np.zeros((1, 2, 2)))
        with pytest.raises(InvalidProblemError):
            SdpProblem(decision_dim=1, objective=QuadraticObjective.linear_only(np.zeros(1)), blocks=[block])


class TestSolveSdp:
    def test_quadratic_with_lower_bound(self):
        # min z² s.t. 1 - z ⪯ 0
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective(hessian=np.array([[2.0]]), linear=np.zeros(1)),
            blocks=[scalar_block(1.0, -1.0)],
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.status == SolverStatus.OPTIMAL
        assert solution.z[0] == pytest.approx(1.0, abs=1e-6)
        assert solution.max_block_eig <= 1e-8

    def test_unconstrained_quadratic(self):
        problem = SdpProblem(
            decision_dim=2,
            objective=QuadraticObjective(hessian=2.0 * np.eye(2), linear=np.array([-2.0, 4.0])),
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.succeeded
        assert solution.z == pytest.approx([1.0, -2.0], abs=1e-6)

    def test_infeasible_blocks(self):
        # z ⪯ -1 与 z ⪰ 1 矛盾
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective.linear_only(np.zeros(1)),
            blocks=[scalar_block(1.0, 1.0), scalar_block(1.0, -1.0)],
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert not solution.succeeded

    def test_linear_objective_on_matrix_block(self):
        # max z 使 [[z, 1], [1, -2]] ⪯ 0，最优 z = -1/2
        block = sdp_kernel.affine_block(lambda z: np.array([[z[0], 1.0], [1.0, -2.0]]), 1)
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective.linear_only(np.array([-1.0])),
            blocks=[block],
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.succeeded
        assert solution.z[0] == pytest.approx(-0.5, abs=1e-6)

    def test_inactive_matrix_constraint_matches_grid_search(self):
        # [[z1, 1], [1, z2]] ⪰ 0 写成取负后 ⪯ 0
        block = sdp_kernel.affine_block(lambda z: -np.array([[z[0], 1.0], [1.0, z[1]]]), 2)
        problem = SdpProblem(
            decision_dim=2,
            objective=QuadraticObjective(hessian=2.0 * np.eye(2), linear=np.array([-6.0, -6.0]), constant=18.0),
            blocks=[block],
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.succeeded
        assert solution.z == pytest.approx([3.0, 3.0], abs=1e-5)

        grid = np.linspace(0.0, 5.0, 501)
        z1, z2 = np.meshgrid(grid, grid)
        feasible = (z1 >= 0) & (z2 >= 0) & (z1 * z2 >= 1.0)
        values = np.where(feasible, (z1 - 3.0) ** 2 + (z2 - 3.0) ** 2, np.inf)
        best = np.unravel_index(np.argmin(values), values.shape)
        assert [z1[best], z2[best]] == pytest.approx(list(solution.z), abs=1e-2)
        assert solution.objective_value == pytest.approx(0.0, abs=1e-8)

    def test_epsilon_strict_margin(self):
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective(hessian=np.array([[2.0]]), linear=np.zeros(1)),
            blocks=[scalar_block(1.0, -1.0)],
            epsilon_strict=0.5,
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.succeeded
        assert solution.z[0] == pytest.approx(1.5, abs=1e-6)

    def test_recomputed_eigs_reported(self):
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective(hessian=np.array([[2.0]]), linear=np.zeros(1)),
            blocks=[scalar_block(1.0, -1.0)],
            lower=np.array([0.0]),
            upper=np.array([4.0]),
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert len(solution.block_eigs) == 1
        assert solution.block_eigs[0] == pytest.approx(1.0 - solution.z[0])

    def test_empty_interior_is_feasible_at_boundary(self):
        # diag(z, -z) ⪯ 0 且 z ≥ 0 只有 z = 0 一个可行点
        block = sdp_kernel.affine_block(lambda z: np.diag([z[0], -z[0]]), 1)
        problem = SdpProblem(
            decision_dim=1,
            objective=QuadraticObjective.linear_only(np.zeros(1)),
            blocks=[block],
            lower=np.array([0.0]),
        )
        solution = sdp_kernel.solve_sdp(problem)
        assert solution.status == SolverStatus.FEASIBLE
        assert solution.z[0] == pytest.approx(0.0, abs=1e-6)
        assert solution.max_block_eig <= 1e-8

    def test_deterministic(self):
        block = sdp_kernel.affine_block(lambda z: np.array([[z[0] - 1.0, z[1]], [z[1], -z[0] - 2.0]]), 2)
        problem = SdpProblem(
            decision_dim=2,
            objective=QuadraticObjective(hessian=np.diag([2.0, 1.0]), linear=np.array([-4.0, 1.0])),
            blocks=[block],
            lower=np.array([-5.0, -5.0]),
            upper=np.array([5.0, 5.0]),
        )
        first = sdp_kernel.solve_sdp(problem)
        second = sdp_kernel.solve_sdp(problem)
        assert first.status == second.status
        assert np.array_equal(first.z, second.z)
        assert first.objective_value == second.objective_value
