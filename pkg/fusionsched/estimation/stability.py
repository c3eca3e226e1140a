"""
Stability feasibility of the remote estimator.

The plant matrix is split into its unstable and stable invariant subspaces
with an ordered real Schur decomposition. Bounded expected error is only
achievable when the unstable modes are observable through the fleet
(rank condition on the stacked matrix O) and when r independent rows can be
drawn one per step from the blocks B_0 .. B_{r-1} (transversal condition).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..entities import SensorModel
from ..errors import UsageError
from ..logger import get_logger

_logger = get_logger("stability")

UNSTABLE_TOL = 1e-9
RANK_TOL = 1e-9
EXHAUSTIVE_NODE_LIMIT = 10_000
RANDOM_RESTARTS = 1000


@dataclass(eq=False)
class SpectralSplit:
    """
    A = basis @ diag(A_u, A_s) @ inv(basis), unstable block first.

    Only the first r columns of `basis` (an orthonormal basis of the
    unstable subspace) enter the observability test.
    """
    r: int
    A_u: np.ndarray
    A_s: np.ndarray
    basis: np.ndarray
    rho: float
    eigenvalues: np.ndarray
    boundary: Tuple[complex, ...] = ()

    @property
    def unstable_basis(self) -> np.ndarray:
        return self.basis[:, :self.r]

    def block_diagonal(self) -> np.ndarray:
        return scipy.linalg.block_diag(self.A_u, self.A_s)


@dataclass(eq=False)
class StabilityReport:
    feasible: bool
    rank_O: int
    r: int
    condition2_holds: bool
    witness_schedule: Optional[Tuple[int, ...]]
    rho: float
    search: str = "trivial"
    boundary: Tuple[complex, ...] = field(default_factory=tuple)

    def to_text(self) -> str:
        witness = ",".join(str(s) for s in self.witness_schedule) if self.witness_schedule is not None else "none"
        lines = [
            f"feasible: {str(self.feasible).lower()}",
            f"spectral_radius: {self.rho:.17g}",
            f"unstable_dim: {self.r}",
            f"rank_O: {self.rank_O}",
            f"condition1_holds: {str(self.rank_O == self.r).lower()}",
            f"condition2_holds: {str(self.condition2_holds).lower()}",
            f"witness_schedule: {witness}",
            f"search: {self.search}",
            f"boundary_eigenvalues: {len(self.boundary)}",
        ]
        return "\n".join(lines) + "\n"


def spectral_split(A, tol: float = UNSTABLE_TOL) -> SpectralSplit:
    """
    Ordered real Schur split of A; eigenvalues with |lambda| >= 1 - tol are
    unstable. Conjugate pairs stay together in 2x2 blocks.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"spectral_split expects a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise UsageError("spectral_split: A has non-finite entries")

    T, Z, r = scipy.linalg.schur(A, output="real", sort=lambda re, im: np.hypot(re, im) >= 1.0 - tol)
    n = A.shape[0]
    A_u = T[:r, :r]
    A_s = T[r:, r:]
    coupling = np.eye(n)
    if 0 < r < n:
        # A_u X - X A_s = -T12 removes the off-diagonal block
        coupling[:r, r:] = scipy.linalg.solve_sylvester(A_u, -A_s, -T[:r, r:])
    basis = Z @ coupling

    eigenvalues = np.linalg.eigvals(A)
    moduli = np.abs(eigenvalues)
    boundary = tuple(complex(ev) for ev, mod in zip(eigenvalues, moduli) if 1.0 - tol <= mod < 1.0 + tol)
    if boundary:
        _logger.warning(f"{len(boundary)} eigenvalue(s) within {tol:g} of the unit circle; classified unstable")
    rho = float(np.max(moduli)) if moduli.size else 0.0
    return SpectralSplit(r=int(r), A_u=A_u, A_s=A_s, basis=basis, rho=rho,
                         eigenvalues=eigenvalues, boundary=boundary)


def _blocks(sensors: Sequence[SensorModel], split: SpectralSplit) -> List[List[Tuple[int, np.ndarray]]]:
    """blocks[j] = [(sensor id, C_i^u A_u^j), ...] for j = 0 .. r-1."""
    V_u = split.unstable_basis
    power = np.eye(split.r)
    blocks = []
    for _ in range(split.r):
        blocks.append([(s.id, s.C @ V_u @ power) for s in sensors])
        power = power @ split.A_u
    return blocks


def build_O(sensors: Sequence[SensorModel], split: SpectralSplit) -> np.ndarray:
    """Stack B_0 .. B_{r-1}, where B_j stacks every sensor's C_i^u A_u^j."""
    if split.r < 1:
        raise UsageError("build_O needs at least one unstable mode")
    if not sensors:
        raise UsageError("build_O needs at least one sensor")
    return np.vstack([np.vstack([rows for _, rows in block]) for block in _blocks(sensors, split)])


def _numerical_rank(mat: np.ndarray, abs_tol: float) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > abs_tol))


class _TransversalSearch:
    """One independent row per step, drawn from that step's block."""

    def __init__(self, blocks: List[List[Tuple[int, np.ndarray]]], abs_tol: float):
        self.abs_tol = abs_tol
        self.candidates: List[List[Tuple[int, np.ndarray]]] = []
        for block in blocks:
            rows = [(sid, row) for sid, mat in block for row in mat if np.linalg.norm(row) > abs_tol]
            self.candidates.append(rows)
        self.nodes = 0

    def _extends(self, chosen: List[np.ndarray], row: np.ndarray) -> bool:
        return _numerical_rank(np.vstack(chosen + [row]), self.abs_tol) == len(chosen) + 1

    def exhaustive(self, limit: int = EXHAUSTIVE_NODE_LIMIT) -> Tuple[Optional[Tuple[int, ...]], bool]:
        """Depth-first backtracking; returns (witness, completed)."""
        chosen: List[np.ndarray] = []
        schedule: List[int] = []

        def visit(step: int) -> Optional[bool]:
            if step == len(self.candidates):
                return True
            for sid, row in self.candidates[step]:
                self.nodes += 1
                if self.nodes > limit:
                    return None
                if not self._extends(chosen, row):
                    continue
                chosen.append(row)
                schedule.append(sid)
                found = visit(step + 1)
                if found is None or found:
                    return found
                chosen.pop()
                schedule.pop()
            return False

        found = visit(0)
        if found is None:
            return None, False
        return (tuple(schedule) if found else None), True

    def randomized(self, rng: np.random.Generator, restarts: int = RANDOM_RESTARTS) -> Optional[Tuple[int, ...]]:
        for _ in range(restarts):
            chosen: List[np.ndarray] = []
            schedule: List[int] = []
            for step in rng.permutation(len(self.candidates)):
                rows = self.candidates[step]
                picked = None
                for idx in rng.permutation(len(rows)):
                    sid, row = rows[idx]
                    if self._extends(chosen, row):
                        picked = (step, sid, row)
                        break
                if picked is None:
                    break
                chosen.append(picked[2])
                schedule.append((picked[0], picked[1]))
            if len(chosen) == len(self.candidates):
                return tuple(sid for _, sid in sorted(schedule))
        return None


def check_feasibility(sensors: Sequence[SensorModel], split: SpectralSplit, tol: float = RANK_TOL,
                      rng: Optional[np.random.Generator] = None) -> StabilityReport:
    """
    Decide both feasibility conditions.

    Condition 1: numerical rank of O (singular values above tol * sigma_max)
    equals r. Condition 2: a transversal of r independent rows exists with
    the j-th row from row(B_j); the witness lists the sensor whose row was
    taken at each step.
    """
    if split.r == 0:
        return StabilityReport(feasible=True, rank_O=0, r=0, condition2_holds=True, witness_schedule=(),
                               rho=split.rho, search="trivial", boundary=split.boundary)

    O = build_O(sensors, split)
    sigma = np.linalg.svd(O, compute_uv=False)
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    abs_tol = tol * sigma_max
    rank_O = int(np.sum(sigma > abs_tol)) if sigma_max > 0.0 else 0

    witness = None
    search = "skipped"
    if rank_O == split.r:
        finder = _TransversalSearch(_blocks(sensors, split), abs_tol)
        witness, completed = finder.exhaustive()
        search = "exhaustive"
        if not completed:
            search = "randomized"
            witness = finder.randomized(rng if rng is not None else np.random.default_rng(0))
    condition2 = witness is not None
    report = StabilityReport(feasible=rank_O == split.r and condition2, rank_O=rank_O, r=split.r,
                             condition2_holds=condition2, witness_schedule=witness, rho=split.rho,
                             search=search, boundary=split.boundary)
    _logger.debug(f"feasibility: r={split.r} rank_O={rank_O} condition2={condition2} via {search}")
    return report
