"""Small dense linear-matrix-inequality problems and a deterministic solver.

Problems are stored in explicit data form: scalar decision variables x_i
(some sign-constrained), symmetric matrix variables expanded into their
upper-triangle entries, and constraint blocks

    F0 + sum_i x_i F_i  <=  0   (negative semidefinite),

optionally with a linear objective.  A matrix variable declared with an
eigenvalue floor eps contributes an extra block eps I - M <= 0.

Solving is delegated to a conic engine through cvxpy (CLARABEL by default:
interior point, fixed iteration schedule, no randomised pivoting, so
identical problem data yields identical reports).  `verify` never trusts
the solver: it re-evaluates every block with numpy's symmetric eigenvalue
routine and reports the worst slack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SymmetricMatrix",
    "SolverFailure",
    "LinearMatrixProblem",
    "SolveReport",
    "VerifyReport",
    "solve",
    "verify",
]

SymmetricMatrix = np.ndarray

DEFAULT_TOL = 1e-8
_SOLVER_ORDER = ("CLARABEL", "SCS", "CVXOPT")


class SolverFailure(RuntimeError):
    """Conic solve failed numerically (distinct from proven infeasibility)."""


def symmetrize(a) -> SymmetricMatrix:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


@dataclass
class MatrixVariableSlot:
    """Symmetric matrix variable expanded into scalar entries.

    entry_index[i][j] is the scalar-variable index of entry (i, j); the
    off-diagonal entries are shared between (i, j) and (j, i).
    """

    name: str
    size: int
    eps_floor: float | None
    entry_index: list = field(default_factory=list)


class LinearMatrixProblem:
    """min  objective . x   s.t.   per-block  F0 + sum_i x_i F_i <= 0."""

    def __init__(self):
        self.var_names: list[str] = []
        self.nonneg: list[bool] = []
        self.matrix_variables: list[MatrixVariableSlot] = []
        self.block_constants: list[np.ndarray] = []
        self.block_coeffs: list[dict[int, np.ndarray]] = []
        self.objective: dict[int, float] | None = None

    # -- variables ----------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def sign_constraints(self) -> np.ndarray:
        return np.array(self.nonneg, dtype=bool)

    def add_scalar(self, name: str, nonneg: bool = False) -> int:
        self.var_names.append(name)
        self.nonneg.append(bool(nonneg))
        return len(self.var_names) - 1

    def add_scalars(self, name: str, count: int, nonneg: bool = False) -> list[int]:
        return [self.add_scalar(f"{name}[{k}]", nonneg) for k in range(count)]

    def add_symmetric(self, name: str, size: int, eps_floor: float | None = None) -> MatrixVariableSlot:
        slot = MatrixVariableSlot(name, size, eps_floor)
        slot.entry_index = [[0] * size for _ in range(size)]
        for i in range(size):
            for j in range(i, size):
                idx = self.add_scalar(f"{name}[{i},{j}]")
                slot.entry_index[i][j] = idx
                slot.entry_index[j][i] = idx
        self.matrix_variables.append(slot)
        if eps_floor is not None:
            # eps I - M <= 0
            coeffs: dict[int, np.ndarray] = {}
            for i in range(size):
                for j in range(i, size):
                    C = np.zeros((size, size))
                    C[i, j] = C[j, i] = -1.0
                    self._merge(coeffs, slot.entry_index[i][j], C)
            self._push_block(eps_floor * np.eye(size), coeffs)
        return slot

    # -- constraints --------------------------------------------------------

    @staticmethod
    def _merge(coeffs: dict[int, np.ndarray], idx: int, C: np.ndarray) -> None:
        if idx in coeffs:
            coeffs[idx] = coeffs[idx] + C
        else:
            coeffs[idx] = C

    def _push_block(self, constant, coeffs: dict[int, np.ndarray]) -> None:
        constant = symmetrize(constant)
        size = constant.shape[0]
        clean = {}
        for idx, C in coeffs.items():
            C = symmetrize(C)
            if C.shape[0] != size:
                raise ValueError("coefficient block size mismatch")
            if np.any(C):
                clean[int(idx)] = C
        self.block_constants.append(constant)
        self.block_coeffs.append(clean)

    def add_lmi(self, constant, coeffs: dict[int, np.ndarray]) -> None:
        """Add a block  constant + sum_i x_i coeffs[i] <= 0."""
        self._push_block(constant, dict(coeffs))

    def add_equality(self, constant: float, coeffs: dict[int, float]) -> None:
        """Affine equality encoded as a pair of opposed 1x1 blocks."""
        up = {i: np.array([[float(c)]]) for i, c in coeffs.items()}
        dn = {i: np.array([[-float(c)]]) for i, c in coeffs.items()}
        self._push_block(np.array([[float(constant)]]), up)
        self._push_block(np.array([[-float(constant)]]), dn)

    def set_objective(self, coeffs: dict[int, float]) -> None:
        self.objective = {int(i): float(c) for i, c in coeffs.items()}

    def objective_vector(self) -> np.ndarray | None:
        if self.objective is None:
            return None
        c = np.zeros(self.num_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    # -- assembled single-block view ---------------------------------------

    @property
    def constant_block(self) -> np.ndarray:
        """All constraint blocks assembled block-diagonally."""
        from scipy.linalg import block_diag

        return block_diag(*self.block_constants) if self.block_constants else np.zeros((0, 0))

    @property
    def coefficient_blocks(self) -> list[np.ndarray]:
        """One assembled block per scalar variable, same size as constant_block."""
        from scipy.linalg import block_diag

        out = []
        for i in range(self.num_vars):
            parts = []
            for constant, coeffs in zip(self.block_constants, self.block_coeffs):
                parts.append(coeffs.get(i, np.zeros_like(constant)))
            out.append(block_diag(*parts) if parts else np.zeros((0, 0)))
        return out

    def block_value(self, b: int, x: np.ndarray) -> np.ndarray:
        M = self.block_constants[b].copy()
        for idx, C in self.block_coeffs[b].items():
            M += x[idx] * C
        return M

    def extract_matrix(self, slot: MatrixVariableSlot, x: np.ndarray) -> np.ndarray:
        M = np.empty((slot.size, slot.size))
        for i in range(slot.size):
            for j in range(slot.size):
                M[i, j] = x[slot.entry_index[i][j]]
        return M

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "var_names": list(self.var_names),
            "nonneg": [bool(b) for b in self.nonneg],
            "matrix_variables": [
                {
                    "name": s.name,
                    "size": s.size,
                    "eps_floor": s.eps_floor,
                    "entry_index": s.entry_index,
                }
                for s in self.matrix_variables
            ],
            "blocks": [
                {
                    "constant": const.tolist(),
                    "coeffs": {str(i): C.tolist() for i, C in sorted(coeffs.items())},
                }
                for const, coeffs in zip(self.block_constants, self.block_coeffs)
            ],
            "objective": {str(i): v for i, v in sorted(self.objective.items())}
            if self.objective is not None
            else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LinearMatrixProblem":
        p = cls()
        p.var_names = list(d["var_names"])
        p.nonneg = [bool(b) for b in d["nonneg"]]
        for s in d.get("matrix_variables", []):
            slot = MatrixVariableSlot(s["name"], int(s["size"]), s["eps_floor"])
            slot.entry_index = [[int(v) for v in row] for row in s["entry_index"]]
            p.matrix_variables.append(slot)
        for b in d["blocks"]:
            p.block_constants.append(np.array(b["constant"], dtype=float))
            p.block_coeffs.append(
                {int(i): np.array(C, dtype=float) for i, C in b["coeffs"].items()}
            )
        obj = d.get("objective")
        p.objective = {int(i): float(v) for i, v in obj.items()} if obj is not None else None
        return p

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "LinearMatrixProblem":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class SolveReport:
    status: str  # optimal | feasible | infeasible | numerical-failure
    objective: float | None
    x: np.ndarray | None
    solver: str
    max_violation: float | None = None
    min_slack_eigenvalue: float | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


@dataclass
class VerifyReport:
    max_violation: float
    min_slack_eigenvalue: float
    sign_violation: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol and self.sign_violation <= self.tol

    def __bool__(self) -> bool:
        return self.ok


def _pick_solver(preferred: str | None):
    import cvxpy as cp

    installed = cp.installed_solvers()
    if preferred is not None:
        if preferred not in installed:
            raise SolverFailure(f"requested solver {preferred} is not installed")
        return preferred
    for name in _SOLVER_ORDER:
        if name in installed:
            return name
    raise SolverFailure("no usable conic solver installed")


def solve(
    problem: LinearMatrixProblem,
    tol: float = DEFAULT_TOL,
    solver: str | None = None,
) -> SolveReport:
    """Solve the problem; returns a report rather than raising on infeasibility.

    Status is `infeasible` only when the engine proves it; unclear outcomes
    become `numerical-failure`.  Inaccurate-but-verifiable solutions are
    accepted after the independent residual check passes at 10 * tol.
    """
    import cvxpy as cp

    name = _pick_solver(solver)
    nv = problem.num_vars
    x = cp.Variable(nv) if nv else None
    constraints = []
    for const, coeffs in zip(problem.block_constants, problem.block_coeffs):
        expr = cp.Constant(const)
        for idx, C in sorted(coeffs.items()):
            expr = expr + x[idx] * C
        if expr.shape == (1, 1):
            constraints.append(expr <= 0)
        else:
            constraints.append(0.5 * (expr + expr.T) << 0)
    for i, nn in enumerate(problem.nonneg):
        if nn:
            constraints.append(x[i] >= 0)
    obj_vec = problem.objective_vector()
    objective = cp.Minimize(obj_vec @ x) if obj_vec is not None else cp.Minimize(0)
    cp_problem = cp.Problem(objective, constraints)
    try:
        cp_problem.solve(solver=name)
    except cp.SolverError:
        return SolveReport("numerical-failure", None, None, name, max_violation=None)

    status = cp_problem.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveReport("infeasible", None, None, name)
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SolveReport("numerical-failure", None, None, name)

    xv = np.asarray(x.value, dtype=float) if nv else np.zeros(0)
    check = verify(problem, xv, tol=10 * tol)
    label = "optimal" if problem.objective is not None else "feasible"
    if status == cp.OPTIMAL_INACCURATE and not check.ok:
        return SolveReport(
            "numerical-failure",
            None,
            xv,
            name,
            max_violation=check.max_violation,
            min_slack_eigenvalue=check.min_slack_eigenvalue,
        )
    objective_value = float(obj_vec @ xv) if obj_vec is not None else None
    return SolveReport(
        label,
        objective_value,
        xv,
        name,
        max_violation=check.max_violation,
        min_slack_eigenvalue=check.min_slack_eigenvalue,
    )


def verify(problem: LinearMatrixProblem, x, tol: float = DEFAULT_TOL) -> VerifyReport:
    """Independent feasibility audit of a candidate solution.

    Evaluates every block with numpy.linalg.eigvalsh (a code path the conic
    engine never touches) and the sign constraints directly.
    """
    x = np.asarray(x, dtype=float)
    if x.size != problem.num_vars:
        raise ValueError(f"expected {problem.num_vars} values, got {x.size}")
    worst = -np.inf
    for b in range(len(problem.block_constants)):
        M = problem.block_value(b, x)
        lam = float(np.linalg.eigvalsh(M)[-1]) if M.size else 0.0
        worst = max(worst, lam)
    if worst == -np.inf:
        worst = 0.0
    sign_violation = 0.0
    mask = problem.sign_constraints
    if np.any(mask):
        sign_violation = float(max(0.0, -np.min(x[mask])))
    return VerifyReport(
        max_violation=float(max(0.0, worst)),
        min_slack_eigenvalue=float(-worst),
        sign_violation=sign_violation,
        tol=tol,
    )
