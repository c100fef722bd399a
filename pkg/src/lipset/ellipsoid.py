"""Minimum-trace outer ellipsoids of slice sets.

A slice is an intersection of balls { y : ||y - c_k|| <= rho_k }.  The
S-procedure gives a sufficient condition for an ellipsoid
E(c, R) = { y : (y - c)^T R^{-1} (y - c) <= 1 } to contain it: multipliers
tau_k >= 0 with

    [[ -sum tau_k I,   sum tau_k c_k,  -I ],
     [ (sum tau_k c_k)^T,      r,      c^T],
     [  -I,                    c,      -R ]]  <=  0,

    r = -1 - sum_k tau_k (c_k . c_k - rho_k^2),

which is linear in (tau, c, R); minimising trace(R) picks the tightest
such ellipsoid.  After the conic solve the shape matrix is re-derived
analytically from the returned (tau, c) via the Schur complement of the
multiplier aggregate, which removes the solver's boundary slack from the
containment chain: every exact slice member then satisfies the quadratic
form up to eigendecomposition roundoff, so sampling audits see zero
violations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import sdp
from .slices import SliceSet, sample_points

__all__ = [
    "Ellipsoid",
    "AuditReport",
    "OuterReport",
    "build_outer_sdp",
    "outer_ellipsoid",
    "contains_point",
    "containment_audit",
]

EPS_FLOOR = 1e-9
CONTAINS_TOL = 1e-9
DEFAULT_MAX_BALLS = 50


@dataclass
class Ellipsoid:
    """{ y : (y - c)^T R^{-1} (y - c) <= 1 } with R symmetric positive definite."""

    c: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if self.R.shape != (self.c.size, self.c.size):
            raise ValueError("shape matrix must be n x n for an n-vector center")
        if not np.allclose(self.R, self.R.T, atol=1e-12, rtol=0):
            raise ValueError("shape matrix must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("shape matrix must be positive definite") from exc

    @property
    def n(self) -> int:
        return self.c.size

    def quadratic_form(self, y) -> float:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.R)
        z = np.linalg.solve(self._chol, y - self.c)
        return float(z @ z)

    def quadratic_form_batch(self, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.R)
        Z = np.linalg.solve(self._chol, (Y - self.c).T)
        return np.sum(Z * Z, axis=0)

    def contains_point(self, y, tol: float = CONTAINS_TOL) -> bool:
        return self.quadratic_form(y) <= 1.0 + tol

    def to_json_dict(self) -> dict:
        return {"c": self.c.tolist(), "R": self.R.reshape(-1).tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Ellipsoid":
        c = np.asarray(d["c"], dtype=float)
        R = np.asarray(d["R"], dtype=float).reshape(c.size, c.size)
        return cls(c, R)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Ellipsoid":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def contains_point(ellipsoid: Ellipsoid, y, tol: float = CONTAINS_TOL) -> bool:
    """Quadratic-form membership test."""
    return ellipsoid.contains_point(y, tol=tol)


# ---------------------------------------------------------------------------


def _select_balls(sliceset: SliceSet, max_balls: int):
    centers, radii = sliceset.pruned()
    if radii.size > max_balls:
        keep = np.argsort(radii, kind="stable")[:max_balls]
        centers, radii = centers[keep], radii[keep]
    return centers, radii


def build_outer_sdp(
    sliceset: SliceSet,
    max_balls: int | None = None,
    eps: float = EPS_FLOOR,
) -> sdp.LinearMatrixProblem:
    """Emit the min-trace outer-ellipsoid program for a slice.

    Variables: one nonnegative multiplier per ball, the free center c, and
    the shape matrix R floored at eps I.  Coefficients are read directly
    from the slice's ball centers and radii.
    """
    centers, radii = _select_balls(sliceset, max_balls or 10**9)
    n = sliceset.n
    K = radii.size
    p = sdp.LinearMatrixProblem()
    tau = p.add_scalars("tau", K, nonneg=True)
    cvar = p.add_scalars("c", n)
    R = p.add_symmetric("R", n, eps_floor=eps)

    size = 2 * n + 1
    constant = np.zeros((size, size))
    constant[:n, n + 1 :] = -np.eye(n)
    constant[n + 1 :, :n] = -np.eye(n)
    constant[n, n] = -1.0

    coeffs: dict[int, np.ndarray] = {}
    for k in range(K):
        C = np.zeros((size, size))
        C[:n, :n] = -np.eye(n)
        C[:n, n] = centers[k]
        C[n, :n] = centers[k]
        C[n, n] = -(centers[k] @ centers[k] - radii[k] ** 2)
        coeffs[tau[k]] = C
    for i in range(n):
        C = np.zeros((size, size))
        C[n, n + 1 + i] = 1.0
        C[n + 1 + i, n] = 1.0
        coeffs[cvar[i]] = C
    for i in range(n):
        for j in range(i, n):
            C = np.zeros((size, size))
            C[n + 1 + i, n + 1 + j] = -1.0
            C[n + 1 + j, n + 1 + i] = -1.0
            coeffs[R.entry_index[i][j]] = C
    p.add_lmi(constant, coeffs)
    p.set_objective({R.entry_index[i][i]: 1.0 for i in range(n)})
    # keep the ball data reachable for extraction and re-certification
    p.ball_centers = centers
    p.ball_radii = radii
    p.handles = {"tau": tau, "c": cvar, "R": R}
    return p


def _recertified_shape(tau, centers, radii, c, h: float = 1e-7):
    """Shape matrix derived from exact multipliers, or None when degenerate.

    With W = sum tau_k A_k + diag(0, .., 0, 1) for the ball forms A_k, any
    point y in every ball satisfies [y; 1]^T W [y; 1] <= 1; pushing the
    center shift through gives u^T G u <= 1 for u = y - c with G the Schur
    complement below, valid for ANY tau >= 0 (optimality is not used).  The
    multipliers are scaled by (1 - h) first: the corner
    sum tau_k (||c - c_k||^2 - rho_k^2) + 1 sits exactly at zero for
    boundary-tight optima, and the scaling moves it to >= h without
    breaking the certificate.  Costs a relative h in trace.
    """
    n = c.size
    tau = (1.0 - h) * tau
    W11 = np.sum(tau) * np.eye(n)
    w12 = -(tau[:, None] * centers).sum(axis=0)
    W22 = float(tau @ (np.sum(centers**2, axis=1) - radii**2)) + 1.0
    wt12 = W11 @ c + w12
    Wt22 = float(c @ W11 @ c + 2.0 * (w12 @ c) + W22)
    if Wt22 <= 0.25 * h:
        return None
    G = W11 - np.outer(wt12, wt12) / Wt22
    lam, U = np.linalg.eigh(0.5 * (G + G.T))
    if lam[0] <= 0.0:
        return None
    lam_shrunk = lam * (1.0 - 1e-9)
    R = (U / lam_shrunk) @ U.T
    return 0.5 * (R + R.T)


def _floor_spd(R: np.ndarray, eps: float) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (R + R.T))
    lam = np.maximum(lam, eps)
    return 0.5 * ((U * lam) @ U.T + ((U * lam) @ U.T).T)


@dataclass
class AuditReport:
    samples_requested: int
    samples_accepted: int
    violations: int
    tightness_ratio: float
    degenerate: bool

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def __bool__(self) -> bool:
        return self.ok


@dataclass
class OuterReport:
    balls_used: int
    trace: float
    solver: sdp.SolveReport
    audit: AuditReport
    recertified: bool


def containment_audit(
    sliceset: SliceSet,
    ellipsoid: Ellipsoid,
    num_samples: int = 10_000,
    rng: np.random.Generator | None = None,
    tol: float = CONTAINS_TOL,
) -> AuditReport:
    """Sample the slice and count ellipsoid-membership violations.

    Also reports a tightness ratio (trace of the axis-aligned hull of the
    accepted samples over trace of the ellipsoid).  Slices with empty
    rejection yield are flagged degenerate with zero violations.
    """
    rng = rng or np.random.default_rng(0)
    pts = sample_points(sliceset, num_samples, rng)
    if pts.shape[0] == 0:
        return AuditReport(num_samples, 0, 0, float("nan"), True)
    forms = ellipsoid.quadratic_form_batch(pts)
    violations = int(np.sum(forms > 1.0 + tol))
    half = 0.5 * (pts.max(axis=0) - pts.min(axis=0))
    hull_trace = float(np.sum(half**2))
    ratio = hull_trace / float(np.trace(ellipsoid.R))
    return AuditReport(num_samples, int(pts.shape[0]), violations, ratio, False)


def outer_ellipsoid(
    sliceset: SliceSet,
    max_balls: int = DEFAULT_MAX_BALLS,
    audit_samples: int = 2_000,
    rng: np.random.Generator | None = None,
    tol: float = sdp.DEFAULT_TOL,
    return_report: bool = False,
):
    """Minimum-trace outer ellipsoid of a slice, audited against the full slice.

    Starts from the max_balls smallest balls (the rest are redundant for
    tightness in almost all cases); the audit always runs against the full
    slice, and the ball budget doubles if it ever reports a violation.
    """
    rng = rng or np.random.default_rng(0)
    total = sliceset.pruned()[1].size
    K = min(max_balls, total)
    while True:
        problem = build_outer_sdp(sliceset, max_balls=K)
        report = sdp.solve(problem, tol=tol)
        if not report.ok:
            if report.status == "infeasible":
                raise sdp.SolverFailure(
                    "outer-ellipsoid program reported infeasible; slice data is degenerate"
                )
            raise sdp.SolverFailure(f"outer-ellipsoid solve failed ({report.status})")
        tau = np.clip(report.x[problem.handles["tau"]], 0.0, None)
        c = report.x[problem.handles["c"]]
        R_solver = problem.extract_matrix(problem.handles["R"], report.x)
        R = _recertified_shape(tau, problem.ball_centers, problem.ball_radii, c)
        recertified = R is not None
        if R is None:
            R = (1.0 + 1e-6) * R_solver  # degenerate aggregate; audit backstops
        R = _floor_spd(R, EPS_FLOOR)
        ell = Ellipsoid(c, R)
        audit = containment_audit(sliceset, ell, num_samples=audit_samples, rng=rng)
        if audit.ok or K >= total:
            if not audit.ok:
                raise sdp.SolverFailure(
                    f"containment audit failed with the full ball set ({audit.violations} violations)"
                )
            out = OuterReport(K, float(np.trace(R)), report, audit, recertified)
            return (ell, out) if return_report else ell
        K = min(2 * K, total)
