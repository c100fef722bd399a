"""Certified positive invariant sets for envelope-consistent dynamics.

The invariant-set candidate is an intersection of ellipsoids around an
equilibrium x_eq:

    X_I = { x : (x - x_eq)^T P_j (x - x_eq) <= 1,  j = 1..n_I }.

Invariance against every map consistent with the envelope is certified by
an S-procedure matrix inequality per face m: with a shared contraction
parameter rho and multipliers tau_{k,m} >= 0 over the sampled quadratic
constraints Q_k,

    sum_j [[ -rho P_j,      0,          rho P_j x_eq        ],
           [  0,            P_m,        -P_m x_eq           ],
           [ (rho P_j x_eq)^T, (-P_m x_eq)^T,  corner_{jm}  ]]
      - sum_k tau_{k,m} Q_k  <=  0,

    corner_{jm} = -x_eq^T (rho P_j - P_m) x_eq + (rho - 1).

Fixing rho makes the condition linear in (P_j, tau); the synthesizer
scans and bisects for the largest feasible rho, then minimises
sum_j trace(P_j).  Certificates are audited three independent ways:
an eigenvalue residual check of the final inequality, simulation runs of
the true dynamics, and slice-containment spot checks against the envelope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .envelope import LipschitzEnvelope, build_qc_matrix
from .slices import coordinate_interval, slice

__all__ = [
    "EllipsoidalInvariantSet",
    "BisectionConfig",
    "SynthesisError",
    "SynthesisReport",
    "build_invariance_lmi",
    "synthesize",
    "verify_by_simulation",
    "verify_by_envelope",
    "estimate_equilibrium",
    "conditioning_transform",
]

# Floor for the shape matrices.  Must sit well above solver feasibility
# tolerance, otherwise trace minimisation walks P through the floor and a
# vacuous P ~ 0 certificate slips past the residual check.
EPS_FLOOR = 1e-6


class SynthesisError(RuntimeError):
    """No feasible contraction parameter in the searched range."""

    def __init__(self, message, trials=None):
        super().__init__(message)
        self.trials = trials or []


@dataclass
class EllipsoidalInvariantSet:
    """Intersection of ellipsoids { (x-x_eq)^T P_j (x-x_eq) <= 1 }."""

    x_eq: np.ndarray
    P: list

    def __post_init__(self):
        self.x_eq = np.atleast_1d(np.asarray(self.x_eq, dtype=float))
        self.P = [np.atleast_2d(np.asarray(P, dtype=float)) for P in self.P]
        n = self.x_eq.size
        for P in self.P:
            if P.shape != (n, n):
                raise ValueError("each shape matrix must be n x n")

    @property
    def n(self) -> int:
        return self.x_eq.size

    @property
    def n_I(self) -> int:
        return len(self.P)

    def max_level(self, x) -> float:
        v = np.atleast_1d(np.asarray(x, dtype=float)) - self.x_eq
        return max(float(v @ P @ v) for P in self.P)

    def max_level_batch(self, X) -> np.ndarray:
        V = np.atleast_2d(np.asarray(X, dtype=float)) - self.x_eq
        levels = np.stack([np.einsum("ij,jk,ik->i", V, P, V) for P in self.P])
        return levels.max(axis=0)

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.max_level(x) <= 1.0 + tol

    def bounding_box(self):
        """Axis-aligned box containing the set (tightest single-ellipsoid one)."""
        half = None
        for P in self.P:
            Pinv = np.linalg.inv(P)
            h = np.sqrt(np.maximum(np.diag(Pinv), 0.0))
            half = h if half is None else np.minimum(half, h)
        return self.x_eq - half, self.x_eq + half

    def boundary_points(self, num: int = 256) -> np.ndarray:
        """Boundary polyline for plotting (planar sets only)."""
        if self.n != 2:
            raise ValueError("boundary polyline is only defined for n = 2")
        ang = np.linspace(0.0, 2.0 * np.pi, num, endpoint=True)
        U = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        rad = np.full(num, np.inf)
        for P in self.P:
            q = np.einsum("ij,jk,ik->i", U, P, U)
            rad = np.minimum(rad, 1.0 / np.sqrt(np.maximum(q, 1e-300)))
        return self.x_eq + U * rad[:, None]

    def preimage(self, M) -> "EllipsoidalInvariantSet":
        """The set { x : M x in self } under an invertible linear map M.

        Used to pull certificates computed in preconditioned coordinates
        z = M x back to the original state space; invariance survives the
        change of variables.
        """
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return EllipsoidalInvariantSet(
            np.linalg.solve(M, self.x_eq), [M.T @ P @ M for P in self.P]
        )

    def to_json_dict(self) -> dict:
        return {
            "x_eq": self.x_eq.tolist(),
            "P": [P.reshape(-1).tolist() for P in self.P],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EllipsoidalInvariantSet":
        x_eq = np.asarray(d["x_eq"], dtype=float)
        n = x_eq.size
        P = [np.asarray(p, dtype=float).reshape(n, n) for p in d["P"]]
        return cls(x_eq, P)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "EllipsoidalInvariantSet":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class BisectionConfig:
    """Search window and budget for the contraction parameter rho.

    The scan runs from rho_hi downward over coarse_grid points to find a
    feasible anchor (rho = 0 is never feasible: the multiplier block forces
    tau = 0 there, which contradicts P >= eps I), then bisects toward the
    largest feasible value.
    """

    rho_lo: float = 0.0
    rho_hi: float = 10.0
    coarse_grid: int = 10
    max_iters: int = 24
    feasibility_tol: float = 1e-8
    rho_resolution: float = 1e-3


def _sym_basis(n: int, a: int, b: int) -> np.ndarray:
    E = np.zeros((n, n))
    E[a, b] = 1.0
    E[b, a] = 1.0
    if a == b:
        E[a, a] = 1.0
    return E


def build_invariance_lmi(
    envelope: LipschitzEnvelope,
    x_eq,
    n_I: int,
    rho: float,
    eps: float = EPS_FLOOR,
    box_constraints=(),
) -> sdp.LinearMatrixProblem:
    """Emit the fixed-rho invariance program for an envelope.

    One matrix block per face m with its own multiplier family tau_{k,m}
    (independent families are sound: each face inequality is certified
    separately).  P_j are floored at eps I; objective is sum_j trace(P_j).

    box_constraints is an iterable of (direction, halfwidth) pairs; each adds
    a Schur-complement block keeping the first ellipsoid inside the slab
    { |direction . (x - x_eq)| <= halfwidth }, which in turn keeps the whole
    intersection there.  Without them trace minimisation grows the set until
    the envelope stops certifying, which for strongly contracting data can be
    arbitrarily far out.
    """
    if n_I < 1:
        raise ValueError("n_I must be at least 1")
    if envelope.noise_radius != 0.0:
        raise ValueError("invariance certificates require exact-measurement envelopes")
    if envelope.num_samples == 0:
        raise ValueError("envelope has no samples")
    x_eq = np.atleast_1d(np.asarray(x_eq, dtype=float))
    n = envelope.n
    if x_eq.size != n:
        raise ValueError("equilibrium dimension does not match the envelope")
    rho = float(rho)
    Qs = envelope.qc_matrices()
    K = len(Qs)
    size = 2 * n + 1

    p = sdp.LinearMatrixProblem()
    P_slots = [p.add_symmetric(f"P{j}", n, eps_floor=eps) for j in range(n_I)]
    tau_idx = [p.add_scalars(f"tau_m{m}", K, nonneg=True) for m in range(n_I)]

    for m in range(n_I):
        constant = np.zeros((size, size))
        constant[2 * n, 2 * n] = n_I * (rho - 1.0)
        coeffs: dict[int, np.ndarray] = {}
        for j in range(n_I):
            for a in range(n):
                for b in range(a, n):
                    E = _sym_basis(n, a, b)
                    C = np.zeros((size, size))
                    C[:n, :n] += -rho * E
                    Ex = E @ x_eq
                    C[:n, 2 * n] += rho * Ex
                    C[2 * n, :n] += rho * Ex
                    C[2 * n, 2 * n] += -rho * float(x_eq @ Ex)
                    if j == m:
                        C[n : 2 * n, n : 2 * n] += n_I * E
                        C[n : 2 * n, 2 * n] += -n_I * Ex
                        C[2 * n, n : 2 * n] += -n_I * Ex
                        C[2 * n, 2 * n] += n_I * float(x_eq @ Ex)
                    p._merge(coeffs, P_slots[j].entry_index[a][b], C)
        for k in range(K):
            coeffs[tau_idx[m][k]] = -Qs[k]
        p.add_lmi(constant, coeffs)

    for a, h in box_constraints:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        h = float(h)
        if a.size != n or h <= 0:
            raise ValueError("box constraint needs an n-vector direction and h > 0")
        constant = np.zeros((n + 1, n + 1))
        constant[:n, n] = -a
        constant[n, :n] = -a
        constant[n, n] = -h * h
        coeffs = {}
        for i in range(n):
            for j in range(i, n):
                C = np.zeros((n + 1, n + 1))
                C[:n, :n] = -_sym_basis(n, i, j)
                p._merge(coeffs, P_slots[0].entry_index[i][j], C)
        p.add_lmi(constant, coeffs)

    p.set_objective(
        {P_slots[j].entry_index[i][i]: 1.0 for j in range(n_I) for i in range(n)}
    )
    p.handles = {"P": P_slots, "tau": tau_idx}
    p.rho = rho
    return p


@dataclass
class SynthesisReport:
    rho: float
    trials: list
    solver: sdp.SolveReport
    residual: sdp.VerifyReport
    trace: float


def synthesize(
    envelope: LipschitzEnvelope,
    x_eq,
    n_I: int = 1,
    config: BisectionConfig | None = None,
    solver_tol: float = sdp.DEFAULT_TOL,
    box_constraints=(),
    return_report: bool = False,
):
    """Largest-feasible-rho invariant set for all envelope-consistent maps.

    Coarse scan from the top of the window for a feasible anchor, bisection
    toward the largest feasible rho, trace minimisation there, then an
    independent eigenvalue audit of the final inequality.  Raises
    SynthesisError (with the per-trial log) when nothing in the window is
    feasible.

    The program is only ever feasible when envelope.L < 1: the x- and
    y-blocks force rho >= L^2 while consistency of (x_eq, x_eq) with every
    sample forces rho <= 1.  Data whose map is Lipschitz-bounded above 1
    must be preconditioned first (see conditioning_transform).
    """
    cfg = config or BisectionConfig()
    trials: list[dict] = []

    def attempt(rho: float):
        problem = build_invariance_lmi(
            envelope, x_eq, n_I, rho, box_constraints=box_constraints
        )
        report = sdp.solve(problem, tol=solver_tol)
        ok = report.ok and report.max_violation is not None and report.max_violation <= cfg.feasibility_tol
        trials.append({"rho": rho, "status": report.status, "feasible": bool(ok)})
        return (problem, report) if ok else None

    lo_gap = max(cfg.rho_resolution, 1e-9)
    # Whenever x_eq is itself envelope-consistent as a fixed point, evaluating
    # the face inequality at (x, y) = (x_eq, x_eq) forces rho <= 1, and the
    # block structure forces rho >= L^2, so after a coarse pass over the full
    # window the scan refines over [~L^2, 1] where the (often thin) feasible
    # window actually lives.
    coarse = np.linspace(cfg.rho_hi, cfg.rho_lo, cfg.coarse_grid)
    fine_top = min(cfg.rho_hi, 1.0)
    fine_bottom = max(cfg.rho_lo, 0.95 * min(envelope.L**2, 1.0))
    if fine_bottom >= fine_top:
        fine_bottom = cfg.rho_lo
    fine = (
        np.linspace(fine_top, fine_bottom, 2 * cfg.coarse_grid + 1)
        if fine_top > cfg.rho_lo
        else np.array([])
    )
    best = None
    best_rho = None
    upper_infeasible = None
    for grid in (coarse, fine):
        tried = {t["rho"] for t in trials}
        for rho in grid:
            rho = float(rho)
            if rho in tried:
                continue
            got = attempt(rho)
            if got is not None:
                best, best_rho = got, rho
                break
            if upper_infeasible is None or rho < upper_infeasible:
                upper_infeasible = rho
        if best is not None:
            break
    if best is None:
        raise SynthesisError(
            f"no feasible rho in [{cfg.rho_lo}, {cfg.rho_hi}] "
            f"({len(trials)} trials, statuses: {[t['status'] for t in trials]})",
            trials,
        )
    if upper_infeasible is not None and upper_infeasible > best_rho:
        lo, hi = best_rho, upper_infeasible
        iters = 0
        while hi - lo > lo_gap and iters < cfg.max_iters:
            mid = 0.5 * (lo + hi)
            got = attempt(mid)
            if got is not None:
                best, best_rho, lo = got, mid, mid
            else:
                hi = mid
            iters += 1

    problem, report = best
    residual = sdp.verify(problem, report.x, tol=cfg.feasibility_tol)
    if not residual.ok:
        # one step back toward the known-feasible interior, then re-audit
        fallback = attempt(max(cfg.rho_lo, best_rho - lo_gap))
        if fallback is not None:
            problem, report = fallback
            best_rho = problem.rho
            residual = sdp.verify(problem, report.x, tol=cfg.feasibility_tol)

    P = [problem.extract_matrix(slot, report.x) for slot in problem.handles["P"]]
    P = [0.5 * (Pi + Pi.T) for Pi in P]
    inv_set = EllipsoidalInvariantSet(np.asarray(x_eq, dtype=float), P)
    if return_report:
        out = SynthesisReport(
            rho=best_rho,
            trials=trials,
            solver=report,
            residual=residual,
            trace=float(sum(np.trace(Pi) for Pi in P)),
        )
        return inv_set, out
    return inv_set


# ---------------------------------------------------------------------------
# verification


@dataclass
class SimulationCheck:
    ok: bool
    num_starts: int
    num_steps: int
    first_escape_step: int | None = None
    escape_start_index: int | None = None
    escape_point: np.ndarray | None = None
    escape_level: float | None = None

    def __bool__(self) -> bool:
        return self.ok


def _step_batch(step, X):
    # prefer a vectorised step; fall back to row-at-a-time for plain maps
    try:
        out = np.asarray(step(X), dtype=float)
        if out.shape == X.shape:
            return out
    except (ValueError, TypeError):
        pass
    return np.array([step(x) for x in X], dtype=float)


def verify_by_simulation(
    inv_set: EllipsoidalInvariantSet,
    step,
    starts,
    num_steps: int = 10_000,
    tol: float = 1e-9,
) -> SimulationCheck:
    """Roll the true dynamics from interior starts and watch for escapes.

    Starts outside the set violate the precondition and raise ValueError.
    """
    X = np.atleast_2d(np.asarray(starts, dtype=float))
    levels = inv_set.max_level_batch(X)
    outside = np.flatnonzero(levels > 1.0 + tol)
    if outside.size:
        raise ValueError(
            f"starts {outside.tolist()} lie outside the candidate set "
            f"(levels {levels[outside].tolist()})"
        )
    for t in range(1, num_steps + 1):
        X = _step_batch(step, X)
        levels = inv_set.max_level_batch(X)
        worst = int(np.argmax(levels))
        if levels[worst] > 1.0 + tol:
            return SimulationCheck(
                False, X.shape[0], num_steps, t, worst, X[worst].copy(), float(levels[worst])
            )
    return SimulationCheck(True, X.shape[0], num_steps)


@dataclass
class EnvelopeCheck:
    ok: bool
    num_points: int
    failures: list = field(default_factory=list)
    indeterminate: bool = False

    def __bool__(self) -> bool:
        return self.ok


def verify_by_envelope(
    inv_set: EllipsoidalInvariantSet,
    envelope: LipschitzEnvelope,
    num_points: int = 1_000,
    rng: np.random.Generator | None = None,
    domain: tuple | None = None,
    tol: float = 1e-6,
) -> EnvelopeCheck:
    """Spot-check the certificate's content on sampled set members.

    For sampled x in X_I (interior and near-boundary), the slice of the
    envelope at x must land inside X_I.  Containment is checked with outer
    bounds on the worst set level over the slice, cheapest first: the
    smallest consistency ball, the per-coordinate interval box, and finally
    a per-point multiplier certificate over the slice balls.  Every tier is
    an outer bound, so a pass is conclusive; failures carry witnesses.  tol
    absorbs solver-precision slack in the last tier (scaled by the squared
    reach of the slice), so it is looser than the synthesis residual tol.
    """
    if envelope.num_samples == 0:
        return EnvelopeCheck(
            False, 0, [{"reason": "empty envelope, nothing to certify against"}], indeterminate=True
        )
    rng = rng or np.random.default_rng(0)
    n = inv_set.n
    lo, hi = inv_set.bounding_box()
    if domain is not None:
        dlo = np.asarray(domain[0], dtype=float)
        dhi = np.asarray(domain[1], dtype=float)
        lo, hi = np.maximum(lo, dlo), np.minimum(hi, dhi)

    # rejection-sample interior points, then push half of them near the boundary
    points = []
    budget = 50 * num_points
    while len(points) < num_points and budget > 0:
        batch = rng.uniform(lo, hi, size=(4 * num_points, n))
        budget -= batch.shape[0]
        lv = inv_set.max_level_batch(batch)
        keep = batch[lv <= 1.0]
        for x in keep:
            points.append(x)
            if len(points) >= num_points:
                break
    points = np.array(points[:num_points])
    if points.shape[0] == 0:
        return EnvelopeCheck(False, 0, [{"reason": "no sample points found in the set"}])
    half = points.shape[0] // 2
    shifted = []
    for x in points[:half]:
        v = x - inv_set.x_eq
        lv = inv_set.max_level(x)
        if lv > 1e-12:
            xb = inv_set.x_eq + v / np.sqrt(lv) * (1.0 - 1e-9)
            if domain is None or np.all((xb >= dlo) & (xb <= dhi)):
                shifted.append(xb)
    if shifted:
        points = np.vstack([points, np.array(shifted)])

    lam_max = [float(np.linalg.eigvalsh(P)[-1]) for P in inv_set.P]

    failures = []
    for x in points:
        # cheapest outer surrogate: the smallest consistency ball
        d = np.linalg.norm(envelope.xs - x, axis=1)
        k0 = int(np.argmin(d))
        r0 = envelope.L * d[k0] + envelope.noise_radius * (envelope.L + 1.0)
        c0 = envelope.fxs[k0]
        v = c0 - inv_set.x_eq
        okA = True
        for P, lm in zip(inv_set.P, lam_max):
            vP = np.sqrt(max(float(v @ P @ v), 0.0))
            if (vP + r0 * np.sqrt(lm)) ** 2 > 1.0 + tol:
                okA = False
                break
        if okA:
            continue
        # tighter outer surrogate: the coordinate box of the full slice
        ss = slice(envelope, x)
        intervals = [coordinate_interval(ss, ax) for ax in range(n)]
        corners = np.array(
            [[iv[bit] for iv, bit in zip(intervals, bits)] for bits in _corner_bits(n)]
        )
        lv = inv_set.max_level_batch(corners)
        if np.all(lv <= 1.0 + tol):
            continue
        # last resort, per face: a certified bound on the level over the
        # slice itself (the box corners above are not slice members, so
        # near the boundary they overshoot)
        worst = 0.0
        ok = True
        for P in inv_set.P:
            bound = None
            for centers, radii in (ss.pruned(), (ss.centers, ss.radii)):
                bound = _face_support_bound(P, inv_set.x_eq, centers, radii)
                if bound is not None and bound <= 1.0 + tol:
                    break
            if bound is None:
                ok = False
                worst = np.inf
                break
            worst = max(worst, bound)
            if bound > 1.0 + tol:
                ok = False
        if not ok or worst > 1.0 + tol:
            failures.append(
                {
                    "x": x.tolist(),
                    "box": [list(iv) for iv in intervals],
                    "level_bound": float(worst),
                }
            )
    return EnvelopeCheck(len(failures) == 0, int(points.shape[0]), failures)


def _corner_bits(n: int):
    bits = []
    for mask in range(2**n):
        bits.append([(mask >> i) & 1 for i in range(n)])
    return bits


def _face_support_bound(P, x_eq, centers, radii):
    """Certified upper bound on max (y-x_eq)^T P (y-x_eq) over ball balls.

    Small per-point S-procedure program: min t over multipliers mu_k >= 0
    with  q(y) - t - sum mu_k (r_k^2 - |y-c_k|^2 ...) <= 0 as a matrix
    inequality.  Any verified feasible point gives a sound bound, and the
    joint invariance certificate restricted to this x is itself feasible
    here, so certified sets always re-certify.
    """
    n = x_eq.size
    prob = sdp.LinearMatrixProblem()
    t_idx = prob.add_scalar("t")
    mu_idx = prob.add_scalars("mu", len(centers), nonneg=True)
    constant = np.zeros((n + 1, n + 1))
    constant[:n, :n] = P
    constant[:n, n] = -P @ x_eq
    constant[n, :n] = -P @ x_eq
    constant[n, n] = float(x_eq @ P @ x_eq)
    coeffs = {t_idx: _unit_corner(n)}
    for k, (c, r) in enumerate(zip(centers, radii)):
        C = np.zeros((n + 1, n + 1))
        C[:n, :n] = -np.eye(n)
        C[:n, n] = c
        C[n, :n] = c
        C[n, n] = float(r * r - c @ c)
        coeffs[mu_idx[k]] = C
    prob.add_lmi(constant, coeffs)
    prob.set_objective({t_idx: 1.0})
    report = sdp.solve(prob)
    if not report.ok or report.x is None:
        return None
    x = report.x.copy()
    x[mu_idx] = np.maximum(x[mu_idx], 0.0)
    check = sdp.verify(prob, x, tol=1e-7)
    # fold the eigenvalue residual into the bound over the bounded slice
    reach = float(min(np.linalg.norm(c) + r for c, r in zip(centers, radii)))
    return float(x[t_idx]) + max(check.max_violation, 0.0) * (1.0 + reach * reach)


def _unit_corner(n: int) -> np.ndarray:
    C = np.zeros((n + 1, n + 1))
    C[n, n] = -1.0
    return C


def estimate_equilibrium(xs, fxs) -> np.ndarray:
    """Fixed-point estimate: midpoint of the sample pair with least motion."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    fxs = np.atleast_2d(np.asarray(fxs, dtype=float))
    k = int(np.argmin(np.linalg.norm(fxs - xs, axis=1)))
    return 0.5 * (xs[k] + fxs[k])


def conditioning_transform(xs, fxs, slack: float = 1e-9):
    """Lyapunov preconditioner for data whose map expands in some direction.

    Fits f(x) ~ A x + b by least squares, solves the discrete Lyapunov
    equation A^T S A - S = -I, and returns (T, L_z, info) with T = S^(1/2).
    In z = T x coordinates the fitted map has gain
    sigma_max(T A T^-1) = sqrt(1 - 1/lambda_max(S)) < 1 whenever A is Schur
    stable, which is what the invariance program needs.  L_z adds `slack`
    plus a fit-residual allowance and is only a valid Lipschitz bound for
    the true map insofar as the linear fit is (info carries the residual so
    callers can judge).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    fxs = np.atleast_2d(np.asarray(fxs, dtype=float))
    n = xs.shape[1]
    X1 = np.hstack([xs, np.ones((xs.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(X1, fxs, rcond=None)
    A = coef[:n].T
    b = coef[n]
    residual = float(np.linalg.norm(fxs - X1 @ coef, axis=1).max()) if len(xs) else 0.0
    eigs = np.linalg.eigvals(A)
    if np.max(np.abs(eigs)) >= 1.0:
        raise ValueError(
            f"fitted linear map is not Schur stable (|eig| up to {np.max(np.abs(eigs)):.6g}); "
            "no Lyapunov preconditioner exists"
        )
    from scipy.linalg import solve_discrete_lyapunov

    S = solve_discrete_lyapunov(A.T, np.eye(n))
    S = 0.5 * (S + S.T)
    w, U = np.linalg.eigh(S)
    T = U @ np.diag(np.sqrt(w)) @ U.T
    Tinv = U @ np.diag(1.0 / np.sqrt(w)) @ U.T
    gain = float(np.linalg.svd(T @ A @ Tinv, compute_uv=False)[0])
    kappa = float(np.sqrt(w[-1] / w[0]))
    L_z = gain + slack + kappa * residual
    info = {"A": A, "b": b, "residual": residual, "gain": gain, "condition": kappa}
    return T, L_z, info
