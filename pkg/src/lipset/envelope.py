"""Set-valued models of an unknown Lipschitz map learned from samples.

An unknown map f with known Lipschitz bound L is observed through samples
(x_k, f(x_k)).  Every sample constrains where the graph of f can live: a
pair (x, y) is consistent with sample k iff

    ||y - f(x_k)||  <=  L * ||x - x_k||,

which is the nonpositivity of the indefinite quadratic form

    [x; y; 1]^T Q_k [x; y; 1],

with Q_k assembled by :func:`build_qc_matrix`.  The envelope kept by
:class:`LipschitzEnvelope` is the intersection of all sampled constraints,
so it contains the graph of every L-Lipschitz interpolant of the data and
can only shrink as samples are added.

Measured states may carry bounded noise: with measurements z_k = x_k + w_k,
||w_k|| <= w, membership is tested against inflated balls of radius
L * (||x - z_k|| + w) + w, which restores the containment guarantee.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DataInconsistencyError",
    "SamplePair",
    "QCMatrix",
    "LipschitzEnvelope",
    "build_qc_matrix",
    "qc_eval",
    "refine",
    "contains",
    "is_redundant",
    "inflated_radius",
]

# Default absolute tolerance on the quadratic-form membership test.
MEMBERSHIP_TOL = 1e-10

# A QC matrix is a plain (2n+1) x (2n+1) symmetric ndarray.
QCMatrix = np.ndarray


class DataInconsistencyError(ValueError):
    """Raised when data contradicts the declared Lipschitz model."""


def _as_vector(x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a state vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class SamplePair:
    """One observed transition (x, fx) with fx = f(x) up to measurement noise."""

    x: np.ndarray
    fx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "fx", _as_vector(self.fx))
        if self.x.shape != self.fx.shape:
            raise ValueError(
                f"sample dimensions disagree: x has {self.x.shape}, fx has {self.fx.shape}"
            )

    @property
    def n(self) -> int:
        return self.x.size


def build_qc_matrix(sample: SamplePair, L: float) -> QCMatrix:
    """Quadratic-constraint matrix of one sample.

    Returns the symmetric (2n+1) x (2n+1) matrix

        [[-L^2 I,    0,     L^2 x_k],
         [   0,      I,     -f(x_k)],
         [L^2 x_k^T, -f(x_k)^T, -L^2 x_k^T x_k + f(x_k)^T f(x_k)]]

    whose form [x; y; 1]^T Q [x; y; 1] equals
    ||y - f(x_k)||^2 - L^2 ||x - x_k||^2.
    """
    if L < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    x, fx = sample.x, sample.fx
    n = x.size
    L2 = float(L) ** 2
    Q = np.zeros((2 * n + 1, 2 * n + 1))
    Q[:n, :n] = -L2 * np.eye(n)
    Q[n : 2 * n, n : 2 * n] = np.eye(n)
    Q[:n, 2 * n] = L2 * x
    Q[2 * n, :n] = L2 * x
    Q[n : 2 * n, 2 * n] = -fx
    Q[2 * n, n : 2 * n] = -fx
    Q[2 * n, 2 * n] = -L2 * (x @ x) + fx @ fx
    return Q


def qc_eval(Q: QCMatrix, x, y) -> float:
    """Evaluate [x; y; 1]^T Q [x; y; 1]; nonpositive means consistent."""
    x = _as_vector(x)
    y = _as_vector(y)
    z = np.concatenate([x, y, [1.0]])
    if z.size != Q.shape[0]:
        raise ValueError(f"state dimension {x.size} does not match QC size {Q.shape[0]}")
    return float(z @ Q @ z)


def inflated_radius(L: float, distance, noise_radius: float):
    """Consistency-ball radius for a query at the given distance from a sample.

    Exact measurements (noise_radius == 0) give L * distance; bounded
    measurement noise inflates to L * (distance + w) + w.
    """
    if noise_radius == 0.0:
        return L * distance
    return L * (np.asarray(distance) + noise_radius) + noise_radius


class LipschitzEnvelope:
    """Intersection of sampled graph constraints for an L-Lipschitz map.

    Holds the sample set as stacked arrays for vectorised membership tests.
    Treated as immutable: :func:`refine` returns a fresh envelope and never
    mutates its input.
    """

    def __init__(self, L: float, n: int, noise_radius: float = 0.0, samples=()):
        if L < 0:
            raise ValueError("Lipschitz constant must be nonnegative")
        if noise_radius < 0:
            raise ValueError("noise radius must be nonnegative")
        if n < 1:
            raise ValueError("state dimension must be at least 1")
        self.L = float(L)
        self.n = int(n)
        self.noise_radius = float(noise_radius)
        self.xs = np.zeros((0, self.n))
        self.fxs = np.zeros((0, self.n))
        if len(samples):
            self._append(samples)

    def _append(self, samples) -> None:
        new_x = np.array([_as_vector(s.x) for s in samples])
        new_fx = np.array([_as_vector(s.fx) for s in samples])
        if new_x.shape[1] != self.n:
            raise ValueError(f"sample dimension {new_x.shape[1]} != envelope dimension {self.n}")
        self.xs = np.vstack([self.xs, new_x])
        self.fxs = np.vstack([self.fxs, new_fx])

    @classmethod
    def from_arrays(cls, L: float, xs, fxs, noise_radius: float = 0.0) -> "LipschitzEnvelope":
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        fxs = np.atleast_2d(np.asarray(fxs, dtype=float))
        if xs.shape != fxs.shape:
            raise ValueError("xs and fxs must have matching shapes")
        env = cls(L, xs.shape[1], noise_radius)
        env.xs = xs.copy()
        env.fxs = fxs.copy()
        return env

    @property
    def num_samples(self) -> int:
        return self.xs.shape[0]

    def __len__(self) -> int:
        return self.num_samples

    @property
    def samples(self) -> list[SamplePair]:
        return [SamplePair(x, fx) for x, fx in zip(self.xs, self.fxs)]

    def qc_matrices(self) -> list[QCMatrix]:
        return [build_qc_matrix(s, self.L) for s in self.samples]

    # -- membership ---------------------------------------------------------

    def margins(self, x, y) -> np.ndarray:
        """Per-sample membership margins, nonpositive when consistent.

        Noise-free margins are the QC values ||y - fx_k||^2 - L^2 ||x - x_k||^2;
        with noise the squared inflated-ball test is used instead.
        """
        x = _as_vector(x)
        y = _as_vector(y)
        dx = np.linalg.norm(self.xs - x, axis=1)
        dy2 = np.sum((self.fxs - y) ** 2, axis=1)
        r = inflated_radius(self.L, dx, self.noise_radius)
        return dy2 - r**2

    def contains(self, x, y, tol: float = MEMBERSHIP_TOL) -> bool:
        if self.num_samples == 0:
            return True  # no data, no constraint
        return bool(np.all(self.margins(x, y) <= tol))

    def contains_batch(self, X, Y, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """Vectorised membership for stacked query pairs (m, n) x (m, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if self.num_samples == 0:
            return np.ones(X.shape[0], dtype=bool)
        dx = np.linalg.norm(X[:, None, :] - self.xs[None, :, :], axis=2)
        dy2 = np.sum((Y[:, None, :] - self.fxs[None, :, :]) ** 2, axis=2)
        r = inflated_radius(self.L, dx, self.noise_radius)
        return np.all(dy2 - r**2 <= tol, axis=1)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "L": self.L,
            "n": self.n,
            "noise_radius": self.noise_radius,
            "samples": [[x.tolist(), fx.tolist()] for x, fx in zip(self.xs, self.fxs)],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "LipschitzEnvelope":
        env = cls(float(d["L"]), int(d["n"]), float(d.get("noise_radius", 0.0)))
        samples = d.get("samples", [])
        if samples:
            env.xs = np.array([s[0] for s in samples], dtype=float)
            env.fxs = np.array([s[1] for s in samples], dtype=float)
            if env.xs.shape[1] != env.n:
                raise ValueError("sample dimension does not match declared n")
        return env

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LipschitzEnvelope":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def __repr__(self) -> str:
        return (
            f"LipschitzEnvelope(L={self.L}, n={self.n}, "
            f"noise_radius={self.noise_radius}, num_samples={self.num_samples})"
        )


def refine(envelope: LipschitzEnvelope, sample: SamplePair) -> LipschitzEnvelope:
    """Intersect the envelope with one more sampled constraint.

    Returns a new envelope; the input is left untouched.  Refinement is
    monotone (the result is a subset of the input) and order-independent.
    """
    if sample.n != envelope.n:
        raise ValueError(f"sample dimension {sample.n} != envelope dimension {envelope.n}")
    out = LipschitzEnvelope(envelope.L, envelope.n, envelope.noise_radius)
    out.xs = np.vstack([envelope.xs, sample.x[None, :]])
    out.fxs = np.vstack([envelope.fxs, sample.fx[None, :]])
    return out


def refine_many(envelope: LipschitzEnvelope, samples) -> LipschitzEnvelope:
    """Bulk variant of :func:`refine` (one array copy instead of many)."""
    samples = list(samples)
    if not samples:
        return envelope
    xs = np.array([_as_vector(s.x) for s in samples])
    fxs = np.array([_as_vector(s.fx) for s in samples])
    if xs.shape[1] != envelope.n:
        raise ValueError("sample dimension does not match envelope dimension")
    out = LipschitzEnvelope(envelope.L, envelope.n, envelope.noise_radius)
    out.xs = np.vstack([envelope.xs, xs])
    out.fxs = np.vstack([envelope.fxs, fxs])
    return out


def contains(envelope: LipschitzEnvelope, x, y, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff (x, y) is consistent with every sampled constraint."""
    return envelope.contains(x, y, tol=tol)


def is_redundant(envelope: LipschitzEnvelope, sample: SamplePair, tol: float = 1e-9) -> bool:
    """Metric-proximity redundancy test used to detect recursion fixed points.

    A new sample is redundant when an existing one matches it to within tol:
    ||dx|| <= tol and ||dfx|| <= L * tol + tol.  On periodic orbits every
    revisited sample is flagged, so refinement reaches a fixed point after
    one full period.
    """
    if envelope.num_samples == 0:
        return False
    if sample.n != envelope.n:
        raise ValueError("sample dimension does not match envelope dimension")
    dx = np.linalg.norm(envelope.xs - sample.x, axis=1)
    dfx = np.linalg.norm(envelope.fxs - sample.fx, axis=1)
    return bool(np.any((dx <= tol) & (dfx <= envelope.L * tol + tol)))
