"""Trajectory generation and dataset assembly for the bundled experiments.

The pendulum here is the workhorse demo: a point mass on a rigid rod,
integrated with symplectic Euler and driven by a torque policy that
stabilizes the upright state.  Datasets split each step into an assumed
model part and a residual, so envelopes can be learned for the full map
or for just the un-modelled share.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .envelope import SamplePair

__all__ = [
    "PendulumParams",
    "pendulum_step",
    "pendulum_map",
    "closed_loop_matrix",
    "simulate",
    "TrajectoryMeta",
    "detect_periodicity",
    "AssumedModel",
    "assumed_model",
    "TrajectoryDataset",
    "residual_dataset",
    "save_trajectory_csv",
    "load_trajectory_csv",
    "random_system",
    "DEFAULT_INITIAL_CONDITIONS",
    "QUERY_POINTS",
    "NEAR_QUERIES",
    "FAR_QUERIES",
]

# the four data-collection starts and six probe states used by the demos
DEFAULT_INITIAL_CONDITIONS = np.array(
    [
        [5.0 * np.pi / 6.0, 0.0],
        [5.0 * np.pi / 3.0, -0.5],
        [np.pi / 6.0, 0.0],
        [5.0 * np.pi / 4.0, -0.2],
    ]
)

QUERY_POINTS = np.array(
    [
        [2.12, -0.45],
        [3.11, 0.84],
        [1.40, 0.34],
        [3.05, -0.37],
        [4.21, 0.38],
        [5.60, 0.22],
    ]
)
NEAR_QUERIES = np.array([[3.11, 0.84], [3.05, -0.37]])
FAR_QUERIES = np.array([[2.12, -0.45], [1.40, 0.34], [4.21, 0.38], [5.60, 0.22]])


@dataclass
class PendulumParams:
    mass: float = 2.0
    length: float = 2.0
    gravity: float = 9.81
    damping: float = 0.2
    dt: float = 0.005
    kp: float = 4.0
    kd: float = 3.0
    policy: str = "stabilize"

    @property
    def inertia(self) -> float:
        return self.mass * self.length**2

    @property
    def damping_gain(self) -> float:
        """Lipschitz constant of the discrete damping residual in the angle rate."""
        return self.damping * self.dt / self.inertia

    def torque(self, theta, omega):
        if self.policy == "stabilize":
            # gravity compensation plus PD about the upright state
            return self.inertia * (
                (self.gravity / self.length) * np.sin(theta)
                - self.kp * (theta - np.pi)
                - self.kd * omega
            )
        if self.policy == "zero":
            return np.zeros_like(np.asarray(theta, dtype=float))
        raise ValueError(f"unknown torque policy {self.policy!r}")


def pendulum_step(params: PendulumParams, state, with_damping: bool = True):
    """One symplectic-Euler step of period dt.

    The rate updates first, then the angle uses the new rate; this is the
    first-order variational scheme for mechanical systems.  Accepts a single
    state (2,) or a batch (m, 2) and matches the input shape.
    """
    arr = np.asarray(state, dtype=float)
    single = arr.ndim == 1
    X = np.atleast_2d(arr)
    theta, omega = X[:, 0], X[:, 1]
    accel = params.torque(theta, omega) / params.inertia
    accel = accel - (params.gravity / params.length) * np.sin(theta)
    if with_damping:
        accel = accel - params.damping * omega / params.inertia
    omega_next = omega + params.dt * accel
    theta_next = theta + params.dt * omega_next
    out = np.stack([theta_next, omega_next], axis=1)
    return out[0] if single else out


def pendulum_map(params: PendulumParams | None = None, with_damping: bool = True):
    """The pendulum step as a plain state-to-state function."""
    p = params or PendulumParams()

    def step(state):
        return pendulum_step(p, state, with_damping)

    return step


def closed_loop_matrix(params: PendulumParams | None = None, with_damping: bool = True) -> np.ndarray:
    """Exact linear part of the closed loop about the upright state.

    With the stabilize policy the gravity term cancels identically, so the
    step is affine: x+ = [pi, 0] + A (x - [pi, 0]).  Only that policy admits
    this closed form.
    """
    p = params or PendulumParams()
    if p.policy != "stabilize":
        raise ValueError("closed-loop matrix is only defined for the stabilize policy")
    a22 = 1.0 - p.dt * p.kd - (p.damping_gain if with_damping else 0.0)
    a21 = -p.dt * p.kp
    return np.array(
        [
            [1.0 + p.dt * a21, p.dt * a22],
            [a21, a22],
        ]
    )


def simulate(step, x0, N: int) -> np.ndarray:
    """Roll a step function N times; returns the (N+1, n) state sequence."""
    if N < 1:
        raise ValueError("N must be at least 1")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((N + 1, x.size))
    out[0] = x
    for k in range(N):
        x = np.asarray(step(x), dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state at step {k + 1}")
        out[k + 1] = x
    return out


@dataclass
class TrajectoryMeta:
    detected_period: int | None
    converged_to: np.ndarray | None
    convergence_tol: float


def detect_periodicity(trajectory, tol: float = 1e-9, tail: int | None = None) -> TrajectoryMeta:
    """Smallest period sustained over the tail of a trajectory.

    Reports the least p >= 1 with ||x_k - x_{k+p}|| <= tol across the tail
    window; for p = 1 the trajectory has settled and converged_to is the
    final state.  None when no period fits.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    X = np.atleast_2d(np.asarray(trajectory, dtype=float))
    T = X.shape[0]
    if tail is None:
        tail = max(2, T // 4)
    tail = min(tail, T - 1)
    for p in range(1, max(2, T - tail)):
        if p + tail > T:
            break
        seg = X[T - tail - p : T - p]
        ref = X[T - tail :]
        if np.max(np.linalg.norm(seg - ref, axis=1)) <= tol:
            converged = X[-1].copy() if p == 1 else None
            return TrajectoryMeta(p, converged, tol)
    return TrajectoryMeta(None, None, tol)


# ---------------------------------------------------------------------------
# assumed models and residual datasets


class AssumedModel:
    """A named state-update guess with a declared Lipschitz bound."""

    def __init__(self, name: str, fn, lipschitz: float):
        self.name = name
        self._fn = fn
        self.lipschitz = float(lipschitz)

    def __call__(self, X):
        return self._fn(np.asarray(X, dtype=float))


def assumed_model(name: str, params: PendulumParams | None = None) -> AssumedModel:
    """Factory for the models used in the experiments.

    "zero" treats the whole step as un-modelled (residual = next state),
    "identity" models no motion, and "undamped" is the frictionless
    pendulum closed loop, leaving exactly the discrete damping as residual.
    """
    if name == "zero":
        return AssumedModel("zero", lambda X: np.zeros_like(X), 0.0)
    if name == "identity":
        return AssumedModel("identity", lambda X: X.copy(), 1.0)
    if name == "undamped":
        p = params or PendulumParams()
        L = float(np.linalg.svd(closed_loop_matrix(p, with_damping=False), compute_uv=False)[0])
        return AssumedModel("undamped", lambda X: pendulum_step(p, X, with_damping=False), L)
    raise ValueError(f"unknown assumed model {name!r}")


@dataclass
class TrajectoryDataset:
    trajectories: list
    assumed_model_name: str
    noise_radius: float
    effective_noise_radius: float
    residual_pairs: list = field(default_factory=list)

    @property
    def num_pairs(self) -> int:
        return len(self.residual_pairs)

    def pair_arrays(self):
        xs = np.array([p.x for p in self.residual_pairs])
        fxs = np.array([p.fx for p in self.residual_pairs])
        return xs, fxs

    def to_json_dict(self) -> dict:
        return {
            "trajectories": [np.asarray(t).tolist() for t in self.trajectories],
            "assumed_model": self.assumed_model_name,
            "noise_radius": self.noise_radius,
            "effective_noise_radius": self.effective_noise_radius,
            "residual_pairs": [[p.x.tolist(), p.fx.tolist()] for p in self.residual_pairs],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrajectoryDataset":
        ds = cls(
            [np.asarray(t, dtype=float) for t in d["trajectories"]],
            d["assumed_model"],
            float(d["noise_radius"]),
            float(d["effective_noise_radius"]),
        )
        ds.residual_pairs = [SamplePair(np.asarray(x), np.asarray(r)) for x, r in d["residual_pairs"]]
        return ds

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrajectoryDataset":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _ball_noise(rng: np.random.Generator, shape, radius: float) -> np.ndarray:
    """Uniform draws from the closed norm ball of the given radius."""
    m, n = shape
    v = rng.standard_normal((m, n))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    u = rng.uniform(size=(m, 1)) ** (1.0 / n)
    return radius * u * v / norms


def residual_dataset(
    trajectories,
    model: AssumedModel,
    noise_radius: float = 0.0,
    rng: np.random.Generator | None = None,
) -> TrajectoryDataset:
    """Build (state, residual) pairs from trajectories under an assumed model.

    With noise, measured states z_k = x_k + w_k (w uniform in the noise
    ball) replace the true ones on both sides of the difference.  The
    effective radius stored on the dataset is noise_radius * (1 + model
    Lipschitz bound): the measured residual differs from the true residual
    at the measured anchor by at most that much, which is the single-radius
    form the slice inflation formula expects.
    """
    if noise_radius < 0:
        raise ValueError("noise_radius must be nonnegative")
    trajectories = [np.atleast_2d(np.asarray(t, dtype=float)) for t in trajectories]
    if noise_radius > 0 and rng is None:
        raise ValueError("noisy datasets need an rng for reproducibility")
    pairs = []
    for traj in trajectories:
        states = traj
        if noise_radius > 0:
            states = traj + _ball_noise(rng, traj.shape, noise_radius)
        pred = model(states[:-1])
        residuals = states[1:] - pred
        for z, r in zip(states[:-1], residuals):
            pairs.append(SamplePair(z, r))
    effective = noise_radius * (1.0 + model.lipschitz)
    ds = TrajectoryDataset(trajectories, model.name, noise_radius, effective)
    ds.residual_pairs = pairs
    return ds


# ---------------------------------------------------------------------------
# file formats


def save_trajectory_csv(path, trajectory) -> None:
    X = np.atleast_2d(np.asarray(trajectory, dtype=float))
    n = X.shape[1]
    header = "k," + ",".join(f"x{i + 1}" for i in range(n))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for k, row in enumerate(X):
            fh.write(str(k) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def load_trajectory_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    return data[:, 1:]


# ---------------------------------------------------------------------------
# synthetic systems


def random_system(rng: np.random.Generator, n: int):
    """A random bounded system with a Lipschitz bound known by construction.

    Returns (step, L, x0).  Half the draws are linear maps x+ = M x + c with
    L = sigma_max(M); the rest saturate through tanh, whose unit slope bound
    makes L = sigma_max(B) * sigma_max(M) an upper bound.  Spectral scaling
    keeps trajectories bounded without clipping.
    """
    kind = rng.integers(2)
    scale = 0.35 + 0.55 * rng.uniform()
    M = rng.standard_normal((n, n))
    M *= scale / np.linalg.svd(M, compute_uv=False)[0]
    c = 0.5 * rng.standard_normal(n)
    x0 = rng.uniform(-1.0, 1.0, size=n)
    if kind == 0:
        L = float(np.linalg.svd(M, compute_uv=False)[0])

        def step(x):
            return M @ x + c

        return step, L, x0
    B = rng.standard_normal((n, n))
    B *= (0.4 + 0.5 * rng.uniform()) / np.linalg.svd(B, compute_uv=False)[0]
    L = float(np.linalg.svd(B, compute_uv=False)[0] * np.linalg.svd(M, compute_uv=False)[0])

    def step(x):
        return B @ np.tanh(M @ x + c)

    return step, L, x0
