import numpy as np
import pytest

from lipset import sdp
from lipset.envelope import LipschitzEnvelope, SamplePair, refine_many
from lipset.invariant import (
    BisectionConfig,
    EllipsoidalInvariantSet,
    SynthesisError,
    build_invariance_lmi,
    conditioning_transform,
    estimate_equilibrium,
    synthesize,
    verify_by_envelope,
    verify_by_simulation,
)

FAST = BisectionConfig(rho_hi=2.0, coarse_grid=5, max_iters=10, rho_resolution=1e-2)


def halving_envelope(num=8):
    # trajectory of f(x) = 0.5 x from 1, exact constant
    xs = 0.5 ** np.arange(num, dtype=float)
    return LipschitzEnvelope.from_arrays(0.5, xs[:, None], 0.5 * xs[:, None])


def test_lmi_feasible_at_quarter():
    # frozen oracle: contraction data admits rho = L^2 = 0.25
    p = build_invariance_lmi(halving_envelope(), np.zeros(1), 1, 0.25)
    report = sdp.solve(p)
    assert report.ok
    assert sdp.verify(p, report.x).max_violation <= 1e-8


def test_lmi_infeasible_at_zero():
    # at rho = 0 the multiplier block forces tau = 0, contradicting P >= eps I
    p = build_invariance_lmi(halving_envelope(), np.zeros(1), 1, 0.0)
    report = sdp.solve(p)
    assert not report.ok


def test_synthesize_certificate_soundness():
    # contract on every successful return: residual slack >= -1e-8 and the
    # envelope audit passes with 1e3 sampled points
    env = halving_envelope()
    inv_set, report = synthesize(env, np.zeros(1), box_constraints=[(np.ones(1), 1.0)],
                                 return_report=True)
    assert -report.residual.max_violation >= -1e-8
    assert 0.25 <= report.rho <= 1.0 + 1e-9
    check = verify_by_envelope(inv_set, env, num_points=1000, rng=np.random.default_rng(0))
    assert check.ok
    assert check.failures == []


def test_synthesize_respects_box_constraint():
    env = halving_envelope()
    inv_set = synthesize(env, np.zeros(1), box_constraints=[(np.ones(1), 0.7)])
    assert inv_set.bounding_box()[1][0] <= 0.7 + 1e-6
    assert inv_set.contains(np.zeros(1))


def test_synthesize_fails_above_unit_gain():
    # expansive data admits no certificate at any rho (necessary condition
    # rho >= L^2 collides with the sum constraint at the equilibrium)
    xs = np.linspace(-1, 1, 9)[:, None]
    env = LipschitzEnvelope.from_arrays(1.2, xs, 1.2 * xs)
    with pytest.raises(SynthesisError) as err:
        synthesize(env, np.zeros(1), config=FAST)
    assert len(err.value.trials) > 0


def test_linear_contraction_simulation():
    # planar rotation scaled to 0.6: certified set holds under long rollouts
    theta = 0.7
    A = 0.6 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rng = np.random.default_rng(3)
    xs = rng.uniform(-1, 1, size=(40, 2))
    env = LipschitzEnvelope.from_arrays(0.6, xs, xs @ A.T)
    inv_set = synthesize(env, np.zeros(2), box_constraints=[(np.eye(2)[i], 1.0) for i in range(2)])
    starts = _interior(inv_set, 30, rng)
    check = verify_by_simulation(inv_set, lambda x: A @ x, starts, num_steps=2000)
    assert check.ok
    assert check.first_escape_step is None


def _interior(inv_set, count, rng):
    n = inv_set.x_eq.size
    u = rng.standard_normal((count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lam = np.array([max(q @ P @ q for P in inv_set.P) for q in u])
    return inv_set.x_eq + (0.9 * rng.uniform(0.1, 1.0, count) / np.sqrt(lam))[:, None] * u


def test_simulation_detects_escape_from_uncertified_set():
    # unstable map with a hand-shrunken shape matrix and no certificate
    inv_set = EllipsoidalInvariantSet(np.zeros(1), [np.array([[4.0]])])  # |x| <= 1/2
    check = verify_by_simulation(inv_set, lambda x: 1.5 * x, np.array([[0.4]]), num_steps=50)
    assert not check.ok
    assert check.first_escape_step == 1
    assert abs(check.escape_point[0]) > 0.5


def test_simulation_precondition_start_outside():
    inv_set = EllipsoidalInvariantSet(np.zeros(1), [np.eye(1)])
    with pytest.raises(ValueError, match="0"):
        verify_by_simulation(inv_set, lambda x: x, np.array([[2.0]]), num_steps=5)


def test_envelope_check_flags_uncertified_set():
    # expansive data: the unit interval is not invariant for every consistent map
    xs = np.linspace(-1, 1, 21)[:, None]
    env = LipschitzEnvelope.from_arrays(1.2, xs, 1.2 * xs)
    candidate = EllipsoidalInvariantSet(np.zeros(1), [np.eye(1)])
    check = verify_by_envelope(candidate, env, num_points=300, rng=np.random.default_rng(1))
    assert not check.ok
    assert len(check.failures) > 0
    assert "x" in check.failures[0]


def test_envelope_check_flags_displaced_set():
    # contraction data, but the candidate is centered away from the fixed point
    xs = np.linspace(-1, 1, 21)[:, None]
    env = LipschitzEnvelope.from_arrays(0.9, xs, 0.9 * xs)
    candidate = EllipsoidalInvariantSet(np.array([0.8]), [np.array([[25.0]])])
    check = verify_by_envelope(candidate, env, num_points=200, rng=np.random.default_rng(2))
    assert not check.ok


def test_envelope_check_indeterminate_without_data():
    env = LipschitzEnvelope(1.0, 1)
    candidate = EllipsoidalInvariantSet(np.zeros(1), [np.eye(1)])
    check = verify_by_envelope(candidate, env, num_points=50)
    assert not check.ok
    assert check.indeterminate


def test_refinement_keeps_certificate():
    # more data only shrinks slices, so the certified pair stays verified
    env = halving_envelope()
    inv_set = synthesize(env, np.zeros(1), box_constraints=[(np.ones(1), 1.0)])
    rng = np.random.default_rng(5)
    xs = rng.uniform(-1, 1, 30)
    extra = [SamplePair(np.array([x]), np.array([0.5 * x])) for x in xs]
    refined = refine_many(env, extra)
    check = verify_by_envelope(inv_set, refined, num_points=400, rng=rng)
    assert check.ok


def test_estimate_equilibrium():
    xs = np.array([[2.0], [1.0], [0.1]])
    fxs = np.array([[1.0], [0.5], [0.1]])  # last pair moves least
    assert estimate_equilibrium(xs, fxs) == pytest.approx([0.1])


def test_set_geometry_oracles():
    P = np.diag([4.0, 1.0])  # semi-axes 1/2 and 1
    s = EllipsoidalInvariantSet(np.array([1.0, 0.0]), [P])
    assert s.max_level([1.5, 0.0]) == pytest.approx(1.0)
    assert s.contains([1.0, 0.9])
    assert not s.contains([1.6, 0.0])
    lo, hi = s.bounding_box()
    assert lo == pytest.approx([0.5, -1.0])
    assert hi == pytest.approx([1.5, 1.0])
    B = s.boundary_points(64)
    levels = s.max_level_batch(B)
    assert np.allclose(levels, 1.0, atol=1e-9)


def test_intersection_of_two_ellipsoids():
    pair = [np.diag([4.0, 1.0]), np.diag([1.0, 4.0])]
    s = EllipsoidalInvariantSet(np.zeros(2), pair)
    assert s.contains([0.4, 0.4])
    assert not s.contains([0.0, 0.9])  # inside first, outside second
    assert s.max_level([0.0, 0.9]) == pytest.approx(0.81 * 4.0)


def test_preimage_matches_composition():
    rng = np.random.default_rng(7)
    M = np.array([[1.2, 0.3], [-0.1, 0.8]])
    s = EllipsoidalInvariantSet(np.array([0.5, -0.2]), [np.diag([2.0, 1.0]), np.eye(2)])
    pre = s.preimage(M)
    for _ in range(20):
        x = rng.standard_normal(2)
        assert pre.max_level(x) == pytest.approx(s.max_level(M @ x), rel=1e-12)
    assert M @ pre.x_eq == pytest.approx(s.x_eq)


def test_set_serialization_roundtrip(tmp_path):
    s = EllipsoidalInvariantSet(np.array([1.0, 2.0]), [np.diag([1.0, 3.0]), np.eye(2)])
    p = tmp_path / "set.json"
    s.save(p)
    back = EllipsoidalInvariantSet.load(p)
    assert np.array_equal(back.x_eq, s.x_eq)
    assert len(back.P) == 2
    for A, B in zip(back.P, s.P):
        assert np.array_equal(A, B)


def test_conditioning_transform_contracts():
    # affine stable map: transformed data has gain < 1, transform is SPD
    A = np.array([[0.9999, 0.004924375], [-0.02, 0.984875]])
    rng = np.random.default_rng(11)
    xs = rng.uniform(-1, 1, size=(200, 2))
    fxs = xs @ A.T
    T, L_z, info = conditioning_transform(xs, fxs)
    assert L_z < 1.0
    assert np.allclose(T, T.T)
    assert np.all(np.linalg.eigvalsh(T) > 0)
    # declared gain actually bounds the transformed map
    G = T @ A @ np.linalg.inv(T)
    assert np.linalg.svd(G, compute_uv=False)[0] <= L_z


def test_conditioning_transform_rejects_unstable_fit():
    xs = np.linspace(-1, 1, 50)[:, None]
    with pytest.raises(ValueError):
        conditioning_transform(xs, 1.5 * xs)
