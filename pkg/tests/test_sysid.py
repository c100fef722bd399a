import numpy as np
import pytest

from lipset import sysid


def test_zero_torque_step_oracle():
    # frozen by hand: undamped free pendulum at (pi/2, 0), one step
    p = sysid.PendulumParams(policy="zero")
    s = sysid.pendulum_step(p, np.array([np.pi / 2, 0.0]), with_damping=False)
    assert s[1] == pytest.approx(-0.024525, abs=0)
    assert s[0] == pytest.approx(1.5706737017948966, abs=0)


def test_upright_is_exact_fixed_point():
    p = sysid.PendulumParams()
    s = sysid.pendulum_step(p, np.array([np.pi, 0.0]), with_damping=True)
    assert s[0] == np.pi and s[1] == 0.0


def test_damping_gain_value():
    assert sysid.PendulumParams().damping_gain == pytest.approx(1.25e-4, abs=0)


def test_closed_loop_matrix_frozen():
    A = sysid.closed_loop_matrix()
    expected = np.array([[0.9999, 0.004924375], [-0.02, 0.984875]])
    assert np.allclose(A, expected, atol=1e-15)
    assert np.linalg.svd(A, compute_uv=False)[0] == pytest.approx(1.0031079387216137, abs=1e-12)
    # the step really is affine about the upright state
    x = np.array([2.3, -0.7])
    lhs = sysid.pendulum_step(sysid.PendulumParams(), x)
    rhs = np.array([np.pi, 0.0]) + A @ (x - [np.pi, 0.0])
    assert np.allclose(lhs, rhs, atol=1e-14)


def test_closed_loop_matrix_needs_stabilize_policy():
    with pytest.raises(ValueError):
        sysid.closed_loop_matrix(sysid.PendulumParams(policy="zero"))


def test_batched_step_matches_loop():
    p = sysid.PendulumParams()
    X = np.array([[1.0, 0.5], [4.0, -1.0], [np.pi, 0.0]])
    batch = sysid.pendulum_step(p, X)
    rows = np.array([sysid.pendulum_step(p, x) for x in X])
    assert np.array_equal(batch, rows)


def test_simulate_geometric_oracle():
    traj = sysid.simulate(lambda x: 0.5 * x, np.array([1.0]), 3)
    assert np.array_equal(traj.ravel(), [1.0, 0.5, 0.25, 0.125])


def test_simulate_rejects_nonfinite():
    with pytest.raises(RuntimeError, match="step 2"):
        sysid.simulate(lambda x: x * np.array([1e200]), np.array([1.0]), 5)
    with pytest.raises(ValueError):
        sysid.simulate(lambda x: x, np.array([1.0]), 0)


def test_detect_periodicity():
    const = np.tile([2.0, -1.0], (30, 1))
    m = sysid.detect_periodicity(const, tol=1e-12)
    assert m.detected_period == 1
    assert m.converged_to == pytest.approx([2.0, -1.0])

    flip = np.array([[1.0], [-1.0]] * 25)
    assert sysid.detect_periodicity(flip, tol=1e-12).detected_period == 2

    drift = np.arange(40, dtype=float)[:, None]
    assert sysid.detect_periodicity(drift, tol=1e-9).detected_period is None

    with pytest.raises(ValueError):
        sysid.detect_periodicity(const, tol=0.0)


def test_pendulum_converges_upright():
    p = sysid.PendulumParams()
    traj = sysid.simulate(sysid.pendulum_map(p), np.array([5 * np.pi / 6, 0.0]), 4000)
    m = sysid.detect_periodicity(traj, tol=1e-6)
    assert m.detected_period == 1
    assert m.converged_to == pytest.approx([np.pi, 0.0], abs=1e-6)


def test_residual_is_exactly_the_damping_term():
    p = sysid.PendulumParams()
    traj = sysid.simulate(sysid.pendulum_map(p), np.array([5 * np.pi / 3, -0.5]), 60)
    ds = sysid.residual_dataset([traj], sysid.assumed_model("undamped"))
    xs, rs = ds.pair_arrays()
    g = p.damping_gain
    expected = -g * xs[:, 1:2] * np.array([[p.dt, 1.0]])
    assert np.allclose(rs, expected, atol=1e-18)


def test_residual_lipschitz_bound_is_tight():
    # the residual map is linear in the rate with constant g*sqrt(1+dt^2)
    p = sysid.PendulumParams()
    L = p.damping_gain * np.sqrt(1.0 + p.dt**2)
    traj = sysid.simulate(sysid.pendulum_map(p), np.array([5 * np.pi / 6, 0.0]), 200)
    ds = sysid.residual_dataset([traj], sysid.assumed_model("undamped"))
    xs, rs = ds.pair_arrays()
    dx = np.linalg.norm(xs[:, None] - xs[None, :], axis=2)
    dr = np.linalg.norm(rs[:, None] - rs[None, :], axis=2)
    mask = dx > 0
    ratios = dr[mask] / dx[mask]
    assert np.max(ratios) <= L + 1e-15
    # the bound is achieved exactly by states differing only in the rate
    a, b = np.array([1.0, 0.3]), np.array([1.0, 1.3])
    da = sysid.pendulum_step(p, a, True) - sysid.pendulum_step(p, a, False)
    db = sysid.pendulum_step(p, b, True) - sysid.pendulum_step(p, b, False)
    assert np.linalg.norm(da - db) / np.linalg.norm(a - b) == pytest.approx(L, rel=1e-12)


def test_assumed_models():
    zero = sysid.assumed_model("zero")
    ident = sysid.assumed_model("identity")
    X = np.array([[1.0, 2.0]])
    assert np.array_equal(zero(X), np.zeros((1, 2))) and zero.lipschitz == 0.0
    assert np.array_equal(ident(X), X) and ident.lipschitz == 1.0
    und = sysid.assumed_model("undamped")
    assert und.lipschitz == pytest.approx(1.003126188130584, abs=1e-12)
    with pytest.raises(ValueError):
        sysid.assumed_model("nope")


def test_noise_is_seeded_and_bounded():
    p = sysid.PendulumParams()
    traj = sysid.simulate(sysid.pendulum_map(p), np.array([5 * np.pi / 6, 0.0]), 50)
    w = 1e-5
    model = sysid.assumed_model("undamped")
    ds1 = sysid.residual_dataset([traj], model, noise_radius=w, rng=np.random.default_rng(42))
    ds2 = sysid.residual_dataset([traj], model, noise_radius=w, rng=np.random.default_rng(42))
    xs1, rs1 = ds1.pair_arrays()
    xs2, rs2 = ds2.pair_arrays()
    assert np.array_equal(xs1, xs2) and np.array_equal(rs1, rs2)  # bit-identical
    assert np.max(np.linalg.norm(xs1 - traj[:-1], axis=1)) <= w
    assert ds1.effective_noise_radius == pytest.approx(w * (1 + model.lipschitz))
    with pytest.raises(ValueError):
        sysid.residual_dataset([traj], model, noise_radius=w)  # rng required


def test_dataset_roundtrip(tmp_path):
    traj = sysid.simulate(lambda x: 0.5 * x, np.array([1.0]), 10)
    ds = sysid.residual_dataset([traj], sysid.assumed_model("zero"))
    path = tmp_path / "ds.json"
    ds.save(path)
    back = sysid.TrajectoryDataset.load(path)
    xs, rs = ds.pair_arrays()
    xb, rb = back.pair_arrays()
    assert np.array_equal(xs, xb) and np.array_equal(rs, rb)
    assert back.assumed_model_name == "zero"
    assert back.noise_radius == 0.0


def test_trajectory_csv_roundtrip(tmp_path):
    p = sysid.PendulumParams()
    traj = sysid.simulate(sysid.pendulum_map(p), np.array([5 * np.pi / 4, -0.2]), 25)
    path = tmp_path / "t.csv"
    sysid.save_trajectory_csv(path, traj)
    header = path.read_text().splitlines()[0]
    assert header == "k,x1,x2"
    back = sysid.load_trajectory_csv(path)
    assert np.array_equal(back, traj)  # 17 significant digits survive the trip


def test_random_systems_bounded_with_valid_constant():
    rng = np.random.default_rng(0)
    for _ in range(10):
        n = int(rng.integers(1, 4))
        step, L, x0 = sysid.random_system(rng, n)
        traj = sysid.simulate(step, x0, 300)
        assert np.max(np.abs(traj)) < 50
        pts = rng.uniform(-2, 2, size=(100, n))
        F = np.array([step(x) for x in pts])
        num = np.linalg.norm(F[:, None] - F[None, :], axis=2)
        den = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        mask = den > 1e-12
        assert np.max(num[mask] / den[mask]) <= L + 1e-9
