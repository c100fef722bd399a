import numpy as np
import pytest

from lipset import sdp


def scalar_bound_problem():
    # minimize t subject to t >= 3, as the 1x1 block 3 - t <= 0
    p = sdp.LinearMatrixProblem()
    t = p.add_scalar("t")
    p.add_lmi(np.array([[3.0]]), {t: np.array([[-1.0]])})
    p.set_objective({t: 1.0})
    return p, t


def test_scalar_bound_oracle():
    p, t = scalar_bound_problem()
    report = sdp.solve(p)
    assert report.ok
    assert report.status == "optimal"
    assert report.x[t] == pytest.approx(3.0, abs=1e-7)
    assert report.objective == pytest.approx(3.0, abs=1e-7)


def test_min_trace_with_floor():
    # min trace P with P >= I: optimum is P = I, trace n
    n = 3
    p = sdp.LinearMatrixProblem()
    P = p.add_symmetric("P", n, eps_floor=1.0)
    p.set_objective({P.entry_index[i][i]: 1.0 for i in range(n)})
    report = sdp.solve(p)
    assert report.ok
    M = p.extract_matrix(P, report.x)
    assert np.allclose(M, np.eye(n), atol=1e-6)
    assert np.trace(M) == pytest.approx(n, abs=1e-6)
    assert np.array_equal(M, M.T)


def test_infeasible_reported_not_raised():
    p = sdp.LinearMatrixProblem()
    x = p.add_scalar("x")
    # x <= -1 and x >= 1 simultaneously
    p.add_lmi(np.array([[1.0]]), {x: np.array([[1.0]])})
    p.add_lmi(np.array([[1.0]]), {x: np.array([[-1.0]])})
    report = sdp.solve(p)
    assert not report.ok
    assert report.status == "infeasible"
    assert report.x is None


def test_nonneg_scalars():
    p = sdp.LinearMatrixProblem()
    u = p.add_scalar("u", nonneg=True)
    # minimize u with u >= -5 only through the sign constraint
    p.add_lmi(np.array([[-5.0]]), {u: np.array([[-1.0]])})
    p.set_objective({u: 1.0})
    report = sdp.solve(p)
    assert report.ok
    assert report.x[u] == pytest.approx(0.0, abs=1e-7)


def test_equality_constraint():
    p = sdp.LinearMatrixProblem()
    a = p.add_scalar("a")
    b = p.add_scalar("b")
    p.add_equality(-1.0, {a: 1.0, b: 1.0})  # a + b = 1
    p.add_lmi(np.zeros((1, 1)), {a: np.array([[-1.0]])})  # a >= 0
    p.set_objective({a: 1.0})
    report = sdp.solve(p)
    assert report.ok
    assert report.x[a] == pytest.approx(0.0, abs=1e-6)
    assert report.x[b] == pytest.approx(1.0, abs=1e-6)


def test_verify_is_independent_and_signed():
    p, t = scalar_bound_problem()
    good = np.array([3.5])
    bad = np.array([2.0])
    assert sdp.verify(p, good).ok
    assert sdp.verify(p, good).min_slack_eigenvalue == pytest.approx(0.5)
    v = sdp.verify(p, bad)
    assert not v.ok
    assert v.max_violation == pytest.approx(1.0)


def test_verify_checks_sign_constraints():
    p = sdp.LinearMatrixProblem()
    u = p.add_scalar("u", nonneg=True)
    p.add_lmi(np.array([[-10.0]]), {u: np.array([[1.0]])})
    v = sdp.verify(p, np.array([-0.5]))
    assert v.sign_violation == pytest.approx(0.5)
    assert not v.ok


def test_solve_then_verify_chain():
    # the audit route must accept what the solver returns
    p, _ = scalar_bound_problem()
    report = sdp.solve(p)
    check = sdp.verify(p, report.x)
    assert check.ok
    assert check.max_violation <= 1e-8


def test_determinism():
    p1, _ = scalar_bound_problem()
    p2, _ = scalar_bound_problem()
    r1 = sdp.solve(p1)
    r2 = sdp.solve(p2)
    assert np.array_equal(r1.x, r2.x)
    assert r1.objective == r2.objective


def test_problem_serialization_roundtrip(tmp_path):
    p, t = scalar_bound_problem()
    path = tmp_path / "prob.json"
    p.dump_json(path)
    q = sdp.LinearMatrixProblem.load_json(path)
    assert q.num_vars == p.num_vars
    r = sdp.solve(q)
    assert r.x[t] == pytest.approx(3.0, abs=1e-7)


def test_verify_rejects_wrong_length():
    p, _ = scalar_bound_problem()
    with pytest.raises(ValueError):
        sdp.verify(p, np.zeros(5))
