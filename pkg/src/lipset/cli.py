"""Command-line front end.

Every subcommand reads a JSON config and writes its artifacts into an
output directory, so runs are reproducible from the config alone.  Exit
codes: 0 on success, 2 for usage or config errors, 3 when the data
contradicts its declared assumptions, 4 when a solver gives up.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import ellipsoid as ell
from . import invariant as inv
from . import plots, sdp
from . import sysid as sim
from .envelope import DataInconsistencyError, LipschitzEnvelope
from .slices import coordinate_interval, diameter_bound, slice as slice_envelope

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


class ConfigError(Exception):
    """Raised for missing or malformed config entries; maps to exit code 2."""


def worker_count() -> int:
    """Parallelism cap: LIPSET_THREADS if set, else a small default."""
    raw = os.environ.get("LIPSET_THREADS", "")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError as exc:
            raise ConfigError(f"LIPSET_THREADS must be an integer, got {raw!r}") from exc
    return min(4, os.cpu_count() or 1)


def _parallel_map(fn, items):
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _out_dir(cfg: dict, override) -> Path:
    out = Path(override) if override else Path(cfg.get("out", "lipset-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# simulate


def _build_system(cfg: dict):
    """Resolve the config's system block to (step, metadata)."""
    system = cfg.get("system", "pendulum")
    if system == "pendulum":
        overrides = cfg.get("params", {})
        params = sim.PendulumParams(**overrides)
        if "policy" in cfg:
            params.policy = cfg["policy"]
        with_damping = bool(cfg.get("with_damping", True))
        step = sim.pendulum_map(params, with_damping=with_damping)
        default_ics = sim.DEFAULT_INITIAL_CONDITIONS
        meta = {
            "system": "pendulum",
            "with_damping": with_damping,
            "policy": params.policy,
            "damping_gain": params.damping_gain,
        }
        return step, params, default_ics, meta
    if system == "contraction":
        factor = float(cfg.get("factor", 0.5))

        def step(x):
            return factor * np.asarray(x, dtype=float)

        return step, None, np.array([[1.0]]), {"system": "contraction", "factor": factor}
    if isinstance(system, dict) and system.get("kind") == "linear":
        A = np.asarray(_require(system, "A"), dtype=float)
        b = np.asarray(system.get("b", np.zeros(A.shape[0])), dtype=float)

        def step(x):
            return A @ np.asarray(x, dtype=float) + b

        return step, None, None, {"system": "linear", "L": float(np.linalg.svd(A, compute_uv=False)[0])}
    raise ConfigError(f"unknown system {system!r}")


def run_simulate(cfg: dict, out: Path) -> dict:
    step, params, default_ics, meta = _build_system(cfg)
    N = int(cfg.get("N", 4000))
    ics = cfg.get("initial_conditions")
    if ics is None:
        if default_ics is None:
            raise ConfigError("this system needs explicit initial_conditions")
        ics = default_ics
    ics = np.atleast_2d(np.asarray(ics, dtype=float))

    trajectories = _parallel_map(lambda x0: sim.simulate(step, x0, N), ics)

    model_name = cfg.get("assumed_model", "undamped" if meta["system"] == "pendulum" else "zero")
    model = sim.assumed_model(model_name, params)
    noise_radius = float(cfg.get("noise_radius", 0.0))
    rng = np.random.default_rng(int(cfg.get("seed", 0))) if noise_radius > 0 else None
    dataset = sim.residual_dataset(trajectories, model, noise_radius=noise_radius, rng=rng)

    files = []
    for i, traj in enumerate(trajectories):
        p = out / f"trajectory_{i:02d}.csv"
        sim.save_trajectory_csv(p, traj)
        files.append(p.name)
    dataset.save(out / "dataset.json")

    periods = []
    for traj in trajectories:
        m = sim.detect_periodicity(traj, tol=float(cfg.get("period_tol", 1e-6)))
        periods.append(
            {
                "detected_period": m.detected_period,
                "converged_to": None if m.converged_to is None else m.converged_to.tolist(),
            }
        )
    summary = dict(meta)
    summary.update(
        {
            "N": N,
            "num_trajectories": int(ics.shape[0]),
            "assumed_model": model_name,
            "noise_radius": noise_radius,
            "effective_noise_radius": dataset.effective_noise_radius,
            "num_residual_pairs": dataset.num_pairs,
            "trajectory_files": files,
            "dataset_file": "dataset.json",
            "periodicity": periods,
        }
    )
    _write_json(out / "simulate_summary.json", summary)
    if "damping_gain" in meta:
        print(f"residual damping gain: {_fmt(meta['damping_gain'])}")
    print(f"wrote {len(files)} trajectories and dataset.json to {out}")
    return {"dataset": dataset, "summary": summary, "out": out}


# ---------------------------------------------------------------------------
# learn


def _validate_lipschitz(xs, ds, L, slack, chunk=1024):
    """Chunked pairwise check of the declared bound; returns first violation."""
    m = xs.shape[0]
    for i0 in range(0, m, chunk):
        Xi, Di = xs[i0 : i0 + chunk], ds[i0 : i0 + chunk]
        for j0 in range(i0, m, chunk):
            Xj, Dj = xs[j0 : j0 + chunk], ds[j0 : j0 + chunk]
            dx = np.linalg.norm(Xi[:, None, :] - Xj[None, :, :], axis=2)
            dd = np.linalg.norm(Di[:, None, :] - Dj[None, :, :], axis=2)
            bound = L * dx + slack + 1e-9 * np.maximum(1.0, dd)
            bad = dd > bound
            if i0 == j0:
                bad &= np.triu(np.ones_like(bad, dtype=bool), k=1)
            if np.any(bad):
                a, b = np.argwhere(bad)[0]
                return int(i0 + a), int(j0 + b), float(dd[a, b]), float(L * dx[a, b] + slack)
    return None


def run_learn(cfg: dict, out: Path, dataset: sim.TrajectoryDataset | None = None) -> dict:
    if dataset is None:
        dataset = sim.TrajectoryDataset.load(_require(cfg, "dataset"))
    L = _require(cfg, "L")
    if L == "pendulum-residual":
        p = sim.PendulumParams(**cfg.get("params", {}))
        L = p.damping_gain * float(np.sqrt(1.0 + p.dt**2))
    L = float(L)
    noise_radius = float(cfg.get("noise_radius", dataset.effective_noise_radius))

    if dataset.num_pairs == 0:
        print("warning: dataset has no samples; envelope admits every function", file=sys.stderr)
        env = LipschitzEnvelope(L, int(cfg.get("dim", 1)), noise_radius=noise_radius)
        env.save(out / "envelope.json")
        _write_json(out / "learn_report.json", {"num_samples": 0, "L": L, "validated": False})
        return {"envelope": env, "out": out}

    xs, ds = dataset.pair_arrays()
    if bool(cfg.get("validate", True)):
        viol = _validate_lipschitz(xs, ds, L, 2.0 * noise_radius, chunk=int(cfg.get("chunk_size", 1024)))
        if viol is not None:
            i, j, gap, bound = viol
            raise DataInconsistencyError(
                f"samples {i} and {j} violate the declared bound: "
                f"output gap {gap:.6g} exceeds {bound:.6g} "
                f"(x_i={xs[i].tolist()}, x_j={xs[j].tolist()})"
            )
    env = LipschitzEnvelope.from_arrays(L, xs, ds, noise_radius=noise_radius)
    env.save(out / "envelope.json")
    report = {
        "num_samples": env.num_samples,
        "L": L,
        "noise_radius": noise_radius,
        "validated": bool(cfg.get("validate", True)),
        "envelope_file": "envelope.json",
    }
    _write_json(out / "learn_report.json", report)
    print(f"learned envelope with {env.num_samples} samples (L={_fmt(L)}) -> {out / 'envelope.json'}")
    return {"envelope": env, "report": report, "out": out}


# ---------------------------------------------------------------------------
# query and ellipsoid


def _query_rows(env: LipschitzEnvelope, queries, with_diameter=True):
    def one(q):
        ss = slice_envelope(env, q)
        intervals = [list(coordinate_interval(ss, axis)) for axis in range(env.n)]
        row = {"query": list(map(float, q)), "intervals": intervals}
        if with_diameter:
            row["diameter_bound"] = float(diameter_bound(ss))
        return row

    return _parallel_map(one, np.atleast_2d(np.asarray(queries, dtype=float)))


def _write_interval_csv(path: Path, rows) -> None:
    n = len(rows[0]["intervals"])
    cols = ["query_index"]
    cols += [f"q{i + 1}" for i in range(len(rows[0]["query"]))]
    for i in range(n):
        cols += [f"lo{i + 1}", f"hi{i + 1}", f"width{i + 1}"]
    cols.append("diameter_bound")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k, r in enumerate(rows):
            vals = [str(k)] + [_fmt(v) for v in r["query"]]
            for lo, hi in r["intervals"]:
                vals += [_fmt(lo), _fmt(hi), _fmt(hi - lo)]
            vals.append(_fmt(r.get("diameter_bound", float("nan"))))
            fh.write(",".join(vals) + "\n")


def run_query(cfg: dict, out: Path, env: LipschitzEnvelope | None = None) -> dict:
    if env is None:
        env = LipschitzEnvelope.load(_require(cfg, "envelope"))
    if env.num_samples == 0:
        raise DataInconsistencyError("cannot bound queries with an empty envelope")
    queries = np.atleast_2d(np.asarray(_require(cfg, "queries"), dtype=float))
    rows = _query_rows(env, queries, with_diameter=bool(cfg.get("with_diameter", True)))
    _write_json(out / "query_report.json", {"L": env.L, "noise_radius": env.noise_radius, "rows": rows})
    _write_interval_csv(out / "intervals.csv", rows)
    print(f"bounded {len(rows)} queries -> {out / 'intervals.csv'}")
    return {"rows": rows, "out": out}


def run_ellipsoid(cfg: dict, out: Path, env: LipschitzEnvelope | None = None) -> dict:
    if env is None:
        env = LipschitzEnvelope.load(_require(cfg, "envelope"))
    if env.num_samples == 0:
        raise DataInconsistencyError("cannot bound queries with an empty envelope")
    queries = np.atleast_2d(np.asarray(_require(cfg, "queries"), dtype=float))
    max_balls = int(cfg.get("max_balls", ell.DEFAULT_MAX_BALLS))
    audit_samples = int(cfg.get("audit_samples", 2000))
    seed = int(cfg.get("seed", 0))

    rows = []
    for k, q in enumerate(queries):
        ss = slice_envelope(env, q)
        e, rep = ell.outer_ellipsoid(
            ss,
            max_balls=max_balls,
            audit_samples=audit_samples,
            rng=np.random.default_rng(seed + k),
            return_report=True,
        )
        rows.append(
            {
                "query": q.tolist(),
                "center": e.c.tolist(),
                "shape": e.R.tolist(),
                "trace": rep.trace,
                "balls_used": rep.balls_used,
                "audit": {
                    "samples": rep.audit.samples_accepted,
                    "violations": rep.audit.violations,
                    "tightness_ratio": rep.audit.tightness_ratio,
                },
            }
        )
    _write_json(out / "ellipsoids.json", {"L": env.L, "rows": rows})
    with open(out / "ellipsoids.csv", "w") as fh:
        n = env.n
        fh.write("query_index," + ",".join(f"c{i + 1}" for i in range(n)) + ",trace\n")
        for k, r in enumerate(rows):
            fh.write(",".join([str(k)] + [_fmt(v) for v in r["center"]] + [_fmt(r["trace"])]) + "\n")
    print(f"fit {len(rows)} outer ellipsoids -> {out / 'ellipsoids.json'}")
    return {"rows": rows, "out": out}


# ---------------------------------------------------------------------------
# invariant


def _full_map_pairs(dataset: sim.TrajectoryDataset, params=None):
    """Recover (x, f(x)) pairs by adding the assumed model back onto residuals."""
    model = sim.assumed_model(dataset.assumed_model_name, params)
    xs, rs = dataset.pair_arrays()
    return xs, model(xs) + rs


def _auto_lipschitz(xs, fxs) -> float:
    """Bound from an affine fit, inflated by the fit residual like the transform."""
    X = np.hstack([xs, np.ones((xs.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(X, fxs, rcond=None)
    A = coef[:-1].T
    resid = float(np.max(np.linalg.norm(fxs - X @ coef, axis=1)))
    return float(np.linalg.svd(A, compute_uv=False)[0]) + max(1e-9, 10.0 * resid)


def _interior_starts(inv_set: inv.EllipsoidalInvariantSet, count: int, rng) -> np.ndarray:
    """Deterministic sample of points strictly inside the set."""
    n = inv_set.x_eq.size
    u = rng.standard_normal((count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lam = np.array([np.max([q @ P @ q for P in inv_set.P]) for q in u])
    radii = 0.95 * rng.uniform(0.1, 1.0, size=count) ** (1.0 / n) / np.sqrt(lam)
    return inv_set.x_eq + radii[:, None] * u


def run_invariant(cfg: dict, out: Path, dataset: sim.TrajectoryDataset | None = None) -> dict:
    params = sim.PendulumParams(**cfg["params"]) if "params" in cfg else None
    if dataset is None and "dataset" in cfg:
        dataset = sim.TrajectoryDataset.load(cfg["dataset"])
    if dataset is not None:
        if dataset.noise_radius > 0:
            raise DataInconsistencyError("invariant synthesis needs noise-free data")
        xs, fxs = _full_map_pairs(dataset, params)
        L_cfg = cfg.get("L", "auto-linear")
        L = _auto_lipschitz(xs, fxs) if L_cfg == "auto-linear" else float(L_cfg)
    elif "envelope" in cfg:
        env0 = LipschitzEnvelope.load(cfg["envelope"])
        if env0.noise_radius > 0:
            raise DataInconsistencyError("invariant synthesis needs a noise-free envelope")
        xs = np.array([s.x for s in env0.samples])
        fxs = np.array([s.fx for s in env0.samples])
        L = env0.L
    else:
        raise ConfigError("invariant config needs either 'dataset' or 'envelope'")
    if xs.shape[0] == 0:
        raise DataInconsistencyError("no samples available for invariant synthesis")
    n = xs.shape[1]

    x_eq_cfg = cfg.get("x_eq", "auto")
    x_eq = inv.estimate_equilibrium(xs, fxs) if x_eq_cfg == "auto" else np.asarray(x_eq_cfg, dtype=float)

    # warn when the requested point does not behave like a fixed point of the data
    X1 = np.hstack([xs, np.ones((xs.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(X1, fxs, rcond=None)
    drift = float(np.linalg.norm(coef[:-1].T @ x_eq + coef[-1] - x_eq))
    if drift > 1e-3:
        print(
            f"warning: x_eq moves by {drift:.3g} under the fitted map; "
            "synthesis around a non-fixed point usually fails",
            file=sys.stderr,
        )

    # keep the matrix-inequality family small; evenly spaced keeps coverage
    lmi_samples = int(cfg.get("lmi_samples", 120))
    idx = np.unique(np.linspace(0, xs.shape[0] - 1, min(lmi_samples, xs.shape[0])).astype(int))
    xs_lmi, fxs_lmi = xs[idx], fxs[idx]

    precondition = cfg.get("precondition", "auto")
    if precondition == "auto":
        precondition = L >= 1.0

    domain = cfg.get("domain")
    if domain is not None:
        lo = np.asarray(domain[0], dtype=float)
        hi = np.asarray(domain[1], dtype=float)
        halfwidths = np.minimum(hi - x_eq, x_eq - lo)
        if np.any(halfwidths <= 0):
            raise ConfigError("x_eq must lie strictly inside the configured domain")

    bis = inv.BisectionConfig(
        rho_lo=float(cfg.get("rho_lo", 0.0)),
        rho_hi=float(cfg.get("rho_hi", 10.0)),
        coarse_grid=int(cfg.get("coarse_grid", 10)),
        max_iters=int(cfg.get("max_iters", 24)),
        feasibility_tol=float(cfg.get("feasibility_tol", 1e-8)),
        rho_resolution=float(cfg.get("rho_resolution", 1e-3)),
    )
    n_I = int(cfg.get("n_I", 1))

    if precondition:
        T, L_syn, info = inv.conditioning_transform(xs, fxs)
        Tinv = np.linalg.inv(T)
        xs_syn, fxs_syn = xs_lmi @ T.T, fxs_lmi @ T.T
        x_eq_syn = T @ x_eq
        boxes = []
        if domain is not None:
            # axis slab |e_i.(x - x_eq)| <= h becomes |(Tinv row).(z - z_eq)| <= h
            boxes = [(Tinv[i], float(halfwidths[i])) for i in range(n)]
    else:
        T, Tinv, info = None, None, {}
        L_syn = L
        xs_syn, fxs_syn, x_eq_syn = xs_lmi, fxs_lmi, x_eq
        boxes = [] if domain is None else [(np.eye(n)[i], float(halfwidths[i])) for i in range(n)]

    env_syn = LipschitzEnvelope.from_arrays(L_syn, xs_syn, fxs_syn)
    inv_syn, synth = inv.synthesize(
        env_syn,
        x_eq_syn,
        n_I=n_I,
        config=bis,
        box_constraints=boxes,
        return_report=True,
    )
    inv_x = inv_syn.preimage(T) if precondition else inv_syn

    verify_points = int(cfg.get("verify_points", 200))
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    env_check = None
    if verify_points > 0:
        env_check = inv.verify_by_envelope(inv_syn, env_syn, num_points=verify_points, rng=rng)

    sim_check = None
    sim_cfg = cfg.get("simulation")
    if sim_cfg is not None:
        step, _, _, _ = _build_system(sim_cfg)
        starts_cfg = sim_cfg.get("starts", 10)
        if isinstance(starts_cfg, int):
            starts = _interior_starts(inv_x, starts_cfg, rng)
        else:
            starts = np.atleast_2d(np.asarray(starts_cfg, dtype=float))
        sim_check = inv.verify_by_simulation(
            inv_x, step, starts, num_steps=int(sim_cfg.get("steps", 10_000))
        )

    inv_x.save(out / "invariant_set.json")
    residual = -float(synth.residual.max_violation)
    report = {
        "rho": synth.rho,
        "trace": synth.trace,
        "certificate_residual": residual,
        "trials": synth.trials,
        "n_I": n_I,
        "preconditioned": bool(precondition),
        "L_synthesis": L_syn,
        "lmi_samples": int(idx.size),
        "x_eq": x_eq.tolist(),
    }
    if env_check is not None:
        report["envelope_check"] = {
            "ok": env_check.ok,
            "num_points": env_check.num_points,
            "failures": len(env_check.failures),
            "indeterminate": env_check.indeterminate,
        }
    if sim_check is not None:
        report["simulation_check"] = {
            "ok": sim_check.ok,
            "num_starts": sim_check.num_starts,
            "num_steps": sim_check.num_steps,
            "first_escape_step": sim_check.first_escape_step,
        }
    _write_json(out / "invariant_report.json", report)

    if n == 2:
        B = inv_x.boundary_points(256)
        with open(out / "boundary.csv", "w") as fh:
            fh.write("k,x1,x2\n")
            for k, row in enumerate(B):
                fh.write(f"{k},{_fmt(row[0])},{_fmt(row[1])}\n")
        plots.plot_invariant_set(
            inv_x,
            out / "invariant_set.svg",
            domain=None if domain is None else (lo.tolist(), hi.tolist()),
        )
    print(
        f"certified invariant set at rho={_fmt(synth.rho)} "
        f"(residual {residual:.3g}) -> {out / 'invariant_set.json'}"
    )
    return {"set": inv_x, "report": report, "out": out}


# ---------------------------------------------------------------------------
# report


def run_report(cfg: dict, out: Path) -> dict:
    """Full pipeline: simulate, learn, query, optional invariant, figures."""
    sim_cfg = dict(cfg.get("simulate", {}))
    sim_cfg.setdefault("seed", cfg.get("seed", 0))
    sim_res = run_simulate(sim_cfg, out)
    dataset = sim_res["dataset"]

    learn_cfg = dict(cfg.get("learn", {}))
    learn_cfg.setdefault("L", "pendulum-residual")
    learn_res = run_learn(learn_cfg, out, dataset=dataset)
    env = learn_res["envelope"]

    query_cfg = dict(cfg.get("query", {}))
    query_cfg.setdefault("queries", sim.QUERY_POINTS.tolist())
    query_res = run_query(query_cfg, out, env=env)

    figures = []
    figures.append(
        str(
            plots.plot_trajectories(
                dataset.trajectories,
                out / "trajectories.png",
                queries=np.atleast_2d(np.asarray(query_cfg["queries"], dtype=float)),
            )
        )
    )
    figures.append(str(plots.plot_query_intervals(query_res["rows"], out / "query_intervals.png")))

    inv_summary = None
    if "invariant" in cfg:
        inv_cfg = dict(cfg["invariant"])
        inv_cfg.setdefault("seed", cfg.get("seed", 0))
        inv_res = run_invariant(inv_cfg, out, dataset=dataset)
        inv_summary = inv_res["report"]
        if (out / "invariant_set.svg").exists():
            figures.append(str(out / "invariant_set.svg"))

    _write_json(
        out / "report.json",
        {
            "simulate": sim_res["summary"],
            "learn": learn_res.get("report"),
            "query_rows": query_res["rows"],
            "invariant": inv_summary,
            "figures": [Path(f).name for f in figures],
        },
    )
    print(f"report complete; figures: {', '.join(Path(f).name for f in figures)}")
    return {"out": out}


# ---------------------------------------------------------------------------
# entry point


_COMMANDS = {
    "simulate": run_simulate,
    "learn": run_learn,
    "query": run_query,
    "ellipsoid": run_ellipsoid,
    "invariant": run_invariant,
    "report": run_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipset",
        description="set-valued model learning and invariant-set certification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage from a JSON config")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = _out_dir(cfg, args.out)
        _COMMANDS[args.command](cfg, out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataInconsistencyError as exc:
        print(f"data inconsistency: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (sdp.SolverFailure, inv.SynthesisError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
