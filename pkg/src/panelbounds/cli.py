"""Command-line front end.

Every command prints (or writes with ``--json``) one JSON document holding
``format_version``, the command, the resolved configuration and the result.
Exit codes: 0 on success, 2 on invalid input or usage, 3 when a solver or an
inference routine cannot produce a result.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import BudgetExceeded, EmptyRegionDiagnostic, PanelBoundsError, SolverError, UnbalancedPanel
from .inference import BootstrapPlan, Functional, modified_projection, np_bounds_ci, perturbed_bootstrap
from .linear_fe import chamberlain_estimator, partition_support, within_estimator
from .npbounds import OutcomeBounds, dynamic_bounds, static_bounds
from .panel_core import (
    EffectQuery,
    cell_frequencies,
    cell_means,
    enumerate_support,
    read_panel_csv,
    write_panel_csv,
)
from .setid import GridConfig, effect_bounds, effective_n, estimate_identified_set, femle, scalar_beta_grid
from .simlab import MarkovDgp, StaticDgp, exact_cells, generate, honore_tamer_alpha, table1_surface

FORMAT_VERSION = "1"
SEED_ENV = "PANELBOUNDS_SEED"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
# execution settings that must not change the output
_NOT_ECHOED = ("func", "threads", "json")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(","))


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",")]


def _query(ns) -> EffectQuery:
    return EffectQuery(ns.x_tilde, ns.x_bar, ns.distance)


def _grid(ns) -> GridConfig:
    return GridConfig(
        beta_grid=scalar_beta_grid(ns.beta_lo, ns.beta_hi, ns.beta_step),
        epsilon=ns.epsilon,
        weight_iterations=ns.weight_iterations,
    )


def _clean(v):
    """JSON-safe copy: arrays to lists, non-finite floats to null."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _write_rows(path, rows: list[dict]) -> None:
    if not rows:
        raise PanelBoundsError("no rows to write")
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


# ---------------------------------------------------------------------------
# commands


def _cmd_estimate(ns) -> dict:
    data = read_panel_csv(ns.data)
    query = _query(ns)
    out: dict = {"n": data.n, "T": data.T}
    try:
        out["within"] = within_estimator(data)
    except PanelBoundsError as exc:
        out["within"] = None
        out["within_note"] = str(exc)
    ch = chamberlain_estimator(data, query)
    out["switcher_average"] = {"beta_hat": ch.beta_hat, "identified_share": ch.identified_share, "n_star": ch.n_star}
    index = enumerate_support(data, full_outcomes=True)
    cells = cell_frequencies(data, index)
    fe = femle(cells, ns.link, scalar_beta_grid(ns.beta_lo, ns.beta_hi, ns.beta_step), query)
    out["femle"] = {
        "beta_tilde": fe.beta_tilde,
        "effects": fe.effects,
        "effect_identified": fe.effect_identified,
        "effect_average": fe.effect_average,
    }
    return out


def _cmd_bounds(ns) -> dict:
    data = read_panel_csv(ns.data)
    query = _query(ns)
    bounds = OutcomeBounds(ns.blower, ns.bupper)
    index = enumerate_support(data)
    if ns.model == "dynamic":
        est = dynamic_bounds(data, index, query, bounds)
        rows = []
    else:
        cells = cell_frequencies(data, index)
        part = partition_support(index, cells, query)
        est = static_bounds(cell_means(data, index, query), cells, part, query, bounds, ns.monotone)
        groups = {int(k): g for g, ks in (("star", part.k_star), ("tilde", part.k_tilde), ("bar", part.k_bar)) for k in ks}
        rows = [
            {"k": k, "history": "".join(map(str, index.histories[k].ravel())), "mass": float(cells.p_x[k]), "group": groups.get(k, "none")}
            for k in range(index.K)
        ]
    if ns.emit_csv and rows:
        _write_rows(ns.emit_csv, rows)
    return {
        "mu_lower": est.mu_lower,
        "mu_upper": est.mu_upper,
        "width": est.width,
        "identified_component": est.identified_component,
        "partition_masses": est.partition_masses,
        "monotone_sign": est.monotone_sign,
        "histories": rows,
    }


def _cells_for(ns):
    if ns.data is not None:
        data = read_panel_csv(ns.data)
        return cell_frequencies(data, enumerate_support(data, full_outcomes=True))
    spec = "correlated" if ns.exact == "static" else "honore_tamer_plus_correlated"
    return exact_cells(StaticDgp(ns.T, ns.pX, ns.beta, ns.link, spec))


def _cmd_setid(ns) -> dict:
    cells = _cells_for(ns)
    grid = _grid(ns)
    sid = estimate_identified_set(cells, grid, ns.link, ns.scheme)
    eb = effect_bounds(sid, _query(ns))
    rows = [
        {"k": k, "history": "".join(map(str, cells.index.histories[k].ravel())), "lower": eb.lower[k], "upper": eb.upper[k]}
        for k in range(cells.K)
    ]
    curve = [
        {"beta": float(sid.beta_grid[g, 0]), "objective": float(sid.objective[g]), "member": int(sid.members[g])}
        for g in range(len(sid.beta_grid))
    ]
    if ns.emit_csv:
        _write_rows(ns.emit_csv, rows)
        _write_rows(ns.emit_csv.with_name(ns.emit_csv.stem + "_objective.csv"), curve)
    return {
        "beta_grid": sid.beta_grid[:, 0],
        "objective": sid.objective,
        "projected": sid.projected().p_y_given_x,
        "n_eff": effective_n(cells),
        "epsilon": sid.epsilon,
        "lambda": sid.lam,
        "members": sid.member_betas[:, 0],
        "argmin": sid.beta_grid[sid.argmin, 0],
        "min_objective": sid.min_value,
        "near_tie": sid.near_tie,
        "effect_bounds": rows,
        "aggregate": eb.aggregate,
    }


def _cmd_infer(ns) -> dict:
    data = read_panel_csv(ns.data)
    query = _query(ns)
    if ns.method in ("normal", "boot"):
        res = np_bounds_ci(
            data,
            query,
            OutcomeBounds(ns.blower, ns.bupper),
            ns.level,
            "normal" if ns.method == "normal" else "bootstrap",
            ns.reps,
            ns.model,
            ns.monotone,
            ns.seed,
        )
        return {"estimate": res.estimate, "lower_ci": res.lower_ci, "upper_ci": res.upper_ci, "region": res.region, "se": res.se}
    cells = cell_frequencies(data, enumerate_support(data, full_outcomes=True))
    grid = _grid(ns)
    if ns.method in ("mp", "canonical"):
        reg = modified_projection(
            cells, data.n, ns.level, grid, ns.draws, query, ns.link, ns.seed, ns.method == "canonical", ns.scheme, ns.threads
        )
        return {
            "beta_region": reg.member_betas[:, 0],
            "empty": reg.empty,
            "effect_lower": reg.effect_lower,
            "effect_upper": reg.effect_upper,
            "aggregate": reg.aggregate,
            "accepted": reg.accepted,
            "draws": reg.draws,
            "min_statistic": reg.min_statistic,
            "critical": reg.critical,
        }
    plan = BootstrapPlan(ns.R, ns.gamma, ns.alpha1, ns.alpha2, ns.inner, ns.seed)
    res = perturbed_bootstrap(cells, data.n, Functional.parse(ns.theta, query), plan, grid, ns.link, "chisq", ns.threads)
    return {
        "interval": [res.lower, res.upper],
        "theta_hat": res.theta_hat,
        "draws": res.draws,
        "accepted": len(res.theta_candidates),
        "quantile_spread": {
            "q_high": [float(res.q_high.min()), float(res.q_high.max())],
            "q_low": [float(res.q_low.min()), float(res.q_low.max())],
        },
    }


def _cmd_simulate(ns) -> dict:
    if ns.dgp == "markov":
        dgp = MarkovDgp(honore_tamer_alpha(), ns.stay, ns.stay, order=ns.order, beta=ns.beta, link=ns.link, T=ns.T)
    else:
        spec = "correlated" if ns.dgp == "static" else "honore_tamer_plus_correlated"
        dgp = StaticDgp(ns.T, ns.pX, ns.beta, ns.link, spec)
    data = generate(dgp, ns.n, ns.seed)
    write_panel_csv(data, ns.out)
    return {"path": str(ns.out), "n": data.n, "T": data.T, "mean_y": float(data.y.mean()), "mean_x": float(data.x.mean())}


def _cmd_figures(ns) -> dict:
    if ns.which == "table1":
        rows = table1_surface(ns.T_list, ns.p_list, ns.beta)
    else:
        rows = []
        grid = _grid(ns)
        for link in ("logit", "probit"):
            for T in ns.T_list:
                cells = exact_cells(StaticDgp(T, 0.5, ns.beta, link))
                sid = estimate_identified_set(cells, grid, link)
                for g in range(len(sid.beta_grid)):
                    rows.append(
                        {
                            "link": link,
                            "T": T,
                            "beta": float(sid.beta_grid[g, 0]),
                            "objective": float(sid.objective[g]),
                            "member": int(sid.members[g]),
                        }
                    )
    if ns.emit_csv:
        _write_rows(ns.emit_csv, rows)
    return {"rows": rows}


# ---------------------------------------------------------------------------
# parser


def _add_query(p):
    p.add_argument("--x-tilde", type=_ints, default=(1,), help="comma-separated target regressor value")
    p.add_argument("--x-bar", type=_ints, default=(0,), help="comma-separated baseline regressor value")
    p.add_argument("--distance", type=float, default=1.0)


def _add_grid(p, lo=-3.0, hi=3.0, step=0.01):
    p.add_argument("--beta-lo", type=float, default=lo)
    p.add_argument("--beta-hi", type=float, default=hi)
    p.add_argument("--beta-step", type=float, default=step)
    p.add_argument("--epsilon", type=float, default=None, help="membership cutoff (default log n / n)")
    p.add_argument("--weight-iterations", type=int, default=3)


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--threads", type=int, default=1, help="worker processes; results do not depend on it")
    p.add_argument("--json", type=Path, default=None, help="write the JSON result here instead of stdout")
    p.add_argument("--emit-csv", type=Path, default=None, help="also write the result table as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panelbounds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="within, switcher-average and fixed-effects ML slopes")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--link", choices=("logit", "probit"), default="logit")
    _add_query(p)
    _add_grid(p)
    _add_common(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("bounds", help="nonparametric bounds on the average effect")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", choices=("static", "dynamic"), default="static")
    p.add_argument("--blower", type=float, default=0.0)
    p.add_argument("--bupper", type=float, default=1.0)
    p.add_argument("--monotone", action="store_true")
    _add_query(p)
    _add_common(p)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("setid", help="identified slope set and effect bounds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path)
    src.add_argument("--exact", choices=("static", "ht"), help="exact population cells of a built-in design")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--pX", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--link", choices=("logit", "probit"), default="logit")
    p.add_argument("--scheme", choices=("iterated", "chisq"), default="iterated")
    _add_query(p)
    _add_grid(p)
    _add_common(p)
    p.set_defaults(func=_cmd_setid)

    p = sub.add_parser("infer", help="confidence regions and intervals")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--method", choices=("mp", "pb", "normal", "boot", "canonical"), default="mp")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--alpha1", type=float, default=0.02)
    p.add_argument("--alpha2", type=float, default=0.02)
    p.add_argument("--draws", type=int, default=50_000)
    p.add_argument("--R", type=int, default=100)
    p.add_argument("--inner", type=int, default=200)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--theta", default="upper:0", help="functional: upper:K, lower:K, beta_upper or beta_lower")
    p.add_argument("--link", choices=("logit", "probit"), default="logit")
    p.add_argument("--scheme", choices=("iterated", "chisq"), default="iterated")
    p.add_argument("--model", choices=("static", "dynamic"), default="static")
    p.add_argument("--blower", type=float, default=0.0)
    p.add_argument("--bupper", type=float, default=1.0)
    p.add_argument("--monotone", action="store_true")
    _add_query(p)
    _add_grid(p, 0.0, 2.0, 0.05)
    _add_common(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("simulate", help="draw a panel from a built-in design and write it as CSV")
    p.add_argument("--dgp", choices=("static", "ht", "markov"), default="ht")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--pX", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--link", choices=("logit", "probit"), default="logit")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--stay", type=float, default=0.7, help="markov: probability of repeating the last regressor value")
    p.add_argument("--order", type=int, default=1, help="markov: chain order")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("figures", help="plot-ready tables")
    p.add_argument("--which", choices=("table1", "idsets"), required=True)
    p.add_argument("--T-list", dest="T_list", type=_ints, default=(2, 3, 4, 6))
    p.add_argument("--p-list", dest="p_list", type=_floats, default=[0.1, 0.3, 0.5])
    p.add_argument("--beta", type=float, default=1.0)
    _add_grid(p, 0.0, 2.0, 0.05)
    _add_common(p)
    p.set_defaults(func=_cmd_figures)
    return parser


def _resolve_seed(ns) -> None:
    if ns.seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            ns.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise _UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _config(ns) -> dict:
    cfg = {k: v for k, v in vars(ns).items() if k not in _NOT_ECHOED}
    return _clean({k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())})


def run(argv=None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        _resolve_seed(ns)
        if ns.threads < 1:
            raise _UsageError("--threads must be at least 1")
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        result = ns.func(ns)
    except UnbalancedPanel as exc:
        print(f"error: {exc}", file=sys.stderr)
        for row in exc.rows:
            print(f"  {row}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, EmptyRegionDiagnostic, BudgetExceeded) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PanelBoundsError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    doc = {"format_version": FORMAT_VERSION, "command": ns.command, "config": _config(ns), "result": _clean(result)}
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if ns.json is not None:
        ns.json.write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
