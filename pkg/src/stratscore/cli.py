"""Command-line entry point.

Exit codes: 0 success, 2 argument or config parse error, 3 model validation
failure, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import covmodel as cm
from .commitment import (
    CommitmentReport,
    SimpleSetting,
    build_simple_setting,
    commitment_report,
    solve_screening,
    sweep_feature_weights,
)
from .covmodel import CovarianceModel
from .dynamics import integrate_br_dynamics
from .errors import SolverError, StratScoreError, UnsupportedDimension
from .examples import SCENARIOS, nonmonotone
from .montecarlo import check_lce, empirical_loss_se, sample, write_sclb
from .scoring import (
    ex_post_best_response,
    pi_sweep,
    solve_efficient_scoring,
    solve_partial_disclosure,
    solve_scoring_noisy,
    trace_obedient_curve,
)
from .signaling import (
    Coefficients,
    info_loss_sweep,
    receiver_loss,
    solve_signaling,
    solve_signaling_general,
)
from .tables import SweepTable, write_csv

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3, 4


class ConfigError(Exception):
    """Config file unreadable or malformed (exit code 2)."""


@dataclass
class ScenarioConfig:
    model: CovarianceModel
    simple_setting: SimpleSetting | None = None
    command: str | None = None
    parameters: dict[str, Any] = field(default_factory=dict)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a bare model JSON or a scenario {model | simple_setting, command, parameters}."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "model" not in data and "simple_setting" not in data:
        return ScenarioConfig(cm.CovarianceModel.from_dict(data))
    extra = set(data) - {"model", "simple_setting", "command", "parameters"}
    if extra:
        raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
    if ("model" in data) == ("simple_setting" in data):
        raise ConfigError("scenario needs exactly one of model / simple_setting")
    params = data.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object")
    if "simple_setting" in data:
        s = SimpleSetting.from_dict(data["simple_setting"])
        return ScenarioConfig(build_simple_setting(s), s, data.get("command"), params)
    return ScenarioConfig(cm.CovarianceModel.from_dict(data["model"]), None, data.get("command"), params)


# ---------------------------------------------------------------------------
# formatting


def _num(x: float) -> str:
    return "%.6g" % x


def _vec(b) -> str:
    b = np.atleast_1d(b)
    return _num(b[0]) if b.size == 1 else "(" + ", ".join(_num(x) for x in b) + ")"


def summary_line(label: str, c: Coefficients, extra: str = "") -> str:
    line = f"{label}: b={_vec(c.b)} b0={_num(c.b0)} loss={_num(c.receiver_loss)} residual={c.residual_norm:.2e}"
    return line + (" " + extra if extra else "")


def _write_json(out: Path | None, name: str, payload: Any) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    with open(out / name, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def emit_figure_data(
    obj: CommitmentReport | SweepTable,
    out_dir: str | Path,
    model: CovarianceModel | None = None,
    curve: bool | None = None,
    n_angles: int = 720,
) -> list[Path]:
    """Write the CSV data behind the figures.

    A table is written as ``sweep.csv``. A report is written as
    ``regimes.csv``; with ``model`` given, the obedient curve goes to
    ``obedient_curve.csv``. ``curve=None`` traces it only for k = 2, while
    ``curve=True`` insists and raises UnsupportedDimension otherwise.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if isinstance(obj, SweepTable):
        obj.to_csv(out / "sweep.csv")
        return [out / "sweep.csv"]
    k = obj.beta.size
    header = ["regime"] + [f"b_{i+1}" for i in range(k)] + ["b0", "loss", "norm4gamma"]
    rows = [
        ["beta", *obj.beta, float("nan"), float("nan"), obj.norms[0]],
        ["signal", *obj.b_signal.b, obj.b_signal.b0, obj.losses[0], obj.norms[1]],
        ["score", *obj.b_score.b, obj.b_score.b0, obj.losses[1], obj.norms[2]],
        ["screen", *obj.b_screen.b, obj.b_screen.b0, obj.losses[2], obj.norms[3]],
    ]
    write_csv(out / "regimes.csv", header, rows)
    written.append(out / "regimes.csv")
    if model is not None and (curve or (curve is None and model.k == 2)):
        if model.k != 2:
            raise UnsupportedDimension("obedient curve tracing needs k = 2")
        pts = trace_obedient_curve(model, n_angles)
        write_csv(out / "obedient_curve.csv", ["angle", "radius", "b_1", "b_2"], pts)
        written.append(out / "obedient_curve.csv")
    return written


def parse_grid(spec: str) -> np.ndarray:
    try:
        start, stop, steps = spec.split(":")
        n = int(steps)
        lo, hi = float(start), float(stop)
    except ValueError as exc:
        raise ConfigError(f"--grid expects start:stop:steps, got {spec!r}") from exc
    if n < 0:
        raise ConfigError("--grid steps must be nonnegative")
    return np.linspace(lo, hi, n) if n != 1 else np.array([lo])


def parse_observed(spec: str, k: int) -> list[int]:
    if spec.strip() == "":
        return []
    try:
        idx = [int(x) - 1 for x in spec.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--observed expects 1-based indices i,j,..., got {spec!r}") from exc
    if any(i < 0 or i >= k for i in idx):
        raise ConfigError(f"--observed indices must lie in 1..{k}")
    return idx


# ---------------------------------------------------------------------------
# commands


def _solve_regime(cfg: ScenarioConfig, args, out: Path | None) -> list[str]:
    model = cfg.model
    regime = args.regime or cfg.parameters.get("regime", "all")
    pi = args.pi if args.pi is not None else cfg.parameters.get("pi")
    observed = args.observed if args.observed is not None else cfg.parameters.get("observed")
    lines: list[str] = []
    if regime == "signal":
        c = solve_signaling(model)
        lines.append(summary_line("signal", c))
        _write_json(out, "solution.json", c.to_dict())
    elif regime == "screen":
        c = solve_screening(model)
        lines.append(summary_line("screen", c))
        _write_json(out, "solution.json", c.to_dict())
    elif regime == "score":
        if observed is not None:
            idx = parse_observed(observed, model.k) if isinstance(observed, str) else [int(i) - 1 for i in observed]
            c = solve_partial_disclosure(model, idx)
            lines.append(summary_line("partial", c, f"observed={','.join(str(i + 1) for i in idx)}"))
            _write_json(out, "solution.json", c.to_dict())
        else:
            sol = solve_efficient_scoring(model, float(pi)) if pi is not None else solve_scoring_noisy(model)
            lam = "none" if sol.lambda_ is None else _num(sol.lambda_)
            lines.append(summary_line("score", sol.coeffs, f"lambda={lam} t2={_num(sol.t ** 2)}"))
            _write_json(out, "solution.json", sol.to_dict())
    elif regime == "all":
        rep = commitment_report(model)
        lam = "none" if rep.lambda_ is None else _num(rep.lambda_)
        lines.append(f"beta: b={_vec(rep.beta)}")
        lines.append(summary_line("signal", rep.b_signal))
        lines.append(summary_line("score", rep.b_score, f"lambda={lam}"))
        lines.append(summary_line("screen", rep.b_screen))
        lines.append("norms: " + " ".join(_num(x) for x in rep.norms) + f" ordering_ok={rep.ordering_ok}")
        _write_json(out, "report.json", rep.to_dict())
        if out is not None:
            emit_figure_data(rep, out, model)
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    return lines


def _solve_general(cfg: ScenarioConfig, out: Path | None) -> list[str]:
    eq = solve_signaling_general(cfg.model, seed=int(cfg.parameters.get("seed", 0)))
    lines = [summary_line(f"equilibrium {n + 1}", c) for n, c in enumerate(eq.solutions)]
    lines.append(f"equilibria: {len(eq)} complete={eq.complete}")
    _write_json(
        out,
        "equilibria.json",
        {"complete": eq.complete, "solutions": [c.to_dict() for c in eq.solutions]},
    )
    return lines


def _sweep(cfg: ScenarioConfig, args, out: Path | None) -> list[str]:
    kind = args.kind or cfg.parameters.get("kind")
    grid_spec = args.grid or cfg.parameters.get("grid")
    if grid_spec is None:
        raise ConfigError("sweep needs --grid start:stop:steps")
    grid = parse_grid(grid_spec) if isinstance(grid_spec, str) else np.asarray(grid_spec, dtype=float)
    if kind == "info-loss":
        table = info_loss_sweep(cfg.model, grid)
    elif kind == "feature-weights":
        if cfg.simple_setting is None:
            raise ConfigError("feature-weights sweep needs a simple_setting config")
        vary = int(cfg.parameters.get("vary_index", cfg.simple_setting.k)) - 1
        table = sweep_feature_weights(cfg.simple_setting, vary, grid)
    elif kind == "pi":
        table = pi_sweep(cfg.model, grid)
    else:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    if out is not None:
        emit_figure_data(table, out)
    return [f"sweep {kind}: {len(table)} rows"]


def _dynamics(cfg: ScenarioConfig, out: Path | None) -> list[str]:
    p = cfg.parameters
    k = cfg.model.k
    tr = integrate_br_dynamics(
        cfg.model,
        p.get("a0", [0.0] * k),
        p.get("b0", [0.0] * k),
        float(p.get("horizon", 20.0)),
        float(p.get("dt", 0.01)),
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        tr.to_csv(out / "trace.csv")
    return [
        f"dynamics: b={_vec(tr.b_path[-1])} distance={tr.distances[-1]:.3e} "
        f"rate={_num(tr.rate_estimate)} r2={_num(tr.r_squared)} converged={tr.converged}"
    ]


def _verify(cfg: ScenarioConfig, args, out: Path | None) -> list[str]:
    p = cfg.parameters
    family = args.family or p.get("family", "gaussian")
    n = int(args.n if args.n is not None else p.get("n", 100000))
    seed = int(args.seed if args.seed is not None else p.get("seed", 0))
    model = cfg.model
    batch = sample(model, family, n, seed, p.get("dof"))
    targets: list[tuple[str, Coefficients]] = []
    rep = cm.assumption_report(model)
    if rep.assumption_A_relaxed and rep.assumption_B:
        targets.append(("signal", solve_signaling(model)))
        targets.append(("score", solve_scoring_noisy(model).coeffs))
    else:
        targets.extend(("signal", c) for c in solve_signaling_general(model).solutions[:1])
    lines = []
    results = []
    for label, c in targets:
        lce = check_lce(batch, c.b)
        loss, se = empirical_loss_se(batch, c)
        analytic = c.receiver_loss
        entry = {
            "regime": label,
            "loss_empirical": loss,
            "loss_se": se,
            "loss_analytic": analytic,
            "slope": lce.slope,
            "slope_se": lce.slope_se,
            "square_t": lce.square_t,
            "cube_t": lce.cube_t,
            "skipped": lce.skipped,
        }
        results.append(entry)
        lines.append(
            f"verify {label}: slope={_num(lce.slope)}±{_num(lce.slope_se)} "
            f"loss={_num(loss)}±{_num(se)} analytic={_num(analytic)}"
        )
    _write_json(out, "verify.json", {"family": batch.family, "n": n, "seed": seed, "checks": results})
    if out is not None and p.get("save_batch"):
        write_sclb(batch, out / "batch.sclb")
    return lines


def _example(name: str, out: Path | None) -> list[str]:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(SCENARIOS)}")
    sc = SCENARIOS[name]
    model = sc.model()
    lines: list[str] = []
    if sc.action == "signal":
        c = solve_signaling(model)
        lines.append(summary_line("signal", c))
        _write_json(out, "solution.json", c.to_dict())
    elif sc.action == "nonmonotone":
        payload = {}
        for g2 in (1.0, 2.0):
            c = solve_signaling(nonmonotone(g2))
            lines.append(summary_line(f"signal var(gamma_2)={_num(g2)}", c))
            payload[f"gamma2_var_{g2:g}"] = c.to_dict()
        _write_json(out, "solution.json", payload)
    elif sc.action == "all":
        rep = commitment_report(model)
        lines.append(summary_line("signal", rep.b_signal))
        lines.append(summary_line("score", rep.b_score, f"lambda={_num(rep.lambda_)}"))
        lines.append(summary_line("screen", rep.b_screen))
        expost = ex_post_best_response(model, solve_scoring_noisy(model))
        lines.append(f"ex-post best response: b={_vec(expost)}")
        lines.append(f"b_signal={_vec(rep.b_signal.b)} b_score={_vec(rep.b_score.b)}")
        _write_json(out, "report.json", rep.to_dict())
        if out is not None:
            emit_figure_data(rep, out, model)
    elif sc.action == "noisy":
        sol = solve_scoring_noisy(model)
        lines.append(summary_line("score", sol.coeffs, f"t2={_num(sol.t ** 2)} noise_ratio={_num(sol.noise_ratio)}"))
        _write_json(out, "solution.json", sol.to_dict())
    elif sc.action == "general":
        lines.extend(_solve_general(ScenarioConfig(model), out))
    return lines


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratscore", description="Linear equilibria of strategic scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        p.add_argument("--config", required=needs_config, help="model or scenario JSON")
        p.add_argument("--out", help="directory for JSON/CSV outputs")

    p = sub.add_parser("validate", help="check a model and report covariance assumptions")
    common(p)
    p = sub.add_parser("solve", help="solve one regime or compare all three")
    common(p)
    p.add_argument("--regime", choices=["signal", "score", "screen", "all"])
    p.add_argument("--pi", type=float, help="Pareto weight on the sender (score regime)")
    p.add_argument("--observed", help="1-based indices of features the receiver sees (score regime)")
    p = sub.add_parser("solve-general", help="enumerate equilibria without the covariance assumptions")
    common(p)
    p = sub.add_parser("sweep", help="parameter sweeps")
    common(p)
    p.add_argument("--kind", choices=["info-loss", "feature-weights", "pi"])
    p.add_argument("--grid", help="start:stop:steps")
    p = sub.add_parser("dynamics", help="integrate best-response dynamics")
    common(p)
    p = sub.add_parser("verify", help="Monte Carlo checks")
    common(p)
    p.add_argument("--family", help="gaussian, uniform_ellipsoid or student:DOF")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p = sub.add_parser("example", help="run a bundled example")
    p.add_argument("name", choices=sorted(SCENARIOS))
    p.add_argument("--out", help="directory for JSON/CSV outputs")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_PARSE
    out = Path(args.out) if getattr(args, "out", None) else None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, cat, *a, **k: print(f"warning: {cat.__name__}: {msg}", file=sys.stderr)
            if args.command == "example":
                lines = _example(args.name, out)
            else:
                cfg = load_config(args.config)
                if args.command == "validate":
                    rep = cm.validate(cfg.model)
                    lines = [
                        f"valid: k={cfg.model.k} assumption_A={rep.assumption_A} "
                        f"assumption_A_relaxed={rep.assumption_A_relaxed} assumption_B={rep.assumption_B} "
                        f"gamma_gamma_pd={rep.gamma_gamma_pd}"
                    ]
                    _write_json(out, "validate.json", {
                        "assumption_A": rep.assumption_A,
                        "assumption_A_relaxed": rep.assumption_A_relaxed,
                        "assumption_B": rep.assumption_B,
                        "gamma_gamma_pd": rep.gamma_gamma_pd,
                        "details": list(rep.details),
                    })
                else:
                    cm.validate(cfg.model)
                    if args.command == "solve":
                        lines = _solve_regime(cfg, args, out)
                    elif args.command == "solve-general":
                        lines = _solve_general(cfg, out)
                    elif args.command == "sweep":
                        lines = _sweep(cfg, args, out)
                    elif args.command == "dynamics":
                        lines = _dynamics(cfg, out)
                    else:
                        lines = _verify(cfg, args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (StratScoreError, ValueError) as exc:
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for line in lines:
        print(line)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
