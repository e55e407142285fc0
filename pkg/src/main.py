# src/main.py
"""
Command line: python -m src.main <command> [flags]

Commands: critical, region, branch, eigs, reconstruct, verify.
JSON output carries full double precision, text output 6 significant digits.
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import config
from .closed_forms import (
    BifurcationClass,
    ModelParams,
    alpha_c,
    alpha_s,
    classify,
    closed_forms,
    lambda_of,
    o_total,
    p0sq_bound,
    solve_critical_pair,
)
from .errors import (
    AnnulusError,
    DirectionMismatchError,
    InadmissibleStateError,
    InsufficientDataError,
    ParameterDomainError,
    ReconstructionError,
)
from .fields import make_grid
from .linops import compute_spectrum
from .nonlinear import (
    amplitude,
    continue_branch,
    detect_direction,
    local_branch,
    local_expansion,
    solve_at_amplitude,
    trivial_field,
)
from .plots import save_polar_surface_svg, save_region_svg
from .reconstruct import (
    DimensionalParams,
    bernoulli_check,
    lambda_relation_error,
    mass_flux,
    momentum_pressure_check,
    reconstruct,
    round_trip_error,
    save_dimensional_csv,
    save_fields_csv,
    save_surface_csv,
)
from .region import interface_components, subcritical_boundary_components, sweep_region
from .storage import load_config, save_json
from .utils import fmt_num, parse_range
from .verify import EXAMPLES, run_verify

logger = logging.getLogger(__name__)


# -----------------------------
# Output
# -----------------------------
def _emit(payload: Dict[str, Any], fmt: str, lines: Optional[List[str]] = None) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2))
        return
    if lines is None:
        lines = [f"{k}: {fmt_num(v) if isinstance(v, float) else v}" for k, v in payload.items()
                 if not isinstance(v, (list, dict))]
    print("\n".join(lines))


def _params_from_args(args) -> Dict[str, Any]:
    """Resolve (gamma, lambda | p0sq) into the parameter tuple, alpha_c and lambda."""
    if args.p0sq is not None:
        params = ModelParams(args.gamma, args.p0sq)
        a_c = alpha_c(params)
        lam = lambda_of(params, a_c)
    elif args.lam is not None:
        a_c, P = solve_critical_pair(args.gamma, args.lam)
        params = ModelParams(args.gamma, P)
        lam = args.lam
    else:
        raise ParameterDomainError("either --lambda or --p0sq is required")
    return {"params": params, "alpha_c": a_c, "lambda": lam}


def _grid(args):
    return make_grid(args.nq or config.DEFAULT_NQ, args.np or config.DEFAULT_NP)


def _stem(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root if ext.lower() in (".csv", ".svg", ".json") else path


# -----------------------------
# Commands
# -----------------------------
def cmd_critical(args) -> int:
    resolved = _params_from_args(args)
    params = resolved["params"]
    payload: Dict[str, Any] = {
        "gamma": params.gamma,
        "lambda": resolved["lambda"],
        "p0sq": params.p0sq,
        "p0sq_bound": p0sq_bound(params.gamma),
        "alpha_s": alpha_s(params),
        "alpha_c": resolved["alpha_c"],
    }
    if params.p0sq == 0.0:
        payload.update({"o_total": None, "class": BifurcationClass.DEGENERATE.value,
                        "note": "p0sq = 0: boundary of the feasible region, bifurcation coefficient undefined"})
    else:
        bundle = closed_forms(params).to_dict()
        bundle.pop("alpha_s")
        bundle.pop("alpha_c")
        payload.update(bundle)
        payload["class"] = classify(params).value
    logger.info("critical: alpha_c=%.10g class=%s", payload["alpha_c"], payload["class"])
    _emit(payload, args.format)
    return 0


def cmd_region(args) -> int:
    g_range = parse_range(args.gamma_range)
    l_range = parse_range(args.lambda_range)
    res = args.resolution
    resolution = (res[0], res[-1])
    sweep = sweep_region(g_range, l_range, resolution, jobs=args.jobs)
    stem = _stem(args.out)
    files = []
    if args.emit in ("csv", "both"):
        sweep.save_csv(stem + ".csv")
        files.append(stem + ".csv")
    examples = {}
    markers = []
    for name, ((g, lam), _) in EXAMPLES.items():
        if g_range[0] <= g <= g_range[1] and l_range[0] <= lam <= l_range[1]:
            cell = sweep.nearest(g, lam)
            examples[name] = cell.cls.value if cell.feasible else "infeasible"
            markers.append((g, lam, name))
        else:
            examples[name] = "outside window"
    if args.emit in ("svg", "both"):
        save_region_svg(stem + ".svg", sweep, markers)
        files.append(stem + ".svg")
    payload = {
        "gamma_range": list(g_range),
        "lambda_range": list(l_range),
        "resolution": list(resolution),
        "counts": sweep.counts(),
        "subcritical_boundary_components": subcritical_boundary_components(sweep),
        "interface_components": interface_components(sweep),
        "examples": examples,
        "files": files,
    }
    lines = [f"{k}: {v}" for k, v in sweep.counts().items()]
    lines += [f"{name}: {cls}" for name, cls in examples.items()]
    lines.append(f"subcritical boundary components: {payload['subcritical_boundary_components']}")
    lines += [f"wrote {f}" for f in files]
    _emit(payload, args.format, lines)
    return 0


def cmd_branch(args) -> int:
    resolved = _params_from_args(args)
    params = resolved["params"]
    grid = _grid(args)
    branch = continue_branch(
        params, grid=grid, steps=args.steps, ds=args.ds, ds_max=args.ds_max,
        direction=-1 if args.mirror else 1,
    )
    if args.mirror:
        logger.debug("mirror branch followed with the negated initial tangent")
    stem = _stem(args.out)
    branch.save_csv(stem + ".csv")
    files = [stem + ".csv"]
    if args.dump_fields:
        branch.save_json(stem + ".json", dump_fields=True)
        files.append(stem + ".json")

    expected = classify(params)
    direction, c, rel, c_expansion = None, None, None, None
    if branch.points:
        # the direction is read inside the local window, whatever the step size
        expansion = local_expansion(params, grid)
        local = local_branch(params, grid, expansion=expansion)
        c_expansion = expansion.c
        try:
            fit = detect_direction(local.points, local.alpha_c, o_total(params))
            direction, c, rel = fit.direction.value, fit.c, fit.relative_residual
        except InsufficientDataError as exc:
            logger.warning("no direction: %s", exc)
    payload = {
        "gamma": params.gamma,
        "p0sq": params.p0sq,
        "alpha_c": branch.alpha_c,
        "points": len(branch.points),
        "truncated": branch.truncated,
        "direction": direction,
        "c": c,
        "fit_relative_residual": rel,
        "expansion_c": c_expansion,
        "closed_form_class": expected.value,
        "files": files,
    }
    lines = [f"{k}: {fmt_num(v) if isinstance(v, float) or v is None else v}" for k, v in payload.items()
             if k != "files"]
    lines += [f"wrote {f}" for f in files]
    _emit(payload, args.format, lines)
    if direction is not None and direction != expected.value:
        raise DirectionMismatchError(f"branch is {direction}, closed form says {expected.value}")
    return 0


def cmd_eigs(args) -> int:
    params = _params_from_args(args)["params"]
    spectrum = compute_spectrum(params, args.alpha, args.kmax or config.DEFAULT_KMAX, args.np or config.DEFAULT_NP)
    payload = spectrum.to_dict()
    lines = [f"alpha: {fmt_num(spectrum.alpha)}"]
    for k, vals in enumerate(spectrum.per_k):
        top = sorted(vals, reverse=True)[:3]
        lines.append(f"k={k}: " + ", ".join(fmt_num(v) for v in top))
    lines.append(f"morse index: {spectrum.morse_index}")
    _emit(payload, args.format, lines)
    return 0


def cmd_reconstruct(args) -> int:
    resolved = _params_from_args(args)
    params = resolved["params"]
    grid = _grid(args)
    if args.amplitude is not None:
        if args.alpha is not None:
            logger.warning("--alpha is ignored with --amplitude; alpha follows the branch")
        state = solve_at_amplitude(params, args.amplitude, grid)
        h, alpha = state.h, state.alpha
    else:
        h = trivial_field(grid, params.gamma)
        alpha = resolved["alpha_c"] if args.alpha is None else args.alpha

    dim = None
    if args.radius is not None:
        dim = DimensionalParams.from_alpha(alpha, a=args.radius, rho=args.density, g=args.gravity, p_atm=args.p_atm)
    try:
        fields = reconstruct(h, params, alpha, nr=args.nr, dim=dim)
    except InadmissibleStateError as exc:
        raise ReconstructionError(str(exc)) from exc

    stem = _stem(args.out)
    save_fields_csv(fields, stem + "_fields.csv")
    save_surface_csv(fields, stem + "_surface.csv")
    save_polar_surface_svg(stem + "_surface.svg", fields.theta, fields.S,
                           title=f"gamma={params.gamma:g}, alpha={alpha:.6g}")
    files = [stem + "_fields.csv", stem + "_surface.csv", stem + "_surface.svg"]
    if dim is not None:
        save_dimensional_csv(fields, stem + "_dimensional.csv")
        files.append(stem + "_dimensional.csv")

    E, spread = bernoulli_check(fields, params, alpha)
    gap, _ = momentum_pressure_check(h, params, alpha)
    flux = mass_flux(fields)
    payload = {
        "gamma": params.gamma,
        "p0sq": params.p0sq,
        "alpha": alpha,
        "amplitude": amplitude(h, params),
        "surface_min": float(np.min(fields.S)),
        "surface_max": float(np.max(fields.S)),
        "bernoulli_constant": E,
        "bernoulli_spread": spread,
        "momentum_pressure_gap": gap,
        "flux_spread": float(flux.max() - flux.min()),
        "round_trip_error": round_trip_error(fields),
        "lambda_relation_error": lambda_relation_error(fields, params, alpha),
        "files": files,
    }
    if params.p0sq == 0.0:
        payload["note"] = "p0sq = 0: relative flow vanishes, V = R"
    lines = [f"{k}: {fmt_num(v) if isinstance(v, float) else v}" for k, v in payload.items() if k != "files"]
    lines += [f"wrote {f}" for f in files]
    _emit(payload, args.format, lines)
    return 0


def cmd_verify(args) -> int:
    report = run_verify(args.level)
    _emit(report.to_dict(), args.format, report.lines())
    if args.out:
        save_json(args.out, report.to_dict())
    return 0 if report.passed else 1


# -----------------------------
# Parser
# -----------------------------
class CommandFlags:
    """Subcommand parsers and the flag actions added to each, for config-file defaults."""

    def __init__(self) -> None:
        self.parsers: Dict[str, argparse.ArgumentParser] = {}
        self.actions: Dict[str, List[argparse.Action]] = {}
        self.common: List[argparse.Action] = []

    def command(self, sub, name: str, common: argparse.ArgumentParser, summary: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=summary)
        self.parsers[name] = p
        self.actions[name] = []
        return p

    def add(self, name: str, *flags: str, **kwargs) -> argparse.Action:
        action = self.parsers[name].add_argument(*flags, **kwargs)
        self.actions[name].append(action)
        return action

    def apply_defaults(self, defaults: Dict[str, Any]) -> None:
        for name, p in self.parsers.items():
            actions = self.actions[name] + self.common
            p.set_defaults(**{a.dest: defaults[a.dest] for a in actions if a.dest in defaults})
            for a in self.actions[name]:
                if a.dest in defaults:
                    a.required = False


def _common(flags: CommandFlags) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    flags.common = [
        common.add_argument("--config", help="JSON file of flag defaults"),
        common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR"),
        common.add_argument("--format", choices=["json", "text"], default="text"),
    ]
    return common


def _point_flags(flags: CommandFlags, name: str) -> None:
    flags.add(name, "--gamma", type=float, required=True)
    group = flags.parsers[name].add_mutually_exclusive_group()
    flags.actions[name] += [
        group.add_argument("--lambda", dest="lam", type=float),
        group.add_argument("--p0sq", type=float),
    ]


def _grid_flags(flags: CommandFlags, name: str) -> None:
    flags.add(name, "--nq", type=int, default=None)
    flags.add(name, "--np", type=int, default=None)


def build_cli() -> Tuple[argparse.ArgumentParser, CommandFlags]:
    flags = CommandFlags()
    common = _common(flags)
    parser = argparse.ArgumentParser(prog="annulus", description="Bifurcation of steady waves in an annulus")
    sub = parser.add_subparsers(dest="command", required=True)

    flags.command(sub, "critical", common, "closed-form critical values and class")
    _point_flags(flags, "critical")
    flags.parsers["critical"].set_defaults(func=cmd_critical)

    flags.command(sub, "region", common, "classify the (gamma, lambda) plane")
    flags.add("region", "--gamma-range", default="0.05:0.95")
    flags.add("region", "--lambda-range", default="0.5:2.5")
    flags.add("region", "--resolution", type=int, nargs="+", default=[101, 101])
    flags.add("region", "--out", default="region")
    flags.add("region", "--emit", choices=["csv", "svg", "both"], default="both")
    flags.add("region", "--jobs", type=int, default=None)
    flags.parsers["region"].set_defaults(func=cmd_region)

    flags.command(sub, "branch", common, "continue the bifurcating branch")
    _point_flags(flags, "branch")
    _grid_flags(flags, "branch")
    flags.add("branch", "--steps", type=int, default=20)
    flags.add("branch", "--step-size", dest="ds", type=float, default=None)
    flags.add("branch", "--ds-max", type=float, default=None)
    flags.add("branch", "--mirror", action="store_true", help="follow the mirror branch (negative amplitude)")
    flags.add("branch", "--out", default="branch")
    flags.add("branch", "--dump-fields", action="store_true")
    flags.parsers["branch"].set_defaults(func=cmd_branch)

    flags.command(sub, "eigs", common, "spectrum and Morse index")
    _point_flags(flags, "eigs")
    flags.add("eigs", "--alpha", type=float, required=True)
    flags.add("eigs", "--kmax", type=int, default=None)
    flags.add("eigs", "--np", type=int, default=None)
    flags.parsers["eigs"].set_defaults(func=cmd_eigs)

    flags.command(sub, "reconstruct", common, "physical fields from a height function")
    _point_flags(flags, "reconstruct")
    _grid_flags(flags, "reconstruct")
    flags.add("reconstruct", "--alpha", type=float, default=None)
    flags.add("reconstruct", "--amplitude", type=float, default=None)
    flags.add("reconstruct", "--nr", type=int, default=config.DEFAULT_NR)
    flags.add("reconstruct", "--out", default="reconstruct")
    flags.add("reconstruct", "--radius", type=float, default=None,
              help="inner radius in metres; enables dimensional output")
    flags.add("reconstruct", "--density", type=float, default=1000.0)
    flags.add("reconstruct", "--gravity", type=float, default=9.81)
    flags.add("reconstruct", "--p-atm", type=float, default=101325.0)
    flags.parsers["reconstruct"].set_defaults(func=cmd_reconstruct)

    flags.command(sub, "verify", common, "run the verification suites")
    flags.add("verify", "--level", choices=["quick", "full"], default="quick")
    flags.add("verify", "--out", default=None, help="also write the report as JSON")
    flags.parsers["verify"].set_defaults(func=cmd_verify)
    return parser, flags


def build_parser() -> argparse.ArgumentParser:
    return build_cli()[0]


def _apply_config(flags: CommandFlags, argv: List[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    defaults = load_config(known.config)
    if "lambda" in defaults:
        defaults["lam"] = defaults.pop("lambda")
    if "step_size" in defaults:
        defaults["ds"] = defaults.pop("step_size")
    flags.apply_defaults(defaults)


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, flags = build_cli()
    try:
        _apply_config(flags, argv)
        args = parser.parse_args(argv)
        level = (args.log_level or config.LOG_LEVEL).upper()
        logging.basicConfig(
            level=getattr(logging, level, logging.WARNING),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return args.func(args)
    except AnnulusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
