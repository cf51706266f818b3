"""Command-line driver: embed / ricci / ads-check / ads-embed / diagnose.

Every run writes ``summary.json`` into the output directory, even on failure.
Exit codes: 0 success, 2 violated mathematical hypothesis or invalid
configuration, 1 numerical failure.  With ``deterministic = true`` and
``threads = 1`` repeated runs produce byte-identical CSV/JSON artifacts.

Only the output directory may be overridden outside the config file: by the
``--output-dir`` flag or the ``HYPEMBED_OUTPUT_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

SUBCOMMANDS = ("embed", "ricci", "ads-check", "ads-embed", "diagnose")


def _set_thread_env(config_text: str) -> None:
    """Pin BLAS/OpenMP pools before numpy loads; config `threads` wins."""
    m = re.search(r"^\s*threads\s*=\s*(\d+)", config_text, re.MULTILINE)
    n = m.group(1) if m else "1"
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = n


def _jsonsafe(obj):
    """Replace non-finite floats by None so the summary is strict JSON."""
    import math

    if isinstance(obj, dict):
        return {k: _jsonsafe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonsafe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):  # numpy scalar
        return _jsonsafe(obj.item())
    return obj


def _write_summary(outdir, summary):
    from .fileio import write_json

    write_json(os.path.join(outdir, "summary.json"), _jsonsafe(summary))


def _build_field(cfg, which, mesh):
    from .metrics import evaluate_family

    name = getattr(cfg, which)
    return evaluate_family(
        name,
        mesh.vertices,
        value=getattr(cfg, f"{which}_value"),
        terms=getattr(cfg, f"{which}_terms"),
        bumps=getattr(cfg, f"{which}_bumps"),
        csv_path=getattr(cfg, f"{which}_csv"),
    )


def _build_metric(cfg, mesh, summary):
    from .conformal import ConformalMetric
    from .metrics import curvature_margin

    u = _build_field(cfg, "metric", mesh)
    metric = ConformalMetric(mesh, u, 1.0)
    summary["curvature_margin"] = curvature_margin(metric, cfg.kappa)
    return metric


def _flow_config(cfg):
    from .ricci import FlowConfig

    return FlowConfig(roundness_tol=cfg.roundness_tol)


def _continuation_config(cfg):
    from .continuation import ContinuationConfig

    return ContinuationConfig(
        step_tol=cfg.step_tol, fp_tol=cfg.fp_tol, solver_rtol=cfg.solver_rtol
    )


def _write_run_csv(outdir, states):
    cols = (
        "checkpoint_index",
        "time",
        "substeps",
        "iterations",
        "metric_residual",
        "step_size",
        "max_mean_curvature",
        "min_shape_det",
        "max_shape_inverse",
        "min_support",
        "centroid_norm",
    )
    path = os.path.join(outdir, "run_stats.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for state in states:
            st = state.stats
            row = []
            for c in cols:
                v = getattr(st, c)
                row.append(str(v) if isinstance(v, int) else repr(float(v)))
            fh.write(",".join(row) + "\n")


def _write_surface_artifacts(outdir, cfg, surface, u):
    from .fileio import write_field_csv, write_obj

    write_obj(os.path.join(outdir, "surface.obj"), surface.positions, surface.mesh.faces)
    if cfg.verbosity >= 1:
        write_field_csv(os.path.join(outdir, "u_input.csv"), u, ["u"])
        write_field_csv(
            os.path.join(outdir, "mean_curvature.csv"),
            surface.mean_curvature,
            ["mean_curvature"],
        )
        write_field_csv(
            os.path.join(outdir, "support.csv"), surface.support_function, ["support"]
        )


def _surface_summary(surface):
    import numpy as np

    h = surface.second_fundamental_form
    det_h = h[:, 0, 0] * h[:, 1, 1] - h[:, 0, 1] ** 2
    return {
        "max_mean_curvature": float(surface.mean_curvature.max()),
        "min_shape_det": float(det_h.min()),
        "min_support": float(surface.support_function.min()),
        "convex": bool(surface.is_convex),
    }


def _run_embed(cfg, outdir, summary):
    from .continuation import continuation_run
    from .errors import NumericalError
    from .mesh import build_icosphere
    from .metrics import require_admissible
    from .ricci import flow_until_round

    mesh = build_icosphere(cfg.level)
    metric = _build_metric(cfg, mesh, summary)
    require_admissible(metric, cfg.kappa)
    path = flow_until_round(metric, kappa=cfg.kappa, config=_flow_config(cfg))
    summary["flow"] = {
        "checkpoints": len(path.checkpoints),
        "decay_rate": path.decay_rate,
        "steps_taken": path.steps_taken,
    }
    run = continuation_run(path, cfg.kappa, mesh, _continuation_config(cfg))
    _write_run_csv(outdir, run.states)
    summary["completed"] = run.completed
    summary["final_residual"] = run.final_residual
    summary["max_mean_curvature"] = run.max_mean_curvature
    summary["min_shape_det"] = run.min_shape_det
    _write_surface_artifacts(outdir, cfg, run.final_surface, metric.u)
    summary["surface"] = _surface_summary(run.final_surface)
    if not run.completed:
        raise NumericalError(f"continuation did not reach the input metric: {run.diagnostic}")


def _run_ricci(cfg, outdir, summary):
    from .fileio import write_field_csv
    from .mesh import build_icosphere
    from .ricci import flow_until_round

    mesh = build_icosphere(cfg.level)
    metric = _build_metric(cfg, mesh, summary)
    path = flow_until_round(metric, kappa=cfg.kappa, config=_flow_config(cfg))
    cols = ("index", "t", "roundness", "area", "dist_to_limit")
    with open(os.path.join(outdir, "checkpoints.csv"), "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i, cp in enumerate(path.checkpoints):
            fh.write(
                f"{i},{repr(float(cp.t))},{repr(float(cp.roundness))},"
                f"{repr(float(cp.area))},{repr(float(cp.dist_to_limit))}\n"
            )
    write_field_csv(os.path.join(outdir, "u_final.csv"), path.checkpoints[-1].u, ["u"])
    summary.update(
        {
            "checkpoints": len(path.checkpoints),
            "khat": path.khat,
            "decay_rate": path.decay_rate,
            "steps_taken": path.steps_taken,
            "rejected_steps": path.rejected_steps,
            "final_roundness": path.checkpoints[-1].roundness,
        }
    )


def _ads_input(cfg, summary):
    from .ads import AdSInput
    from .mesh import build_icosphere

    mesh = build_icosphere(cfg.level)
    metric = _build_metric(cfg, mesh, summary)
    s = _build_field(cfg, "s", mesh)
    return AdSInput(metric, s, cfg.kappa)


def _write_margin_csv(outdir, cond):
    import numpy as np

    from .fileio import write_field_csv

    write_field_csv(
        os.path.join(outdir, "margin.csv"),
        np.stack([cond.margin, cond.margin_printed, cond.projected_curvature], axis=1),
        ["margin", "margin_printed", "projected_curvature"],
    )


def _run_ads_check(cfg, outdir, summary):
    import numpy as np

    from .ads import condition_margin
    from .errors import HypothesisError

    inp = _ads_input(cfg, summary)
    cond = condition_margin(inp)
    _write_margin_csv(outdir, cond)
    violated = int(np.sum(cond.margin <= 0.0))
    summary["min_margin"] = cond.min_margin
    summary["violated_vertices"] = violated
    summary["verdict"] = bool(violated == 0)
    if violated:
        raise HypothesisError(
            f"graph condition margin <= 0 at {violated} vertices "
            f"(min margin {cond.min_margin:.6e})"
        )


def _run_ads_embed(cfg, outdir, summary):
    from .ads import ads_embed, condition_margin
    from .errors import NumericalError
    from .fileio import write_field_csv

    inp = _ads_input(cfg, summary)
    cond = condition_margin(inp)
    _write_margin_csv(outdir, cond)
    summary["min_margin"] = cond.min_margin
    result = ads_embed(inp, _continuation_config(cfg))
    summary["completed"] = result.completed
    summary["pullback_residual"] = result.pullback_residual
    summary["spacelike"] = result.spacelike
    summary["homotopy_steps"] = result.homotopy_steps
    write_field_csv(os.path.join(outdir, "s.csv"), result.s, ["s"])
    _write_surface_artifacts(outdir, cfg, result.surface, inp.metric.u)
    summary["surface"] = _surface_summary(result.surface)
    if not result.completed:
        raise NumericalError(f"ads embedding failed: {result.diagnostic}")


def _run_diagnose(cfg, outdir, summary):
    import numpy as np

    from .continuation import continuation_run, seed_round_embedding
    from .errors import NumericalError
    from .fileio import write_field_csv
    from .mesh import build_icosphere
    from .metrics import require_admissible
    from .ricci import flow_until_round

    mesh = build_icosphere(cfg.level)
    metric = _build_metric(cfg, mesh, summary)
    require_admissible(metric, cfg.kappa)
    if cfg.metric in ("round", "zero"):
        surface = seed_round_embedding(1.0, cfg.kappa, mesh)
    else:
        path = flow_until_round(metric, kappa=cfg.kappa, config=_flow_config(cfg))
        run = continuation_run(path, cfg.kappa, mesh, _continuation_config(cfg))
        if not run.completed:
            raise NumericalError(f"diagnose could not embed the metric: {run.diagnostic}")
        surface = run.final_surface

    gauss = surface.gauss_residual()
    codazzi = surface.codazzi_residual()
    derived, printed = surface.monge_ampere_residual()
    support = surface.support_min_check()
    grad_val, grad_bound = surface.gradient_bound_monitor()
    if cfg.verbosity >= 1:
        write_field_csv(os.path.join(outdir, "gauss_residual.csv"), gauss, ["gauss_residual"])
        write_field_csv(
            os.path.join(outdir, "codazzi_residual.csv"), codazzi, ["codazzi_residual"]
        )
        write_field_csv(
            os.path.join(outdir, "monge_ampere.csv"),
            np.stack([derived, printed], axis=1),
            ["derived", "printed"],
        )
    _write_surface_artifacts(outdir, cfg, surface, metric.u)
    summary["surface"] = _surface_summary(surface)
    summary["identities"] = {
        "gauss_residual_max": float(np.abs(gauss).max()),
        "gauss_residual_rms": float(np.sqrt(np.mean(gauss**2))),
        "codazzi_residual_max": float(codazzi.max()),
        "monge_ampere_derived_max": float(np.abs(derived).max()),
        "monge_ampere_printed_max": float(np.abs(printed).max()),
        "support_minus_radius_min": support.gap,
        "support_check_skipped": support.skipped,
        "gradient_bound_value": grad_val,
        "gradient_bound_limit": grad_bound,
    }


_RUNNERS = {
    "embed": _run_embed,
    "ricci": _run_ricci,
    "ads-check": _run_ads_check,
    "ads-embed": _run_ads_embed,
    "diagnose": _run_diagnose,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="hypembed",
        description="isometric embedding laboratory for sphere metrics in "
        "hyperbolic and anti-de Sitter backgrounds",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a key = value config file")
        p.add_argument("--output-dir", default=None, help="override the output directory")
    args = ap.parse_args(argv)

    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        outdir = args.output_dir or os.environ.get("HYPEMBED_OUTPUT_DIR") or "out"
        os.makedirs(outdir, exist_ok=True)
        _write_summary(outdir, {"command": args.command, "failure": f"config: {exc}"})
        print(f"error: {exc}", file=sys.stderr)
        return 2

    _set_thread_env(text)

    from .config import ConfigError, config_as_dict, parse_config
    from .errors import HypothesisError, NumericalError

    summary = {"command": args.command, "failure": None}
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        outdir = args.output_dir or os.environ.get("HYPEMBED_OUTPUT_DIR") or "out"
        os.makedirs(outdir, exist_ok=True)
        summary["failure"] = "invalid configuration"
        summary["problems"] = exc.problems
        _write_summary(outdir, summary)
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2

    outdir = args.output_dir or os.environ.get("HYPEMBED_OUTPUT_DIR") or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    summary["config"] = config_as_dict(cfg)
    started = time.perf_counter()
    try:
        _RUNNERS[args.command](cfg, outdir, summary)
        code = 0
    except (HypothesisError, ConfigError, ValueError) as exc:
        summary["failure"] = str(exc)
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        code = 2
    except NumericalError as exc:
        summary["failure"] = str(exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = 1
    if not cfg.deterministic:
        summary["runtime_seconds"] = time.perf_counter() - started
    _write_summary(outdir, summary)
    return code


if __name__ == "__main__":
    sys.exit(main())
