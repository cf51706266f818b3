"""End-to-end embedding run: conformal metric -> flow path -> continuation.

Builds a conformal metric on an icosphere, runs the curvature flow to the
round limit, walks the continuation back to the input metric, and prints
per-checkpoint diagnostics (residual, extrinsic curvature bounds).

Usage:
    python scripts/run_continuation.py --level 4 --amplitude 0.25 --kappa 1.0
"""

from __future__ import annotations

import argparse
import json
import time

from hypembed.conformal import ConformalMetric
from hypembed.continuation import continuation_run
from hypembed.mesh import build_icosphere
from hypembed.ricci import flow_until_round


def degree2_profile(mesh, amplitude):
    """amplitude * P2(z): the axisymmetric degree-2 Legendre profile."""
    z = mesh.vertices[:, 2]
    return amplitude * 0.5 * (3.0 * z * z - 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=4)
    ap.add_argument("--amplitude", type=float, default=0.25)
    ap.add_argument("--kappa", type=float, default=1.0)
    ap.add_argument("--json", action="store_true", help="emit summary as JSON")
    args = ap.parse_args()

    t0 = time.perf_counter()
    mesh = build_icosphere(args.level)
    cm = ConformalMetric(mesh, degree2_profile(mesh, args.amplitude), 1.0)
    path = flow_until_round(cm, kappa=args.kappa)
    t_flow = time.perf_counter()
    print(f"flow: {len(path.checkpoints)} checkpoints [{t_flow - t0:.1f}s]")

    result = continuation_run(path, args.kappa, mesh)
    t_run = time.perf_counter()
    print(f"run: completed {result.completed} [{t_run - t_flow:.1f}s]")

    for state in result.states:
        st = state.stats
        print(
            f"  idx {st.checkpoint_index:3d} t {st.time:8.3f} sub {st.substeps:2d} "
            f"it {st.iterations:3d} res {st.metric_residual:.2e} "
            f"H {st.max_mean_curvature:.4f} det {st.min_shape_det:.4f}"
        )

    print(f"diagnostic: {result.diagnostic}")
    print(f"max H: {result.max_mean_curvature}  min det h: {result.min_shape_det}")
    total = time.perf_counter() - t0
    print(f"total [{total:.1f}s]")
    if args.json:
        print(
            json.dumps(
                dict(
                    level=args.level,
                    completed=result.completed,
                    max_mean_curvature=result.max_mean_curvature,
                    min_det_h=result.min_shape_det,
                    final_residual=result.final_residual,
                    seconds=total,
                )
            )
        )


if __name__ == "__main__":
    main()
