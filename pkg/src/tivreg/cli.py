"""Command line interface: ``tivreg register | rotsearch | synth | eval | experiment``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bnb import SearchConfig
from .errors import CloudIOError, TivregError
from .geometry import RigidTransform, angular_error, rodrigues
from .harness import PROFILES, DegradationSpec, make_instance, rms_error, run_experiment
from .io import downsample, load_cloud, save_cloud
from .pipeline import RegistrationConfig, register
from .rotation import bnb_rotation_search
from .shapes import SHAPES, fit_unit_cube

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.asarray(v).ravel().tolist())
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def render(doc: dict, fmt: str) -> str:
    """Result document as ``key value...`` lines or as JSON."""
    if fmt == "json":
        return json.dumps({k: _jsonable(v) for k, v in doc.items()}, indent=2) + "\n"
    return "".join(f"{k} {_fmt(v)}\n" for k, v in doc.items())


def parse_document(text: str) -> dict:
    """Inverse of :func:`render` for either format; numeric fields become floats."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    doc = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        doc[key] = rest.strip()
    return doc


def read_transform(path) -> RigidTransform:
    """Transform from a result document with ``rotation_vector`` and ``translation``."""
    try:
        doc = parse_document(Path(path).read_text())
    except OSError as exc:
        raise CloudIOError(f"{path}: {exc.strerror or exc}") from None
    try:
        vals = []
        for key in ("rotation_vector", "translation"):
            v = doc[key]
            vals.append(np.array(v if isinstance(v, list) else v.split(), dtype=np.float64))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: not a transform document ({exc})") from None
    return RigidTransform(rodrigues(vals[0]), vals[1])


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise CloudIOError(f"{out}: {exc.strerror or exc}") from None


def _resolution(text: str):
    parts = [int(p) for p in text.replace("x", ",").split(",") if p]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError("resolution is N or NX,NY,NZ with values >= 1")
    return tuple(parts)


def _trange(text: str):
    if text == "auto":
        return None
    vals = [float(p) for p in text.split(",")]
    if len(vals) == 2:
        return (np.full(3, vals[0]), np.full(3, vals[1]))
    if len(vals) == 6:
        return (np.array(vals[:3]), np.array(vals[3:]))
    raise argparse.ArgumentTypeError("trange is 'auto', 'LO,HI' or 'X0,Y0,Z0,X1,Y1,Z1'")


def _write_trace(path, stages, timings: bool):
    rows = []
    for stage, trace in stages:
        for step, (elapsed, upper, lower) in enumerate(trace):
            row = {"stage": stage, "step": step, "upper_bound": upper, "lower_bound": lower}
            if timings:
                row["elapsed"] = repr(float(elapsed))
            rows.append(row)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["stage"])
            w.writeheader()
            w.writerows(rows)
    except OSError as exc:
        raise CloudIOError(f"{path}: {exc.strerror or exc}") from None


def _search_fields(prefix, res) -> dict:
    return {
        f"{prefix}_count": res.best_count,
        f"{prefix}_upper_bound": res.final_upper_bound,
        f"{prefix}_gap": res.final_upper_bound - res.best_count,
        f"{prefix}_status": res.status,
        f"{prefix}_iterations": res.iterations,
    }


def cmd_register(args) -> int:
    model = load_cloud(args.model)
    scene = load_cloud(args.scene)
    cfg = RegistrationConfig(
        epsilon=args.epsilon, iv_resolution=args.iv_resolution, tiv_delete=args.tiv_delete,
        tiv_keep=args.tiv_keep, gap_r=args.gap, gap_t=args.gap, translation_range=args.trange,
        normalize=not args.no_normalize, rng_seed=args.seed, max_depth=args.max_depth,
        max_iterations=args.max_iterations,
        scene_selection=args.scene_selection,
    )
    res = register(model, scene, cfg)
    T = res.transform
    doc = {
        "rotation_vector": T.rotation_vector(),
        "rotation_matrix": T.rotation,
        "translation": T.translation,
        **_search_fields("rotation", res.rotation_result),
        **_search_fields("translation", res.translation_result),
        "model_points": len(model),
        "scene_points": len(scene),
        "model_tivs": res.model_tivs,
        "scene_tivs": res.scene_tivs,
        "epsilon": float(cfg.epsilon),
    }
    if args.timings:
        doc.update({f"time_{k}": float(v) for k, v in res.timings.items()})
    if args.trace_csv:
        _write_trace(args.trace_csv, [("rotation", res.rotation_result.bound_trace),
                                      ("translation", res.translation_result.bound_trace)],
                     args.timings)
    _emit(render(doc, args.format), args.output)
    return EXIT_OK


def cmd_rotsearch(args) -> int:
    moving = load_cloud(args.model)
    fixed = load_cloud(args.scene)
    cfg = SearchConfig(gap=args.gap, max_depth=args.max_depth, max_iterations=args.max_iterations)
    res = bnb_rotation_search(moving, fixed, args.epsilon, cfg, resolution=args.iv_resolution)
    doc = {
        "rotation_vector": res.best_rotation,
        "rotation_matrix": res.best_matrix,
        "translation": np.zeros(3),
        **_search_fields("rotation", res),
        "model_points": len(moving),
        "scene_points": len(fixed),
        "epsilon": float(args.epsilon),
    }
    if args.trace_csv:
        _write_trace(args.trace_csv, [("rotation", res.bound_trace)], args.timings)
    _emit(render(doc, args.format), args.output)
    return EXIT_OK


def cmd_synth(args) -> int:
    base = load_cloud(args.base)
    if args.n > 0:
        base = downsample(base, args.n, args.seed)
    base = fit_unit_cube(base)
    inst = make_instance(base, DegradationSpec(args.kind, args.magnitude, args.seed))
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CloudIOError(f"{out}: {exc.strerror or exc}") from None
    ext = args.ext
    save_cloud(out / f"model.{ext}", inst.model)
    save_cloud(out / f"scene.{ext}", inst.scene)
    gt = {"rotation_vector": inst.gt.rotation_vector(), "rotation_matrix": inst.gt.rotation,
          "translation": inst.gt.translation, "kind": args.kind,
          "magnitude": float(args.magnitude), "seed": args.seed}
    _emit(render(gt, "kv"), out / "gt.txt")
    np.savetxt(out / "correspondences.csv", inst.correspondences, fmt="%d", delimiter=",",
               header="model_index,scene_index", comments="")
    return EXIT_OK


def cmd_eval(args) -> int:
    est = read_transform(args.estimated)
    gt = read_transform(args.gt)
    doc = {
        "angular_error_deg": float(np.degrees(angular_error(est.rotation, gt.rotation))),
        "translation_error": float(np.linalg.norm(est.translation - gt.translation)),
    }
    if args.model or args.scene or args.correspondences:
        if not (args.model and args.scene and args.correspondences):
            raise UsageError("--model, --scene and --correspondences go together")
        try:
            corr = np.loadtxt(args.correspondences, delimiter=",", skiprows=1,
                              dtype=np.int64, ndmin=2)
        except OSError as exc:
            raise CloudIOError(f"{args.correspondences}: {exc}") from None
        rms = rms_error(est, corr, load_cloud(args.model), load_cloud(args.scene))
        doc["rms"] = rms
        if args.epsilon is not None:
            doc["success"] = int(rms <= 2.0 * args.epsilon)
    _emit(render(doc, args.format), args.output)
    return EXIT_OK


def cmd_experiment(args) -> int:
    models = []
    for m in args.models.split(","):
        if m in SHAPES:
            models.append(m)
        else:
            models.append((Path(m).stem, load_cloud(m)))
    sweep = None if args.sweep is None else [float(v) for v in args.sweep.split(",")]
    res = run_experiment(args.profile, models, sweep, args.reps, args.seed, args.n,
                         args.out_dir, args.timings)
    rows = res.summary
    lines = []
    for r in rows:
        lines.append(" ".join(f"{k}={v}" for k, v in r.items()))
    _emit("\n".join(lines) + "\n", None)
    return EXIT_OK


def _add_search_flags(p, with_pipeline: bool):
    p.add_argument("--epsilon", type=float, default=0.005, help="inlier threshold (Chebyshev)")
    p.add_argument("--iv-resolution", type=_resolution, default=(51, 51, 51),
                   help="integral volume cells per axis: N or NX,NY,NZ (default 51)")
    p.add_argument("--gap", type=int, default=0, help="BnB termination gap in consensus counts")
    p.add_argument("--max-depth", type=int, default=25, help="subdivision depth safeguard")
    p.add_argument("--max-iterations", type=int, default=None,
                   help="cube budget per search; the result is then best effort")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("kv", "json"), default="kv")
    p.add_argument("--trace-csv", help="write the bound evolution of each search here")
    p.add_argument("--timings", action="store_true",
                   help="include wall-clock timings (output is then not reproducible)")
    p.add_argument("-o", "--output", help="write the result document here instead of stdout")
    if with_pipeline:
        p.add_argument("--tiv-delete", type=int, default=5000,
                       help="longest model TIVs to drop before selection")
        p.add_argument("--tiv-keep", type=int, default=200, help="model TIVs to keep")
        p.add_argument("--trange", type=_trange, default=_trange("-1,1"),
                       help="translation search box: 'auto', 'LO,HI' or six values (default -1,1)")
        p.add_argument("--no-normalize", action="store_true",
                       help="skip the joint unit-cube normalization")
        p.add_argument("--scene-selection", choices=("band", "rank"), default="band",
                       help="scene TIVs: all in the model norm band, or the same rank window")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tivreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="register MODEL onto SCENE")
    p.add_argument("model")
    p.add_argument("scene")
    _add_search_flags(p, True)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("rotsearch", help="rotation search with both clouds used directly as vectors")
    p.add_argument("model")
    p.add_argument("scene")
    _add_search_flags(p, False)
    p.set_defaults(func=cmd_rotsearch)

    p = sub.add_parser("synth", help="write a degraded instance built from BASE")
    p.add_argument("base")
    p.add_argument("--kind", choices=("outliers", "missing", "noise"), required=True)
    p.add_argument("--magnitude", type=float, default=0.0,
                   help="outlier or missing fraction, or noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=500, help="downsample BASE first (0: keep all)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--ext", choices=("xyz", "ply"), default="xyz")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="compare an estimated transform with the ground truth")
    p.add_argument("estimated", help="result document of register or rotsearch")
    p.add_argument("gt", help="ground-truth document (gt.txt from synth)")
    p.add_argument("--model")
    p.add_argument("--scene")
    p.add_argument("--correspondences")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--format", choices=("kv", "json"), default="kv")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a synthetic benchmark profile")
    p.add_argument("profile", choices=sorted(PROFILES))
    p.add_argument("--models", default="bunny",
                   help=f"comma-separated shape names ({', '.join(sorted(SHAPES))}) or files")
    p.add_argument("--sweep", help="comma-separated sweep values (default: the profile's)")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--n", type=int, default=500, help="points per base cloud")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", help="write trials.csv and summary.csv here")
    p.add_argument("--timings", action="store_true",
                   help="add wall-clock columns (output is then not reproducible)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CloudIOError as exc:
        print(f"tivreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TivregError as exc:
        print(f"tivreg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (UsageError, ValueError) as exc:
        print(f"tivreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
