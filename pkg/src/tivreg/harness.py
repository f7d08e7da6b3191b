"""Synthetic degradations, error metrics, brute-force oracles and experiment drivers."""

from __future__ import annotations

import csv
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NoCorrespondences
from .geometry import RigidTransform, angular_error, as_cloud, random_rotation
from .io import downsample
from .pipeline import RegistrationConfig, register
from .shapes import SHAPES, fit_unit_cube, make_shape

KINDS = ("outliers", "missing", "noise")
TIMING_KEYS = ("tiv", "iv_rotation", "rotation", "iv_translation", "translation", "total")


@dataclass(frozen=True)
class DegradationSpec:
    kind: str
    magnitude: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "noise":
            if not self.magnitude >= 0:
                raise ValueError("noise sigma must be >= 0")
        elif not 0 <= self.magnitude < 1:
            raise ValueError(f"{self.kind} fraction must be in [0, 1)")


@dataclass
class Instance:
    model: np.ndarray
    scene: np.ndarray
    gt: RigidTransform
    # rows (model index, scene index) of true pairs
    correspondences: np.ndarray


def make_instance(base, spec: DegradationSpec) -> Instance:
    """Degraded registration problem built from ``base`` with a random ground truth.

    Outlier fractions are shares of the final scene: 30% outliers on 500
    inliers adds 214 points. Scene rows are shuffled so outliers are not
    recognisable by position.
    """
    base = as_cloud(base)
    if len(base) == 0:
        raise ValueError("base cloud is empty")
    rng = np.random.default_rng(spec.rng_seed)
    gt = RigidTransform.from_rotation_vector(random_rotation(rng), rng.uniform(-0.5, 0.5, 3))
    n = len(base)
    model = base.copy()
    model_idx = np.arange(n)
    scene = gt.apply(base)

    if spec.kind == "outliers":
        f = spec.magnitude
        n_out = int(round(n * f / (1.0 - f)))
        scene = np.vstack([scene, rng.uniform(0.0, 1.0, size=(n_out, 3))])
    elif spec.kind == "missing":
        n_keep = n - int(round(n * spec.magnitude))
        model_idx = np.sort(rng.choice(n, size=n_keep, replace=False))
        model = base[model_idx]
    elif spec.magnitude > 0:
        scene = scene + rng.normal(0.0, spec.magnitude, size=scene.shape)

    perm = rng.permutation(len(scene))
    scene = scene[perm]
    where = np.empty_like(perm)
    where[perm] = np.arange(len(perm))
    corr = np.column_stack([np.arange(len(model)), where[model_idx]])
    return Instance(model, scene, gt, corr)


def rms_error(estimated: RigidTransform, correspondences, model, scene) -> float:
    """Root mean square L2 distance between ``estimated(m_i)`` and its true partner."""
    corr = np.asarray(correspondences, dtype=np.int64).reshape(-1, 2)
    if len(corr) == 0:
        raise NoCorrespondences("rms_error needs at least one correspondence")
    d = estimated.apply(as_cloud(model)[corr[:, 0]]) - as_cloud(scene)[corr[:, 1]]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def brute_force_consensus(model, scene, T: RigidTransform, epsilon: float, norm: str = "linf") -> int:
    """Number of transformed model points within ``epsilon`` of some scene point.

    Plain exhaustive scan over all (model, scene) pairs; the reference for
    every accelerated objective.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    moved = T.apply(as_cloud(model))
    scene = as_cloud(scene)
    count = 0
    for p in moved:
        diff = np.abs(scene - p)
        if norm == "linf":
            d = diff.max(axis=1)
        elif norm == "l2":
            d = np.sqrt((diff * diff).sum(axis=1))
        else:
            raise ValueError(f"norm must be 'linf' or 'l2', got {norm!r}")
        count += bool(np.any(d <= epsilon))
    return count


@dataclass
class TrialRecord:
    model: str
    kind: str
    magnitude: float
    seed: int
    n_model: int
    n_scene: int
    epsilon: float
    gt_rotation: np.ndarray
    gt_translation: np.ndarray
    est_rotation: np.ndarray
    est_translation: np.ndarray
    angular_error_deg: float
    translation_error: float
    rms: float
    success: bool
    rotation_count: int
    rotation_upper: int
    rotation_status: str
    rotation_iterations: int
    translation_count: int
    translation_upper: int
    translation_status: str
    translation_iterations: int
    timings: dict = field(default_factory=dict)

    @property
    def certificate_gap_r(self) -> int:
        return self.rotation_upper - self.rotation_count

    @property
    def certificate_gap_t(self) -> int:
        return self.translation_upper - self.translation_count

    def row(self, timings: bool = False) -> dict:
        out = {
            "model": self.model, "kind": self.kind, "magnitude": repr(self.magnitude),
            "seed": self.seed, "n_model": self.n_model, "n_scene": self.n_scene,
            "epsilon": repr(self.epsilon),
        }
        for name in ("gt_rotation", "gt_translation", "est_rotation", "est_translation"):
            for axis, v in zip("xyz", getattr(self, name)):
                out[f"{name}_{axis}"] = repr(float(v))
        out.update({
            "angular_error_deg": repr(self.angular_error_deg),
            "translation_error": repr(self.translation_error),
            "rms": repr(self.rms),
            "success": int(self.success),
            "rotation_count": self.rotation_count,
            "rotation_upper": self.rotation_upper,
            "rotation_gap": self.certificate_gap_r,
            "rotation_status": self.rotation_status,
            "rotation_iterations": self.rotation_iterations,
            "translation_count": self.translation_count,
            "translation_upper": self.translation_upper,
            "translation_gap": self.certificate_gap_t,
            "translation_status": self.translation_status,
            "translation_iterations": self.translation_iterations,
        })
        if timings:
            for k in TIMING_KEYS:
                out[f"time_{k}"] = repr(float(self.timings.get(k, 0.0)))
        return out


def run_trial(name: str, base, spec: DegradationSpec, config: RegistrationConfig) -> TrialRecord:
    inst = make_instance(base, spec)
    res = register(inst.model, inst.scene, config)
    est = res.transform
    rms = rms_error(est, inst.correspondences, inst.model, inst.scene)
    r, t = res.rotation_result, res.translation_result
    return TrialRecord(
        model=name, kind=spec.kind, magnitude=float(spec.magnitude), seed=spec.rng_seed,
        n_model=len(inst.model), n_scene=len(inst.scene), epsilon=float(config.epsilon),
        gt_rotation=inst.gt.rotation_vector(), gt_translation=np.array(inst.gt.translation),
        est_rotation=est.rotation_vector(), est_translation=np.array(est.translation),
        angular_error_deg=float(np.degrees(angular_error(est.rotation, inst.gt.rotation))),
        translation_error=float(np.linalg.norm(est.translation - inst.gt.translation)),
        rms=rms, success=rms <= 2.0 * config.epsilon,
        rotation_count=r.best_count, rotation_upper=r.final_upper_bound,
        rotation_status=r.status, rotation_iterations=r.iterations,
        translation_count=t.best_count, translation_upper=t.final_upper_bound,
        translation_status=t.status, translation_iterations=t.iterations,
        timings=dict(res.timings),
    )


@dataclass(frozen=True)
class Profile:
    kind: str
    sweep: tuple
    epsilon: float
    tiv_delete: int
    tiv_keep: int
    # per-search cube budget; None searches to the certificate
    max_iterations: int | None = None


PROFILES = {
    "clean": Profile("outliers", (0.0,), 0.005, 5000, 200),
    "outliers": Profile("outliers", (0.0, 0.1, 0.2, 0.3), 0.005, 5000, 200),
    "missing": Profile("missing", (0.0, 0.1, 0.2, 0.3), 0.005, 5000, 200),
    # with no deletion the longest TIVs cluster around a few directions and
    # the bound stays loose for millions of cubes, so the search is budgeted
    "noise": Profile("noise", (0.0025, 0.005, 0.01), 0.01, 0, 200, 20000),
    # sweep values are point counts; clean instances with keep = 20% of N
    "scalability": Profile("outliers", (100, 250, 500, 1000), 0.005, 5000, 0),
}


def trial_seed(master: int, index: int) -> int:
    """Independent per-trial seed derived from (master seed, trial index)."""
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1)[0])


def worker_count() -> int:
    """Worker processes allowed by ``TIVREG_THREADS`` (0 or unset: one per CPU)."""
    raw = os.environ.get("TIVREG_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("TIVREG_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _resolve_models(models):
    out = []
    for m in models:
        if isinstance(m, str):
            if m not in SHAPES:
                raise ValueError(f"unknown shape {m!r}; choose from {sorted(SHAPES)}")
            out.append((m, None))
        else:
            name, cloud = m
            out.append((name, as_cloud(cloud)))
    return out


def _plan(profile: str, models, sweep, repetitions, seed, n_points, base_config):
    """One (name, base, spec, config) job per trial, in a fixed order."""
    prof = PROFILES[profile]
    jobs = []
    for k, value in enumerate(sweep):
        for rep in range(repetitions):
            index = k * repetitions + rep
            s = trial_seed(seed, index)
            # trials of one sweep point cycle through the models
            name, cloud = models[rep % len(models)]
            cfg = base_config
            if profile == "scalability":
                n = int(value)
                spec = DegradationSpec("outliers", 0.0, s)
                cfg = replace(base_config, tiv_keep=max(1, int(round(0.2 * n))))
            else:
                n = n_points
                spec = DegradationSpec(prof.kind, float(value), s)
            if cloud is None:
                base = make_shape(name, n, seed=s)
            else:
                base = fit_unit_cube(downsample(cloud, n, s))
            jobs.append((name, base, spec, cfg))
    return jobs


def _run_job(job):
    return run_trial(*job)


def warm_up() -> None:
    """Load the compiled kernels once, so per-trial timings exclude it."""
    pts = np.random.default_rng(0).uniform(size=(12, 3))
    register(pts, pts, RegistrationConfig(normalize=False, tiv_delete=0, tiv_keep=20))


@dataclass
class ExperimentResult:
    records: list
    summary: list  # one dict per (model, sweep value)


def summarize(records, timings: bool = False) -> list:
    groups = {}
    for r in records:
        groups.setdefault((r.model, r.kind, r.magnitude, r.n_model), []).append(r)
    rows = []
    for (model, kind, magnitude, n_model), rs in groups.items():
        rms = [r.rms for r in rs]
        ang = [r.angular_error_deg for r in rs]
        row = {
            "model": model, "kind": kind, "magnitude": repr(magnitude), "n_model": n_model,
            "trials": len(rs),
            "success_rate": repr(sum(r.success for r in rs) / len(rs)),
            "rms_mean": repr(statistics.fmean(rms)),
            "rms_median": repr(statistics.median(rms)),
            "rms_max": repr(max(rms)),
            "angular_error_mean": repr(statistics.fmean(ang)),
            "angular_error_median": repr(statistics.median(ang)),
            "angular_error_max": repr(max(ang)),
            "optimal_rate": repr(sum(r.rotation_status == "optimal" and r.translation_status == "optimal"
                                     for r in rs) / len(rs)),
        }
        if timings:
            for k in TIMING_KEYS:
                vals = [r.timings.get(k, 0.0) for r in rs]
                row[f"time_{k}_mean"] = repr(statistics.fmean(vals))
                row[f"time_{k}_median"] = repr(statistics.median(vals))
        rows.append(row)
    return rows


def write_csv(path, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def run_experiment(profile: str, models=("bunny",), sweep=None, repetitions: int = 20,
                   seed: int = 0, n_points: int = 500, out_dir=None, timings: bool = False,
                   config: RegistrationConfig | None = None) -> ExperimentResult:
    """Run ``repetitions`` trials per sweep value and optionally write CSVs.

    ``models`` holds shape names or ``(name, cloud)`` pairs. Each trial gets
    its own seed from ``(seed, trial index)``, so results do not depend on
    the number of workers. With ``out_dir`` set, ``trials.csv`` and
    ``summary.csv`` are written there; wall-clock columns only appear when
    ``timings`` is true, which keeps the default output byte-reproducible.
    """
    try:
        prof = PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    sweep = tuple(prof.sweep if sweep is None else sweep)
    base_config = config or RegistrationConfig()
    base_config = replace(base_config, epsilon=prof.epsilon, tiv_delete=prof.tiv_delete,
                          tiv_keep=prof.tiv_keep or base_config.tiv_keep, normalize=False,
                          max_iterations=base_config.max_iterations or prof.max_iterations)
    resolved = _resolve_models(models)
    jobs = _plan(profile, resolved, sweep, repetitions, seed, n_points, base_config)

    workers = min(worker_count(), len(jobs))
    if timings and workers <= 1:
        warm_up()
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=warm_up if timings else None) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]

    summary = summarize(records, timings)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "trials.csv", [r.row(timings) for r in records])
        write_csv(out / "summary.csv", summary)
    return ExperimentResult(records, summary)
