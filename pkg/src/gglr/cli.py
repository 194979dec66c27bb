"""Batch command-line interface: assemble a problem from files and flags,
run the restoration pipeline, and emit a JSON report.

Pipeline: load inputs -> (manifold gate + embedding when the graph has no
coordinates) -> optional synthetic corruption -> restore -> metrics -> emit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io as gio
from .embedding import DEFAULT_VBC_THRESHOLD, embed, require_manifold, vbc
from .errors import GglrError, InvalidSpec
from .restore import (
    ObservationMap,
    RestoreProblem,
    restore,
    restore_sdglr,
    separable_grid_restore,
)

TASKS = ("denoise", "interpolate", "deblur")


@dataclass
class ProblemSpec:
    """Validated CLI-level description of one restoration run."""

    task: str
    graph: str | None = None
    image: str | None = None
    points: str | None = None
    signal: str | None = None
    mask: str | None = None
    reference: str | None = None
    out: str | None = None
    save_signal: str | None = None
    save_image: str | None = None
    trace_csv: str | None = None
    method: str = "gglr"
    mode: str = "signal-dependent"
    mu: object = 0.01
    sigma_alpha: float = 1.5
    sigma_x: float = 1.0
    sigma_f: float | None = None
    sigma_z: float | None = None
    k_plus: int | None = None
    embed_dim: int = 2
    knn: int = 20
    vbc_threshold: float = DEFAULT_VBC_THRESHOLD
    seed: int = 0
    max_iters: int = 100
    warmup_iters: int = 5
    conv_tol: float = 1e-6
    fg_multiplier: float = 2.0
    blur_radius: int = 1
    missing_frac: float | None = None
    noise_std: float | None = None
    peak: float = 255.0
    separable: str = "auto"

    def validate(self):
        if self.task not in TASKS:
            raise InvalidSpec(f"unknown task {self.task!r}")
        sources = [s for s in (self.graph, self.image, self.points) if s]
        if len(sources) != 1:
            raise InvalidSpec("exactly one of --graph/--image/--points is required")
        if self.graph and not self.signal:
            raise InvalidSpec("graph input requires --signal")
        if self.method not in ("gglr", "sdglr"):
            raise InvalidSpec(f"unknown method {self.method!r}")
        if self.task == "interpolate" and self.mask is None and self.missing_frac is None:
            raise InvalidSpec("interpolation needs --mask or --missing-frac")
        return self

    @classmethod
    def from_config(cls, path, overrides=None):
        with open(path, "r", encoding="ascii") as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
        if overrides:
            data.update(overrides)
        if "task" not in data:
            raise InvalidSpec("config must set 'task'")
        return cls(**data)


@dataclass
class Report:
    """Structured result of one run; round-trips through JSON."""

    task: str
    status: str
    n: int = 0
    psnr: float | None = None
    vbc: float | None = None
    mu_used: float | None = None
    iterations: int = 0
    converged: bool = False
    objective_trace: list = field(default_factory=list)
    removed_false_gradients: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    seed: int = 0
    error: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _load_inputs(spec):
    """Returns (graph, clean_or_observed signal, image shape or None)."""
    if spec.image:
        img = gio.read_pgm(spec.image)
        h, w = img.shape
        g = gio.grid_graph(w, h)
        return g, gio.image_to_signal(img), (w, h)
    if spec.points:
        pts, vals = gio.load_point_cloud(spec.points)
        g = gio.knn_graph(
            pts, spec.knn, sigma_f=spec.sigma_f, sigma_x=spec.sigma_x, signal=vals
        )
        return g, vals, None
    g = gio.load_graph(spec.graph)
    y = gio.load_signal(spec.signal)
    if y.size != g.n:
        raise InvalidSpec(f"signal has {y.size} values for {g.n} nodes")
    return g, y, None


def _observed_mask(spec, g, shape):
    if spec.mask is None:
        return None
    if spec.image:
        mimg = gio.read_pgm(spec.mask)
        if mimg.shape != (shape[1], shape[0]):
            raise InvalidSpec("mask image shape differs from the input image")
        return np.flatnonzero(gio.image_to_signal(mimg) > 0)
    return gio.load_mask(spec.mask, g.n)


def _synthesize(spec, g, clean, rng):
    """Apply synthetic corruption when requested; returns (y, mask, reference)."""
    y = clean.copy()
    reference = clean.copy()
    mask = None
    if spec.noise_std is not None:
        y = y + spec.noise_std * rng.standard_normal(g.n)
    if spec.missing_frac is not None:
        n_keep = max(1, int(round(g.n * (1.0 - spec.missing_frac))))
        mask = np.sort(rng.permutation(g.n)[:n_keep])
    return y, mask, reference


def run(spec):
    """Execute one validated spec and return the report."""
    spec.validate()
    rng = gio.make_rng(spec.seed)
    report = Report(task=spec.task, status="ok", seed=spec.seed)
    t0 = time.perf_counter()

    g, signal, shape = _load_inputs(spec)
    report.n = g.n
    report.timings["load"] = time.perf_counter() - t0

    reference = None
    if spec.reference:
        if spec.image:
            reference = gio.image_to_signal(gio.read_pgm(spec.reference))
        elif spec.points:
            reference = gio.load_point_cloud(spec.reference)[1]
        else:
            reference = gio.load_signal(spec.reference)

    t1 = time.perf_counter()
    if g.coords is None:
        gate = require_manifold(g, spec.vbc_threshold)
        report.vbc = gate["vbc"]
        emb = embed(g, spec.embed_dim)
        g = g.with_coords(emb.coords)
        report.diagnostics["embedding"] = {
            "gamma": emb.gamma,
            "epsilon": emb.epsilon,
            "dim": spec.embed_dim,
        }
    report.timings["embed"] = time.perf_counter() - t1

    mask = _observed_mask(spec, g, shape)
    synthesizing = spec.missing_frac is not None or spec.noise_std is not None
    if synthesizing:
        if spec.task == "deblur":
            raise InvalidSpec("synthetic corruption applies to denoise/interpolate")
        signal, synth_mask, reference = _synthesize(spec, g, signal, rng)
        if synth_mask is not None:
            mask = synth_mask

    if spec.task == "denoise":
        h = ObservationMap.identity(g.n)
        y = signal
    elif spec.task == "interpolate":
        if mask is None:
            raise InvalidSpec("interpolation needs a mask")
        h = ObservationMap.sampling(mask, g.n)
        y = signal[mask]
    else:  # deblur: the input image is the blurred observation
        if shape is None:
            raise InvalidSpec("deblurring is defined for image input")
        kernel = gio.box_blur_kernel(shape[0], shape[1], spec.blur_radius)
        h = ObservationMap.blur(kernel)
        y = signal

    problem = RestoreProblem(
        y=y,
        h=h,
        mu=spec.mu,
        sigma_alpha=spec.sigma_alpha,
        mode=spec.mode,
        false_gradient_multiplier=spec.fg_multiplier,
        warmup_iters=spec.warmup_iters,
        max_iters=spec.max_iters,
        conv_tol=spec.conv_tol,
        k_plus=spec.k_plus,
        sigma_z=spec.sigma_z,
        sigma_x=spec.sigma_x,
        sigma_f=spec.sigma_f,
    )

    t2 = time.perf_counter()
    use_separable = spec.separable == "on" or (
        spec.separable == "auto" and shape is not None and spec.method == "gglr"
    )
    if spec.method == "sdglr":
        result = restore_sdglr(problem, g)
    elif use_separable:
        result = separable_grid_restore(problem, g)
    else:
        result = restore(problem, g)
    report.timings["restore"] = time.perf_counter() - t2

    report.mu_used = result.mu_used
    report.iterations = result.iterations
    report.converged = result.converged
    report.objective_trace = [float(v) for v in result.objective_trace]
    report.removed_false_gradients = sorted(
        int(v) for v in result.removed_false_gradients
    )
    report.diagnostics.update(
        {k: v for k, v in result.diagnostics.items() if not isinstance(v, np.ndarray)}
    )

    if reference is not None:
        report.psnr = gio.psnr(result.x_star, reference, spec.peak)

    if spec.save_signal:
        gio.save_signal(result.x_star, spec.save_signal)
    if spec.save_image and shape is not None:
        gio.write_pgm(
            gio.signal_to_image(result.x_star, shape[0], shape[1]), spec.save_image
        )
    if spec.trace_csv:
        with open(spec.trace_csv, "w", encoding="ascii") as fh:
            fh.write("iteration,objective\n")
            for i, v in enumerate(result.objective_trace, start=1):
                fh.write(f"{i},{v!r}\n")

    report.timings["total"] = time.perf_counter() - t0
    return report


def build_parser():
    p = argparse.ArgumentParser(
        prog="gglr",
        description="Restore signals on manifold graphs with a gradient-graph "
        "Laplacian regularizer.",
    )
    p.add_argument("--config", help="JSON file with ProblemSpec fields")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--graph")
    p.add_argument("--image")
    p.add_argument("--points")
    p.add_argument("--signal")
    p.add_argument("--mask")
    p.add_argument("--reference")
    p.add_argument("--out")
    p.add_argument("--save-signal", dest="save_signal")
    p.add_argument("--save-image", dest="save_image")
    p.add_argument("--trace-csv", dest="trace_csv")
    p.add_argument("--method", choices=("gglr", "sdglr"))
    p.add_argument("--mode", choices=("signal-dependent", "planar-fixed"))
    p.add_argument("--mu")
    p.add_argument("--sigma-alpha", dest="sigma_alpha", type=float)
    p.add_argument("--sigma-x", dest="sigma_x", type=float)
    p.add_argument("--sigma-f", dest="sigma_f", type=float)
    p.add_argument("--sigma-z", dest="sigma_z", type=float)
    p.add_argument("--k-plus", dest="k_plus", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--knn", type=int)
    p.add_argument("--vbc-threshold", dest="vbc_threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--warmup-iters", dest="warmup_iters", type=int)
    p.add_argument("--conv-tol", dest="conv_tol", type=float)
    p.add_argument("--fg-multiplier", dest="fg_multiplier", type=float)
    p.add_argument("--blur-radius", dest="blur_radius", type=int)
    p.add_argument("--missing-frac", dest="missing_frac", type=float)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--peak", type=float)
    p.add_argument("--separable", choices=("auto", "on", "off"))
    return p


def _spec_from_args(args):
    overrides = {}
    for key in ProblemSpec.__dataclass_fields__:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if "mu" in overrides and overrides["mu"] != "auto":
        overrides["mu"] = float(overrides["mu"])
    if args.config:
        return ProblemSpec.from_config(args.config, overrides)
    if "task" not in overrides:
        raise InvalidSpec("--task is required without a config file")
    return ProblemSpec(**overrides)


def _emit(report, out_path):
    text = report.to_json()
    if out_path:
        with open(out_path, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        report = run(spec)
        _emit(report, spec.out)
        return 0
    except GglrError as exc:
        report = Report(
            task=getattr(args, "task", None) or "unknown",
            status="error",
            error={"class": type(exc).__name__, "message": str(exc)},
        )
        _emit(report, getattr(args, "out", None))
        return type(exc).exit_code
    except OSError as exc:
        report = Report(
            task=getattr(args, "task", None) or "unknown",
            status="error",
            error={"class": "IOError", "message": str(exc)},
        )
        _emit(report, None)
        return 18


if __name__ == "__main__":
    sys.exit(main())
