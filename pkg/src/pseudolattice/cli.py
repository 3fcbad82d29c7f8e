"""Command-line driver: run declarative configs through the pipeline.

Usage: ``pseudolattice run config.ini [--out DIR] [--seed N] [--jobs N]``.

Configs are INI-style structured text with [model], [semiclassical],
[diophantine], [loop] and [run] sections.  Artifacts (spectrum tables,
chart files, monodromy reports, SVG plots) are written to a timestamped
output directory, or directly to ``--out`` when given.  Exit status: 0 on
success, 1 when a pipeline check fails, 2 for config errors.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .detect import DetectionError
from .diophantine import DiophantineParams, is_good_value
from .models import ModelError, action_coords, chart_to_text, make_champagne_model, make_flat_model
from .monodromy import (
    MonodromyError,
    classical_monodromy,
    compare_monodromies,
    monodromy_report,
    transition_matrix,
)
from .pipeline import spectral_chart_at, spectral_monodromy
from .synth import NormalFormSymbol, SemiclassicalParams, spectral_band, synth_spectrum

MODES = ("synth", "detect", "monodromy", "verify-all")
RESIDUAL_LIMIT = 0.05


class ConfigError(Exception):
    def __init__(self, message, lineno=None):
        super().__init__(message)
        self.lineno = lineno


@dataclass
class RunConfig:
    model_name: str
    model_kwargs: dict
    params: SemiclassicalParams
    C0: float
    dio: DiophantineParams
    mode: str
    center: np.ndarray | None = None
    vertices: np.ndarray | None = None
    source_path: str = ""
    raw: configparser.ConfigParser = field(default=None, repr=False)


def _line_of(path: str, key: str) -> int | None:
    try:
        for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if line.strip().lower().startswith(key.lower()):
                return n
    except OSError:
        pass
    return None


def _get(cp, path, section, key, cast, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing key '{key}' in section [{section}]")
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(
            f"bad value for '{key}' in section [{section}]: {raw!r} ({exc})",
            lineno=_line_of(path, key),
        ) from exc


def _parse_pair(raw: str) -> np.ndarray:
    parts = raw.split()
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return np.array([float(parts[0]), float(parts[1])])


def _parse_vertices(raw: str) -> np.ndarray:
    rows = [r for r in raw.splitlines() if r.strip()]
    if len(rows) < 3:
        raise ValueError("need at least 3 loop vertices")
    return np.array([[float(x) for x in r.split()] for r in rows])


def parse_config(path: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        raise ConfigError(f"config parse error: {exc}", lineno=lineno)

    for section in ("model", "semiclassical", "run"):
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}]")

    name = _get(cp, path, "model", "name", str, required=True)
    kwargs = {}
    if name == "flat":
        kwargs["omega_star"] = _get(cp, path, "model", "omega_star", _parse_pair, required=True)
        kwargs["q_choice"] = _get(cp, path, "model", "q_choice", str, default="xi_weighted")
    elif name == "champagne":
        kwargs["well_depth"] = _get(cp, path, "model", "well_depth", float, default=1.0)
    else:
        raise ConfigError(
            f"unknown model '{name}' (expected flat or champagne)",
            lineno=_line_of(path, "name"),
        )

    h = _get(cp, path, "semiclassical", "h", float, required=True)
    delta = _get(cp, path, "semiclassical", "delta", float, required=True)
    if not (0.0 < h <= 0.1):
        raise ConfigError(f"h = {h} out of range (0, 0.1]", lineno=_line_of(path, "h"))
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta = {delta} out of range (0, 1)", lineno=_line_of(path, "delta"))
    try:
        params = SemiclassicalParams(
            h=h,
            delta=delta,
            noise_order=_get(cp, path, "semiclassical", "noise_order", int, default=3),
            seed=_get(cp, path, "semiclassical", "seed", int, default=0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    C0 = _get(cp, path, "semiclassical", "C0", float, default=2.0)

    alpha = _get(cp, path, "diophantine", "alpha", float, default=1e-3) if cp.has_section("diophantine") else 1e-3
    if alpha <= 0:
        raise ConfigError(f"alpha = {alpha} must be positive", lineno=_line_of(path, "alpha"))
    dio = DiophantineParams(
        alpha=alpha,
        d=_get(cp, path, "diophantine", "d", float, default=1.0) if cp.has_section("diophantine") else 1.0,
        k_max=_get(cp, path, "diophantine", "k_max", int, default=1000) if cp.has_section("diophantine") else 1000,
    )

    mode = _get(cp, path, "run", "mode", str, required=True)
    if mode not in MODES:
        raise ConfigError(f"unknown mode '{mode}' (expected one of {', '.join(MODES)})", lineno=_line_of(path, "mode"))
    center = _get(cp, path, "run", "center", _parse_pair)
    vertices = _get(cp, path, "loop", "vertices", _parse_vertices) if cp.has_section("loop") else None

    if mode in ("synth", "detect") and center is None:
        raise ConfigError(f"mode '{mode}' requires 'center' in section [run]")
    if mode in ("monodromy", "verify-all") and vertices is None:
        raise ConfigError(f"mode '{mode}' requires a [loop] section with vertices")

    return RunConfig(
        model_name=name,
        model_kwargs=kwargs,
        params=params,
        C0=C0,
        dio=dio,
        mode=mode,
        center=center,
        vertices=vertices,
        source_path=path,
        raw=cp,
    )


def build_model(cfg: RunConfig):
    if cfg.model_name == "flat":
        return make_flat_model(**cfg.model_kwargs)
    return make_champagne_model(**cfg.model_kwargs)


def _output_dir(out_arg: str | None, mode: str) -> Path:
    if out_arg:
        d = Path(out_arg)
        d.mkdir(parents=True, exist_ok=True)
        return d
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path("runs") / f"{mode}-{stamp}"
    d = base
    n = 1
    while d.exists():
        d = Path(f"{base}-{n}")
        n += 1
    d.mkdir(parents=True)
    return d


def _run_synth(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    chart = action_coords(model, cfg.center)
    if not is_good_value(model, chart, cfg.center, cfg.dio):
        print(f"error: center {tuple(cfg.center)} is not a good value", file=sys.stderr)
        return 1
    sym = NormalFormSymbol(chart, {}, cfg.params.noise_order)
    cloud = synth_spectrum(sym, cfg.center, cfg.params, C0=cfg.C0)
    (out / "spectrum.tsv").write_text(cloud.to_text())
    (out / "chart.txt").write_text(chart_to_text(chart))
    (out / "spectrum.svg").write_text(plots.plot_spectrum(cloud))
    print(f"synthesized {len(cloud)} eigenvalues -> {out}")
    return 0


def _run_detect(cfg: RunConfig, out: Path) -> int:
    model = build_model(cfg)
    el = spectral_chart_at(model, cfg.center, cfg.params, cfg.dio, C0=cfg.C0, chart_hint=True)
    hc = el.hchart
    (out / "spectrum.tsv").write_text(el.cloud.to_text())
    (out / "hchart.txt").write_text(hc.to_text())
    (out / "spectrum.svg").write_text(plots.plot_spectrum(el.cloud, hc))
    (out / "residuals.svg").write_text(plots.plot_residuals(hc))
    ok = hc.max_residual() <= RESIDUAL_LIMIT and hc.labeled_fraction >= 0.99
    print(
        f"detected lattice: {len(hc.labels)} labeled points, "
        f"max residual {hc.max_residual():.4f} h, fraction {hc.labeled_fraction:.4f} -> {out}"
    )
    return 0 if ok else 1


def _run_monodromy(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    model = build_model(cfg)
    cls, atlas, elements = spectral_monodromy(
        model, cfg.vertices, cfg.params, cfg.dio, C0=cfg.C0, jobs=jobs
    )
    classical = classical_monodromy(model, cfg.vertices)
    n = len(atlas)
    edges = [transition_matrix(atlas, i, (i + 1) % n) for i in range(n)]
    report = monodromy_report(cls, classical, edges)
    (out / "monodromy.txt").write_text(report)
    centers = np.array([el.center for el in elements])
    sing = [p for kind, p in getattr(model, "singular_values", []) if p is not None]
    (out / "loop.svg").write_text(plots.plot_loop(cfg.vertices, centers, sing))
    verdict = compare_monodromies(cls, classical)
    print(
        f"monodromy over {n} charts: spectral m = {cls.parabolic_m}, "
        f"classical m = {classical.parabolic_m}, conjugate: {str(verdict).lower()} -> {out}"
    )
    return 0 if verdict else 1


def _run_verify_all(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    model = build_model(cfg)
    failures = []

    cls, atlas, elements = spectral_monodromy(
        model, cfg.vertices, cfg.params, cfg.dio, C0=cfg.C0, jobs=jobs
    )
    classical = classical_monodromy(model, cfg.vertices)
    n = len(atlas)
    edges = [transition_matrix(atlas, i, (i + 1) % n) for i in range(n)]
    (out / "monodromy.txt").write_text(monodromy_report(cls, classical, edges))
    if not compare_monodromies(cls, classical):
        failures.append("spectral class not conjugate to transposed classical class")

    worst = max(el.hchart.max_residual() for el in elements)
    if worst > RESIDUAL_LIMIT:
        failures.append(f"max residual {worst:.4f} exceeds {RESIDUAL_LIMIT}")
    frac = min(el.hchart.labeled_fraction for el in elements)
    if frac < 0.99:
        failures.append(f"labeled fraction {frac:.4f} below 0.99")

    # band containment on the first rectangle
    el0 = elements[0]
    sym0 = NormalFormSymbol(el0.action_chart, {}, cfg.params.noise_order)
    band = spectral_band(
        model,
        el0.action_chart,
        el0.cloud.rectangle.center.real,
        el0.cloud.rectangle.half_width,
        cfg.params,
        sym0,
    )
    if not np.all((el0.cloud.points.imag >= band[0]) & (el0.cloud.points.imag <= band[1])):
        failures.append("eigenvalues escape the spectral band")

    (out / "spectrum.tsv").write_text(el0.cloud.to_text())
    (out / "spectrum.svg").write_text(plots.plot_spectrum(el0.cloud, el0.hchart))
    (out / "residuals.svg").write_text(plots.plot_residuals(el0.hchart))
    centers = np.array([el.center for el in elements])
    sing = [p for kind, p in getattr(model, "singular_values", []) if p is not None]
    (out / "loop.svg").write_text(plots.plot_loop(cfg.vertices, centers, sing))

    verdict = "conjugate: true" if compare_monodromies(cls, classical) else "conjugate: false"
    print(f"verify-all over {n} charts: {verdict}; {len(failures)} failure(s) -> {out}")
    for msg in failures:
        print(f"  FAIL: {msg}", file=sys.stderr)
    return 0 if not failures else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pseudolattice", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute a run configuration")
    runp.add_argument("config", help="path to the config file")
    runp.add_argument("--out", default=None, help="output directory (default: timestamped under runs/)")
    runp.add_argument("--seed", type=int, default=None, help="override the config seed")
    runp.add_argument("--jobs", type=int, default=1, help="worker hint for rectangle jobs")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        loc = f"{args.config}:{exc.lineno}: " if exc.lineno else f"{args.config}: "
        print(f"error: {loc}{exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.params = SemiclassicalParams(
            h=cfg.params.h,
            delta=cfg.params.delta,
            noise_order=cfg.params.noise_order,
            seed=args.seed,
        )

    out = _output_dir(args.out, cfg.mode)
    try:
        if cfg.mode == "synth":
            return _run_synth(cfg, out)
        if cfg.mode == "detect":
            return _run_detect(cfg, out)
        if cfg.mode == "monodromy":
            return _run_monodromy(cfg, out, jobs=args.jobs)
        return _run_verify_all(cfg, out, jobs=args.jobs)
    except (ModelError, DetectionError, MonodromyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
