"""Command-line harness: problem generation, experiment runs and reports.

Subcommands::

    framedeblur blur    --true-image builtin:cameraman --psf gaussian:31:2.5 --noise-level 0.02 -o g.pgm
    framedeblur deblur  --true-image builtin:cameraman --psf gaussian:31:2.5 --bc antireflective \\
                        --algorithm alg4 --mu 40 --alpha 0.01 --output-dir out/
    framedeblur psnr    reference.pgm candidate.pgm
    framedeblur bench   configs.json --jobs 2

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .blurop import BlurOperator
from .boundary import BoundaryCondition, mask_select
from .framelet import FrameOperator
from .imgcore import NoiseSpec, Psf, add_gaussian_noise, delta_psf, gaussian_psf, motion_psf, psnr
from .pgm import PgmError, read_pgm, write_pgm
from .solvers import NsConfig, SolverConfig, SolverError, run_alg4ns, run_lba, run_mlba
from .spectral import TransformKind, build_spectral
from .testdata import load_builtin

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "ConfigError",
    "parse_psf",
    "load_image",
    "make_problem",
    "run_experiment",
    "main",
]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

ALGORITHMS = {
    "lba": None,
    "alg1": "bccb",
    "alg2": "krylov",
    "alg3": "symmetrized",
    "alg4": "tikhonov",
    "alg4ns": None,
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    true_image: str = "builtin:cameraman"
    psf: str = "gaussian:31:2.5"
    bc: str = "antireflective"
    model: str = "bc"
    algorithm: str = "alg4"
    mu: float = 40.0
    alpha: float = 0.01
    noise_level: float = 0.02
    noise_seed: int = 0
    gamma: float = 1.0 + 1e-15
    max_iters: int = 1000
    levels: int = 4
    q: float = 0.5
    rho: float = 1e-4
    pcg_tol: float = 1e-3
    pcg_cap: int = 5
    transform: Optional[str] = None
    output_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALGORITHMS)}")
        if self.model not in ("bc", "rect"):
            raise ConfigError(f"model must be 'bc' or 'rect', got {self.model!r}")
        if self.algorithm in ("alg4", "alg4ns") and self.model != "bc":
            raise ConfigError(f"{self.algorithm} needs model=bc")
        try:
            BoundaryCondition.parse(self.bc)
            if self.transform is not None:
                TransformKind.parse(self.transform)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.noise_level < 0:
            raise ConfigError("noise level must be >= 0")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


@dataclass
class RunReport:
    psnr: Optional[float]
    iterations: int
    wall_time: float
    delta: float
    stopped: str
    history: List[list] = field(default_factory=list)
    betas: List[int] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        data = dataclasses.asdict(self)
        # JSON has no infinity; a perfect restoration is reported as the string "inf"
        if data["psnr"] is not None and math.isinf(data["psnr"]):
            data["psnr"] = "inf"
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        if data.get("psnr") == "inf":
            data["psnr"] = math.inf
        data["history"] = [list(h) for h in data["history"]]
        return cls(**data)


def parse_psf(spec: str) -> Psf:
    """``gaussian:SIZE:SIGMA``, ``motion:LENGTH[:ANGLE]``, ``delta`` or a PGM path."""
    parts = spec.split(":")
    kind = parts[0].lower()
    try:
        if kind == "gaussian" and len(parts) == 3:
            return gaussian_psf(int(parts[1]), float(parts[2]))
        if kind == "motion" and len(parts) in (2, 3):
            return motion_psf(int(parts[1]), float(parts[2]) if len(parts) == 3 else 0.0)
        if kind == "delta" and len(parts) == 1:
            return delta_psf()
    except ValueError as exc:
        raise ConfigError(f"bad PSF spec {spec!r}: {exc}") from None
    if os.path.exists(spec):
        return Psf(read_pgm(spec), normalize=True)
    raise ConfigError(f"bad PSF spec {spec!r}")


def load_image(spec: str) -> np.ndarray:
    """A PGM path or ``builtin:NAME``."""
    if spec.startswith("builtin:"):
        try:
            return load_builtin(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if not os.path.exists(spec):
        raise ConfigError(f"image file {spec!r} not found")
    return read_pgm(spec)


def make_problem(full_image, psf: Psf, noise: NoiseSpec):
    """Blur ``full_image`` and keep only the field of view, then add noise.

    Returns ``(g, delta, f_fov)`` where ``g`` is ``n x n`` with
    ``n = m - p + 1`` and ``f_fov`` is the matching crop of the truth.
    """
    f = np.asarray(full_image, dtype=np.float64)
    m = f.shape[0]
    p = psf.shape[0]
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError(f"expected a square image, got shape {f.shape}")
    if m <= p:
        raise ValueError(f"PSF {psf.shape} too large for a {m}x{m} image")
    A = BlurOperator(psf, m - p + 1, model="rect")
    clean = A.forward(f)
    g, delta = add_gaussian_noise(clean, noise)
    return g, delta, mask_select(f, A.mask)


def _build(cfg: ExperimentConfig, psf: Psf, n: int):
    if cfg.model == "rect":
        A = BlurOperator(psf, n, model="rect")
    else:
        A = BlurOperator(psf, n, model="bc", bc=cfg.bc)
    return A, FrameOperator(A.m, cfg.levels)


def _solve(cfg: ExperimentConfig, A, W, g, delta, reference):
    C = None
    if cfg.transform is not None:
        C = build_spectral(A.psf, A.n, cfg.transform)
    if cfg.algorithm == "lba":
        scfg = SolverConfig(mu=cfg.mu, alpha=cfg.alpha, gamma=cfg.gamma, max_iters=cfg.max_iters)
        return run_lba(A, W, g, scfg, delta=delta, reference=reference)
    if cfg.algorithm == "alg4ns":
        ncfg = NsConfig(mu=cfg.mu, q=cfg.q, rho=cfg.rho, max_iters=cfg.max_iters)
        return run_alg4ns(A, W, g, delta, ncfg, C=C, reference=reference)
    scfg = SolverConfig(mu=cfg.mu, alpha=cfg.alpha, gamma=cfg.gamma, max_iters=cfg.max_iters,
                        pcg_tol=cfg.pcg_tol, pcg_cap=cfg.pcg_cap)
    return run_mlba(A, W, g, scfg, ALGORITHMS[cfg.algorithm], delta=delta, C=C, reference=reference)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Generate the test problem, restore it and (optionally) write the outputs.

    With ``cfg.output_dir`` set and ``write`` true, the directory receives
    ``observed.pgm``, ``restored.pgm`` (the full reconstruction),
    ``residual.pgm`` (``g - A f`` shifted by 128) and ``report.json``.
    """
    cfg.validate()
    psf = parse_psf(cfg.psf)
    full = load_image(cfg.true_image)
    g, delta, f_fov = make_problem(full, psf, NoiseSpec(cfg.noise_level, cfg.noise_seed))
    A, W = _build(cfg, psf, g.shape[0])

    t0 = time.perf_counter()
    state = _solve(cfg, A, W, g, delta, f_fov)
    wall = time.perf_counter() - t0

    restored_fov = mask_select(state.image, A.mask) if A.model == "rect" else state.image
    report = RunReport(
        psnr=psnr(f_fov, restored_fov),
        iterations=state.iterations,
        wall_time=wall,
        delta=delta,
        stopped=state.stopped,
        history=[[rn, a] for rn, a in state.history],
        betas=list(state.betas),
        params=dataclasses.asdict(cfg),
    )
    if write and cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_pgm(out / "observed.pgm", g)
        write_pgm(out / "restored.pgm", state.image)
        write_pgm(out / "residual.pgm", state.residual + 128.0)
        (out / "report.json").write_text(report.to_json() + "\n")
    return report


# --------------------------------------------------------------------------
# argument parsing


def _add_problem_args(p: argparse.ArgumentParser):
    d = ExperimentConfig()
    p.add_argument("--true-image", default=d.true_image, help="PGM path or builtin:cameraman|satellite")
    p.add_argument("--psf", default=d.psf, help="gaussian:SIZE:SIGMA, motion:LEN[:ANGLE], delta or a PGM path")
    p.add_argument("--noise-level", type=float, default=d.noise_level, help="relative noise ||eta|| / ||Af||")
    p.add_argument("--noise-seed", type=int, default=d.noise_seed)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="framedeblur", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    pb = sub.add_parser("blur", help="generate an observed image without inverse crime")
    _add_problem_args(pb)
    pb.add_argument("-o", "--output", required=True)

    pd = sub.add_parser("deblur", help="run one restoration experiment")
    _add_problem_args(pd)
    d = ExperimentConfig()
    pd.add_argument("--bc", default=d.bc, choices=[b.value for b in BoundaryCondition])
    pd.add_argument("--model", default=d.model, choices=["bc", "rect"])
    pd.add_argument("--algorithm", default=d.algorithm, choices=sorted(ALGORITHMS))
    pd.add_argument("--mu", type=float, default=d.mu)
    pd.add_argument("--alpha", type=float, default=d.alpha)
    pd.add_argument("--gamma", type=float, default=d.gamma)
    pd.add_argument("--max-iters", type=int, default=d.max_iters)
    pd.add_argument("--levels", type=int, default=d.levels)
    pd.add_argument("--q", type=float, default=d.q)
    pd.add_argument("--rho", type=float, default=d.rho)
    pd.add_argument("--pcg-tol", type=float, default=d.pcg_tol)
    pd.add_argument("--pcg-cap", type=int, default=d.pcg_cap)
    pd.add_argument("--transform", default=None, choices=[k.value for k in TransformKind],
                    help="override the structured matrix C")
    pd.add_argument("--output-dir", default=None)

    pp = sub.add_parser("psnr", help="PSNR between two square PGM images")
    pp.add_argument("reference")
    pp.add_argument("candidate")

    pn = sub.add_parser("bench", help="run a JSON list of configs, optionally in parallel")
    pn.add_argument("configs", help="JSON file holding a list of config objects")
    pn.add_argument("--jobs", type=int, default=1)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in vars(args).items() if k in names}).validate()


def _bench_one(cfg_dict: dict) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    rep = run_experiment(cfg)
    return {"psnr": rep.psnr, "iterations": rep.iterations, "wall_time": rep.wall_time,
            "algorithm": cfg.algorithm, "bc": cfg.bc, "model": cfg.model}


def _print_row(row: dict):
    print(f"{row['algorithm']:>7} {row['model']:>4} {row['bc']:>14} "
          f"{row['psnr']:8.3f} {row['iterations']:6d} {row['wall_time']:8.2f}")


def _dispatch(args) -> int:
    if args.command == "blur":
        g, delta, _ = make_problem(load_image(args.true_image), parse_psf(args.psf),
                                   NoiseSpec(args.noise_level, args.noise_seed))
        write_pgm(args.output, g)
        print(f"wrote {args.output} ({g.shape[0]}x{g.shape[1]}), delta = {delta:.6g}")
        return EXIT_OK

    if args.command == "deblur":
        report = run_experiment(_config_from_args(args))
        print(f"PSNR {report.psnr:.3f} dB  iterations {report.iterations}  "
              f"time {report.wall_time:.2f} s  stop {report.stopped}")
        return EXIT_OK

    if args.command == "psnr":
        print(f"{psnr(read_pgm(args.reference), read_pgm(args.candidate)):.4f}")
        return EXIT_OK

    try:
        configs = json.loads(Path(args.configs).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read bench file: {exc}") from None
    if not isinstance(configs, list):
        raise ConfigError("bench file must hold a JSON list of config objects")
    for c in configs:
        ExperimentConfig.from_dict(c)
    print(f"{'alg':>7} {'mdl':>4} {'bc':>14} {'PSNR':>8} {'iters':>6} {'time(s)':>8}")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for row in pool.map(_bench_one, configs):
                _print_row(row)
    else:
        for c in configs:
            _print_row(_bench_one(c))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, PgmError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
