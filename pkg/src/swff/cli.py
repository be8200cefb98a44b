"""Command-line front end: ``swff {simulate,zsurface,map,staircase,atlas,chs}``.

Every run writes its outputs and a ``manifest.json`` into ``--out``.
Settings come from ``--config`` (JSON) with command-line flags taking
precedence; ``SWFF_JOBS`` overrides ``--jobs``. Exit status is 2 for a bad
configuration and 3 for a numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from fractions import Fraction

from . import __version__
from .params import DEFAULT, ParameterSet

log = logging.getLogger("swff")

FIGURES = {
    "simulate": "Fig. 1B",
    "zsurface": "Fig. 2",
    "map": "Fig. 3A",
    "staircase": "Fig. 4B",
    "atlas": "Fig. 7",
    "chs": "Fig. 8B (hard switch)",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    out: str = "swff_out"
    jobs: int | None = None
    params: dict = field(default_factory=dict)  # ParameterSet overrides
    k: float | None = None
    alpha_scn: float | None = None
    days: float = 30.0
    order: int = 1
    grid: int = 512
    k_range: tuple | None = None  # (hi, lo, step)
    alpha_range: tuple | None = None  # (lo, hi, step)
    rhos: tuple = ("1", "2/3", "1/2")
    island: bool = False
    zone: bool = False
    rtol: float = 1e-9
    atol: float = 1e-11
    event_tol: float = 1e-9
    n_c: int = 41
    n_h: int = 81

    def parameter_set(self) -> ParameterSet:
        over = dict(self.params)
        if self.k is not None:
            over["k"] = self.k
        if self.alpha_scn is not None:
            over["alpha_SCN"] = self.alpha_scn
        try:
            return ParameterSet.from_dict({**DEFAULT.to_dict(), **over})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> None:
        for name in ("rtol", "atol", "event_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.days > 0:
            raise ConfigError("days (horizon) must be positive")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.grid < 4 or self.n_c < 2 or self.n_h < 2:
            raise ConfigError("grids must be non-empty")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.k_range is not None:
            hi, lo, step = self.k_range
            if not step > 0 or not hi >= lo or not 0 < lo <= 1 or not hi <= 1:
                raise ConfigError("k-range must be HI,LO,STEP with 1 >= HI >= LO > 0 and STEP > 0")
        if self.alpha_range is not None:
            lo, hi, step = self.alpha_range
            if not step > 0 or not hi >= lo or not lo > 0:
                raise ConfigError("alpha-range must be LO,HI,STEP with HI >= LO > 0 and STEP > 0")
        for r in self.rhos:
            try:
                f = Fraction(r)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad rotation number {r!r}") from exc
            if not 0 < f <= 1:
                raise ConfigError(f"rotation number {r} outside (0, 1]")
        self.parameter_set()

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("k_range", "alpha_range", "rhos"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


CONFIG_KEYS = {f.name for f in fields(RunConfig)} - {"command"}


def _triple(text: str, name: str) -> tuple:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"{name} needs three comma-separated numbers") from exc
    if len(parts) != 3:
        raise ConfigError(f"{name} needs three comma-separated numbers")
    return parts


def _grid_desc(hi: float, lo: float, step: float) -> list:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(hi - i * step, 12) for i in range(n + 1)]


def _grid_asc(lo: float, hi: float, step: float) -> list:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(n + 1)]


def load_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("k_range", "alpha_range", "rhos"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    try:
        cfg = RunConfig(command=args.command, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out is not None:
        cfg.out = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if os.environ.get("SWFF_JOBS"):
        try:
            cfg.jobs = int(os.environ["SWFF_JOBS"])
        except ValueError as exc:
            raise ConfigError("SWFF_JOBS must be an integer") from exc
    for name in ("k", "alpha_scn", "days", "order"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "k_range", None):
        cfg.k_range = _triple(args.k_range, "k-range")
    if getattr(args, "alpha_range", None):
        cfg.alpha_range = _triple(args.alpha_range, "alpha-range")
    cfg.validate()
    return cfg


def _write_manifest(cfg: RunConfig, outputs: list, extra: dict | None = None) -> str:
    from .kernel import BACKEND
    man = {"tool": "swff", "version": __version__, "backend": BACKEND, "command": cfg.command,
           "figure": FIGURES[cfg.command], "config": cfg.as_dict(),
           "parameters": cfg.parameter_set().to_dict(),
           "outputs": sorted(os.path.basename(p) for p in outputs)}
    if extra:
        man.update(extra)
    path = os.path.join(cfg.out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _dump(path: str, obj) -> str:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig, chs: bool = False) -> list:
    from .integrator import IntegratorOptions, integrate
    from .model import initial_state

    p = cfg.parameter_set()
    opts = IntegratorOptions(rtol=cfg.rtol, atol=cfg.atol, event_tol=cfg.event_tol)
    if chs:
        from .chs import chs_initial_state
        X, r = chs_initial_state(p)
    else:
        X, r = initial_state(p)
    tr = integrate(X, r, cfg.days * 24.0, p, opts, chs=chs)
    out = [os.path.join(cfg.out, "trajectory.csv"), os.path.join(cfg.out, "events.csv")]
    tr.to_csv(out[0])
    tr.events_to_csv(out[1])
    settle = max(0.0, tr.t[-1] - 10 * 24.0)
    wake, sleep = tr.episodes(after=settle)
    onsets = [e for e in tr.sleep_onsets() if e.t >= settle]
    summary = {
        "wake_mean_h": float(wake.mean()) if len(wake) else None,
        "sleep_mean_h": float(sleep.mean()) if len(sleep) else None,
        "sleeps_per_day_last10": len(onsets) / 10.0 if tr.t[-1] >= 10 * 24 else None,
        "sleep_onsets": len(tr.sleep_onsets()),
        "steps": tr.nsteps,
    }
    out.append(_dump(os.path.join(cfg.out, "summary.json"), summary))
    return out


def cmd_zsurface(cfg: RunConfig) -> list:
    from . import fastslow as fs

    p = cfg.parameter_set()
    rows = fs.z_surface(p, cfg.n_c, cfg.n_h)
    out = [os.path.join(cfg.out, "zsurface.csv"), os.path.join(cfg.out, "fold_curves.csv")]
    fs.write_zsurface_csv(rows, out[0])
    fs.write_fold_csv([fs.sn_curve("upper", 64, p), fs.sn_curve("lower", 64, p)], out[1])
    return out


def cmd_map(cfg: RunConfig) -> list:
    from . import circlemap as cm

    p = cfg.parameter_set()
    m = cm.build_map(cfg.order, cm.PhaseGrid.uniform(cfg.grid), p)
    fps = cm.find_fixed_points(m)
    out = [os.path.join(cfg.out, "map.csv"), os.path.join(cfg.out, "discontinuities.json"),
           os.path.join(cfg.out, "fixed_points.json")]
    m.to_csv(out[0])
    with open(out[1], "w") as fh:
        fh.write(m.discontinuities_json() + "\n")
    _dump(out[2], [{"phi": f.phi, "stability": f.stability, "slope": f.slope_estimate,
                    "q": f.q, "branch": f.branch} for f in fps])
    return out


def cmd_staircase(cfg: RunConfig, chs: bool = False) -> list:
    from .rotation import staircase

    p = cfg.parameter_set()
    hi, lo, step = cfg.k_range or (1.0, 0.2, 0.001)
    ks = _grid_desc(hi, lo, step)
    if not ks:
        raise ConfigError("empty k grid")
    s = staircase(ks, p, jobs=cfg.jobs, chs=chs)
    out = [os.path.join(cfg.out, "staircase.csv"), os.path.join(cfg.out, "plateaus.json")]
    s.to_csv(out[0])
    with open(out[1], "w") as fh:
        fh.write(s.plateaus_json() + "\n")
    return out


def cmd_atlas(cfg: RunConfig) -> list:
    from . import atlas

    p = cfg.parameter_set()
    lo, hi, step = cfg.alpha_range or (0.3, 1.5, 0.1)
    alphas = _grid_asc(lo, hi, step)
    if not alphas:
        raise ConfigError("empty alpha grid")
    khi, klo, kstep = cfg.k_range or (1.0, 0.2, 0.005)
    res = atlas.Atlas()
    for r in cfg.rhos:
        res.tongues.append(atlas.tongue_boundaries(Fraction(r), alphas, p, (khi, klo),
                                                   scan_step=kstep, jobs=cfg.jobs))
    if cfg.island:
        ks = _grid_asc(klo, khi, kstep)
        res.island = atlas.bistability_scan(alphas, ks, p, jobs=cfg.jobs)
    if cfg.zone:
        res.zone = atlas.transition_zone(alphas, p, khi, klo, jobs=cfg.jobs)
    return res.write(cfg.out)


def cmd_chs(cfg: RunConfig) -> list:
    out = cmd_staircase(cfg, chs=True)
    if cfg.k is not None:
        out += cmd_simulate(cfg, chs=True)
    return out


COMMANDS = {"simulate": cmd_simulate, "zsurface": cmd_zsurface, "map": cmd_map,
            "staircase": cmd_staircase, "atlas": cmd_atlas, "chs": cmd_chs}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swff", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"swff {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"data for {FIGURES[name]}")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes (SWFF_JOBS overrides)")
        sp.add_argument("--k", type=float)
        sp.add_argument("--alpha-scn", dest="alpha_scn", type=float)
        sp.add_argument("--k-range", dest="k_range", help="HI,LO,STEP")
        sp.add_argument("--alpha-range", dest="alpha_range", help="LO,HI,STEP")
        sp.add_argument("--order", type=int, help="map order p")
        sp.add_argument("--days", type=float, help="simulation horizon in days")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    from .circlemap import MapError, UnresolvedTransition
    from .fastslow import FoldNotFound
    from .integrator import IntegrationError
    from .rotation import RotationError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"swff: config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(cfg.out, exist_ok=True)
    try:
        outputs = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"swff: config error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, MapError, RotationError, FoldNotFound, UnresolvedTransition,
            FloatingPointError) as exc:
        print(f"swff: numerical failure: {exc}", file=sys.stderr)
        return 3
    _write_manifest(cfg, outputs)
    log.info("wrote %d files to %s", len(outputs) + 1, cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
