"""Run configuration: a sectioned TOML file plus optional overlays.

Example::

    seed = 0
    n_devices = 21
    out_dir = "out"

    [data]
    source = "synthetic"        # or "libsvm" with path = "train.svm"
    n_samples = 2000
    dim = 20

    [problem]
    lambda = 1e-2
    eps = 1e-6
    gamma = 0.5
    c1 = "calibrate"
    c2 = "calibrate"

    [timing]
    tau_server = 1.0
    worker_range = [3.0, 7.0]   # or tau_workers = [...]
    l_min = -6
    l_max = 12

Overlays are merged one level deep: top-level scalars are replaced, and keys
inside a section replace the same keys of the base section.
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .data import Dataset, gen_synthetic, read_libsvm
from .netsim import NOISE_LEVELS

CALIBRATE = "calibrate"
SECTIONS = ("data", "problem", "timing", "solver", "noise")


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass(frozen=True)
class DataSpec:
    source: str = "synthetic"
    path: Path | None = None
    n_samples: int = 2000
    dim: int = 20
    noise_sd: float = 0.1
    seed: int | None = None

    def load(self, master_seed: int) -> Dataset:
        if self.source == "libsvm":
            return read_libsvm(self.path)
        return gen_synthetic(self.n_samples, self.dim, self.noise_sd, master_seed if self.seed is None else self.seed)


@dataclass(frozen=True)
class ProblemSpec:
    lam: float = 1e-2
    eps: float = 1e-6
    gamma: float = 0.5
    c1: float | str = CALIBRATE
    c2: float | str = CALIBRATE
    mu_from_spectrum: bool = False

    @property
    def needs_calibration(self) -> bool:
        return self.c1 == CALIBRATE or self.c2 == CALIBRATE


@dataclass(frozen=True)
class TimingSpec:
    tau_server: float = 1.0
    tau_workers: tuple[float, ...] | None = None
    worker_range: tuple[float, float] = (3.0, 7.0)
    tau_comm: float | None = None
    l_min: int = -6
    l_max: int = 12

    def tau_local(self, n_devices: int, seed: int) -> list[float]:
        if self.tau_workers is not None:
            return [self.tau_server, *self.tau_workers]
        lo, hi = self.worker_range
        rng = np.random.default_rng([seed, 1])
        return [self.tau_server, *(float(v) for v in rng.uniform(lo, hi, n_devices - 1))]

    @property
    def l_values(self) -> list[int]:
        return list(range(self.l_min, self.l_max + 1))

    def comm_for(self, l: int) -> float:
        return self.tau_server * 10.0**l


@dataclass(frozen=True)
class SolverSpec:
    inner: str = "ogmg"
    inner_iters: int = 10
    similarity: str = "empirical"
    max_outer: int = 10_000
    probe_b1: int | None = None


@dataclass(frozen=True)
class NoiseSpec:
    levels: tuple[float, ...] = NOISE_LEVELS
    draws: int = 2000
    applies_to: str = "both"
    per_event: bool = False
    l_min: int = 6
    l_max: int | None = None
    bootstrap: int = 1000


@dataclass(frozen=True)
class RunConfig:
    n_devices: int = 21
    seed: int = 0
    out_dir: Path = Path("out")
    data: DataSpec = field(default_factory=DataSpec)
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    timing: TimingSpec = field(default_factory=TimingSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def tau_local(self) -> list[float]:
        return self.timing.tau_local(self.n_devices, self.seed)

    def noise_l_values(self) -> list[int]:
        hi = self.timing.l_max if self.noise.l_max is None else self.noise.l_max
        return list(range(self.noise.l_min, hi + 1))


def load_config(paths: Path | str | Sequence[Path | str], **overrides: Any) -> RunConfig:
    """Read one or more TOML files, later ones overlaying earlier ones."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if not paths:
        raise ConfigError("config", "no configuration file given")
    merged: dict = {}
    base_dir = Path(".")
    for i, p in enumerate(paths):
        p = Path(p)
        try:
            with open(p, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {p}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"{p}: {exc}") from None
        if i == 0:
            base_dir = p.parent
        merged = merge(merged, doc)
    return from_dict(merged, base_dir=base_dir, **overrides)


def merge(base: Mapping, overlay: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for key, value in overlay.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            section = dict(out[key])
            section.update(value)
            out[key] = section
        else:
            out[key] = copy.deepcopy(value)
    return out


def from_dict(doc: Mapping, *, base_dir: Path | str = ".", seed: int | None = None, out_dir: Path | str | None = None) -> RunConfig:
    base_dir = Path(base_dir)
    unknown = set(doc) - {"n_devices", "seed", "out_dir", *SECTIONS}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    sections = {name: dict(doc.get(name, {})) for name in SECTIONS}
    for name, sec in sections.items():
        if not isinstance(doc.get(name, {}), Mapping):
            raise ConfigError(name, "must be a table")

    cfg_seed = _int(doc.get("seed", 0), "seed", lo=0) if seed is None else _int(seed, "--seed", lo=0)
    n_devices = _int(doc.get("n_devices", 21), "n_devices", lo=1)
    out = Path(out_dir) if out_dir is not None else base_dir / doc.get("out_dir", "out")

    data = _data_spec(sections["data"], base_dir)
    problem = _problem_spec(sections["problem"])
    timing = _timing_spec(sections["timing"], n_devices)
    solver = _solver_spec(sections["solver"])
    noise = _noise_spec(sections["noise"])
    if data.source == "synthetic" and data.n_samples < n_devices:
        raise ConfigError("data.n_samples", f"{data.n_samples} samples cannot cover {n_devices} devices")
    return RunConfig(n_devices, cfg_seed, out, data, problem, timing, solver, noise)


def to_dict(cfg: RunConfig) -> dict:
    """Plain-dict form that ``from_dict`` reads back (paths become strings)."""
    d = cfg.data
    data: dict = {"source": d.source}
    if d.source == "libsvm":
        data["path"] = str(d.path)
    else:
        data.update(n_samples=d.n_samples, dim=d.dim, noise_sd=d.noise_sd)
        if d.seed is not None:
            data["seed"] = d.seed
    p = cfg.problem
    problem = {"lambda": p.lam, "eps": p.eps, "gamma": p.gamma, "c1": p.c1, "c2": p.c2, "mu_from_spectrum": p.mu_from_spectrum}
    t = cfg.timing
    timing: dict = {"tau_server": t.tau_server, "l_min": t.l_min, "l_max": t.l_max}
    if t.tau_workers is not None:
        timing["tau_workers"] = list(t.tau_workers)
    else:
        timing["worker_range"] = list(t.worker_range)
    if t.tau_comm is not None:
        timing["tau_comm"] = t.tau_comm
    s = cfg.solver
    solver: dict = {"inner": s.inner, "inner_iters": s.inner_iters, "similarity": s.similarity, "max_outer": s.max_outer}
    if s.probe_b1 is not None:
        solver["probe_b1"] = s.probe_b1
    nz = cfg.noise
    noise: dict = {
        "levels": list(nz.levels),
        "draws": nz.draws,
        "applies_to": nz.applies_to,
        "per_event": nz.per_event,
        "l_min": nz.l_min,
        "bootstrap": nz.bootstrap,
    }
    if nz.l_max is not None:
        noise["l_max"] = nz.l_max
    return {
        "n_devices": cfg.n_devices,
        "seed": cfg.seed,
        "out_dir": str(cfg.out_dir),
        "data": data,
        "problem": problem,
        "timing": timing,
        "solver": solver,
        "noise": noise,
    }


def dumps(doc: Mapping) -> str:
    return tomli_w.dumps(dict(doc))


def calibration_overlay(c1: float, c2: float) -> str:
    return dumps({"problem": {"c1": float(c1), "c2": float(c2)}})


# --- field validation --------------------------------------------------------------


def _take(sec: dict, section: str, allowed: set[str]) -> None:
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{section}.{sorted(extra)[0]}", "unknown key")


def _int(v: Any, name: str, *, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(name, f"must be >= {lo}, got {v}")
    return v


def _real(v: Any, name: str, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(name, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(name, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ConfigError(name, f"must be nonnegative, got {v}")
    return float(v)


def _data_spec(sec: dict, base_dir: Path) -> DataSpec:
    _take(sec, "data", {"source", "path", "n_samples", "dim", "noise_sd", "seed"})
    source = sec.get("source", "synthetic")
    if source == "libsvm":
        if "path" not in sec:
            raise ConfigError("data.path", "required when source = 'libsvm'")
        path = base_dir / sec["path"]
        if not path.is_file():
            raise ConfigError("data.path", f"file not found: {path}")
        return DataSpec(source, path)
    if source != "synthetic":
        raise ConfigError("data.source", f"expected 'synthetic' or 'libsvm', got {source!r}")
    return DataSpec(
        source,
        None,
        _int(sec.get("n_samples", 2000), "data.n_samples", lo=1),
        _int(sec.get("dim", 20), "data.dim", lo=1),
        _real(sec.get("noise_sd", 0.1), "data.noise_sd", nonneg=True),
        None if "seed" not in sec else _int(sec["seed"], "data.seed", lo=0),
    )


def _problem_spec(sec: dict) -> ProblemSpec:
    _take(sec, "problem", {"lambda", "eps", "gamma", "c1", "c2", "mu_from_spectrum"})
    lam = _real(sec.get("lambda", 1e-2), "problem.lambda", positive=True)
    eps = _real(sec.get("eps", 1e-6), "problem.eps", positive=True)
    if eps >= 1:
        raise ConfigError("problem.eps", "must lie in (0, 1)")
    gamma = _real(sec.get("gamma", 0.5), "problem.gamma")
    if gamma not in (0.5, 1.0):
        raise ConfigError("problem.gamma", f"must be 0.5 or 1, got {gamma}")
    cs = []
    for key in ("c1", "c2"):
        v = sec.get(key, CALIBRATE)
        cs.append(v if v == CALIBRATE else _real(v, f"problem.{key}", positive=True))
    mu_flag = sec.get("mu_from_spectrum", False)
    if not isinstance(mu_flag, bool):
        raise ConfigError("problem.mu_from_spectrum", "expected true or false")
    return ProblemSpec(lam, eps, gamma, cs[0], cs[1], mu_flag)


def _timing_spec(sec: dict, n_devices: int) -> TimingSpec:
    _take(sec, "timing", {"tau_server", "tau_workers", "worker_range", "tau_comm", "l_min", "l_max"})
    tau_server = _real(sec.get("tau_server", 1.0), "timing.tau_server", positive=True)
    workers = None
    if "tau_workers" in sec:
        raw = sec["tau_workers"]
        if not isinstance(raw, list):
            raise ConfigError("timing.tau_workers", "expected a list")
        workers = tuple(_real(v, "timing.tau_workers", positive=True) for v in raw)
        if len(workers) != n_devices - 1:
            raise ConfigError("timing.tau_workers", f"expected {n_devices - 1} entries, got {len(workers)}")
    rng = sec.get("worker_range", [3.0, 7.0])
    if not isinstance(rng, list) or len(rng) != 2:
        raise ConfigError("timing.worker_range", "expected [low, high]")
    lo, hi = (_real(v, "timing.worker_range", positive=True) for v in rng)
    if lo > hi:
        raise ConfigError("timing.worker_range", f"low {lo} exceeds high {hi}")
    tau_comm = None if "tau_comm" not in sec else _real(sec["tau_comm"], "timing.tau_comm", nonneg=True)
    l_min = _int(sec.get("l_min", -6), "timing.l_min")
    l_max = _int(sec.get("l_max", 12), "timing.l_max")
    if l_min > l_max:
        raise ConfigError("timing.l_min", f"l_min={l_min} exceeds l_max={l_max}")
    return TimingSpec(tau_server, workers, (lo, hi), tau_comm, l_min, l_max)


def _solver_spec(sec: dict) -> SolverSpec:
    _take(sec, "solver", {"inner", "inner_iters", "similarity", "max_outer", "probe_b1"})
    inner = sec.get("inner", "ogmg")
    if inner not in ("ogmg", "exact"):
        raise ConfigError("solver.inner", f"expected 'ogmg' or 'exact', got {inner!r}")
    similarity = sec.get("similarity", "empirical")
    if similarity not in ("empirical", "model"):
        raise ConfigError("solver.similarity", f"expected 'empirical' or 'model', got {similarity!r}")
    probe = None if "probe_b1" not in sec else _int(sec["probe_b1"], "solver.probe_b1", lo=1)
    return SolverSpec(
        inner,
        _int(sec.get("inner_iters", 10), "solver.inner_iters", lo=1),
        similarity,
        _int(sec.get("max_outer", 10_000), "solver.max_outer", lo=1),
        probe,
    )


def _noise_spec(sec: dict) -> NoiseSpec:
    _take(sec, "noise", {"levels", "draws", "applies_to", "per_event", "l_min", "l_max", "bootstrap"})
    levels = sec.get("levels", list(NOISE_LEVELS))
    if not isinstance(levels, list) or not levels:
        raise ConfigError("noise.levels", "expected a nonempty list")
    levels_t = tuple(_real(v, "noise.levels", nonneg=True) for v in levels)
    if any(v > 1 for v in levels_t):
        raise ConfigError("noise.levels", "levels must lie in [0, 1]")
    applies = sec.get("applies_to", "both")
    if applies not in ("comm", "local", "both"):
        raise ConfigError("noise.applies_to", f"expected comm, local or both, got {applies!r}")
    per_event = sec.get("per_event", False)
    if not isinstance(per_event, bool):
        raise ConfigError("noise.per_event", "expected true or false")
    return NoiseSpec(
        levels_t,
        _int(sec.get("draws", 2000), "noise.draws", lo=2),
        applies,
        per_event,
        _int(sec.get("l_min", 6), "noise.l_min"),
        None if "l_max" not in sec else _int(sec["l_max"], "noise.l_max"),
        _int(sec.get("bootstrap", 1000), "noise.bootstrap", lo=10),
    )
