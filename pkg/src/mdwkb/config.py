"""Run configuration: flat key=value text with section headers."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .grids import FULL_3D, GridSpec, NamedForm, REDUCED_1D


@dataclass
class RunConfig:
    grid: GridSpec
    phase_form: NamedForm
    amplitude_form: NamedForm
    T: float = 0.5
    epsilons: list = field(default_factory=lambda: [1.0 / 64.0])
    band_weights: tuple = (1.0, 0.0)
    base_spinor: tuple = (1.0, 0.0, 0.0, 0.0)
    coupling: bool = True
    corrector: bool = False
    dt: float | None = None
    store_every: int | None = None
    oversample: int = 2
    conservation_tol: float = 1e-6
    defect_tol: float = 1e-8
    outdir: str | None = None
    seed: int = 0
    threads: int | None = None
    raw_text: str = ""
    hash: str = ""


def _form(section) -> NamedForm:
    name = section.get("name", "zero")
    params = {k: float(v) for k, v in section.items() if k != "name"}
    return NamedForm(name, params)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    g = cp["grid"] if cp.has_section("grid") else {}
    mode = g.get("mode", REDUCED_1D)
    lo = float(g.get("min", -3.141592653589793))
    hi = float(g.get("max", 3.141592653589793))
    n = int(g.get("points", 256))
    periodic = g.get("periodic", "true").lower() in ("1", "true", "yes")
    if mode == REDUCED_1D:
        grid = GridSpec(mode, ((lo, hi),), (n,), (periodic,))
    elif mode == FULL_3D:
        grid = GridSpec(mode, ((lo, hi),) * 3, (n,) * 3, (periodic,) * 3)
    else:
        raise ConfigError(f"unknown grid mode {mode!r}")

    phase = _form(cp["phase"]) if cp.has_section("phase") else NamedForm("zero")
    amp = _form(cp["amplitude"]) if cp.has_section("amplitude") else NamedForm(
        "gaussian", {"width": 0.5, "height": 1.0})

    r = cp["run"] if cp.has_section("run") else {}
    eps_raw = r.get("epsilon", "1/64")
    epsilons = []
    for tok in eps_raw.replace(";", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "/" in tok:
            a, b = tok.split("/")
            epsilons.append(float(a) / float(b))
        else:
            epsilons.append(float(tok))
    band = r.get("band", "electron")
    if band == "electron":
        weights = (1.0, 0.0)
    elif band == "positron":
        weights = (0.0, 1.0)
    elif band == "both":
        weights = (float(r.get("weight_plus", 1.0)), float(r.get("weight_minus", 1.0)))
    else:
        raise ConfigError(f"unknown band {band!r}")

    cfg = RunConfig(
        grid=grid,
        phase_form=phase,
        amplitude_form=amp,
        T=float(r.get("T", 0.5)),
        epsilons=epsilons,
        band_weights=weights,
        coupling=r.get("coupling", "on").lower() in ("on", "1", "true", "yes"),
        corrector=r.get("corrector", "off").lower() in ("on", "1", "true", "yes"),
        dt=(float(r["dt"]) if "dt" in r else None),
        store_every=(int(r["store_every"]) if "store_every" in r else None),
        oversample=int(r.get("oversample", 2)),
        conservation_tol=float(r.get("conservation_tol", 1e-6)),
        defect_tol=float(r.get("defect_tol", 1e-8)),
        seed=int(r.get("seed", 0)),
        raw_text=text,
    )
    cfg.hash = hashlib.sha256(text.encode()).hexdigest()[:16]
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def default_config_text(**overrides) -> str:
    base = {
        "grid": {"mode": REDUCED_1D, "min": "-3.141592653589793",
                 "max": "3.141592653589793", "points": "256", "periodic": "true"},
        "phase": {"name": "plane", "kx": "0.5"},
        "amplitude": {"name": "gaussian", "cx": "0.0", "width": "0.35", "height": "1.0"},
        "run": {"T": "0.5", "epsilon": "1/64", "band": "electron", "coupling": "on"},
    }
    for key, val in overrides.items():
        sect, opt = key.split(".")
        base.setdefault(sect, {})[opt] = str(val)
    buf = io.StringIO()
    for sect, opts in base.items():
        buf.write(f"[{sect}]\n")
        for k, v in opts.items():
            buf.write(f"{k} = {v}\n")
        buf.write("\n")
    return buf.getvalue()
