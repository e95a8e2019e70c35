"""Experiment configuration: YAML files validated into :class:`ExperimentConfig`.

Errors carry the dotted field path and, when known, the source line.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .reports import TIERS

KINDS = {
    "jost-pais-1d": ("halfline",),
    "ratio-1d": ("halfline",),
    "dirichlet-chain": ("disk", "ball-radial"),
    "neumann-chain": ("disk", "ball-radial"),
    "det-swap": ("none",),
    "dtn-inverse": ("disk", "ball-radial"),
}
DEFAULT_TOLERANCES = {"exact_route": 1e-8, "oracle_route": 1e-4}
TOLERANCE_ENV = "DETLAB_TOLERANCES"
HALFLINE_RES = {"n_interval": 2000, "L": 30.0}
MODAL_RES = {"n_radial": 64, "mode_cutoff": 24}
METRICS = ("oracle", "reference")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = path or "<config>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    geometry: str
    potential: dict
    z_list: tuple[complex, ...]
    resolution: dict
    tolerances: dict
    ladder: tuple[dict, ...] = ()
    nystrom: dict | None = None
    trials: int = 200
    seed: int = 0
    allow_cut: bool = False
    convergence: dict = field(default_factory=lambda: {"metric": "oracle", "quantity": "lhs_ratio"})

    def canonical(self) -> dict:
        return {
            "kind": self.kind,
            "geometry": self.geometry,
            "potential": self.potential,
            "z_list": [[z.real, z.imag] for z in self.z_list],
            "resolution": self.resolution,
            "tolerances": self.tolerances,
            "ladder": list(self.ladder),
            "nystrom": self.nystrom,
            "trials": self.trials,
            "seed": self.seed,
            "allow_cut": self.allow_cut,
            "convergence": self.convergence,
        }

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_resolution(self, res: dict) -> "ExperimentConfig":
        import dataclasses

        nys = self.nystrom
        merged = dict(self.resolution)
        for key, val in res.items():
            if key.startswith("nystrom_"):
                nys = dict(nys or {})
                nys[key[len("nystrom_"):]] = val
            else:
                merged[key] = val
        return dataclasses.replace(self, resolution=merged, nystrom=nys)


# ---------------------------------------------------------------- line lookup


def _line_index(text: str) -> dict[str, int]:
    """Map dotted paths to 1-based source lines using the YAML node tree."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{path}.{k.value}" if path else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    if root is not None:
        walk(root, "")
    return out


class _Ctx:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def fail(self, path: str, msg: str):
        probe = path
        line = self.lines.get(probe)
        while line is None and probe:
            parent = re.sub(r"(\.[^.\[]+|\[\d+\])$", "", probe)
            probe = "" if parent == probe else parent
            line = self.lines.get(probe) if probe else None
        raise ConfigError(msg, path, line)


# ---------------------------------------------------------------- scalars


def parse_complex(value, path: str, ctx: _Ctx) -> complex:
    """Accept numbers, ``[re, im]`` pairs and strings like ``"-1+2j"``."""
    if isinstance(value, bool):
        ctx.fail(path, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    ctx.fail(path, f"cannot read {value!r} as a complex number")


def _positive_int(value, path, ctx) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        ctx.fail(path, f"expected a positive integer, got {value!r}")
    return value


def _positive_float(value, path, ctx) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        ctx.fail(path, f"expected a positive number, got {value!r}")
    return float(value)


# ---------------------------------------------------------------- sections


def env_tolerances(environ=None) -> dict:
    """Tolerance tiers from the environment, e.g. ``exact_route=1e-9,oracle_route=1e-5``."""
    environ = os.environ if environ is None else environ
    raw = environ.get(TOLERANCE_ENV, "").strip()
    out = dict(DEFAULT_TOLERANCES)
    if not raw:
        return out
    for part in raw.split(","):
        if "=" not in part:
            raise ConfigError(f"malformed entry {part!r}", TOLERANCE_ENV)
        key, val = (s.strip() for s in part.split("=", 1))
        if key not in TIERS:
            raise ConfigError(f"unknown tier {key!r}", TOLERANCE_ENV)
        try:
            tol = float(val)
        except ValueError:
            raise ConfigError(f"tolerance {val!r} is not a number", TOLERANCE_ENV) from None
        if not tol > 0:
            raise ConfigError("tolerances must be positive", TOLERANCE_ENV)
        out[key] = tol
    return out


def _tolerances(raw, ctx) -> dict:
    tol = env_tolerances()
    if raw is None:
        return tol
    if not isinstance(raw, dict):
        ctx.fail("tolerances", "expected a mapping")
    for key, val in raw.items():
        if key not in TIERS:
            ctx.fail(f"tolerances.{key}", f"unknown tier; expected one of {', '.join(TIERS)}")
        tol[key] = _positive_float(val, f"tolerances.{key}", ctx)
    return tol


def _resolution(raw, geometry, path, ctx, partial=False) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        ctx.fail(path, "expected a mapping")
    if geometry == "halfline":
        allowed = {"n_interval": _positive_int, "L": _positive_float}
        base = {} if partial else dict(HALFLINE_RES)
    elif geometry in ("disk", "ball-radial"):
        allowed = {"n_radial": _positive_int, "mode_cutoff": _positive_int, "n_boundary": _positive_int,
                   "nystrom_radial": _positive_int, "nystrom_angular": _positive_int}
        base = {} if partial else dict(MODAL_RES)
    else:
        allowed, base = {"grid": _positive_int}, {}
    for key, val in raw.items():
        if key not in allowed:
            ctx.fail(f"{path}.{key}", f"unknown resolution field; expected one of {', '.join(allowed)}")
        if not partial and key.startswith("nystrom_"):
            ctx.fail(f"{path}.{key}", "nystrom sizes belong in the 'nystrom' section")
        base[key] = allowed[key](val, f"{path}.{key}", ctx)
    if geometry == "disk" and "n_boundary" in base and "mode_cutoff" in base:
        if base["n_boundary"] <= 2 * base["mode_cutoff"]:
            ctx.fail(f"{path}.n_boundary", "n_boundary must exceed 2 * mode_cutoff")
    return base


def _factor(raw, path, ctx, geometry) -> dict:
    if not isinstance(raw, dict):
        ctx.fail(path, "expected a mapping with 'modes' and/or 'geometric'")
    unknown = set(raw) - {"envelope", "modes", "geometric"}
    if unknown:
        ctx.fail(f"{path}.{sorted(unknown)[0]}", "unknown factor field")
    env = raw.get("envelope", 0.0)
    if isinstance(env, bool) or not isinstance(env, (int, float)) or env < 0:
        ctx.fail(f"{path}.envelope", "envelope must be a nonnegative number")
    out: dict[str, Any] = {"envelope": float(env), "modes": {}}
    modes = raw.get("modes", {})
    if not isinstance(modes, dict):
        ctx.fail(f"{path}.modes", "expected a mapping from mode to coefficient list")
    for n, coeffs in modes.items():
        p = f"{path}.modes.{n}"
        if isinstance(n, bool) or not isinstance(n, int):
            ctx.fail(p, "mode keys must be integers")
        if geometry == "ball-radial" and n != 0:
            ctx.fail(p, "ball-radial factors carry only mode 0")
        if not isinstance(coeffs, list) or not coeffs:
            ctx.fail(p, "expected a nonempty coefficient list")
        out["modes"][int(n)] = [_cplx_pair(parse_complex(c, f"{p}[{i}]", ctx)) for i, c in enumerate(coeffs)]
    if "geometric" in raw:
        g = raw["geometric"]
        p = f"{path}.geometric"
        if not isinstance(g, dict) or "rho" not in g or "coeffs" not in g:
            ctx.fail(p, "geometric needs 'rho' and 'coeffs'")
        if geometry == "ball-radial":
            ctx.fail(p, "geometric mode ladders need the disk")
        rho = g["rho"]
        if isinstance(rho, bool) or not isinstance(rho, (int, float)) or not 0 < rho < 1:
            ctx.fail(f"{p}.rho", "rho must lie in (0, 1)")
        if not isinstance(g["coeffs"], list) or not g["coeffs"]:
            ctx.fail(f"{p}.coeffs", "expected a nonempty coefficient list")
        out["geometric"] = {
            "rho": float(rho),
            "coeffs": [_cplx_pair(parse_complex(c, f"{p}.coeffs[{i}]", ctx)) for i, c in enumerate(g["coeffs"])],
        }
    if not out["modes"] and "geometric" not in out:
        ctx.fail(path, "factor has no mode content")
    return out


def _cplx_pair(c: complex) -> list[float]:
    return [c.real, c.imag]


def _potential(raw, geometry, kind, ctx) -> dict:
    if kind == "det-swap" or (kind == "dtn-inverse" and raw is None):
        return {}
    if raw is None:
        ctx.fail("potential", "missing potential section")
    if not isinstance(raw, dict):
        ctx.fail("potential", "expected a mapping")
    if geometry == "halfline":
        from .halfline import POTENTIALS

        name = raw.get("name")
        if name not in POTENTIALS:
            ctx.fail("potential.name", f"unknown potential {name!r}; expected one of {', '.join(sorted(POTENTIALS))}")
        params = {k: v for k, v in raw.items() if k != "name"}
        for k, v in params.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                ctx.fail(f"potential.{k}", "parameters must be real numbers")
        _, keys = POTENTIALS[name]
        for k in params:
            if k not in keys:
                ctx.fail(f"potential.{k}", f"{name} takes parameters {', '.join(keys) or 'none'}")
        for k in keys:
            if k not in params:
                ctx.fail("potential", f"{name} needs parameter {k!r}")
        return {"name": name, **{k: float(v) for k, v in params.items()}}
    if kind == "dtn-inverse" and raw == {}:
        return {}
    unknown = set(raw) - {"couplings", "left", "right", "zero"}
    if unknown:
        ctx.fail(f"potential.{sorted(unknown)[0]}", "unknown potential field")
    if raw.get("zero"):
        return {"zero": True}
    couplings = raw.get("couplings")
    if not isinstance(couplings, list) or not couplings:
        ctx.fail("potential.couplings", "expected a nonempty list of couplings")
    kap = [_cplx_pair(parse_complex(c, f"potential.couplings[{i}]", ctx)) for i, c in enumerate(couplings)]
    left = raw.get("left")
    if not isinstance(left, list) or len(left) != len(kap):
        ctx.fail("potential.left", f"expected {len(kap)} left factors")
    lf = [_factor(f, f"potential.left[{i}]", ctx, geometry) for i, f in enumerate(left)]
    right = raw.get("right")
    if right is None:
        rf = lf
    else:
        if not isinstance(right, list) or len(right) != len(kap):
            ctx.fail("potential.right", f"expected {len(kap)} right factors")
        rf = [_factor(f, f"potential.right[{i}]", ctx, geometry) for i, f in enumerate(right)]
    return {"couplings": kap, "left": lf, "right": rf}


def validate(data: Any, lines: dict[str, int] | None = None) -> ExperimentConfig:
    ctx = _Ctx(lines or {})
    if not isinstance(data, dict):
        ctx.fail("", "config must be a mapping")
    known = {"experiment", "geometry", "potential", "z_list", "resolution", "tolerances", "ladder",
             "nystrom", "trials", "seed", "allow_cut", "convergence"}
    for key in data:
        if key not in known:
            ctx.fail(str(key), "unknown field")
    kind = data.get("experiment")
    if kind not in KINDS:
        ctx.fail("experiment", f"unknown experiment {kind!r}; expected one of {', '.join(KINDS)}")
    geometries = KINDS[kind]
    geometry = data.get("geometry", geometries[0])
    if geometry not in geometries:
        ctx.fail("geometry", f"{kind} runs on {' or '.join(geometries)}, not {geometry!r}")
    allow_cut = data.get("allow_cut", False)
    if not isinstance(allow_cut, bool):
        ctx.fail("allow_cut", "expected true or false")
    zs: list[complex] = []
    if kind != "det-swap":
        raw_z = data.get("z_list")
        if not isinstance(raw_z, list) or not raw_z:
            ctx.fail("z_list", "expected a nonempty list of spectral points")
        for i, v in enumerate(raw_z):
            z = parse_complex(v, f"z_list[{i}]", ctx)
            if z.imag == 0.0 and z.real >= 0.0 and not allow_cut:
                ctx.fail(f"z_list[{i}]", f"z = {z} lies on the cut [0, inf); set allow_cut to test it")
            zs.append(z)
    resolution = _resolution(data.get("resolution"), geometry, "resolution", ctx)
    ladder_raw = data.get("ladder") or []
    if not isinstance(ladder_raw, list):
        ctx.fail("ladder", "expected a list of resolutions")
    ladder = [_resolution(r, geometry, f"ladder[{i}]", ctx, partial=True) for i, r in enumerate(ladder_raw)]
    for i in range(1, len(ladder)):
        a, b = ladder[i - 1], ladder[i]
        if set(a) != set(b):
            ctx.fail(f"ladder[{i}]", "every rung must set the same fields")
        if not all(b[k] >= a[k] for k in a) or all(b[k] == a[k] for k in a):
            ctx.fail(f"ladder[{i}]", "ladder must be strictly increasing")
    nystrom = data.get("nystrom")
    if nystrom is not None:
        if geometry not in ("disk", "ball-radial") or kind not in ("dirichlet-chain", "neumann-chain"):
            ctx.fail("nystrom", "the Nyström oracle applies to the disk and ball chains")
        if not isinstance(nystrom, dict) or "radial" not in nystrom:
            ctx.fail("nystrom", "expected a mapping with 'radial' (and optionally 'angular')")
        nystrom = {
            "radial": _positive_int(nystrom["radial"], "nystrom.radial", ctx),
            "angular": _positive_int(nystrom.get("angular", 4 * resolution.get("mode_cutoff", 0) + 8),
                                     "nystrom.angular", ctx),
        }
    trials = _positive_int(data.get("trials", 200), "trials", ctx)
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        ctx.fail("seed", "expected a nonnegative integer")
    conv = data.get("convergence") or {}
    if not isinstance(conv, dict):
        ctx.fail("convergence", "expected a mapping")
    metric = conv.get("metric", "oracle")
    if metric not in METRICS:
        ctx.fail("convergence.metric", f"expected one of {', '.join(METRICS)}")
    quantity = conv.get("quantity", "lhs_ratio")
    if not isinstance(quantity, str):
        ctx.fail("convergence.quantity", "expected a quantity name")
    return ExperimentConfig(
        kind=kind,
        geometry=geometry,
        potential=_potential(data.get("potential"), geometry, kind, ctx),
        z_list=tuple(zs),
        resolution=resolution,
        tolerances=_tolerances(data.get("tolerances"), ctx),
        ladder=tuple(ladder),
        nystrom=nystrom,
        trials=trials,
        seed=seed,
        allow_cut=allow_cut,
        convergence={"metric": metric, "quantity": quantity},
    )


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", "",
                          mark.line + 1 if mark else None) from None
    return validate(data, _line_index(text))


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror or exc}", str(path)) from None
    return loads(text)
