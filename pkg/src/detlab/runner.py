"""Turn validated configs into reports and convergence tables."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .determinants import det_swap_property, dirichlet_chain_verify, neumann_chain_verify
from .flags import collect_flags
from .geometry import ModalFunction, free_dtn_mode, free_ntd_mode, make_domain
from .halfline import jost_pais_check, make_local_potential, ratio_identity_check
from .potential import make_potential, zero_potential
from .reports import IdentityReport, RunReport

SATURATION_FLOOR = 1e-13


def build_domain(cfg: ExperimentConfig):
    res = cfg.resolution
    return make_domain(cfg.geometry, res.get("mode_cutoff", 0), res["n_radial"], res.get("n_boundary"))


def _factor(raw: dict, cutoff: int) -> ModalFunction:
    modes: dict[int, np.ndarray] = {n: np.array([complex(*c) for c in v]) for n, v in raw["modes"].items()}
    geo = raw.get("geometric")
    if geo:
        base = np.array([complex(*c) for c in geo["coeffs"]])
        for n in range(-cutoff, cutoff + 1):
            extra = base * geo["rho"] ** abs(n)
            cur = modes.get(n, np.zeros(0, dtype=complex))
            size = max(len(cur), len(extra))
            modes[n] = np.pad(cur, (0, size - len(cur))) + np.pad(extra, (0, size - len(extra)))
    return ModalFunction.from_modes(modes, raw["envelope"])


def build_potential(cfg: ExperimentConfig, domain):
    pot_cfg = cfg.potential
    if not pot_cfg or pot_cfg.get("zero"):
        return zero_potential(domain)
    cutoff = domain.mode_cutoff
    left = [_factor(f, cutoff) for f in pot_cfg["left"]]
    right = left if pot_cfg["right"] == pot_cfg["left"] else [_factor(f, cutoff) for f in pot_cfg["right"]]
    kap = [complex(*c) for c in pot_cfg["couplings"]]
    return make_potential(kap, left, right, domain)


def _dtn_inverse_report(domain, z) -> IdentityReport:
    rep = IdentityReport("dtn-inverse", z, resolution={"n_radial": len(domain.nodes),
                                                       "mode_cutoff": domain.mode_cutoff})
    with collect_flags() as flags:
        for n in domain.modes:
            a, b = f"ntd[{n}]", f"neg_inv_dtn[{n}]"
            rep.quantities[a] = free_ntd_mode(domain, int(n), z)
            rep.quantities[b] = -1.0 / free_dtn_mode(domain, int(n), z)
            rep.add_pairwise((a, b), "exact_route")
    rep.flags = flags
    return rep


def _swap_reports(cfg: ExperimentConfig) -> list[IdentityReport]:
    stats = det_swap_property(trials=cfg.trials, seed=cfg.seed, max_grid=cfg.resolution.get("grid", 200))
    out = []
    for i, dev in enumerate(stats.deviations):
        rep = IdentityReport("det-swap", 0j, resolution={"trial": i, "seed": cfg.seed})
        rep.residuals["det_grid~det_rank"] = float(dev)
        rep.tiers["det_grid~det_rank"] = "exact_route"
        out.append(rep)
    return out


def _z_task(cfg: ExperimentConfig):
    if cfg.kind in ("jost-pais-1d", "ratio-1d"):
        V = make_local_potential(cfg.potential["name"],
                                 **{k: v for k, v in cfg.potential.items() if k != "name"})
        L, n = cfg.resolution["L"], cfg.resolution["n_interval"]
        check = jost_pais_check if cfg.kind == "jost-pais-1d" else ratio_identity_check
        return lambda z: check(V, z, L, n)
    domain = build_domain(cfg)
    if cfg.kind == "dtn-inverse":
        return lambda z: _dtn_inverse_report(domain, z)
    V = build_potential(cfg, domain)
    nys = (cfg.nystrom["radial"], cfg.nystrom["angular"]) if cfg.nystrom else None
    verify = dirichlet_chain_verify if cfg.kind == "dirichlet-chain" else neumann_chain_verify
    return lambda z: verify(domain, V, z, nys)


def run(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    """Evaluate every ``z`` of the config; report order follows ``z_list``."""
    if cfg.kind == "det-swap":
        reports = _swap_reports(cfg)
    else:
        task = _z_task(cfg)
        if jobs > 1 and len(cfg.z_list) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                reports = list(pool.map(task, cfg.z_list))
        else:
            reports = [task(z) for z in cfg.z_list]
    extra = {"resolution": cfg.resolution}
    if cfg.nystrom:
        extra["nystrom"] = cfg.nystrom
    return RunReport(cfg.kind, reports, dict(cfg.tolerances), cfg.digest(), __version__, extra)


# ---------------------------------------------------------------- convergence


@dataclass
class ConvergenceTable:
    experiment: str
    metric: str
    rows: list[dict]
    config_hash: str = ""

    def orders(self) -> list[float | None]:
        return [r["order"] for r in self.rows]

    def to_record(self) -> dict:
        return {"experiment": self.experiment, "metric": self.metric, "rows": self.rows,
                "provenance": {"config_hash": self.config_hash, "version": __version__}}

    def dumps(self, fmt: str) -> str:
        if fmt == "record":
            return json.dumps(self.to_record(), sort_keys=True, indent=2) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rung", "resolution", "residual", "order", "status"])
        for r in self.rows:
            order = "" if r["order"] is None else repr(r["order"])
            w.writerow([r["rung"], r["resolution"], repr(r["residual"]), order, r["status"]])
        return buf.getvalue()


def _oracle_residual(rep: RunReport) -> float:
    s = rep.summary()["max_residual"]
    return s["oracle_route"] if any(
        t == "oracle_route" for r in rep.reports for t in r.tiers.values()) else s["exact_route"]


def _quantity_values(rep: RunReport, name: str) -> list[complex]:
    try:
        return [r.quantities[name] for r in rep.reports]
    except KeyError:
        raise ValueError(f"quantity {name!r} is not produced by {rep.experiment}") from None


def _label(res: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(res.items()))


def convergence(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceTable:
    """Residual per ladder rung and the empirical order ``log2(res_{k-1}/res_k)``.

    ``metric = oracle`` uses each run's own route-vs-oracle residuals;
    ``metric = reference`` compares ``convergence.quantity`` with a run at
    twice the finest rung.
    """
    if len(cfg.ladder) < 3:
        raise ValueError("a convergence study needs a ladder with at least 3 rungs")
    metric = cfg.convergence["metric"]
    runs = [run(cfg.with_resolution(r), jobs) for r in cfg.ladder]
    if metric == "oracle":
        residuals = [_oracle_residual(r) for r in runs]
    else:
        finest = {k: 2 * v for k, v in cfg.ladder[-1].items()}
        ref = _quantity_values(run(cfg.with_resolution(finest), jobs), cfg.convergence["quantity"])
        residuals = []
        for r in runs:
            vals = _quantity_values(r, cfg.convergence["quantity"])
            residuals.append(max(abs(a - b) / max(abs(b), 1.0) for a, b in zip(vals, ref)))
    rows = []
    for i, (res, rung) in enumerate(zip(residuals, cfg.ladder)):
        order = None
        status = "saturated" if res <= SATURATION_FLOOR else ""
        if i > 0 and not status and residuals[i - 1] > SATURATION_FLOOR:
            order = math.log2(residuals[i - 1] / res)
        rows.append({"rung": i, "resolution": _label(rung), "residual": float(res), "order": order,
                     "status": status})
    return ConvergenceTable(cfg.kind, metric, rows, cfg.digest())
