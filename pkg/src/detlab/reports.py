"""Per-z identity reports and whole-run reports, with lossless JSON records
and the flat CSV schema."""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

TIERS = ("exact_route", "oracle_route")

CSV_COLUMNS = (
    "experiment",
    "z_re",
    "z_im",
    "quantity_name",
    "value_re",
    "value_im",
    "residual",
    "resolution",
    "flag",
)


def relative_residual(a: complex, b: complex) -> float:
    return abs(a - b) / max(abs(a), 1.0)


def residual_key(a: str, b: str) -> str:
    return f"{a}~{b}"


@dataclass
class IdentityReport:
    """All determinants computed at one spectral point and their agreement."""

    experiment: str
    z: complex
    quantities: dict[str, complex] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)
    tiers: dict[str, str] = field(default_factory=dict)
    resolution: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def excluded(self) -> bool:
        return bool(self.flags)

    def add_pairwise(self, names, tier: str = "exact_route") -> None:
        """Record ``|a - b| / max(|a|, 1)`` for every pair among ``names``."""
        if tier not in TIERS:
            raise ValueError(f"unknown tolerance tier {tier!r}")
        for a, b in itertools.combinations(names, 2):
            key = residual_key(a, b)
            self.residuals[key] = relative_residual(self.quantities[a], self.quantities[b])
            self.tiers[key] = tier

    def max_residual(self, tier: str | None = None) -> float:
        vals = [r for k, r in self.residuals.items() if tier is None or self.tiers[k] == tier]
        return max(vals, default=0.0)

    def recomputed_residuals(self) -> dict[str, float]:
        out = {}
        for key in self.residuals:
            a, b = key.split("~")
            out[key] = relative_residual(self.quantities[a], self.quantities[b])
        return out

    def resolution_label(self) -> str:
        return ";".join(f"{k}={_fmt_num(v)}" for k, v in sorted(self.resolution.items()))

    def to_record(self) -> dict:
        return {
            "experiment": self.experiment,
            "z": [self.z.real, self.z.imag],
            "quantities": {k: [v.real, v.imag] for k, v in self.quantities.items()},
            "residuals": dict(self.residuals),
            "tiers": dict(self.tiers),
            "resolution": dict(self.resolution),
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "IdentityReport":
        return cls(
            experiment=rec["experiment"],
            z=complex(*rec["z"]),
            quantities={k: complex(*v) for k, v in rec["quantities"].items()},
            residuals={k: float(v) for k, v in rec["residuals"].items()},
            tiers=dict(rec["tiers"]),
            resolution=dict(rec["resolution"]),
            flags=list(rec["flags"]),
        )


def _fmt_num(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


@dataclass
class RunReport:
    """Reports for every z of one experiment plus the pass/fail summary."""

    experiment: str
    reports: list[IdentityReport]
    tolerances: dict[str, float]
    config_hash: str = ""
    version: str = ""
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        included = [r for r in self.reports if not r.excluded]
        out = {"excluded": len(self.reports) - len(included), "max_residual": {}, "passed": {}}
        for tier in TIERS:
            worst = max((r.max_residual(tier) for r in included), default=0.0)
            out["max_residual"][tier] = worst
            out["passed"][tier] = worst <= self.tolerances[tier]
        out["passed_all"] = all(out["passed"].values())
        return out

    @property
    def passed(self) -> bool:
        return self.summary()["passed_all"]

    def to_record(self) -> dict:
        return {
            "experiment": self.experiment,
            "provenance": {"config_hash": self.config_hash, "version": self.version},
            "tolerances": dict(self.tolerances),
            "reports": [r.to_record() for r in self.reports],
            "summary": self.summary(),
            "extra": self.extra,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RunReport":
        return cls(
            experiment=rec["experiment"],
            reports=[IdentityReport.from_record(r) for r in rec["reports"]],
            tolerances={k: float(v) for k, v in rec["tolerances"].items()},
            config_hash=rec["provenance"]["config_hash"],
            version=rec["provenance"]["version"],
            extra=rec.get("extra", {}),
        )

    def __eq__(self, other):
        if not isinstance(other, RunReport):
            return NotImplemented
        return self.to_record() == other.to_record()


def dumps_record(report: RunReport) -> str:
    """Deterministic JSON text (sorted keys, ``repr``-exact floats)."""
    return json.dumps(report.to_record(), sort_keys=True, indent=2) + "\n"


def loads_record(text: str) -> RunReport:
    return RunReport.from_record(json.loads(text))


def csv_rows(report: RunReport):
    # sorted names keep CSV from a live run identical to CSV from a reloaded record
    for r in report.reports:
        res_label = r.resolution_label()
        flag = "|".join(r.flags)
        for name, val in sorted(r.quantities.items()):
            yield [r.experiment, r.z.real, r.z.imag, name, val.real, val.imag, "", res_label, flag]
        for key, res in sorted(r.residuals.items()):
            yield [r.experiment, r.z.real, r.z.imag, f"residual:{key}", "", "", res, res_label, flag]


def dumps_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in csv_rows(report):
        w.writerow([repr(c) if isinstance(c, float) else c for c in row])
    return buf.getvalue()


def emit(report: RunReport, fmt: str, path) -> Path:
    """Write ``report`` as ``"csv"`` or ``"record"`` (JSON) to ``path``."""
    if fmt == "csv":
        text = dumps_csv(report)
    elif fmt == "record":
        text = dumps_record(report)
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'record'")
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc
    return path
