"""Tabular experiment reports, emitted as CSV and JSON with identical data."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__

DIAG_LIMIT = 0.01


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    flagged: bool = False


@dataclass
class ExperimentReport:
    experiment: str
    rows: list[dict] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, **row) -> dict:
        diag = row.get("quad_diag")
        flagged = bool(row.pop("flagged", False))
        if diag is not None and (not math.isfinite(diag) or diag > DIAG_LIMIT):
            flagged = True
        for k, v in row.items():
            if isinstance(v, float) and not math.isfinite(v) and k != "quad_diag":
                flagged = True
        row = {"experiment": self.experiment, **row, "flagged": flagged}
        self.rows.append(row)
        return row

    def check(self, name: str, passed: bool, detail: str = "", flagged: bool = False) -> Check:
        c = Check(name, bool(passed), detail, flagged)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.flagged)

    def columns(self) -> list[str]:
        cols: list[str] = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "metadata": self.metadata,
            "columns": self.columns(),
            "rows": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
            "checks": [c.__dict__ for c in self.checks],
        }
        return json.dumps(payload, indent=1, allow_nan=True)

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        c, j = out / f"{self.experiment}.csv", out / f"{self.experiment}.json"
        c.write_text(self.to_csv())
        j.write_text(self.to_json())
        return c, j


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def metadata(cfg) -> dict:
    return {
        "config_hash": cfg.config_hash(),
        "config": cfg.as_dict(),
        "versions": {"spfem": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
