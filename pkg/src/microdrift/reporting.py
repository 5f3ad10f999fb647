"""Run records, atomic persistence and SVG plots."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger(__name__)

# Column sets of the CSV outputs; kept stable across versions.
PSI_COLUMNS = ["Q", "min_divisor", "psi"]
SWEEP_COLUMNS = ["eps", "mu", "tau", "drift_total", "drift_along", "drift_transverse", "threshold", "pass"]
NORMAL_FORM_COLUMNS = ["eps", "mu", "sup_displacement", "sup_dtheta", "sup_dI", "bound_displacement", "bound_dtheta",
                       "bound_dI", "ratio_displacement", "ratio_dtheta", "ratio_dI"]
SERIES_COLUMNS = ["t", "along", "transverse"]


def trajectory_columns(n):
    return ["t"] + [f"theta_{i + 1}" for i in range(n)] + [f"I_{i + 1}" for i in range(n)] + ["energy"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(_jsonable(config), sort_keys=True).encode()).hexdigest()


@dataclass
class RunRecord:
    """Everything a run produced.

    ``reports`` maps a report kind to its payload.  Recognised kinds are
    ``psi`` (``rows``), ``sweep`` (``rows``, fit, optional ``series``),
    ``drift`` (one report, optional ``series``), ``normal_form`` (``rows``,
    slopes), ``trajectory`` (``columns``, ``rows``), ``average`` and
    ``scalar``.  Wall-clock timings live inside ``timestamp`` together with
    the creation time, so two identical runs differ only in that field.
    """

    command: str
    config: dict
    reports: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    version: str = __version__

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def run_id(self) -> str:
        stamp = self.created.replace("-", "").replace(":", "").split("+")[0]
        return f"{stamp}-{self.config_hash[:12]}"

    @property
    def is_empty(self) -> bool:
        return not self.reports

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "version": self.version,
            "reports": self.reports,
            "timestamp": {"created": self.created, "run_id": self.run_id, "timings": self.timings},
        }

    @classmethod
    def from_dict(cls, doc) -> "RunRecord":
        ts = doc.get("timestamp", {})
        return cls(doc["command"], doc["config"], doc.get("reports", {}), ts.get("timings", {}),
                   ts.get("created", ""), doc.get("version", __version__))

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c) for c in columns]
        writer.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def record_files(record: RunRecord) -> dict:
    """File name -> text content for everything :func:`persist_run` writes."""
    files = {"run.json": canonical_json(record.to_dict()), "config.json": canonical_json(record.config)}
    rep = record.reports
    if "psi" in rep:
        files["psi.csv"] = csv_text(PSI_COLUMNS, rep["psi"]["rows"])
    if "sweep" in rep:
        files["sweep.csv"] = csv_text(SWEEP_COLUMNS, rep["sweep"]["rows"])
    if "normal_form" in rep:
        files["normalform.csv"] = csv_text(NORMAL_FORM_COLUMNS, rep["normal_form"]["rows"])
    if "trajectory" in rep:
        files["trajectory.csv"] = csv_text(rep["trajectory"]["columns"], rep["trajectory"]["rows"])
    if "drift" in rep and rep["drift"].get("series"):
        s = rep["drift"]["series"]
        files["drift_series.csv"] = csv_text(SERIES_COLUMNS, zip(*(s[c] for c in SERIES_COLUMNS)))
    return files


def atomic_write_many(out_dir, files: dict) -> list:
    """Write ``{name: text}`` into ``out_dir`` all-or-nothing.

    Every file goes to a temporary sibling first; only once all of them are
    written are they renamed into place.  On any failure the temporaries are
    removed and the error propagates unchanged.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    temps = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=out_dir)
            temps.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, final in temps:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    return [final for _, final in temps]


def persist_run(record: RunRecord, out_dir) -> list:
    """Write ``run.json``, ``config.json`` and one CSV per tabular report."""
    return atomic_write_many(out_dir, record_files(record))


# -- plots --------------------------------------------------------------------

def _svg_text(fig) -> str:
    import matplotlib.pyplot as plt

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "microdrift"
    import matplotlib.pyplot as plt

    return plt.subplots(figsize=(5.5, 4))


def sweep_figure(sweep: dict):
    """Log-log drift against eps with the fitted line and a slope-1/2 guide."""
    rows = sweep["rows"]
    eps = np.array([r["eps"] for r in rows], dtype=float)
    drift = np.array([r["drift_total"] for r in rows], dtype=float)
    fig, ax = _figure()
    ax.loglog(eps, drift, "o", label="measured |I(tau) - I(0)|")
    slope, intercept = sweep["slope"], sweep["intercept"]
    grid = np.geomspace(eps.min(), eps.max(), 50)
    ax.loglog(grid, np.exp(intercept) * grid ** slope, "-", label=f"fit, slope {slope:.3f}")
    anchor = np.exp(np.mean(np.log(drift)) - 0.5 * np.mean(np.log(eps)))
    ax.loglog(grid, anchor * np.sqrt(grid), "--", label="slope 1/2 guide")
    ax.set_xlabel("eps")
    ax.set_ylabel("action drift")
    ax.legend()
    return fig


def psi_figure(psi: dict):
    rows = psi["rows"]
    Q = [r["Q"] for r in rows]
    values = [r["psi"] for r in rows]
    fig, ax = _figure()
    ax.step(Q, values, where="post")
    ax.set_xlabel("Q")
    ax.set_ylabel("Psi(Q)")
    return fig


def series_figure(series: dict):
    fig, ax = _figure()
    ax.plot(series["t"], series["along"], label="along resonant module")
    ax.plot(series["t"], series["transverse"], label="transverse")
    ax.set_xlabel("t")
    ax.set_ylabel("|I(t) - I(0)|")
    ax.legend()
    return fig


def plot_sweep(sweep: dict) -> str:
    return _svg_text(sweep_figure(sweep))


def plot_psi(psi: dict) -> str:
    return _svg_text(psi_figure(psi))


def plot_series(series: dict) -> str:
    return _svg_text(series_figure(series))


def plot_contents(record: RunRecord) -> dict:
    files = {}
    rep = record.reports
    if rep.get("sweep", {}).get("rows"):
        files["drift_vs_eps.svg"] = plot_sweep(rep["sweep"])
    else:
        logger.info("no sweep report; skipping drift-vs-eps plot")
    if rep.get("psi", {}).get("rows"):
        files["psi_staircase.svg"] = plot_psi(rep["psi"])
    else:
        logger.info("no psi table; skipping staircase plot")
    series = rep.get("drift", {}).get("series")
    if series:
        files["drift_series.svg"] = plot_series(series)
    else:
        logger.info("no drift time series; skipping decomposition plot")
    return files


def emit_plots(record: RunRecord, out_dir) -> list:
    """SVG plots for whatever reports the record holds; missing ones are skipped with a notice."""
    files = plot_contents(record)
    if not files:
        logger.warning("run record holds no plottable reports; no files written")
        return []
    return atomic_write_many(out_dir, files)
