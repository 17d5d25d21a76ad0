"""Analysis outputs: correlation CSVs, heatmaps, event-rating table.

Everything written here is a pure function of checkpoint + dataset, so
two runs with the same inputs produce byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .stats import (GRAPH_CHOICES, CorrelationMatrix, correlation_matrix,
                    event_ar_analysis, node_value_matrix)
from .svgplot import heatmap_svg


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.10g}"


def correlation_csv(cm: CorrelationMatrix) -> str:
    lines = ["node," + ",".join(cm.labels)]
    for i, label in enumerate(cm.labels):
        lines.append(label + "," + ",".join(_fmt(float(v)) for v in cm.values[i]))
    return "\n".join(lines) + "\n"


def event_ar_csv(rows) -> str:
    lines = ["event,rho,p_value,n_pos,significance,note"]
    for r in rows:
        lines.append(f"{r.event},{_fmt(r.rho)},{_fmt(r.pvalue)},{r.n_pos},"
                     f"{r.marker},{r.note}")
    return "\n".join(lines) + "\n"


def run_analysis(model, ds, cfg, out_dir) -> dict:
    """Write all analysis artifacts for one dataset; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dtype = np.dtype(cfg.training.dtype)
    pad = float(math.log(cfg.features.log_floor))
    source = cfg.analysis.source

    files: list[str] = []
    flagged: dict[str, list[str]] = {}
    for which in GRAPH_CHOICES:
        labels, values = node_value_matrix(model, ds, cfg.training.batch_size,
                                           dtype, pad, which, source)
        cm = correlation_matrix(labels, values)
        csv_name, svg_name = f"corr_{which}.csv", f"corr_{which}.svg"
        (out / csv_name).write_text(correlation_csv(cm), encoding="utf-8")
        title = f"{which} node correlations ({source}, {len(ds)} clips)"
        (out / svg_name).write_text(heatmap_svg(cm.labels, cm.values, title),
                                    encoding="utf-8")
        files += [csv_name, svg_name]
        flagged[which] = cm.flagged

    y_fae = np.stack([r.y_fae for r in ds.records])
    ar = np.array([r.ar for r in ds.records])
    rows = event_ar_analysis(y_fae, ar, ds.taxonomy.fae_names,
                             method=cfg.analysis.spearman_method)
    (out / "event_ar.csv").write_text(event_ar_csv(rows), encoding="utf-8")
    files.append("event_ar.csv")

    summary = {"clips": len(ds), "source": source, "files": sorted(files),
               "flagged": flagged,
               "significant_events": [r.event for r in rows if r.marker == "**"]}
    (out / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return summary
