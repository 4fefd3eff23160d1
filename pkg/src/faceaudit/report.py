"""Render audit results: delimited tables, SVG heatmaps, JSON bundle.

Rendering is a pure function of the computed results; nothing is
recomputed here.  All numeric table formatting is three decimals with
round-half-even; undefined cells render as an em dash.  The JSON bundle
uses sorted keys and repr-style floats so identical results serialize
byte-identically; NaN becomes null.

The diverging heatmap color is a documented pure function of (value,
bound): t = clip(value / bound, -1, 1); negative t blends white
(#f7f7f7) toward blue (#2166ac) by |t|, positive toward red (#b2182b);
each channel rounds half-even to an integer.  NaN cells are grey
(#cccccc) and carry no glyph.
"""

from __future__ import annotations

import csv
import io
import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from faceaudit.errors import DataError
from faceaudit.metrics import Group, GroupRates
from faceaudit.pipeline import AuditResults

EMPTY_CELL = "—"
GLYPH_POLICY = ((0.05, "o"), (0.01, "\\"))

_WHITE = (247, 247, 247)
_BLUE = (33, 102, 172)
_RED = (178, 24, 43)
_NAN_FILL = "#cccccc"

_CELL = 26
_FONT = 11


def _format_cell(value: float) -> str:
    if value is None or math.isnan(value):
        return EMPTY_CELL
    return format(value, ".3f")


def render_group_table(groups: list[GroupRates], metric: str) -> str:
    """Grid of group rates for one metric as delimited text.

    One grouping attribute gives a two-column table; two attributes give
    rows for the first attribute's levels and columns for the second's,
    union rows/columns labelled ``all``.
    """
    if metric not in ("far", "frr"):
        raise DataError(f"metric must be 'far' or 'frr', got {metric!r}")
    if not groups:
        raise DataError("no groups to render")
    attrs = groups[0].group.attributes
    if len(attrs) > 2:
        raise DataError("group tables render one or two grouping attributes")

    def label(level: str | None) -> str:
        return "all" if level is None else level

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if len(attrs) == 1:
        writer.writerow([attrs[0], metric])
        for g in groups:
            writer.writerow([label(g.group.levels[0]), _format_cell(getattr(g, metric))])
        return buf.getvalue()

    row_levels: list[str | None] = []
    col_levels: list[str | None] = []
    cells: dict[tuple[str | None, str | None], float] = {}
    for g in groups:
        r, c = g.group.levels
        if r not in row_levels:
            row_levels.append(r)
        if c not in col_levels:
            col_levels.append(c)
        cells[(r, c)] = getattr(g, metric)
    writer.writerow([f"{metric} {attrs[0]}|{attrs[1]}", *(label(c) for c in col_levels)])
    for r in row_levels:
        writer.writerow(
            [label(r), *(_format_cell(cells.get((r, c), math.nan)) for c in col_levels)]
        )
    return buf.getvalue()


def _diverging_color(value: float, bound: float) -> str:
    if value is None or math.isnan(value):
        return _NAN_FILL
    t = 0.0 if bound <= 0 else max(-1.0, min(1.0, value / bound))
    target = _BLUE if t < 0 else _RED
    a = abs(t)
    channels = tuple(
        int(round(w + (c - w) * a)) for w, c in zip(_WHITE, target)
    )
    return "#%02x%02x%02x" % channels


def _glyphs_for(p: float, policy) -> str:
    if p is None or math.isnan(p):
        return ""
    return "".join(glyph for alpha, glyph in policy if p < alpha)


def render_heatmap_svg(
    grid,
    p_grid,
    row_labels,
    col_labels,
    glyph_policy=GLYPH_POLICY,
    title: str = "",
) -> str:
    """Standalone SVG heatmap with significance glyphs.

    Color follows the documented diverging function; the glyph string in
    each cell concatenates the policy glyphs whose alpha the cell's
    p-value beats (default: ``o`` under 0.05, ``\\`` under 0.01).
    """
    grid = np.asarray(grid, dtype=np.float64)
    p_grid = np.asarray(p_grid, dtype=np.float64)
    if grid.ndim != 2:
        raise DataError("heatmap grid must be two-dimensional")
    if grid.shape != p_grid.shape:
        raise DataError(f"grid shape {grid.shape} != p-value shape {p_grid.shape}")
    n_rows, n_cols = grid.shape
    if len(row_labels) != n_rows or len(col_labels) != n_cols:
        raise DataError("label counts must match the grid shape")

    finite = grid[np.isfinite(grid)]
    bound = float(np.max(np.abs(finite))) if finite.size else 1.0
    left = 12 + _FONT * 0.62 * max((len(str(r)) for r in row_labels), default=1)
    left = int(math.ceil(left))
    top = 30 if title else 8
    top += _FONT + 8
    width = left + n_cols * _CELL + 8
    height = top + n_rows * _CELL + 8

    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(width),
            "height": str(height),
            "viewBox": f"0 0 {width} {height}",
            "font-family": "monospace",
            "font-size": str(_FONT),
        },
    )
    if title:
        t = ET.SubElement(svg, "text", {"x": str(left), "y": "18"})
        t.text = title
    for j, col in enumerate(col_labels):
        t = ET.SubElement(
            svg,
            "text",
            {
                "x": str(left + j * _CELL + _CELL // 2),
                "y": str(top - 6),
                "text-anchor": "middle",
            },
        )
        t.text = str(col)
    for i, row in enumerate(row_labels):
        t = ET.SubElement(
            svg,
            "text",
            {
                "x": str(left - 6),
                "y": str(top + i * _CELL + _CELL // 2 + _FONT // 2 - 1),
                "text-anchor": "end",
            },
        )
        t.text = str(row)
        for j in range(n_cols):
            x = left + j * _CELL
            y = top + i * _CELL
            ET.SubElement(
                svg,
                "rect",
                {
                    "x": str(x),
                    "y": str(y),
                    "width": str(_CELL),
                    "height": str(_CELL),
                    "fill": _diverging_color(float(grid[i, j]), bound),
                    "stroke": "#ffffff",
                },
            )
            if math.isnan(grid[i, j]):
                continue
            glyphs = _glyphs_for(float(p_grid[i, j]), glyph_policy)
            if glyphs:
                g = ET.SubElement(
                    svg,
                    "text",
                    {
                        "x": str(x + _CELL // 2),
                        "y": str(y + _CELL // 2 + _FONT // 2 - 1),
                        "text-anchor": "middle",
                    },
                )
                g.text = glyphs
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(
        svg, encoding="unicode"
    )


def _sanitize(obj):
    """Make a payload JSON-safe: tuples to lists, NaN/inf to None."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _op_payload(op):
    return {"policy": op.policy, "tau": op.tau, "far": op.far, "frr": op.frr}


def _group_payload(g: GroupRates):
    return {
        "attributes": list(g.group.attributes),
        "levels": list(g.group.levels),
        "label": g.group.label,
        "far": g.far,
        "frr": g.frr,
        "n_members": g.n_members,
    }


def _delta_payload(d):
    if d is None:
        return None
    return {
        "group_a": d.group_a,
        "group_b": d.group_b,
        "delta_far": d.delta_far,
        "delta_frr": d.delta_frr,
    }


def _kruskal_payload(tests):
    return {
        "labels": list(tests.labels),
        "h": tests.h_values.tolist(),
        "p": tests.p_values.tolist(),
    }


def _fit_payload(fit):
    residuals = np.asarray(fit.residuals)
    return {
        "columns": list(fit.column_names),
        "coefficients": list(fit.coefficients),
        "std_errors": list(fit.std_errors),
        "t_stats": list(fit.t_stats),
        "p_values": list(fit.p_values),
        "r_squared": fit.r_squared,
        "f_statistic": fit.f_statistic,
        "f_p_value": fit.f_p_value,
        "dof_residual": fit.dof_residual,
        "n_rows": fit.n_rows,
        "residual_rms": float(np.sqrt(np.mean(residuals**2))),
    }


def _explain_payload(rep):
    return {
        "metric": rep.metric,
        "operating_point": _op_payload(rep.operating_point),
        "n_cases": rep.n_cases,
        "correlations": {
            "entries": [
                {"column": e.column, "r": e.r, "p_value": e.p_value, "n": e.n}
                for e in rep.correlations.entries
            ],
            "skipped": list(rep.correlations.skipped),
            "constant_response": rep.correlations.constant_response,
        },
        "regression": None if rep.regression is None else _fit_payload(rep.regression),
        "dropped_columns": list(rep.dropped_columns),
        "incomplete_identities": list(rep.incomplete_identities),
    }


def to_payload(results: AuditResults) -> dict:
    """The documented report.json structure, ready for json.dump."""
    return {
        "tool": {"name": "faceaudit", "version": results.tool_version},
        "seed": results.seed,
        "group_by": list(results.group_by),
        "census": {
            "n_identities": results.n_identities,
            "n_genuine_pairs": results.n_genuine,
            "n_impostor_pairs": results.n_impostor,
        },
        "exclusions": {
            "no_usable_trials": list(results.excluded_identities),
            "unassigned": list(results.unassigned_identities),
            "skipped_identities": list(results.skipped_identities),
        },
        "notes": dict(results.notes),
        "analyses": [
            {
                "operating_point": _op_payload(a.operating_point),
                "groups": [_group_payload(g) for g in a.groups],
                "deltas": {
                    "extreme_far": _delta_payload(a.deltas.extreme_far),
                    "extreme_frr": _delta_payload(a.deltas.extreme_frr),
                    "one_axis": [_delta_payload(d) for d in a.deltas.one_axis],
                },
                "kruskal": {m: _kruskal_payload(t) for m, t in sorted(a.kruskal.items())},
                "explain": {m: _explain_payload(r) for m, r in sorted(a.explain.items())},
                "skipped_analyses": dict(a.skipped_analyses),
            }
            for a in results.analyses
        ],
    }


def dump_payload(payload: dict) -> str:
    return json.dumps(_sanitize(payload), sort_keys=True, indent=2) + "\n"


def _policy_slug(policy: str) -> str:
    return policy.replace("@", "_at_")


def _groups_from_payload(analysis: dict) -> list[GroupRates]:
    groups = []
    for g in analysis["groups"]:
        far = math.nan if g["far"] is None else g["far"]
        frr = math.nan if g["frr"] is None else g["frr"]
        groups.append(
            GroupRates(
                group=Group(
                    attributes=tuple(g["attributes"]),
                    levels=tuple(None if lv is None else lv for lv in g["levels"]),
                ),
                far=far,
                frr=frr,
                n_members=g["n_members"],
            )
        )
    return groups


def _nan(value) -> float:
    return math.nan if value is None else float(value)


def render_tables(payload: dict, outdir: Path) -> list[Path]:
    tables_dir = outdir / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for analysis in payload["analyses"]:
        slug = _policy_slug(analysis["operating_point"]["policy"])
        groups = _groups_from_payload(analysis)
        for metric in ("far", "frr"):
            path = tables_dir / f"{slug}_{metric}.csv"
            path.write_text(render_group_table(groups, metric), encoding="utf-8")
            written.append(path)
    return written


def render_figures(payload: dict, outdir: Path) -> list[Path]:
    figures_dir = outdir / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for analysis in payload["analyses"]:
        slug = _policy_slug(analysis["operating_point"]["policy"])
        explain = analysis.get("explain", {})
        metrics = [m for m in ("far", "frr") if m in explain]

        corr_rows: list[str] = []
        for m in metrics:
            for e in explain[m]["correlations"]["entries"]:
                if e["column"] not in corr_rows:
                    corr_rows.append(e["column"])
        if corr_rows and metrics:
            r_grid = np.full((len(corr_rows), len(metrics)), math.nan)
            p_grid = np.full_like(r_grid, math.nan)
            for j, m in enumerate(metrics):
                for e in explain[m]["correlations"]["entries"]:
                    i = corr_rows.index(e["column"])
                    r_grid[i, j] = _nan(e["r"])
                    p_grid[i, j] = _nan(e["p_value"])
            path = figures_dir / f"{slug}_correlations.svg"
            path.write_text(
                render_heatmap_svg(
                    r_grid, p_grid, corr_rows, metrics, title=f"pearson r ({slug})"
                ),
                encoding="utf-8",
            )
            written.append(path)

        coef_rows: list[str] = []
        for m in metrics:
            fit = explain[m].get("regression")
            if fit:
                for name in fit["columns"][1:]:
                    if name not in coef_rows:
                        coef_rows.append(name)
        if coef_rows and metrics:
            c_grid = np.full((len(coef_rows), len(metrics)), math.nan)
            p_grid = np.full_like(c_grid, math.nan)
            for j, m in enumerate(metrics):
                fit = explain[m].get("regression")
                if not fit:
                    continue
                for k, name in enumerate(fit["columns"]):
                    if k == 0:
                        continue
                    i = coef_rows.index(name)
                    c_grid[i, j] = _nan(fit["coefficients"][k])
                    p_grid[i, j] = _nan(fit["p_values"][k])
            path = figures_dir / f"{slug}_coefficients.svg"
            path.write_text(
                render_heatmap_svg(
                    c_grid, p_grid, coef_rows, metrics, title=f"ols coefficients ({slug})"
                ),
                encoding="utf-8",
            )
            written.append(path)

        for metric, tests in sorted(analysis.get("kruskal", {}).items()):
            labels = tests["labels"]
            p = np.array(
                [[_nan(v) for v in row] for row in tests["p"]], dtype=np.float64
            )
            path = figures_dir / f"{slug}_kruskal_{metric}.svg"
            path.write_text(
                render_heatmap_svg(
                    p, p, labels, labels, title=f"kruskal-wallis p, {metric} ({slug})"
                ),
                encoding="utf-8",
            )
            written.append(path)
    return written


def emit_bundle(outdir: str | Path, results: AuditResults) -> dict[str, object]:
    """Write report.json plus per-policy tables and figures.

    Refuses to emit a bundle with no analyses.  Identical results
    produce byte-identical bundles.
    """
    if not results.analyses:
        raise DataError("refusing to emit a bundle with no analyses")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = to_payload(results)
    report_path = outdir / "report.json"
    report_path.write_text(dump_payload(payload), encoding="utf-8")
    tables = render_tables(payload, outdir)
    figures = render_figures(payload, outdir)
    return {"report": report_path, "tables": tables, "figures": figures}


def render_from_file(report_path: str | Path, outdir: str | Path) -> dict[str, object]:
    """Re-render tables and figures from an existing report.json."""
    report_path = Path(report_path)
    try:
        payload = json.loads(report_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{report_path}: cannot read report payload: {exc}") from exc
    if "analyses" not in payload or not payload["analyses"]:
        raise DataError(f"{report_path}: payload holds no analyses")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tables = render_tables(payload, outdir)
    figures = render_figures(payload, outdir)
    return {"report": report_path, "tables": tables, "figures": figures}
