"""Delimited report tables plus matplotlib figures rendered to files.

Every writer returns the list of paths it produced. Numbers are written
with ``repr(float(...))`` so a value survives a TSV round trip exactly;
figures are rendered through the Agg backend with pinned size, dpi and
metadata so identical inputs give byte-identical files.
"""

from __future__ import annotations

import os

import numpy as np

from .descriptors import DescriptorSet
from .errors import DependencyError
from .evaluation import ContextReport, OrderingReport
from .fisher import EmbeddingIndex
from .imaging import Heatmap, Image, render_heatmap, save_heatmap, save_image
from .lrp_fv import Explanation

_PNG_METADATA = {"Software": "fvlrp"}
_DPI = 100


def _pyplot():
    """Import pyplot on the Agg backend, or fail as a dependency error."""
    try:
        import matplotlib
        matplotlib.use("Agg", force=True)
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise DependencyError(f"matplotlib is required for figures: {exc}") from exc
    return plt


def fmt(value) -> str:
    """Exact textual form of a scalar for delimited output."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, rows) -> str:
    """Write a tab-separated table with a header line; returns the path."""
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(fmt(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def _save_figure(fig, path) -> str:
    fig.savefig(path, format="png", dpi=_DPI, metadata=_PNG_METADATA)
    return str(path)


# ---------------------------------------------------------------------------
# feature-replacement (MoRF) reports


def _ordering_ids(report: OrderingReport) -> list[str]:
    return sorted(report.stats)


def write_morf_tables(out_dir, report: OrderingReport) -> list[str]:
    """Summary + per-trace curve dump (step, f value) for one class."""
    paths = []
    summary_rows = []
    for oid in _ordering_ids(report):
        st = report.stats[oid]
        per_rep = np.asarray(report.per_repetition_area[oid], dtype=np.float64)
        summary_rows.append((report.class_name, oid, report.n_images,
                             report.batch, report.steps, st.n_traces,
                             st.area, st.switch_fraction,
                             float(per_rep.mean()),
                             float(per_rep.std(ddof=1)) if per_rep.size > 1 else 0.0))
    paths.append(write_table(
        os.path.join(out_dir, "morf_summary.tsv"),
        ("class", "ordering", "images", "batch", "steps", "traces",
         "area", "switch_fraction", "mean_rep_area", "rep_area_std"),
        summary_rows))

    trace_rows = []
    for oid in _ordering_ids(report):
        for ti, trace in enumerate(report.traces[oid]):
            trace_rows.append((oid, ti, 0, trace.original_score))
            for step, score in enumerate(trace.scores, start=1):
                trace_rows.append((oid, ti, step, float(score)))
    paths.append(write_table(
        os.path.join(out_dir, "morf_traces.tsv"),
        ("ordering", "trace", "step", "score"), trace_rows))

    hist_rows = []
    for oid in _ordering_ids(report):
        hist = report.stats[oid].first_switch_histogram
        for step, count in enumerate(hist, start=1):
            hist_rows.append((oid, step, int(count)))
    paths.append(write_table(
        os.path.join(out_dir, "morf_first_switch.tsv"),
        ("ordering", "step", "count"), hist_rows))
    return paths


def write_morf_figure(out_dir, report: OrderingReport) -> list[str]:
    """Mean perturbation curves and the first-switch histogram."""
    plt = _pyplot()
    ids = _ordering_ids(report)
    fig, (ax_curve, ax_hist) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    steps = np.arange(report.steps + 1)
    for oid in ids:
        traces = report.traces[oid]
        curves = np.stack([np.concatenate(([t.original_score], t.scores))
                           for t in traces])
        ax_curve.plot(steps, curves.mean(axis=0), marker=".", label=oid)
    ax_curve.axhline(0.0, color="0.6", linewidth=0.8)
    ax_curve.set_xlabel("replacement step")
    ax_curve.set_ylabel("mean score")
    ax_curve.set_title(f"score under feature replacement ({report.class_name})")
    ax_curve.legend(fontsize="small")

    width = 0.8 / max(1, len(ids))
    for pos, oid in enumerate(ids):
        hist = report.stats[oid].first_switch_histogram
        ax_hist.bar(np.arange(1, len(hist) + 1) + pos * width, hist,
                    width=width, label=oid)
    ax_hist.set_xlabel("first sign-switch step")
    ax_hist.set_ylabel("traces")
    ax_hist.set_title("sign switches")
    ax_hist.legend(fontsize="small")
    fig.tight_layout()
    path = _save_figure(fig, os.path.join(out_dir, "morf_curves.png"))
    plt.close(fig)
    return [path]


def morf_summary_text(report: OrderingReport) -> str:
    """Compact A/V summary block for terminal output."""
    lines = [f"class {report.class_name}: {report.n_images} images, "
             f"batch {report.batch} x {report.steps} steps"]
    for oid in _ordering_ids(report):
        st = report.stats[oid]
        lines.append(f"  {oid:>12s}  A = {st.area:.6f}  V = {st.switch_fraction:.3f}"
                     f"  ({st.n_traces} traces)")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# context-ratio reports


def write_context_tables(out_dir, report: ContextReport) -> list[str]:
    paths = []
    summary_rows = []
    for c in report.classes:
        for model, mean, undef, tp in (
                ("fv", report.fv_mean[c], report.fv_undefined[c],
                 report.fv_true_positives[c]),
                ("nn", report.nn_mean[c], report.nn_undefined[c],
                 report.nn_true_positives[c])):
            summary_rows.append((c, model,
                                 "missing" if mean is None else fmt(mean),
                                 tp, undef))
    paths.append(write_table(
        os.path.join(out_dir, "context_summary.tsv"),
        ("class", "model", "mean_mu", "true_positives", "undefined"),
        summary_rows))

    value_rows = []
    for c in report.classes:
        for model, ratios in (("fv", report.fv_values[c]),
                              ("nn", report.nn_values[c])):
            for ratio in ratios:
                value_rows.append((c, model, ratio.image_id, ratio.mu,
                                   ratio.n_inside, ratio.n_outside))
    paths.append(write_table(
        os.path.join(out_dir, "context_values.tsv"),
        ("class", "model", "image", "mu", "inside_px", "outside_px"),
        value_rows))
    return paths


def write_context_figure(out_dir, report: ContextReport) -> list[str]:
    """Grouped bars of mean outside/inside ratio per class and model."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(report.classes)), 3.4))
    xs = np.arange(len(report.classes))
    fv = [report.fv_mean[c] if report.fv_mean[c] is not None else 0.0
          for c in report.classes]
    nn = [report.nn_mean[c] if report.nn_mean[c] is not None else 0.0
          for c in report.classes]
    ax.bar(xs - 0.18, fv, width=0.36, label="fisher-vector")
    ax.bar(xs + 0.18, nn, width=0.36, label="neural-net")
    ax.set_xticks(xs)
    ax.set_xticklabels(report.classes)
    ax.set_ylabel("mean outside/inside ratio")
    ax.set_title("context usage")
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = _save_figure(fig, os.path.join(out_dir, "context_ratio.png"))
    plt.close(fig)
    return [path]


def context_summary_text(report: ContextReport) -> str:
    lines = ["class      model  mean_mu      tp  undef"]
    for c in report.classes:
        for model, mean, undef, tp in (
                ("fv", report.fv_mean[c], report.fv_undefined[c],
                 report.fv_true_positives[c]),
                ("nn", report.nn_mean[c], report.nn_undefined[c],
                 report.nn_true_positives[c])):
            shown = "missing" if mean is None else f"{mean:.6f}"
            lines.append(f"{c:<10s} {model:<6s} {shown:<12s} {tp:3d}  {undef:3d}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# single-image explanation reports


def write_explanation(out_dir, stem: str, image: Image, expl: Explanation,
                      ds: DescriptorSet,
                      index: EmbeddingIndex | None = None) -> list[str]:
    """Heatmap dump, per-level relevance tables, and an overview figure."""
    paths = []
    raw_path = os.path.join(out_dir, f"{stem}_heatmap.hmap")
    save_heatmap(expl.heatmap, raw_path, mode="raw")
    paths.append(raw_path)
    rendered = render_heatmap(expl.heatmap)
    ppm_path = os.path.join(out_dir, f"{stem}_heatmap.ppm")
    save_image(rendered, ppm_path)
    paths.append(ppm_path)

    r2_rows = []
    for l in range(len(expl.r2.values)):
        x, y, w, h = (int(v) for v in ds.areas[l])
        r2_rows.append((l, x, y, w, h, float(expl.r2.values[l])))
    paths.append(write_table(
        os.path.join(out_dir, f"{stem}_r2.tsv"),
        ("descriptor", "x", "y", "w", "h", "relevance"), r2_rows))

    r3_rows = []
    for d, value in enumerate(expl.r3.values):
        if index is not None:
            moment, comp, coord = index.decode(d)
        else:
            moment, comp, coord = ("-", -1, -1)
        r3_rows.append((d, moment, comp, coord, float(value)))
    paths.append(write_table(
        os.path.join(out_dir, f"{stem}_r3.tsv"),
        ("dimension", "moment", "component", "coordinate", "relevance"),
        r3_rows))

    paths.extend(_explanation_figure(out_dir, stem, image, expl))
    return paths


def _explanation_figure(out_dir, stem: str, image: Image,
                        expl: Explanation) -> list[str]:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.4))
    gray = image.gray()
    axes[0].imshow(gray, cmap="gray", vmin=0.0, vmax=1.0,
                   interpolation="nearest")
    axes[0].set_title("input")
    rendered = render_heatmap(expl.heatmap)
    axes[1].imshow(rendered.pixels, interpolation="nearest")
    axes[1].set_title(f"relevance ({expl.r2.variant})")
    axes[2].imshow(gray, cmap="gray", vmin=0.0, vmax=1.0,
                   interpolation="nearest")
    axes[2].imshow(rendered.pixels, alpha=0.55, interpolation="nearest")
    axes[2].set_title(f"overlay, f = {expl.score:.4f}")
    for ax in axes:
        ax.set_xticks(())
        ax.set_yticks(())
    fig.tight_layout()
    path = _save_figure(fig, os.path.join(out_dir, f"{stem}_overview.png"))
    plt.close(fig)
    return [path]


def write_nn_heatmap(out_dir, stem: str, image: Image,
                     heatmap: Heatmap, title: str) -> list[str]:
    """Raw dump plus a two-panel figure for a pixel heatmap."""
    paths = []
    raw_path = os.path.join(out_dir, f"{stem}_heatmap.hmap")
    save_heatmap(heatmap, raw_path, mode="raw")
    paths.append(raw_path)
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(6.6, 3.4))
    axes[0].imshow(image.gray(), cmap="gray", vmin=0.0, vmax=1.0,
                   interpolation="nearest")
    axes[0].set_title("input")
    axes[1].imshow(render_heatmap(heatmap).pixels, interpolation="nearest")
    axes[1].set_title(title)
    for ax in axes:
        ax.set_xticks(())
        ax.set_yticks(())
    fig.tight_layout()
    paths.append(_save_figure(fig, os.path.join(out_dir, f"{stem}_overview.png")))
    plt.close(fig)
    return paths
