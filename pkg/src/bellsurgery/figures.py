"""Figure tables and SVG plots rendered from run records."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import estimate_pL, fit_exponential, lambda_factors, remap_to_ebits  # noqa: E402
from .geometry import Protocol  # noqa: E402
from .harness import RunRecord, atomic_write, to_csv  # noqa: E402

FIGURES = ("Fig4b", "Fig6a", "Fig6b", "Fig7a", "Fig7b", "Fig10")

plt.rcParams["svg.hashsalt"] = "bellsurgery"


class FigureError(ValueError):
    """The record lacks the data a figure needs."""


def _sampled(record: RunRecord) -> list[dict]:
    return [r for r in record.points if r.get("shots")]


def _require(rows: list, what: str) -> None:
    if not rows:
        raise FigureError(f"record has no {what}")


def _group(rows, *keys) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(tuple(r[k] for k in keys), []).append(r)
    return out


def _estimates(rows) -> dict:
    return {r["d"]: estimate_pL(r["failures"], r["shots"]) for r in rows}


def _fig4b(record):
    rows = [r for r in record.points if r.get("d_obs") is not None]
    _require(rows, "observed-distance points")
    table = [{"protocol": r["protocol"], "policy": r["policy"], "d": r["d"], "d_obs": r["d_obs"],
              "d_obs_over_d": r["d_obs"] / r["d"]} for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for (protocol, policy), group in sorted(_group(table, "protocol", "policy").items()):
        group.sort(key=lambda r: r["d"])
        ax.plot([r["d"] for r in group], [r["d_obs"] for r in group], "o-", label=f"{protocol} {policy}")
    ds = sorted({r["d"] for r in table})
    ax.plot(ds, ds, "k:", label="d")
    ax.set_xlabel("code distance d")
    ax.set_ylabel("observed distance d_obs")
    ax.legend(fontsize=7)
    return table, ("protocol", "policy", "d", "d_obs", "d_obs_over_d"), fig


def _fig6a(record):
    rows = [r for r in _sampled(record) if Protocol.parse(r["protocol"]).is_teleported]
    _require(rows, "teleported-protocol points")
    table = []
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for (protocol, p_loc, p_link), group in sorted(_group(rows, "protocol", "p_loc", "p_link").items()):
        ests = _estimates(group)
        try:
            fit = fit_exponential(ests)
        except ValueError:
            fit = None
        pts = sorted(ests.items())
        xs = [2 * d - 1 if not Protocol.parse(protocol).is_bell else d for d, _ in pts]
        line = ax.errorbar(xs, [e.p_L for _, e in pts],
                           yerr=[[e.p_L - e.ci_lo for _, e in pts], [e.ci_hi - e.p_L for _, e in pts]],
                           fmt="o", label=f"{protocol} p_link={p_link:g}")
        if fit is not None:
            ax.plot(xs, [fit(d) for d, _ in pts], "--", color=line[0].get_color())
        for (d, e), x in zip(pts, xs):
            table.append({"protocol": protocol, "p_loc": p_loc, "p_link": p_link, "d": d, "ebits_per_round": x,
                          "p_L": e.p_L, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi, "fit_p_L": fit(d) if fit else None})
    ax.set_yscale("log")
    ax.set_xlabel("ebits per round")
    ax.set_ylabel("logical error rate")
    ax.legend(fontsize=6)
    return table, ("protocol", "p_loc", "p_link", "d", "ebits_per_round", "p_L", "ci_lo", "ci_hi", "fit_p_L"), fig


def _lambda_table(rows, axis: str):
    table = []
    for (protocol, p_loc, p_link), group in sorted(_group(rows, "protocol", "p_loc", "p_link").items()):
        ests = {d: e for d, e in _estimates(group).items() if e.failures > 0}
        if len(ests) < 2:
            continue
        keyed = remap_to_ebits(protocol, ests) if axis == "Ebit" else ests
        lf = lambda_factors(keyed, axis)
        table.append({"protocol": protocol, "p_loc": p_loc, "p_link": p_link, "lambda_mean": lf.mean,
                      "lambda_std": lf.std, "pairs": len(lf.ratios)})
    if not table:
        raise FigureError("record has no protocol with two or more distances at one noise point")
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for (protocol,), group in sorted(_group(table, "protocol").items()):
        group.sort(key=lambda r: r["p_link"])
        ax.errorbar([r["p_link"] for r in group], [r["lambda_mean"] for r in group],
                    yerr=[r["lambda_std"] for r in group], fmt="o-", capsize=2, label=protocol)
    ax.set_xscale("log")
    ax.set_xlabel("link error rate p_link")
    ax.set_ylabel("Lambda per ebit" if axis == "Ebit" else "Lambda_d")
    ax.legend(fontsize=7)
    return table, ("protocol", "p_loc", "p_link", "lambda_mean", "lambda_std", "pairs"), fig


def _fig6b(record):
    rows = [r for r in _sampled(record) if Protocol.parse(r["protocol"]).is_teleported]
    _require(rows, "teleported-protocol points")
    return _lambda_table(rows, "Ebit")


def _fig7b(record):
    rows = _sampled(record)
    _require(rows, "sampled points")
    return _lambda_table(rows, "Distance")


CURVE_COLUMNS = ("protocol", "policy", "d", "p_loc", "p_link", "shots", "failures", "p_L", "ci_lo", "ci_hi")


def _curves(rows, panel_key: str, series_key: str):
    """p_L against p_link, one panel per ``panel_key`` value, one series per ``series_key`` value."""
    table = [{k: r[k] for k in CURVE_COLUMNS} for r in sorted(rows, key=lambda r: (r["protocol"], r["d"], r["p_link"]))]
    panels = sorted({r[panel_key] for r in table})
    fig, axes = plt.subplots(1, len(panels), figsize=(4.0 * len(panels), 3.5), squeeze=False)
    for ax, panel in zip(axes[0], panels):
        for (series,), group in sorted(_group([r for r in table if r[panel_key] == panel], series_key).items()):
            ax.errorbar([r["p_link"] for r in group], [r["p_L"] for r in group],
                        yerr=[[r["p_L"] - r["ci_lo"] for r in group], [r["ci_hi"] - r["p_L"] for r in group]],
                        fmt="o-", capsize=2, label=f"{series_key}={series}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_title(str(panel), fontsize=8)
        ax.set_xlabel("link error rate p_link")
        ax.set_ylabel("logical error rate")
        ax.legend(fontsize=7)
    return table, CURVE_COLUMNS, fig


def _fig7a(record):
    rows = [r for r in _sampled(record) if not Protocol.parse(r["protocol"]).is_teleported]
    _require(rows, "direct-protocol points")
    return _curves(rows, "d", "protocol")


def _fig10(record):
    rows = [r for r in _sampled(record) if r.get("profile") == "ElevatedLink"]
    _require(rows, "ElevatedLink points")
    table, cols, fig = _curves(rows, "protocol", "d")
    thresholds = record.summary.get("thresholds", {})
    for ax in fig.axes:
        for name, th in thresholds.items():
            if name.split("/")[0] == ax.get_title() and "value" in th:
                ax.axvline(th["value"], color="k", ls=":", lw=0.8)
    return table, cols, fig


_RENDERERS = {"Fig4b": _fig4b, "Fig6a": _fig6a, "Fig6b": _fig6b, "Fig7a": _fig7a, "Fig7b": _fig7b, "Fig10": _fig10}


def render(record: RunRecord, figure: str, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``<figure>.csv`` and ``<figure>.svg``; nothing is written on error."""
    if figure not in _RENDERERS:
        raise FigureError(f"unknown figure {figure!r}; choose from {FIGURES}")
    table, columns, fig = _RENDERERS[figure](record)
    buf = io.StringIO()
    fig.tight_layout()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    out = Path(out_dir)
    csv_path, svg_path = out / f"{figure}.csv", out / f"{figure}.svg"
    atomic_write(csv_path, to_csv(table, columns))
    atomic_write(svg_path, buf.getvalue())
    return csv_path, svg_path
