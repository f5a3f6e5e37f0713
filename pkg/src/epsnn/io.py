"""CSV outputs and static SVG plots.

Every float is written with 9 significant digits and ``\\n`` line endings, so
the same report always produces the same bytes. Times are absolute within a
protocol (phase start + time within the phase).
"""

from __future__ import annotations

import csv
import html
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import RunConfig
from .engine import Recording, n_steps_for
from .experiments import (
    DiscriminationReport,
    RecognitionReport,
    _tail_mean,
    discrimination_phases,
    histogram_pair,
    recognition_phases,
)
from .fabric import NEURON_POPULATIONS, ConnectionClass

SPIKES_HEADER = ("population", "neuron", "t_seconds")
CALCIUM_HEADER = ("t_seconds", "population", "neuron", "value")
WEIGHTS_HEADER = ("class", "pre", "post", "w")
METRICS_HEADER = ("name", "value")


class CsvFormatError(ValueError):
    """A CSV file that does not follow its schema; names the row."""

    def __init__(self, path, row: int, message: str):
        super().__init__(f"{path}: row {row}: {message}")
        self.row = row


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


# --------------------------------------------------------------------------
# table builders
# --------------------------------------------------------------------------


def spike_rows(recordings: Sequence[Recording]):
    for rec in recordings:
        for pop in NEURON_POPULATIONS:
            train = rec.spikes.get(pop)
            if train is None:
                continue
            for t, n in zip(train.times, train.channels):
                yield pop, int(n), rec.start + t


def calcium_rows(recordings: Sequence[Recording]):
    """Rows ordered by phase, then sample, then population, then neuron."""
    for rec in recordings:
        for i, t in enumerate(rec.sample_times):
            for pop in NEURON_POPULATIONS:
                values = rec.calcium.get(pop)
                if values is None:
                    continue
                for n in range(values.shape[1]):
                    yield rec.start + t, pop, n, values[i, n]


def weight_rows(snapshot):
    return [(cls, pre, post, w) for pre, post, cls, w in snapshot or []]


def recognition_metrics(report: RecognitionReport) -> list[tuple[str, float]]:
    return [("L", report.L), ("D", report.D)]


def discrimination_metrics(report: DiscriminationReport) -> list[tuple[str, float]]:
    rows = []
    for p, (win, margin) in enumerate(zip(report.winners, report.margins)):
        rows.append((f"winner_p{p}", win))
        rows.append((f"margin_p{p}", margin))
    return rows


def _recordings_of(obj) -> list[Recording]:
    if isinstance(obj, Recording):
        return [obj]
    if isinstance(obj, (RecognitionReport, DiscriminationReport)):
        return list(obj.recordings)
    return list(obj)


def write_csv(obj, out_dir, metrics: Sequence[tuple[str, float]] | None = None) -> list[Path]:
    """Write spikes, calcium, weight snapshots and metrics of a run.

    ``obj`` is a report, a single recording or a list of recordings. Metrics
    default to L/D for recognition and winner/margin rows for discrimination.
    Returns the written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    recs = _recordings_of(obj)
    if metrics is None:
        if isinstance(obj, RecognitionReport):
            metrics = recognition_metrics(obj)
        elif isinstance(obj, DiscriminationReport):
            metrics = discrimination_metrics(obj)
        else:
            metrics = []
    pre = next((r.weights_before for r in recs if r.weights_before is not None), None)
    post = next((r.weights_after for r in reversed(recs) if r.weights_after is not None), None)
    files = {
        "spikes.csv": _table(SPIKES_HEADER, spike_rows(recs)),
        "calcium.csv": _table(CALCIUM_HEADER, calcium_rows(recs)),
        "weights_pre.csv": _table(WEIGHTS_HEADER, weight_rows(pre)),
        "weights_post.csv": _table(WEIGHTS_HEADER, weight_rows(post)),
        "metrics.csv": _table(METRICS_HEADER, metrics),
    }
    paths = []
    for name, text in files.items():
        _write(out / name, text)
        paths.append(out / name)
    return paths


def write_metrics(rows: Sequence[tuple], path, with_seed: bool = False) -> Path:
    """``name,value`` table, or ``name,value,seed`` for seed sweeps."""
    header = METRICS_HEADER + (("seed",) if with_seed else ())
    path = Path(path)
    _write(path, _table(header, rows))
    return path


# --------------------------------------------------------------------------
# reading back
# --------------------------------------------------------------------------


def _read_rows(path, header: Sequence[str]) -> list[list[str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CsvFormatError(path, 1, "missing header")
    if tuple(rows[0]) != tuple(header):
        raise CsvFormatError(path, 1, f"expected header {','.join(header)!r}")
    body = rows[1:]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise CsvFormatError(path, i, f"expected {len(header)} fields, got {len(row)}")
    return body


def _num(path, row: int, text: str, kind=float):
    try:
        v = kind(text)
    except ValueError:
        raise CsvFormatError(path, row, f"not a number: {text!r}") from None
    if kind is float and not math.isfinite(v):
        raise CsvFormatError(path, row, f"non-finite value {text!r}")
    return v


def read_calcium(path) -> dict[tuple[str, int], tuple[list[float], list[float]]]:
    """``(population, neuron) -> (times, values)`` in file order."""
    out: dict[tuple[str, int], tuple[list[float], list[float]]] = {}
    for i, row in enumerate(_read_rows(path, CALCIUM_HEADER), start=2):
        t = _num(path, i, row[0])
        if row[1] not in NEURON_POPULATIONS:
            raise CsvFormatError(path, i, f"unknown population {row[1]!r}")
        n = _num(path, i, row[2], int)
        if n < 0:
            raise CsvFormatError(path, i, "negative neuron index")
        v = _num(path, i, row[3])
        ts, vs = out.setdefault((row[1], n), ([], []))
        ts.append(t)
        vs.append(v)
    return out


def read_weights(path) -> dict[str, np.ndarray]:
    """Connection class name -> weights, in file order."""
    ws: dict[str, list[float]] = {}
    for i, row in enumerate(_read_rows(path, WEIGHTS_HEADER), start=2):
        if row[0] not in ConnectionClass.__members__:
            raise CsvFormatError(path, i, f"unknown connection class {row[0]!r}")
        _num(path, i, row[1], int)
        _num(path, i, row[2], int)
        ws.setdefault(row[0], []).append(_num(path, i, row[3]))
    return {k: np.array(v, dtype=float) for k, v in ws.items()}


def _histogram_weights(table: dict[str, np.ndarray]) -> np.ndarray:
    # the input weights are the learned population of interest; other
    # snapshots are pooled
    key = ConnectionClass.InputToPyrBasal.name
    if key in table:
        return table[key]
    return np.concatenate(list(table.values())) if table else np.zeros(0)


def phase_sample_counts(cfg: RunConfig) -> list[tuple[str, int]]:
    """Calcium samples per protocol phase, as the runner records them."""
    if cfg.task == "discrimination":
        phases = discrimination_phases(cfg)[0]
    else:
        phases = recognition_phases(cfg)
    every = cfg.engine.calcium_sample_every
    return [(ph.name, n_steps_for(ph.duration, cfg.engine.dt) // every) for ph in phases]


def metrics_from_calcium(path, cfg: RunConfig) -> dict[str, float]:
    """Recompute L and D of a recognition run from its ``calcium.csv``."""
    series = read_calcium(path)
    if ("readout", 0) not in series:
        raise ValueError(f"{path}: no readout calcium")
    values = np.array(series[("readout", 0)][1])
    counts = phase_sample_counts(cfg)
    if sum(c for _, c in counts) != values.size:
        raise ValueError(f"{path}: {values.size} readout samples do not match the protocol")
    means = {}
    start = 0
    for name, c in counts:
        if name in ("baseline", "test", "deviant"):
            means[name] = _tail_mean(values[start:start + c], cfg) if c else 0.0
        start += c
    return {"L": means["test"] - means["baseline"], "D": means["test"] - means["deviant"]}


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------

_W, _H = 640, 400
_M = dict(left=60, right=20, top=30, bottom=45)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _svg_num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _axes(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1 = _M["left"], _W - _M["right"]
    y0, y1 = _H - _M["bottom"], _M["top"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:g}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{html.escape(title)}</text>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:g}" y="{_H - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{html.escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:g}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2:g})">{html.escape(ylabel)}</text>',
    ]
    for v, anchor in ((xr[0], "start"), (xr[1], "end")):
        x = x0 if anchor == "start" else x1
        out.append(f'<text x="{x}" y="{y0 + 16}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{fmt(v)}</text>')
    for v, y in ((yr[0], y0), (yr[1], y1)):
        out.append(f'<text x="{x0 - 4}" y="{y + 4}" text-anchor="end" font-family="sans-serif" font-size="10">{fmt(v)}</text>')
    return out


def _no_data(parts: list[str]) -> str:
    parts.append(
        f'<text class="no-data" x="{_W / 2:g}" y="{_H / 2:g}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16" fill="gray">no data</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _scale(v, lo, hi, a, b):
    return a if hi == lo else a + (v - lo) / (hi - lo) * (b - a)


def render_calcium_svg(series: dict[tuple[str, int], tuple[list[float], list[float]]]) -> str:
    if not series:
        return _no_data(_axes("calcium", "t (s)", "calcium", (0, 1), (0, 1)))
    ts = np.concatenate([np.asarray(t) for t, _ in series.values()])
    vs = np.concatenate([np.asarray(v) for _, v in series.values()])
    xr = (float(ts.min()), float(ts.max()))
    yr = (min(0.0, float(vs.min())), float(vs.max()) if vs.max() > 0 else 1.0)
    parts = _axes("calcium", "t (s)", "calcium", xr, yr)
    x0, x1 = _M["left"], _W - _M["right"]
    y0, y1 = _H - _M["bottom"], _M["top"]
    for k, ((pop, n), (t, v)) in enumerate(sorted(series.items(), key=lambda kv: (NEURON_POPULATIONS.index(kv[0][0]), kv[0][1]))):
        pts = " ".join(
            f"{_svg_num(_scale(a, *xr, x0, x1))},{_svg_num(_scale(b, *yr, y0, y1))}" for a, b in zip(t, v)
        )
        parts.append(
            f'<polyline data-neuron="{pop}:{n}" points="{pts}" fill="none" '
            f'stroke="{_COLORS[k % len(_COLORS)]}" stroke-width="1"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_histogram_svg(pre: np.ndarray, post: np.ndarray, bins: int = 20) -> str:
    if pre.size == 0 and post.size == 0:
        return _no_data(_axes("weights", "w", "count", (0, 1), (0, 1)))
    h_pre, h_post, edges = histogram_pair(pre, post, bins)
    top = float(max(h_pre.max(), h_post.max(), 1))
    parts = _axes("weights", "w", "count", (edges[0], edges[-1]), (0, top))
    x0, x1 = _M["left"], _W - _M["right"]
    y0, y1 = _H - _M["bottom"], _M["top"]
    for label, counts, color in (("pre", h_pre, "#1f77b4"), ("post", h_post, "#d62728")):
        for i, c in enumerate(counts):
            xa = _scale(edges[i], edges[0], edges[-1], x0, x1)
            xb = _scale(edges[i + 1], edges[0], edges[-1], x0, x1)
            yt = _scale(float(c), 0.0, top, y0, y1)
            parts.append(
                f'<rect class="{label}" x="{_svg_num(xa)}" y="{_svg_num(yt)}" width="{_svg_num(xb - xa)}" '
                f'height="{_svg_num(y0 - yt)}" fill="{color}" fill-opacity="0.5"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _post_sibling(path: Path) -> Path:
    if "pre" not in path.name:
        raise ValueError(f"{path}: histogram input must be a weights_pre file with a weights_post sibling")
    return path.with_name(path.name.replace("pre", "post", 1))


def render_svg(csv_path, kind: str) -> str:
    """SVG text for a ``calcium.csv`` or a ``weights_pre.csv`` file.

    The histogram reads the matching ``weights_post.csv`` next to the pre file
    and shows the input weights when present, else every listed weight.
    """
    path = Path(csv_path)
    if kind == "calcium":
        return render_calcium_svg(read_calcium(path))
    if kind == "histogram":
        pre = _histogram_weights(read_weights(path))
        post = _histogram_weights(read_weights(_post_sibling(path)))
        return render_histogram_svg(pre, post)
    raise ValueError(f"unknown plot kind {kind!r}")
