"""Report output: CSV, aligned text tables and gnuplot-style long-format data."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .evaluate import Cell, EvaluationReport

CSV_FIELDS = ["condition", "noise", "snr_db", "reverb_ms", "clip_kind", "clip_fraction",
              "n_correct", "n_total", "accuracy_pct"]
FORMATS = ("csv", "pretty", "dat")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _row(c: Cell) -> list[str]:
    return [c.condition, c.noise, _num(c.snr_db), _num(c.reverb_ms), c.clip_kind,
            _num(c.clip_fraction), _num(c.n_correct), str(c.n_total), f"{c.accuracy:.4f}"]


def report_csv(report: EvaluationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for c in report.cells:
        w.writerow(_row(c))
    return buf.getvalue()


def _opt(s: str):
    return float(s) if s != "" else None


def parse_report_csv(text: str) -> list[dict]:
    """Rows as dicts with numeric fields converted; ``accuracy_pct`` is the written value."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_FIELDS:
        raise ValueError(f"report header must be {','.join(CSV_FIELDS)}")
    rows = []
    for r in reader:
        rows.append({
            "condition": r["condition"], "noise": r["noise"],
            "snr_db": _opt(r["snr_db"]), "reverb_ms": _opt(r["reverb_ms"]),
            "clip_kind": r["clip_kind"], "clip_fraction": _opt(r["clip_fraction"]),
            "n_correct": float(r["n_correct"]), "n_total": int(r["n_total"]),
            "accuracy_pct": float(r["accuracy_pct"]),
        })
    return rows


def read_report_csv(path) -> list[dict]:
    return parse_report_csv(Path(path).read_text())


def _table(title: str, row_label: str, rows: list, cols: list, value) -> list[str]:
    head = [row_label] + [_num(c) for c in cols]
    body = [[_num(r)] + [("" if (v := value(r, c)) is None else f"{v:.2f}") for c in cols]
            for r in rows]
    widths = [max(len(line[i]) for line in [head] + body) for i in range(len(head))]
    fmt = lambda line: "  ".join(s.rjust(w) for s, w in zip(line, widths))
    return [title, fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body] + [""]


def _lookup(cells, **match):
    for c in cells:
        if all(getattr(c, k) == v for k, v in match.items()):
            return c.accuracy
    return None


def _unique(values):
    return list(dict.fromkeys(v for v in values if v is not None))


def report_pretty(report: EvaluationReport) -> str:
    """Accuracy tables: SNR columns per noise; delays as rows for reverb grids; kinds x fractions for clipping."""
    cells = report.cells
    out = []
    for c in cells:
        if c.condition == "clean":
            out += [f"clean: {c.accuracy:.2f}%", ""]
    noisy = [c for c in cells if c.condition == "noise"]
    for noise in _unique(c.noise for c in noisy):
        sub = [c for c in noisy if c.noise == noise]
        snrs = _unique(c.snr_db for c in sub)
        out += _table(f"noise: {noise} (accuracy %)", "snr_db", ["acc"], snrs,
                      lambda r, s: _lookup(sub, snr_db=s))
    rev = [c for c in cells if c.condition == "reverb"]
    if rev:
        out += _table("reverb (accuracy %)", "delay_ms", _unique(c.reverb_ms for c in rev), ["acc"],
                      lambda d, _: _lookup(rev, reverb_ms=d))
    nr = [c for c in cells if c.condition == "noise+reverb"]
    for noise in _unique(c.noise for c in nr):
        sub = [c for c in nr if c.noise == noise]
        out += _table(f"noise+reverb: {noise} (accuracy %)", "delay_ms",
                      _unique(c.reverb_ms for c in sub), _unique(c.snr_db for c in sub),
                      lambda d, s: _lookup(sub, reverb_ms=d, snr_db=s))
    clip = [c for c in cells if c.condition == "clip"]
    if clip:
        kinds = _unique(c.clip_kind for c in clip)
        out += _table("clipping (accuracy %)", "fraction", _unique(c.clip_fraction for c in clip),
                      kinds, lambda f, k: _lookup(clip, clip_fraction=f, clip_kind=k))
    return "\n".join(out)


def report_dat(report: EvaluationReport) -> str:
    """Long format, one blank-line-separated block per series, for plotting accuracy curves."""
    series: dict[tuple, list[Cell]] = {}
    for c in report.cells:
        key = (c.condition, c.noise, c.reverb_ms, c.clip_kind)
        series.setdefault(key, []).append(c)
    blocks = []
    for (cond, noise, reverb, kind), cs in series.items():
        name = "_".join(p for p in (cond, noise, _num(reverb), kind) if p)
        lines = [f"# {name}", "# x accuracy_pct n_correct n_total"]
        for c in cs:
            x = c.snr_db if c.snr_db is not None else c.clip_fraction
            if x is None:
                x = c.reverb_ms
            lines.append(f"{_num(x) if x is not None else 'NaN'} {c.accuracy:.4f} "
                         f"{_num(c.n_correct)} {c.n_total}")
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"


def render_report(report: EvaluationReport, fmt: str = "csv") -> str:
    if not report.cells:
        raise ValueError("empty report")
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    return {"csv": report_csv, "pretty": report_pretty, "dat": report_dat}[fmt](report)


def write_report(report: EvaluationReport, path, fmt: str = "csv") -> None:
    Path(path).write_text(render_report(report, fmt))
