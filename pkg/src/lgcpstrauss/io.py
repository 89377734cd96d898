"""File formats: pattern CSV, prior JSON, posterior/curve/envelope CSV.

Pattern files are CSV with an `x,y` header; the window travels either in
a leading comment line `# window xmin xmax ymin ymax` or in a JSON
sidecar `<stem>.window.json`.  All floats are written with repr, so a
write/read round trip is lossless.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import Marginal, PointPattern, PriorSpec, ValidationError, Window, PARAM_NAMES

PARAM_HEADER = ",".join(PARAM_NAMES)


class PatternFormatError(ValidationError):
    """Malformed pattern file; the message lists the offending lines."""


def _fmt(x: float) -> str:
    return repr(float(x))


def write_pattern(pattern: PointPattern, path) -> None:
    w = pattern.window
    lines = [f"# window {_fmt(w.xmin)} {_fmt(w.xmax)} {_fmt(w.ymin)} {_fmt(w.ymax)}", "x,y"]
    lines += [f"{_fmt(x)},{_fmt(y)}" for x, y in pattern.points]
    Path(path).write_text("\n".join(lines) + "\n")


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".window.json")


def write_window_sidecar(window: Window, csv_path) -> None:
    payload = {k: getattr(window, k) for k in ("xmin", "xmax", "ymin", "ymax")}
    _sidecar(Path(csv_path)).write_text(json.dumps(payload, indent=2) + "\n")


def read_pattern(path, window: Window | None = None) -> PointPattern:
    """Parse a pattern CSV; window from the header comment, sidecar, or arg."""
    path = Path(path)
    text = path.read_text()
    rows: list[tuple[float, float]] = []
    bad: list[str] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["window"]:
                if len(parts) != 5:
                    bad.append(f"line {lineno}: malformed window comment")
                    continue
                try:
                    window = Window(*(float(v) for v in parts[1:]))
                except (TypeError, ValueError) as exc:
                    bad.append(f"line {lineno}: {exc}")
            continue
        if not header_seen and line.lower().replace(" ", "") == "x,y":
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            bad.append(f"line {lineno}: expected two comma-separated values")
            continue
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            bad.append(f"line {lineno}: non-numeric coordinates {line!r}")
    if window is None:
        sidecar = _sidecar(path)
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            window = Window(meta["xmin"], meta["xmax"], meta["ymin"], meta["ymax"])
    if window is None:
        raise PatternFormatError(
            f"{path}: no window found (header comment, sidecar, or explicit argument)"
        )
    pts = np.array(rows, dtype=float).reshape(len(rows), 2)
    outside = ~window.contains(pts[:, 0], pts[:, 1]) if len(rows) else np.zeros(0, bool)
    if np.any(outside):
        bad += [f"point {i}: {tuple(pts[i])} outside window" for i in np.flatnonzero(outside)]
    if bad:
        raise PatternFormatError(f"{path}: " + "; ".join(bad))
    return PointPattern(pts, window)


# ---------------------------------------------------------------------------
# priors


def prior_to_dict(prior: PriorSpec) -> dict:
    out = {}
    for name in PARAM_NAMES:
        m = prior.marginal(name)
        out[name] = {"family": m.family, "a": m.a, "b": m.b, "lo": m.lo, "hi": m.hi}
    return out


def prior_from_dict(spec: dict) -> PriorSpec:
    marginals = {}
    for name in PARAM_NAMES:
        if name not in spec:
            raise ValidationError(f"prior config is missing {name!r}")
        entry = spec[name]
        family = entry["family"]
        a, b = float(entry["a"]), float(entry["b"])
        lo = float(entry.get("lo", a if family == "uniform" else -np.inf))
        hi = float(entry.get("hi", b if family == "uniform" else np.inf))
        marginals[name] = Marginal(family, a, b, lo, hi)
    return PriorSpec(**marginals)


def write_prior(prior: PriorSpec, path) -> None:
    Path(path).write_text(json.dumps(prior_to_dict(prior), indent=2) + "\n")


def read_prior(path) -> PriorSpec:
    return prior_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# tabular artifacts


def write_posterior(samples: np.ndarray, path) -> None:
    lines = [PARAM_HEADER]
    lines += [",".join(_fmt(v) for v in row) for row in samples]
    Path(path).write_text("\n".join(lines) + "\n")


def read_posterior(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != PARAM_HEADER:
        raise ValidationError(f"{path}: expected header {PARAM_HEADER!r}")
    return np.array([[float(v) for v in line.split(",")] for line in text[1:] if line])


def write_curve(curve, path) -> None:
    lines = ["r,value,defined"]
    for r, v, d in zip(curve.r, curve.values, curve.defined):
        lines.append(f"{_fmt(r)},{_fmt(v)},{int(d)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_envelope(result, path) -> None:
    lines = ["r,lo,hi,data,mean"]
    for i in range(result.r.size):
        lines.append(
            ",".join(
                _fmt(v)
                for v in (result.r[i], result.lo[i], result.hi[i], result.data[i], result.sim_mean[i])
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary(summary, path_json, path_csv) -> None:
    d = summary.as_dict()
    payload = dict(d)
    payload["finite"] = summary.is_finite
    Path(path_json).write_text(json.dumps(payload, indent=2, default=float) + "\n")
    lines = [",".join(summary.names), ",".join(_fmt(v) for v in summary.values)]
    Path(path_csv).write_text("\n".join(lines) + "\n")


def write_trace(traces: dict[str, list], path) -> None:
    """Traces keyed by init label; columns iter,n,sR,init_label."""
    lines = ["iter,n,sR,init_label"]
    for label, records in traces.items():
        for rec in records:
            lines.append(f"{rec.iteration},{rec.n},{rec.s_r},{label}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_csv(field, path) -> None:
    """Debug dump: one line per x-cell, ny comma-separated values."""
    lines = [",".join(_fmt(v) for v in row) for row in field.values]
    Path(path).write_text("\n".join(lines) + "\n")


def write_pilot(pilot, path) -> None:
    header = PARAM_HEADER + "," + ",".join(pilot.names)
    lines = [header]
    for theta, t in zip(pilot.thetas, pilot.summaries):
        lines.append(",".join(_fmt(v) for v in theta) + "," + ",".join(_fmt(v) for v in t))
    Path(path).write_text("\n".join(lines) + "\n")
