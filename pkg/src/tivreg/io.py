"""Point cloud files: ASCII PLY and XYZ."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import CloudIOError, ParseError, UnsupportedFormat
from .geometry import as_cloud

FORMATS = ("ply", "xyz")


def detect_format(path, data: bytes | None = None) -> str:
    """``"ply"`` or ``"xyz"`` from the magic line, falling back to the extension."""
    if data is not None and data[:3] == b"ply":
        return "ply"
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply"
    if suffix in (".xyz", ".txt", ".pts", ""):
        return "xyz"
    raise UnsupportedFormat(f"{path}: cannot infer format from extension {suffix!r}")


def _parse_floats(path, lineno, fields):
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise ParseError(path, lineno, f"expected numbers, got {' '.join(fields)!r}") from None
    if not all(np.isfinite(vals)):
        raise ParseError(path, lineno, "coordinates must be finite")
    return vals


def _read_xyz(path, lines):
    pts = []
    for lineno, line in enumerate(lines, 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        fields = s.replace(",", " ").split()
        if len(fields) < 3:
            raise ParseError(path, lineno, f"expected 3 coordinates, got {len(fields)}")
        pts.append(_parse_floats(path, lineno, fields[:3]))
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def _read_ply(path, lines):
    if not lines or lines[0].strip() != "ply":
        raise ParseError(path, 1, "missing 'ply' magic line")
    elements = []  # [name, count, [property names]]
    lineno = 1
    end = None
    for lineno in range(2, len(lines) + 1):
        tok = lines[lineno - 1].split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise UnsupportedFormat(
                    f"{path}: only ASCII PLY is supported, got format {' '.join(tok[1:])!r}"
                )
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(path, lineno, "malformed element line")
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError(path, lineno, "property before any element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            end = lineno
            break
        else:
            raise ParseError(path, lineno, f"unexpected header keyword {tok[0]!r}")
    if end is None:
        raise ParseError(path, lineno, "header has no end_header")

    body = iter(enumerate(lines[end:], end + 1))
    pts = None
    for name, count, props in elements:
        if name == "vertex":
            try:
                cols = [props.index(a) for a in "xyz"]
            except ValueError:
                raise ParseError(path, end, "vertex element lacks x, y or z") from None
            pts = np.empty((count, 3))
        for k in range(count):
            for lineno, line in body:
                if line.strip():
                    break
            else:
                raise ParseError(path, len(lines), f"file ends inside element {name!r}")
            if name != "vertex":
                continue
            fields = line.split()
            if len(fields) < len(props):
                raise ParseError(path, lineno, f"expected {len(props)} values, got {len(fields)}")
            pts[k] = _parse_floats(path, lineno, [fields[c] for c in cols])
    if pts is None:
        raise ParseError(path, end, "no vertex element")
    return pts


def load_cloud(path, fmt: str | None = None) -> np.ndarray:
    """Read an ``(N, 3)`` cloud from an ASCII PLY or XYZ file.

    Only vertex x/y/z are read from PLY files; faces and other properties
    are skipped. In XYZ files ``#`` starts a comment and extra columns are
    ignored.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CloudIOError(f"{path}: {exc.strerror or exc}") from None
    fmt = fmt or detect_format(path, data)
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unknown format {fmt!r}; choose from {FORMATS}")
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        if fmt == "ply":
            raise UnsupportedFormat(f"{path}: binary PLY is not supported") from None
        line = data[: exc.start].count(b"\n") + 1
        raise ParseError(path, line, "non-ASCII bytes") from None
    lines = text.splitlines()
    return _read_ply(path, lines) if fmt == "ply" else _read_xyz(path, lines)


def save_cloud(path, cloud, fmt: str | None = None) -> None:
    """Write ``cloud`` with 17 significant digits, so loading it back is exact."""
    pts = as_cloud(cloud)
    path = Path(path)
    fmt = fmt or detect_format(path)
    body = "".join(f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in pts)
    if fmt == "ply":
        header = (f"ply\nformat ascii 1.0\nelement vertex {len(pts)}\n"
                  "property double x\nproperty double y\nproperty double z\nend_header\n")
        body = header + body
    elif fmt != "xyz":
        raise UnsupportedFormat(f"unknown format {fmt!r}; choose from {FORMATS}")
    try:
        path.write_text(body)
    except OSError as exc:
        raise CloudIOError(f"{path}: {exc.strerror or exc}") from None


def downsample(cloud, n: int, seed=0) -> np.ndarray:
    """``n`` points drawn uniformly without replacement; the whole cloud if ``n >= len``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = as_cloud(cloud)
    if n >= len(pts):
        return pts.copy()
    idx = np.random.default_rng(seed).choice(len(pts), size=n, replace=False)
    return pts[np.sort(idx)]
