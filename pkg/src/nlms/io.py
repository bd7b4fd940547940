"""P5 rasters with a YAML sidecar carrying grid, domain, exterior data and closure."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .geometry import CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor


def _float(x):
    x = float(x)
    return x if np.isfinite(x) else (".inf" if x > 0 else "-.inf")


def _unfloat(x):
    if isinstance(x, str):
        return float(x.replace(".inf", "inf"))
    return float(x)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".yaml")


def write_raster(E: CellSet, path, dom: CylinderDomain | None = None,
                 exterior: ExteriorGraphData | None = None):
    """Write E as a binary PGM (top row first, 255 = member) plus its metadata."""
    path = Path(path)
    g = E.grid
    data = np.where(E.bits[::-1], 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.nx} {g.ny}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    meta = {
        "h": float(g.h), "nx": g.nx, "ny": g.ny,
        "window": {"x": [-g.half_width, g.half_width], "y": [-g.half_height, g.half_height]},
        "closure": {"colh": [_float(v) for v in E.colh], "left": _float(E.left),
                    "right": _float(E.right), "frozen": [bool(f) for f in E.frozen],
                    "inverted": bool(E.inverted)},
    }
    if dom is not None:
        meta["omega_o"] = [[float(a), float(b)] for a, b in dom.intervals]
    if exterior is not None:
        meta["u"] = [float(v) for v in exterior.u]
    with open(sidecar_path(path), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)
    return path


def _read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while raw[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM (P5) raster")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit rasters are supported")
    data = np.frombuffer(raw[pos:pos + nx * ny], dtype=np.uint8)
    if data.size != nx * ny:
        raise ValueError(f"{path}: truncated raster")
    return data.reshape(ny, nx)[::-1] > maxval // 2


def read_raster(path):
    """Return ``(CellSet, CylinderDomain | None, ExteriorGraphData | None)``."""
    bits = _read_pgm(path)
    with open(sidecar_path(path)) as fh:
        meta = yaml.safe_load(fh)
    g = GridDescriptor(float(meta["h"]), int(meta["nx"]), int(meta["ny"]))
    if bits.shape != g.shape:
        raise ValueError("raster size disagrees with its metadata")
    cl = meta["closure"]
    E = CellSet(g, bits, [_unfloat(v) for v in cl["colh"]], _unfloat(cl["left"]),
                _unfloat(cl["right"]), np.array(cl["frozen"], bool), bool(cl["inverted"]))
    dom = CylinderDomain(tuple(tuple(iv) for iv in meta["omega_o"])) if "omega_o" in meta else None
    ext = ExteriorGraphData(np.array(meta["u"], float)) if "u" in meta else None
    return E, dom, ext
