"""
Text formats for partial maps, family manifests and exhaustion specs

Map file:
    grid <dims> <lo_1> <hi_1> <n_1> ... target <k>
    <cell_index> <v_1> ... <v_k>

Manifest:
    t <time> <mapfile>
    limit <a>            (optional, default 0)
"""
import logging
import os
from typing import List, Tuple

import numpy as np

from core.convergence import FamilySample
from core.grid import DomainMask, Exhaustion, GridDomain, PartialMap

logger = logging.getLogger(__name__)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _content_lines(path: str):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def parse_header(tokens: List[str]) -> Tuple[GridDomain, int]:
    try:
        if tokens[0] != "grid":
            raise ValueError
        dims = int(tokens[1])
        if dims <= 0 or len(tokens) != 2 + 3 * dims + 2 or tokens[2 + 3 * dims] != "target":
            raise ValueError
        extents, cells = [], []
        for a in range(dims):
            lo, hi, n = tokens[2 + 3 * a: 5 + 3 * a]
            extents.append((float(lo), float(hi)))
            cells.append(int(n))
        k = int(tokens[-1])
        if k < 0:
            raise ValueError
        return GridDomain(tuple(extents), tuple(cells)), k
    except (ValueError, IndexError):
        raise ValueError("malformed header")


def format_header(grid: GridDomain, k: int) -> str:
    parts = ["grid", str(grid.dims)]
    for (lo, hi), n in zip(grid.extents, grid.cells_per_axis):
        parts += [_fmt(lo), _fmt(hi), str(n)]
    return " ".join(parts + ["target", str(k)])


def _read_cells(path: str) -> Tuple[GridDomain, int, np.ndarray, np.ndarray]:
    lines = _content_lines(path)
    first = next(lines, None)
    if first is None:
        raise ValueError("malformed header")
    grid, k = parse_header(first[1])

    flags = np.zeros(grid.n_cells, dtype=bool)
    values = np.full((grid.n_cells, max(k, 1)), np.nan)
    for lineno, tokens in lines:
        if len(tokens) != 1 + k:
            raise ValueError(f"line {lineno}: expected {1 + k} fields")
        try:
            idx = int(tokens[0])
            row = [float(v) for v in tokens[1:]]
        except ValueError:
            raise ValueError(f"line {lineno}: invalid number")
        if idx < 0 or idx >= grid.n_cells:
            raise ValueError("out-of-range index")
        if flags[idx]:
            raise ValueError("duplicate cell index")
        flags[idx] = True
        if k:
            values[idx] = row
    return grid, k, flags, values


def read_map(path: str) -> PartialMap:
    grid, k, flags, values = _read_cells(path)
    if k == 0:
        raise ValueError("map file has no target coordinates")
    return PartialMap(DomainMask(grid, flags), values)


def write_map(phi: PartialMap, path: str) -> None:
    lines = [format_header(phi.grid, phi.target_dim)]
    for idx in phi.mask.members:
        lines.append(" ".join([str(int(idx))] + [_fmt(v) for v in phi.values[idx]]))
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_mask(path: str, grid: GridDomain | None = None) -> DomainMask:
    """Mask from any map file (target 0 allowed), or the literal ``full`` on ``grid``."""
    if path == "full":
        if grid is None:
            raise ValueError("mask 'full' needs a grid")
        return grid.full_mask()
    g, _, flags, _ = _read_cells(path)
    return DomainMask(g, flags)


def write_mask(mask: DomainMask, path: str) -> None:
    lines = [format_header(mask.grid, 0)] + [str(int(i)) for i in mask.members]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def resolve_manifest(path: str) -> str:
    return os.path.join(path, "manifest") if os.path.isdir(path) else path


def read_manifest(path: str) -> FamilySample:
    """Load a family; map paths are relative to the manifest's directory."""
    path = resolve_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    times, maps = [], []
    limit = 0.0
    header = None
    for lineno, tokens in _content_lines(path):
        if tokens[0] == "limit" and len(tokens) == 2:
            limit = float(tokens[1])
            continue
        if tokens[0] != "t" or len(tokens) != 3:
            raise ValueError(f"{path}:{lineno}: expected 't <time> <mapfile>'")
        phi = read_map(os.path.join(base, tokens[2]))
        if header is None:
            header = (phi.grid, phi.target_dim)
        elif (phi.grid, phi.target_dim) != header:
            raise ValueError(f"{tokens[2]}: grid header differs from the first map")
        times.append(float(tokens[1]))
        maps.append(phi)
    logger.debug(f"Read {len(maps)} maps from {path}")
    return FamilySample(tuple(times), tuple(maps), limit)


def write_manifest(F: FamilySample, out_dir: str, prefix: str = "map") -> str:
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    if F.limit != 0.0:
        lines.append(f"limit {_fmt(F.limit)}")
    width = len(str(len(F)))
    for j, (t, phi) in enumerate(zip(F.times, F.maps)):
        name = f"{prefix}_{j:0{width}d}.map"
        write_map(phi, os.path.join(out_dir, name))
        lines.append(f"t {_fmt(t)} {name}")
    path = os.path.join(out_dir, "manifest")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(F)} maps and manifest to {out_dir}")
    return path


def parse_exhaustion(spec: str, grid: GridDomain) -> Exhaustion:
    """``full``, ``boxes:<n_levels>`` or ``masks:<file>,<file>,...``."""
    text = (spec or "full").strip()
    if text == "full":
        return Exhaustion.whole(grid)
    kind, _, arg = text.partition(":")
    if kind == "boxes":
        try:
            n = int(arg)
        except ValueError:
            raise ValueError(f"invalid exhaustion spec: {spec!r}")
        return Exhaustion.boxes(grid, n)
    if kind == "masks":
        files = [p.strip() for p in arg.split(",") if p.strip()]
        if not files:
            raise ValueError(f"invalid exhaustion spec: {spec!r}")
        return Exhaustion(tuple(read_mask(p, grid) for p in files))
    raise ValueError(f"invalid exhaustion spec: {spec!r}")
