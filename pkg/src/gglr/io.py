"""File formats, graph construction helpers, metrics, and the seeded RNG.

Formats are deliberately plain: an edge-list text format for graphs, binary
8-bit PGM for images and masks, and whitespace "x y z v" text for point
clouds. All of them round-trip byte-identically through their writers.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegeneratePoints, LengthMismatch, ParseError
from .graphs import Graph
from .sparsela import SparseMatrix

PSNR_CAP = 999.0


def make_rng(seed):
    """The library-wide generator: PCG64 under numpy's Generator API.

    The algorithm is pinned so seeded runs reproduce bit-for-bit.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


# ---------------------------------------------------------------------------
# Graph text format
#
#   N
#   i j w            one line per edge, 0-based indices
#   #coords K        optional, followed by N lines of K reals
#   #features M      optional, followed by N lines of M reals


def load_graph(path):
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    idx = 0

    def next_content_line():
        nonlocal idx
        while idx < len(lines) and not lines[idx].strip():
            idx += 1
        if idx >= len(lines):
            return None, None
        line = lines[idx]
        idx += 1
        return line, idx

    line, lineno = next_content_line()
    if line is None:
        raise ParseError("empty graph file")
    try:
        n = int(line.strip())
    except ValueError:
        raise ParseError(f"bad node count {line.strip()!r}", lineno) from None

    edges = []
    coords = None
    features = None
    while True:
        line, lineno = next_content_line()
        if line is None:
            break
        stripped = line.strip()
        if stripped.startswith("#coords"):
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError("expected '#coords K'", lineno)
            k = _parse_int(parts[1], lineno)
            coords = _parse_block(lines, idx, n, k, lineno)
            idx += n
        elif stripped.startswith("#features"):
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError("expected '#features M'", lineno)
            m = _parse_int(parts[1], lineno)
            features = _parse_block(lines, idx, n, m, lineno)
            idx += n
        else:
            parts = stripped.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'i j w', got {stripped!r}", lineno)
            i = _parse_int(parts[0], lineno)
            j = _parse_int(parts[1], lineno)
            w = _parse_float(parts[2], lineno)
            edges.append((i, j, w))
    return Graph(n, np.array(edges, dtype=np.float64).reshape(-1, 3),
                 coords=coords, features=features)


def _parse_int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad integer token {tok!r}", lineno) from None


def _parse_float(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"bad numeric token {tok!r}", lineno) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return v


def _parse_block(lines, start, n, width, header_lineno):
    if start + n > len(lines):
        raise ParseError(f"block needs {n} rows", header_lineno)
    out = np.empty((n, width))
    for r in range(n):
        parts = lines[start + r].split()
        if len(parts) != width:
            raise ParseError(
                f"expected {width} values, got {len(parts)}", start + r + 1
            )
        for c, tok in enumerate(parts):
            out[r, c] = _parse_float(tok, start + r + 1)
    return out


def save_graph(g, path):
    out = [str(g.n)]
    for i, j, w in zip(g.edge_i, g.edge_j, g.edge_w):
        out.append(f"{int(i)} {int(j)} {float(w)!r}")
    if g.coords is not None:
        out.append(f"#coords {g.coords.shape[1]}")
        for row in g.coords:
            out.append(" ".join(repr(float(v)) for v in row))
    if g.features is not None:
        out.append(f"#features {g.features.shape[1]}")
        for row in g.features:
            out.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


def load_signal(path):
    vals = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            vals.append(_parse_float(s, lineno))
    return np.array(vals)


def save_signal(x, path):
    with open(path, "w", encoding="ascii") as fh:
        for v in np.asarray(x, dtype=np.float64):
            fh.write(f"{float(v)!r}\n")


def load_mask(path, n):
    """0/1 per line; 1 marks an observed node."""
    m = load_signal(path)
    if m.size != n:
        raise LengthMismatch(f"mask has {m.size} entries for {n} nodes")
    if not np.all((m == 0) | (m == 1)):
        raise ParseError("mask entries must be 0 or 1")
    return np.flatnonzero(m == 1)


# ---------------------------------------------------------------------------
# PGM images (binary P5, 8-bit)


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        if data[i : i + 1].isspace():
            i += 1
            continue
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ParseError("not a binary PGM (P5) file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval <= 0 or maxval > 255:
        raise ParseError(f"unsupported PGM maxval {maxval}")
    i += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=i)
    return pixels.reshape(height, width).astype(np.float64)


def write_pgm(img, path):
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("image must be two-dimensional")
    clipped = np.clip(np.rint(a), 0, 255).astype(np.uint8)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(clipped.tobytes())


# ---------------------------------------------------------------------------
# Point clouds: "x y z v" per line


def load_point_cloud(path):
    pts, vals = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 4:
                raise ParseError("expected 'x y z v'", lineno)
            pts.append([_parse_float(t, lineno) for t in parts[:3]])
            vals.append(_parse_float(parts[3], lineno))
    return np.array(pts), np.array(vals)


def save_point_cloud(points, values, path):
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        for p, v in zip(points, values):
            fh.write(" ".join(repr(float(c)) for c in p) + f" {float(v)!r}\n")


# ---------------------------------------------------------------------------
# Graph builders


def grid_graph(width, height):
    """4-connected lattice with unit weights; coordinates are (col, row)."""
    if width < 2 or height < 2:
        raise ValueError("grid needs width and height of at least 2")
    n = width * height
    edges = []
    for r in range(height):
        for c in range(width):
            node = r * width + c
            if c + 1 < width:
                edges.append((node, node + 1, 1.0))
            if r + 1 < height:
                edges.append((node, node + width, 1.0))
    coords = np.array(
        [(c, r) for r in range(height) for c in range(width)], dtype=np.float64
    )
    return Graph(n, np.array(edges), coords=coords)


def image_to_signal(img):
    return np.asarray(img, dtype=np.float64).reshape(-1)


def signal_to_image(x, width, height):
    return np.asarray(x, dtype=np.float64).reshape(height, width)


def knn_graph(points, k, sigma_f=None, sigma_x=None, signal=None):
    """Symmetrized k-nearest-neighbor graph over point positions.

    An edge is kept when either endpoint selects the other. Weights follow
    the bilateral form with positions as features; the signal term is used
    only when both a signal and sigma_x are given. Defaults fall back to
    unit weights.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"k must be in 1..{n - 1}")
    tree = cKDTree(pts)
    dist, nbrs = tree.query(pts, k=k + 1)
    if np.any(dist[:, 1] == 0.0):
        raise DegeneratePoints("duplicate points collapse the neighborhoods")

    pairs = set()
    for i in range(n):
        for j in nbrs[i, 1:]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            pairs.add((a, b))
    pairs = sorted(pairs)
    ii = np.array([p[0] for p in pairs], dtype=np.int64)
    jj = np.array([p[1] for p in pairs], dtype=np.int64)

    weights = np.ones(len(pairs))
    if sigma_f is not None:
        d2 = np.sum((pts[ii] - pts[jj]) ** 2, axis=1)
        weights = weights * np.exp(-d2 / (sigma_f * sigma_f))
    if signal is not None and sigma_x is not None:
        sig = np.asarray(signal, dtype=np.float64)
        dv = sig[ii] - sig[jj]
        weights = weights * np.exp(-(dv * dv) / (sigma_x * sigma_x))
    edges = np.column_stack([ii, jj, weights])
    return Graph(n, edges, coords=pts, features=pts)


def box_blur_kernel(width, height, radius=1):
    """Row-stochastic box blur on a lattice as a sparse observation matrix."""
    n = width * height
    rows, cols, vals = [], [], []
    for r in range(height):
        for c in range(width):
            node = r * width + c
            hits = []
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < height and 0 <= cc < width:
                        hits.append(rr * width + cc)
            for h in hits:
                rows.append(node)
                cols.append(h)
                vals.append(1.0 / len(hits))
    return SparseMatrix.from_triplets(rows, cols, vals, (n, n))


# ---------------------------------------------------------------------------
# Metrics


def psnr(x, ref, peak):
    """Peak signal-to-noise ratio in dB, capped at PSNR_CAP for exact matches."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise LengthMismatch("signals have different lengths")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(peak * peak / mse)))
