"""Homogeneous Green's function, sensing matrix and coherence diagnostics."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .geometry import ArrayGeometry, ImageWindow, WaveContext

__all__ = [
    "GreensVector",
    "SensingMatrix",
    "green_homogeneous",
    "green_vector",
    "pairwise_green_matrix",
    "sensing_matrix",
    "mutual_coherence",
    "theorem1_margin",
    "save_matrix_csv",
    "load_matrix_csv",
    "write_coherence_report",
]

_COINCIDENCE_TOL = 1e-14


@dataclass(frozen=True)
class GreensVector:
    """Green's function evaluated from one grid point to every transducer."""

    values: np.ndarray  # (N,) complex
    source: np.ndarray  # (2,)
    ctx: WaveContext


@dataclass(frozen=True)
class SensingMatrix:
    """N x K matrix whose column j is the Green's vector at grid point j."""

    matrix: np.ndarray  # (N, K) complex
    geom: ArrayGeometry
    window: ImageWindow
    ctx: WaveContext

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


def green_homogeneous(x, y, ctx: WaveContext) -> complex:
    """Free-space kernel exp(i*kappa*r) / (4*pi*r) between two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(x - y))
    if r <= _COINCIDENCE_TOL:
        raise DomainError("coincident source and receiver (Green's function singularity)")
    return np.exp(1j * ctx.wavenumber * r) / (4.0 * np.pi * r)


def green_vector(geom: ArrayGeometry, y, ctx: WaveContext) -> GreensVector:
    """Green's vector from point ``y`` to all transducers."""
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(geom.positions - y[None, :], axis=1)
    if np.any(r <= _COINCIDENCE_TOL):
        raise DomainError("point coincides with a transducer")
    values = np.exp(1j * ctx.wavenumber * r) / (4.0 * np.pi * r)
    return GreensVector(values=values, source=y, ctx=ctx)


def pairwise_green_matrix(points: np.ndarray, ctx: WaveContext) -> np.ndarray:
    """Symmetric matrix of Green's values between distinct points; zero diagonal."""
    pts = np.asarray(points, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    off = ~np.eye(len(pts), dtype=bool)
    if np.any(r[off] <= _COINCIDENCE_TOL):
        raise DomainError("coincident points in pairwise Green's matrix")
    g = np.zeros_like(r, dtype=complex)
    g[off] = np.exp(1j * ctx.wavenumber * r[off]) / (4.0 * np.pi * r[off])
    return g


def sensing_matrix(geom: ArrayGeometry, window: ImageWindow, ctx: WaveContext) -> SensingMatrix:
    """Assemble the N x K sensing matrix for the array/window pair."""
    diff = geom.positions[:, None, :] - window.points[None, :, :]
    r = np.linalg.norm(diff, axis=2)
    bad = np.nonzero(np.any(r <= _COINCIDENCE_TOL, axis=0))[0]
    if bad.size:
        raise DomainError(f"grid point {int(bad[0])} coincides with a transducer")
    mat = np.exp(1j * ctx.wavenumber * r) / (4.0 * np.pi * r)
    return SensingMatrix(matrix=mat, geom=geom, window=window, ctx=ctx)


def mutual_coherence(mat, block_size: int = 4096):
    """Maximum normalized inner product between distinct columns.

    Accepts a :class:`SensingMatrix` or a plain complex matrix.  Returns
    ``(epsilon, (i, j))`` with ``i < j`` the maximizing column pair.  The scan
    is blocked so the K x K Gram matrix is never fully materialized for
    large grids.
    """
    a = mat.matrix if isinstance(mat, SensingMatrix) else np.asarray(mat, dtype=complex)
    if a.ndim != 2 or a.shape[1] < 2:
        raise DomainError("mutual coherence needs at least two columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise DomainError("zero column in coherence scan")
    cols = a / norms[None, :]
    k = cols.shape[1]
    best = -1.0
    best_pair = (0, 1)
    for start in range(0, k, block_size):
        stop = min(start + block_size, k)
        gram = np.abs(cols[:, start:stop].conj().T @ cols)  # (stop-start, K)
        for local_i in range(stop - start):
            gram[local_i, start + local_i] = -1.0  # mask self products
        flat = int(np.argmax(gram))
        i_local, j = divmod(flat, k)
        val = float(gram[i_local, j])
        if val > best:
            best = val
            i = start + i_local
            best_pair = (min(i, j), max(i, j))
    return min(best, 1.0), best_pair


def theorem1_margin(epsilon: float, m: int) -> float:
    """Signed exact-recovery margin ``1/2 - epsilon * m``; positive certifies."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError("coherence must lie in [0, 1]")
    if m < 0:
        raise DomainError("sparsity count must be nonnegative")
    return 0.5 - epsilon * m


def save_matrix_csv(path, matrix: np.ndarray, header: dict | None = None) -> None:
    """Write a complex matrix as CSV rows of interleaved re,im pairs.

    An optional header dict is stored as a single ``#``-prefixed JSON line.
    """
    m = np.asarray(matrix, dtype=complex)
    with open(path, "w") as fh:
        if header is not None:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for row in m:
            cells = []
            for z in row:
                cells.append(f"{z.real:.17g}")
                cells.append(f"{z.imag:.17g}")
            fh.write(",".join(cells) + "\n")


def load_matrix_csv(path):
    """Inverse of :func:`save_matrix_csv`; returns ``(matrix, header_or_None)``."""
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                header = json.loads(line.lstrip("# "))
                continue
            vals = np.array([float(tok) for tok in line.split(",")])
            if vals.size % 2:
                raise ConfigurationError("odd number of fields in re,im CSV row")
            rows.append(vals[0::2] + 1j * vals[1::2])
    if not rows:
        raise ConfigurationError(f"no matrix rows found in {path}")
    return np.vstack(rows), header


def write_coherence_report(path, epsilon: float, pair, margins: dict) -> None:
    """CSV report with the coherence, maximizing pair and per-M margins."""
    with open(path, "w") as fh:
        fh.write("quantity,value\n")
        fh.write(f"coherence,{epsilon:.17g}\n")
        fh.write(f"argmax_i,{pair[0]}\n")
        fh.write(f"argmax_j,{pair[1]}\n")
        for m_count, margin in sorted(margins.items()):
            fh.write(f"margin_m{m_count},{margin:.17g}\n")
