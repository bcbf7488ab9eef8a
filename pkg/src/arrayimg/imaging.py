"""Imaging pipelines: two-step SMV/MMV, optimal illuminations, hybrid-l1,
MUSIC and Kirchhoff migration, plus rank selection and export helpers."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .greens import SensingMatrix, pairwise_green_matrix
from .foldy_lax import ResponseMatrix
from .sparse_solvers import (SolverParams, solve_l1_smv, solve_l1_mmv,
                             rowsupp, theorem2_error_bound)

__all__ = [
    "ImagingResult",
    "HybridSystem",
    "select_rank",
    "reflectivities_from_sources",
    "image_smv",
    "image_mmv",
    "optimal_illuminations",
    "build_hybrid_system",
    "image_hybrid_l1",
    "image_music",
    "image_km",
    "km_complex_image",
    "hybrid_certificate",
    "write_support_csv",
    "write_image_csv",
    "write_pgm",
]

SCREEN_FLOOR_REL = 1e-12
RANK_TOL = 1e-8


@dataclass
class ImagingResult:
    """Output of one imaging method over the full grid."""

    method: str
    support: np.ndarray                 # sorted grid indices
    reflectivity: np.ndarray            # (K,) complex; nonzero on support
    image: np.ndarray | None = None     # (K,) nonnegative values
    diagnostics: dict = field(default_factory=dict)

    @property
    def screened(self) -> list:
        return self.diagnostics.get("screened", [])


@dataclass(frozen=True)
class HybridSystem:
    """Reduced M~ x K linear system obtained from the response-matrix SVD."""

    matrix: np.ndarray      # (M~, K)
    rhs: np.ndarray         # (M~,) singular values
    left_vectors: np.ndarray
    right_vectors: np.ndarray


def select_rank(singular_values, relative_threshold: float = 0.05,
                known_m: int | None = None) -> int:
    """Signal-space dimension: ``known_m`` override, else threshold on sigma_1."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0:
        raise ConfigurationError("empty singular value list")
    if sv[0] <= 0:
        raise ConfigurationError("zero response matrix has no signal subspace")
    if known_m is not None:
        if not 1 <= known_m <= sv.size:
            raise ConfigurationError(f"known rank {known_m} outside [1, {sv.size}]")
        return int(known_m)
    return int(np.sum(sv >= relative_threshold * sv[0]))


def _step1_support(sol, params: SolverParams, coherence, sparsity,
                   column_norms):
    """Support after step one: Theorem-2 floor when usable, else threshold.

    The stability floor lives in the unit-column frame, so recovered
    magnitudes are weighted by their sensing-column norms before the
    comparison.
    """
    mags = np.abs(sol.solution) if sol.solution.ndim == 1 \
        else np.abs(sol.solution).max(axis=1)
    if (params.delta > 0 and coherence is not None and sparsity is not None
            and (sparsity - 1) * coherence < 1):
        floor = theorem2_error_bound(params.delta, sparsity, coherence).detection_floor
        return np.flatnonzero(mags * column_norms > floor)
    if sol.solution.ndim == 1:
        return sol.support
    return rowsupp(sol.solution, params.support_threshold)


def _exciting_fields(support, gamma_supp, illumination, sensing: SensingMatrix):
    """Total fields at the support points from recovered effective sources."""
    pts = sensing.window.points[support]
    g_sub = sensing.matrix[:, support]
    pair = pairwise_green_matrix(pts, sensing.ctx)
    return g_sub.T @ illumination + pair @ gamma_supp


def reflectivities_from_sources(support, gamma_supp, illumination,
                                sensing: SensingMatrix):
    """Second step of the two-step reconstruction.

    Rebuilds the exciting fields at the support points from the recovered
    effective sources and divides them out.  Returns ``(values, screened)``
    where ``screened`` marks components whose exciting field magnitude falls
    below ``1e-12 * ||f||``; their values are NaN, never a silent division.
    """
    support = np.asarray(support, dtype=int)
    gamma_supp = np.asarray(gamma_supp, dtype=complex)
    f = np.asarray(illumination, dtype=complex)
    exciting = _exciting_fields(support, gamma_supp, f, sensing)
    floor = SCREEN_FLOOR_REL * np.linalg.norm(f)
    screened = np.abs(exciting) < floor
    values = np.full(support.size, complex(np.nan, np.nan))
    values[~screened] = gamma_supp[~screened] / exciting[~screened]
    return values, screened


def image_smv(b, illumination, sensing: SensingMatrix,
              params: SolverParams | None = None,
              coherence: float | None = None,
              sparsity: int | None = None) -> ImagingResult:
    """Two-step single-illumination reconstruction.

    Step one recovers the effective source vector by l1 minimization; step
    two rebuilds the exciting fields on the recovered support and divides
    them out to obtain reflectivities.  Components whose exciting field
    falls below ``1e-12 * ||f||`` are flagged as screened (reflectivity NaN,
    never silently assigned).
    """
    params = params or SolverParams()
    f = np.asarray(illumination, dtype=complex)
    sol = solve_l1_smv(sensing.matrix, b, params)
    support = _step1_support(sol, params, coherence, sparsity,
                             np.linalg.norm(sensing.matrix, axis=0))

    reflectivity = np.zeros(sensing.k, dtype=complex)
    screened = []
    if support.size:
        values, screen_mask = reflectivities_from_sources(
            support, sol.solution[support], f, sensing)
        reflectivity[support] = values
        screened = [int(i) for i in support[screen_mask]]
    diagnostics = {
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
        "converged": sol.converged,
        "screened": screened,
        "effective_sources": sol.solution,
    }
    return ImagingResult(method="smv", support=np.sort(support),
                         reflectivity=reflectivity,
                         image=np.abs(np.nan_to_num(reflectivity)),
                         diagnostics=diagnostics)


def image_mmv(data, illuminations, sensing: SensingMatrix,
              params: SolverParams | None = None,
              coherence: float | None = None,
              sparsity: int | None = None) -> ImagingResult:
    """Joint-sparsity reconstruction from multiple illuminations.

    Reflectivities are estimated per illumination on the common row support
    and averaged, skipping illuminations in which the component is screened.
    """
    params = params or SolverParams()
    b = np.atleast_2d(np.asarray(data, dtype=complex))
    f = np.atleast_2d(np.asarray(illuminations, dtype=complex))
    if b.shape[0] == 1 and b.shape[1] == sensing.n:  # row vector input
        b = b.T
    if f.shape[0] == 1 and f.shape[1] == sensing.n:
        f = f.T
    if b.shape[1] != f.shape[1]:
        raise ConfigurationError("data and illumination column counts differ")
    sol = solve_l1_mmv(sensing.matrix, b, params)
    support = _step1_support(sol, params, coherence, sparsity,
                             np.linalg.norm(sensing.matrix, axis=0))

    reflectivity = np.zeros(sensing.k, dtype=complex)
    screened = []
    if support.size:
        estimates = np.zeros((support.size, f.shape[1]), dtype=complex)
        valid = np.zeros((support.size, f.shape[1]), dtype=bool)
        for j in range(f.shape[1]):
            values, screen_mask = reflectivities_from_sources(
                support, sol.solution[support, j], f[:, j], sensing)
            valid[:, j] = ~screen_mask
            estimates[~screen_mask, j] = values[~screen_mask]
        counts = valid.sum(axis=1)
        for local, idx in enumerate(support):
            if counts[local] == 0:
                screened.append(int(idx))
                reflectivity[idx] = complex(np.nan, np.nan)
            else:
                reflectivity[idx] = estimates[local, valid[local]].mean()
    diagnostics = {
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
        "converged": sol.converged,
        "screened": screened,
        "effective_sources": sol.solution,
    }
    return ImagingResult(method="mmv", support=np.sort(support),
                         reflectivity=reflectivity,
                         image=np.abs(np.nan_to_num(reflectivity)),
                         diagnostics=diagnostics)


def optimal_illuminations(resp: ResponseMatrix, count: int) -> np.ndarray:
    """Top right singular vectors of the response matrix, as columns."""
    u, s, vh = resp.svd()
    rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    if not 1 <= count <= rank:
        raise ConfigurationError(
            f"requested {count} illuminations but numerical rank is {rank}")
    return vh.conj().T[:, :count]


def build_hybrid_system(resp: ResponseMatrix, sensing: SensingMatrix,
                        m_tilde: int) -> HybridSystem:
    """Project singular-vector data onto the left singular subspace.

    Row ``i`` of the reduced matrix at column ``j`` is
    ``conj(g0*(y_j) U_i) * (g0^T(y_j) V_i)`` and the right side is the
    vector of retained singular values.
    """
    u, s, vh = resp.svd()
    if not 1 <= m_tilde <= s.size:
        raise ConfigurationError(f"rank {m_tilde} outside [1, {s.size}]")
    un = u[:, :m_tilde]
    vn = vh.conj().T[:, :m_tilde]
    g = sensing.matrix
    mat = (un.conj().T @ g) * (vn.T @ g)
    return HybridSystem(matrix=mat, rhs=s[:m_tilde].astype(complex),
                        left_vectors=un, right_vectors=vn)


def image_hybrid_l1(resp: ResponseMatrix, sensing: SensingMatrix,
                    params: SolverParams | None = None,
                    m_tilde: int | None = None,
                    delta_fraction: float = 0.0) -> ImagingResult:
    """Single-step l1 recovery on the SVD-reduced system (Born regime).

    ``delta_fraction`` scales ``||sigma||_2`` into the constraint radius;
    zero requests the equality-constrained problem.
    """
    params = params or SolverParams()
    _, s, _ = resp.svd()
    if m_tilde is None:
        m_tilde = select_rank(s)
    hybrid = build_hybrid_system(resp, sensing, m_tilde)
    delta_h = delta_fraction * float(np.linalg.norm(hybrid.rhs))
    sol = solve_l1_smv(hybrid.matrix, hybrid.rhs, replace(params, delta=delta_h))
    support = sol.support
    reflectivity = np.zeros(sensing.k, dtype=complex)
    reflectivity[support] = sol.solution[support]
    diagnostics = {
        "iterations": sol.iterations,
        "residual": sol.residual_norm,
        "converged": sol.converged,
        "screened": [],
        "rank": m_tilde,
        "delta": delta_h,
    }
    return ImagingResult(method="hybrid-l1", support=np.sort(support),
                         reflectivity=reflectivity,
                         image=np.abs(reflectivity),
                         diagnostics=diagnostics)


def _local_maxima(values: np.ndarray, rows: int, cols: int, count: int,
                  floor_fraction: float = 0.5, min_separation: int = 2):
    """Top lattice peaks: 4-neighbor maxima, descending, separation-limited."""
    grid = values.reshape(rows, cols)
    top = grid.max()
    if top <= 0:
        return np.array([], dtype=int)
    candidates = []
    for r in range(rows):
        for c in range(cols):
            v = grid[r, c]
            if v <= floor_fraction * top:
                continue
            if r > 0 and grid[r - 1, c] > v:
                continue
            if r < rows - 1 and grid[r + 1, c] > v:
                continue
            if c > 0 and grid[r, c - 1] > v:
                continue
            if c < cols - 1 and grid[r, c + 1] > v:
                continue
            candidates.append((v, r, c))
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))
    picked = []
    for v, r, c in candidates:
        if len(picked) >= count:
            break
        if all(max(abs(r - pr), abs(c - pc)) >= min_separation for pr, pc in picked):
            picked.append((r, c))
    return np.sort(np.array([r * cols + c for r, c in picked], dtype=int))


def image_music(resp: ResponseMatrix, sensing: SensingMatrix,
                m_tilde: int | None = None,
                peak_floor: float = 0.25) -> ImagingResult:
    """Noise-subspace projection functional, normalized to peak at one.

    Peaks are 4-neighbor local maxima above ``peak_floor`` times the global
    maximum, separation-limited and capped at the signal rank.  The floor
    default admits the weak-scatterer peaks that heavy noise pushes well
    below half height.
    """
    u, s, _ = resp.svd()
    if m_tilde is None:
        m_tilde = select_rank(s)
    if not 1 <= m_tilde <= s.size:
        raise ConfigurationError(f"rank {m_tilde} outside [1, {s.size}]")
    g = sensing.matrix
    un = u[:, :m_tilde]
    projected = un @ (un.conj().T @ g) - g
    norms = np.linalg.norm(projected, axis=0)
    if not np.any(norms > 0):
        raise DomainError("all grid points project to zero; degenerate subspace")
    functional = norms.min() / norms
    window = sensing.window
    support = _local_maxima(functional, window.rows, window.cols, m_tilde,
                            floor_fraction=peak_floor)
    diagnostics = {"rank": m_tilde, "screened": []}
    return ImagingResult(method="music", support=support,
                         reflectivity=np.zeros(sensing.k, dtype=complex),
                         image=functional, diagnostics=diagnostics)


def km_complex_image(b, illumination, sensing: SensingMatrix) -> np.ndarray:
    """Adjoint backpropagation values conj(g0^T(y) f) * (g0*(y) b) per grid point."""
    b = np.asarray(b, dtype=complex)
    f = np.asarray(illumination, dtype=complex)
    g = sensing.matrix
    return np.conj(g.T @ f) * (g.conj().T @ b)


def image_km(b, illumination, sensing: SensingMatrix,
             peak_count: int | None = None) -> ImagingResult:
    """Kirchhoff migration image; multiple illuminations are summed coherently.

    ``b``/``illumination`` may be vectors or matching-column matrices.  The
    grid stores magnitudes; ``peak_count`` requests a peak listing (no support
    claim is made otherwise).
    """
    b = np.asarray(b, dtype=complex)
    f = np.asarray(illumination, dtype=complex)
    if b.ndim == 1:
        values = km_complex_image(b, f, sensing)
    else:
        if f.ndim != 2 or f.shape[1] != b.shape[1]:
            raise ConfigurationError("data and illumination column counts differ")
        values = np.zeros(sensing.k, dtype=complex)
        for j in range(b.shape[1]):
            values += km_complex_image(b[:, j], f[:, j], sensing)
    magnitudes = np.abs(values)
    window = sensing.window
    if peak_count:
        support = _local_maxima(magnitudes, window.rows, window.cols, peak_count)
    else:
        support = np.array([], dtype=int)
    return ImagingResult(method="km", support=support,
                         reflectivity=np.zeros(sensing.k, dtype=complex),
                         image=magnitudes,
                         diagnostics={"complex_image": values, "screened": []})


def hybrid_certificate(hybrid: HybridSystem, support) -> dict:
    """Theorem-style uniqueness diagnostics for the reduced system.

    Reports the normalized-column certificate ``||S|| < 1 - ||E - I||`` and
    the diagonal-scaled variant used in random media; both in the 1->1
    induced norm.  Purely diagnostic: no recovery decision is made here.
    """
    support = np.asarray(support, dtype=int)
    mat = hybrid.matrix
    norms = np.linalg.norm(mat, axis=0)
    normed = mat / np.maximum(norms, 1e-300)[None, :]
    rest = np.setdiff1d(np.arange(mat.shape[1]), support)

    def norm_11(m):
        return float(np.max(np.sum(np.abs(m), axis=0))) if m.size else 0.0

    report = {}
    e_block = normed[:, support]
    s_block = normed[:, rest]
    s_norm = norm_11(s_block)
    if e_block.shape[0] == e_block.shape[1]:
        e_dev = norm_11(e_block - np.eye(e_block.shape[0]))
        report["normalized"] = {
            "s_norm": s_norm, "e_minus_i_norm": e_dev,
            "certified": bool(s_norm < 1 - e_dev),
        }
    else:
        report["normalized"] = {
            "s_norm": s_norm, "e_minus_i_norm": None,
            "certified": False, "note": "rank != support size; not comparable",
        }
    raw_e = mat[:, support]
    if raw_e.shape[0] == raw_e.shape[1]:
        d = np.diag(raw_e)
        if np.all(np.abs(d) > 0):
            d_inv = np.diag(1.0 / d)
            off = raw_e - np.diag(d)
            ds_norm = norm_11(d_inv @ mat[:, rest])
            de_norm = norm_11(d_inv @ off)
            report["diagonal_scaled"] = {
                "s_norm": ds_norm, "e_norm": de_norm,
                "certified": bool(ds_norm < 1 - de_norm),
            }
    return report


def write_support_csv(path, result: ImagingResult, window) -> None:
    """CSV of recovered components: index,row,col,re,im,abs,flag."""
    screened = set(result.screened)
    with open(path, "w") as fh:
        fh.write("index,row,col,re,im,abs,flag\n")
        for idx in result.support:
            row, col = window.index_to_rowcol(int(idx))
            z = result.reflectivity[idx]
            flag = "screened" if int(idx) in screened else "ok"
            fh.write(f"{int(idx)},{row},{col},{z.real:.12g},{z.imag:.12g},"
                     f"{abs(z):.12g},{flag}\n")


def write_image_csv(path, result: ImagingResult, window) -> None:
    """Row-major magnitude grid, one CSV row per lattice row."""
    grid = np.nan_to_num(result.image).reshape(window.rows, window.cols)
    with open(path, "w") as fh:
        for r in range(window.rows):
            fh.write(",".join(f"{v:.12g}" for v in grid[r]) + "\n")


def write_pgm(path, result: ImagingResult, window) -> None:
    """Plain (P2) portable graymap normalized so the peak maps to 255."""
    grid = np.nan_to_num(result.image).reshape(window.rows, window.cols)
    top = grid.max()
    scaled = np.zeros_like(grid, dtype=int) if top <= 0 \
        else np.rint(grid / top * 255).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{window.cols} {window.rows}\n255\n")
        for r in range(window.rows):
            fh.write(" ".join(str(v) for v in scaled[r]) + "\n")
