"""Forward model: exciting fields, Foldy-Lax and Born response matrices."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, ResonanceError
from .geometry import ReflectivityVector
from .greens import SensingMatrix, pairwise_green_matrix, save_matrix_csv

__all__ = [
    "FoldyLaxMatrix",
    "ResponseMatrix",
    "EffectiveSourceVector",
    "foldy_lax_matrix",
    "solve_exciting_fields",
    "response_matrix_foldy_lax",
    "response_matrix_born",
    "effective_source_vector",
    "simulate_data",
    "multiple_scattering_ratio",
    "save_response_matrix",
]

CONDITION_CAP = 1e8


@dataclass(frozen=True)
class FoldyLaxMatrix:
    """Multiple-scattering system matrix: unit diagonal, -alpha_j * G(y_i, y_j) off it."""

    matrix: np.ndarray  # (M, M) or (K, K) complex
    reflectivities: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ResponseMatrix:
    """N x N inter-element transfer matrix with a lazily cached SVD."""

    matrix: np.ndarray
    provenance: str  # "foldy-lax" | "born" | "random-medium"
    seed: int | None = None
    _svd: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def svd(self):
        """``(U, sigma, Vh)`` with descending singular values, cached."""
        if self._svd is None:
            self._svd = np.linalg.svd(self.matrix, full_matrices=False)
        return self._svd


@dataclass(frozen=True)
class EffectiveSourceVector:
    """Reflectivities times exciting fields: the linear unknown of step one."""

    values: np.ndarray  # (K,) or (M,) complex
    illumination: np.ndarray  # (N,) complex


def foldy_lax_matrix(reflectivities, greens) -> FoldyLaxMatrix:
    """Assemble the system matrix from reflectivities and pairwise Green's values.

    Works for the support-restricted M x M variant (``reflectivities`` are the
    nonzero alphas) and the full-grid K x K variant alike: entry ``(i, j)`` is
    ``1`` on the diagonal and ``-reflectivities[j] * greens[i, j]`` off it.
    """
    alphas = np.asarray(reflectivities, dtype=complex)
    g = np.asarray(greens, dtype=complex)
    m = alphas.size
    if g.shape != (m, m):
        raise ConfigurationError("pairwise Green's matrix does not match reflectivity count")
    z = -g * alphas[None, :]
    np.fill_diagonal(z, 1.0)
    return FoldyLaxMatrix(matrix=z, reflectivities=alphas)


def solve_exciting_fields(z: FoldyLaxMatrix, incident: np.ndarray,
                          condition_cap: float = CONDITION_CAP) -> np.ndarray:
    """Solve Z * Phi_e = Phi_inc for the exciting fields (dense direct solve)."""
    incident = np.asarray(incident, dtype=complex)
    if incident.shape[0] != z.size:
        raise ConfigurationError("incident field length does not match system size")
    if z.size == 0:
        return incident.copy()
    cond = np.linalg.cond(z.matrix)
    if not np.isfinite(cond) or cond > condition_cap:
        raise ResonanceError(
            f"Foldy-Lax system is near-resonant (cond ~ {cond:.3e} > {condition_cap:.1e})",
            condition_estimate=float(cond),
        )
    return np.linalg.solve(z.matrix, incident)


def _support_system(sensing: SensingMatrix, rho: ReflectivityVector):
    support = rho.support
    alphas = rho.values[support]
    points = sensing.window.points[support]
    g_sub = sensing.matrix[:, support]
    greens = pairwise_green_matrix(points, sensing.ctx) if support.size else np.zeros((0, 0))
    return support, alphas, g_sub, foldy_lax_matrix(alphas, greens)


def response_matrix_foldy_lax(sensing: SensingMatrix, rho: ReflectivityVector,
                              condition_cap: float = CONDITION_CAP) -> ResponseMatrix:
    """Full multiple-scattering response, computed on the scatterer support."""
    n = sensing.n
    support, alphas, g_sub, z = _support_system(sensing, rho)
    if support.size == 0:
        return ResponseMatrix(matrix=np.zeros((n, n), dtype=complex), provenance="foldy-lax")
    cond = np.linalg.cond(z.matrix)
    if not np.isfinite(cond) or cond > condition_cap:
        raise ResonanceError(
            f"Foldy-Lax system is near-resonant (cond ~ {cond:.3e} > {condition_cap:.1e})",
            condition_estimate=float(cond),
        )
    # P = G diag(alpha) Z^{-1} G^T restricted to the support columns
    inner = np.linalg.solve(z.matrix, g_sub.T)  # (M, N)
    mat = (g_sub * alphas[None, :]) @ inner
    return ResponseMatrix(matrix=mat, provenance="foldy-lax")


def response_matrix_born(sensing: SensingMatrix, rho: ReflectivityVector) -> ResponseMatrix:
    """Single-scattering (Born) response: G diag(rho) G^T."""
    support = rho.support
    n = sensing.n
    if support.size == 0:
        return ResponseMatrix(matrix=np.zeros((n, n), dtype=complex), provenance="born")
    g_sub = sensing.matrix[:, support]
    alphas = rho.values[support]
    mat = (g_sub * alphas[None, :]) @ g_sub.T
    return ResponseMatrix(matrix=mat, provenance="born")


def effective_source_vector(sensing: SensingMatrix, rho: ReflectivityVector,
                            illumination: np.ndarray,
                            condition_cap: float = CONDITION_CAP) -> EffectiveSourceVector:
    """Ground-truth effective sources diag(rho) Z^{-1} G^T f on the full grid."""
    f = np.asarray(illumination, dtype=complex)
    if f.shape[0] != sensing.n:
        raise ConfigurationError("illumination length does not match transducer count")
    values = np.zeros(sensing.k, dtype=complex)
    support, alphas, g_sub, z = _support_system(sensing, rho)
    if support.size:
        incident = g_sub.T @ f
        exciting = solve_exciting_fields(z, incident, condition_cap=condition_cap)
        values[support] = alphas * exciting
    return EffectiveSourceVector(values=values, illumination=f)


def simulate_data(resp: ResponseMatrix, illumination: np.ndarray) -> np.ndarray:
    """Array data for one illumination: b = P f."""
    f = np.asarray(illumination, dtype=complex)
    if f.shape[0] != resp.n:
        raise ConfigurationError("illumination length does not match response matrix size")
    return resp.matrix @ f


def multiple_scattering_ratio(rho: ReflectivityVector, illumination: np.ndarray,
                              sensing: SensingMatrix) -> float:
    """Multiple-over-single scattering data ratio ||(P - Pi) f|| / ||Pi f||."""
    full = response_matrix_foldy_lax(sensing, rho)
    born = response_matrix_born(sensing, rho)
    f = np.asarray(illumination, dtype=complex)
    single = born.matrix @ f
    denom = np.linalg.norm(single)
    if denom == 0:
        raise DomainError("single-scattering field is zero; ratio undefined")
    return float(np.linalg.norm(full.matrix @ f - single) / denom)


def save_response_matrix(path, resp: ResponseMatrix) -> None:
    """CSV export (re,im interleaved) with a JSON header line."""
    header = {"n": resp.n, "provenance": resp.provenance, "seed": resp.seed}
    save_matrix_csv(path, resp.matrix, header=header)
