"""Random phase model: field synthesis, phase line integrals, random Green's
functions, effective aperture and Monte-Carlo stability estimators."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.fft import fft2, ifft2, next_fast_len

from .errors import ConfigurationError, DomainError
from .foldy_lax import ResponseMatrix
from .geometry import ArrayGeometry, ImageWindow, ReflectivityVector, WaveContext
from .greens import green_homogeneous, green_vector

__all__ = [
    "RandomMediumSpec",
    "RandomFieldRealization",
    "EffectiveAperture",
    "Region",
    "StabilityEstimate",
    "autocorrelation_integral",
    "effective_aperture",
    "sample_field",
    "region_for",
    "phase_line_integral",
    "green_random",
    "random_green_vector",
    "response_matrix_random",
    "estimate_second_moment",
    "estimate_stability_ratio",
    "stability_bound",
    "paraxial_ratio",
    "write_stability_csv",
    "write_field_csv",
]

# normalized kernels R(t) with R(0) = 1, plus dR/dt / t in closed form and the
# lag (in correlation lengths) beyond which R is negligible for embedding
_KERNELS = {
    "gaussian": {
        "r": lambda t: np.exp(-0.5 * t * t),
        "rdot_over_t": lambda t: -np.exp(-0.5 * t * t),
        "pad": 6.0,
    },
    "power-law": {
        "r": lambda t: (1.0 + t) * np.exp(-t),
        "rdot_over_t": lambda t: -np.exp(-t),
        "pad": 18.0,
    },
}


@dataclass(frozen=True)
class RandomMediumSpec:
    """Statistics of the weakly fluctuating medium."""

    correlation_length: float
    sigma: float
    kernel: str = "gaussian"
    lattice_spacing: float | None = None  # defaults to l / 5
    master_seed: int = 0

    def __post_init__(self):
        if self.correlation_length <= 0:
            raise ConfigurationError("correlation length must be positive")
        if self.sigma < 0:
            raise ConfigurationError("fluctuation strength must be nonnegative")
        if self.kernel not in _KERNELS:
            raise ConfigurationError(
                f"unsupported kernel {self.kernel!r}; use one of {sorted(_KERNELS)}")
        if self.lattice_spacing is None:
            object.__setattr__(self, "lattice_spacing", self.correlation_length / 5.0)
        if self.lattice_spacing > self.correlation_length / 5.0 + 1e-12:
            raise ConfigurationError(
                "synthesis lattice spacing must not exceed l / 5")

    def autocorrelation(self, t):
        return _KERNELS[self.kernel]["r"](np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Region:
    """Axis-aligned bounding box in (cross_range, range) coordinates."""

    cross_min: float
    cross_max: float
    range_min: float
    range_max: float

    def contains(self, points) -> bool:
        p = np.atleast_2d(points)
        return bool(np.all((p[:, 0] >= self.cross_min) & (p[:, 0] <= self.cross_max)
                           & (p[:, 1] >= self.range_min) & (p[:, 1] <= self.range_max)))


@dataclass
class RandomFieldRealization:
    """One sampled realization of the medium fluctuation on a lattice."""

    values: np.ndarray  # (n_cross, n_range)
    origin: tuple
    spacing: float
    seed: int
    spec: RandomMediumSpec

    def interpolate(self, points) -> np.ndarray:
        """Bilinear interpolation at (cross, range) points inside the lattice."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        u = (p[:, 0] - self.origin[0]) / self.spacing
        v = (p[:, 1] - self.origin[1]) / self.spacing
        n0, n1 = self.values.shape
        if np.any(u < -1e-9) or np.any(v < -1e-9) or \
                np.any(u > n0 - 1 + 1e-9) or np.any(v > n1 - 1 + 1e-9):
            raise DomainError("interpolation point outside the sampled region")
        u = np.clip(u, 0.0, n0 - 1)
        v = np.clip(v, 0.0, n1 - 1)
        i0 = np.minimum(u.astype(int), n0 - 2) if n0 > 1 else np.zeros_like(u, dtype=int)
        j0 = np.minimum(v.astype(int), n1 - 2) if n1 > 1 else np.zeros_like(v, dtype=int)
        fu = u - i0
        fv = v - j0
        i1 = np.minimum(i0 + 1, n0 - 1)
        j1 = np.minimum(j0 + 1, n1 - 1)
        vals = (self.values[i0, j0] * (1 - fu) * (1 - fv)
                + self.values[i1, j0] * fu * (1 - fv)
                + self.values[i0, j1] * (1 - fu) * fv
                + self.values[i1, j1] * fu * fv)
        return vals


@dataclass(frozen=True)
class EffectiveAperture:
    """Medium- and range-dependent length controlling second-moment decay."""

    value: float
    autocorrelation_integral: float
    range_distance: float
    spec: RandomMediumSpec


def autocorrelation_integral(kind: str) -> float:
    """Adaptive quadrature of dR/dt / t over (0, inf); negative for valid kernels."""
    if kind not in _KERNELS:
        raise ConfigurationError(
            f"unsupported kernel {kind!r}; use one of {sorted(_KERNELS)}")
    value, _ = quad(_KERNELS[kind]["rdot_over_t"], 0.0, np.inf)
    return float(value)


def effective_aperture(spec: RandomMediumSpec, range_distance: float,
                       wavelength: float = 1.0) -> EffectiveAperture:
    """a_e = sigma L sqrt(-1 - (2L / 3l) * integral(dR/dt / t))."""
    if range_distance <= 0:
        raise DomainError("range distance must be positive")
    i_r = autocorrelation_integral(spec.kernel)
    l = spec.correlation_length
    radicand = -1.0 - (2.0 * range_distance / (3.0 * l)) * i_r
    if radicand < 0:
        raise DomainError(
            "effective-aperture radicand negative: range too small for the "
            "L >> l validity regime")
    _warn_regime(spec, range_distance, wavelength)
    return EffectiveAperture(value=spec.sigma * range_distance * float(np.sqrt(radicand)),
                             autocorrelation_integral=i_r,
                             range_distance=range_distance, spec=spec)


def _warn_regime(spec: RandomMediumSpec, range_distance: float, wavelength: float):
    l = spec.correlation_length
    s = spec.sigma
    if wavelength >= l:
        warnings.warn("random phase model assumes wavelength << correlation length",
                      stacklevel=3)
    if s > 0:
        lhs = s ** 2 * range_distance ** 3 / l ** 3
        rhs = wavelength ** 2 / (s ** 2 * l * range_distance)
        if lhs >= rhs:
            warnings.warn("random phase model validity condition "
                          "sigma^2 L^3 / l^3 << lambda^2 / (sigma^2 l L) violated",
                          stacklevel=3)


def region_for(geom: ArrayGeometry, points, margin: float = 0.0) -> Region:
    """Bounding box covering the array and the given points, plus a margin."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    allpts = np.vstack([geom.positions, p])
    return Region(cross_min=float(allpts[:, 0].min() - margin),
                  cross_max=float(allpts[:, 0].max() + margin),
                  range_min=float(allpts[:, 1].min() - margin),
                  range_max=float(allpts[:, 1].max() + margin))


def sample_field(spec: RandomMediumSpec, region: Region, seed: int) -> RandomFieldRealization:
    """Stationary Gaussian field with the requested autocorrelation.

    Spectral (circulant-embedding) synthesis on a padded periodic lattice:
    the target covariance is exact on-lattice up to the negligible wraparound
    beyond the padding distance.  Deterministic per seed.
    """
    step = spec.lattice_spacing
    l = spec.correlation_length
    n_cross = int(np.ceil((region.cross_max - region.cross_min) / step)) + 2
    n_range = int(np.ceil((region.range_max - region.range_min) / step)) + 2
    pad = int(np.ceil(_KERNELS[spec.kernel]["pad"] * l / step))
    m_cross = next_fast_len(n_cross + pad)
    m_range = next_fast_len(n_range + pad)

    ix = np.arange(m_cross)
    iz = np.arange(m_range)
    dx = np.minimum(ix, m_cross - ix) * step
    dz = np.minimum(iz, m_range - iz) * step
    r = np.sqrt(dx[:, None] ** 2 + dz[None, :] ** 2) / l
    cov = _KERNELS[spec.kernel]["r"](r)
    eig = np.maximum(fft2(cov).real, 0.0)

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((m_cross, m_range)) \
        + 1j * rng.standard_normal((m_cross, m_range))
    sample = ifft2(np.sqrt(eig) * noise).real * np.sqrt(m_cross * m_range)
    values = np.ascontiguousarray(sample[:n_cross, :n_range])
    return RandomFieldRealization(values=values,
                                  origin=(region.cross_min, region.range_min),
                                  spacing=step, seed=seed, spec=spec)


def phase_line_integral(field: RandomFieldRealization, x, y) -> float:
    """Composite-midpoint quadrature of the fluctuation along the segment x -> y.

    The spatial step never exceeds l / 10.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = float(np.linalg.norm(y - x))
    if dist == 0.0:
        return float(field.interpolate(x[None, :])[0])
    steps = max(1, int(np.ceil(dist / (field.spec.correlation_length / 10.0))))
    s = (np.arange(steps) + 0.5) / steps
    pts = x[None, :] + s[:, None] * (y - x)[None, :]
    return float(field.interpolate(pts).mean())


def green_random(field: RandomFieldRealization, x, y, ctx: WaveContext,
                 spec: RandomMediumSpec) -> complex:
    """Homogeneous kernel with a random phase from the medium line integral."""
    base = green_homogeneous(x, y, ctx)
    dist = float(np.linalg.norm(np.asarray(y, float) - np.asarray(x, float)))
    nu = phase_line_integral(field, x, y)
    return base * np.exp(1j * spec.sigma * ctx.wavenumber * dist * nu)


def random_green_vector(field: RandomFieldRealization, geom: ArrayGeometry, y,
                        ctx: WaveContext, spec: RandomMediumSpec) -> np.ndarray:
    """Random Green's vector from point ``y`` to all transducers (vectorized)."""
    y = np.asarray(y, dtype=float)
    base = green_vector(geom, y, ctx).values
    diffs = y[None, :] - geom.positions
    dists = np.linalg.norm(diffs, axis=1)
    steps = max(1, int(np.ceil(dists.max() / (spec.correlation_length / 10.0))))
    s = (np.arange(steps) + 0.5) / steps
    pts = geom.positions[:, None, :] + s[None, :, None] * diffs[:, None, :]
    nu = field.interpolate(pts.reshape(-1, 2)).reshape(len(dists), steps).mean(axis=1)
    return base * np.exp(1j * spec.sigma * ctx.wavenumber * dists * nu)


def response_matrix_random(field: RandomFieldRealization, geom: ArrayGeometry,
                           window: ImageWindow, rho: ReflectivityVector,
                           ctx: WaveContext, spec: RandomMediumSpec) -> ResponseMatrix:
    """Born response with random Green's vectors: sum_j alpha_j g_j g_j^T."""
    support = rho.support
    n = geom.n
    mat = np.zeros((n, n), dtype=complex)
    for idx in support:
        g = random_green_vector(field, geom, window.points[idx], ctx, spec)
        mat += rho.values[idx] * np.outer(g, g)
    # mirror the upper triangle so symmetry holds bit-exactly (FMA-fused
    # complex products are not perfectly commutative)
    upper = np.triu(mat)
    mat = upper + np.triu(mat, 1).T
    return ResponseMatrix(matrix=mat, provenance="random-medium", seed=field.seed)


@dataclass(frozen=True)
class StabilityEstimate:
    estimate: float
    std_error: float
    realizations: int


def _variance_with_se(w: np.ndarray):
    """Sample variance of complex data and a moment-based standard error."""
    n = w.size
    mean = w.mean()
    dev2 = np.abs(w - mean) ** 2
    var = dev2.sum() / (n - 1)
    m4 = np.mean(dev2 ** 2)
    se = float(np.sqrt(max(m4 - var ** 2, 0.0) / n))
    return float(var), se


def estimate_second_moment(x, y1, y2, ctx: WaveContext, spec: RandomMediumSpec,
                           realizations: int = 500,
                           master_seed: int | None = None):
    """Monte-Carlo ratio |E[G(x,y1) conj(G(x,y2))]| / |G0(x,y1) conj(G0(x,y2))|.

    Returns ``(ratio_estimate, standard_error)``; the normalizing homogeneous
    product has unit ratio in the absence of fluctuations.
    """
    if realizations < 1:
        raise ConfigurationError("need at least one realization")
    seed0 = spec.master_seed if master_seed is None else master_seed
    x = np.asarray(x, dtype=float)
    pts = np.vstack([np.asarray(y1, float), np.asarray(y2, float)])
    region = Region(cross_min=float(min(x[0], pts[:, 0].min()) - 2 * spec.lattice_spacing),
                    cross_max=float(max(x[0], pts[:, 0].max()) + 2 * spec.lattice_spacing),
                    range_min=float(min(x[1], pts[:, 1].min()) - 2 * spec.lattice_spacing),
                    range_max=float(max(x[1], pts[:, 1].max()) + 2 * spec.lattice_spacing))
    samples = np.empty(realizations, dtype=complex)
    for r in range(realizations):
        field = sample_field(spec, region, seed=_derived_seed(seed0, r))
        g1 = green_random(field, x, pts[0], ctx, spec)
        g2 = green_random(field, x, pts[1], ctx, spec)
        samples[r] = g1 * np.conj(g2)
    base = green_homogeneous(x, pts[0], ctx) * np.conj(green_homogeneous(x, pts[1], ctx))
    ratio = np.abs(samples.mean()) / np.abs(base)
    se = float(np.std(samples / base, ddof=1) / np.sqrt(realizations))
    return float(ratio), se


def _derived_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=master, spawn_key=(index,))
               .generate_state(1)[0])


def estimate_stability_ratio(geom: ArrayGeometry, y1, y2, ctx: WaveContext,
                             spec: RandomMediumSpec, realizations: int = 100,
                             mode: str = "self",
                             master_seed: int | None = None) -> StabilityEstimate:
    """Normalized variance of back-propagated inner products over realizations.

    ``self`` mode: Var(g*(y1) g(y2)) / (E||g(y1)||^2 E||g(y2)||^2).
    ``mixed`` mode uses the homogeneous vector on the left side.  Realization
    seeds derive from the master seed, so estimates are reproducible.
    """
    if realizations < 100:
        raise ConfigurationError("stability estimates need >= 100 realizations")
    if mode not in ("self", "mixed"):
        raise ConfigurationError("mode must be 'self' or 'mixed'")
    seed0 = spec.master_seed if master_seed is None else master_seed
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    region = region_for(geom, np.vstack([y1, y2]), margin=2 * spec.lattice_spacing)
    g0_1 = green_vector(geom, y1, ctx).values
    g0_2 = green_vector(geom, y2, ctx).values
    samples = np.empty(realizations, dtype=complex)
    for r in range(realizations):
        field = sample_field(spec, region, seed=_derived_seed(seed0, r))
        g2 = random_green_vector(field, geom, y2, ctx, spec)
        if mode == "self":
            g1 = random_green_vector(field, geom, y1, ctx, spec)
        else:
            g1 = g0_1
        samples[r] = np.vdot(g1, g2)
    # random phases preserve magnitudes, so the norms are deterministic
    denom = float(np.linalg.norm(g0_1) ** 2 * np.linalg.norm(g0_2) ** 2)
    var, se = _variance_with_se(samples)
    return StabilityEstimate(estimate=var / denom, std_error=se / denom,
                             realizations=realizations)


def stability_bound(spec: RandomMediumSpec, aperture: float, range_distance: float,
                    separation: float, ctx: WaveContext) -> float:
    """Closed-form decay bound of the self-mode stability ratio."""
    a_e = effective_aperture(spec, range_distance, wavelength=ctx.wavelength).value
    kappa = ctx.wavenumber
    l = spec.correlation_length
    gauss = 1.0 - np.exp(-kappa ** 2 * a_e ** 2 * separation ** 2 / range_distance ** 2)
    return float(gauss * l ** 2 / (range_distance ** 2
                                   * np.log1p(aperture ** 2 / (4 * range_distance ** 2))))


def paraxial_ratio(geom: ArrayGeometry, xi: float, eta: float, ctx: WaveContext,
                   spec: RandomMediumSpec, range_distance: float) -> float:
    """Closed-form paraxial prediction of the stability ratio at offsets (xi, eta)."""
    a = geom.aperture
    if a > range_distance / 5.0:
        raise DomainError("paraxial prediction requires aperture <= range / 5")
    a_e = effective_aperture(spec, range_distance, wavelength=ctx.wavelength).value
    kappa = ctx.wavenumber
    l = spec.correlation_length
    lam = ctx.wavelength
    sep2 = xi ** 2 + eta ** 2
    gauss = 1.0 - np.exp(-kappa ** 2 * a_e ** 2 * sep2 / range_distance ** 2)
    sincs = (np.sinc(xi * a / (lam * range_distance))
             * np.sinc(eta * a / (lam * range_distance))
             * np.sinc(xi * l / (lam * range_distance))
             * np.sinc(eta * l / (lam * range_distance)))
    return float(256.0 * np.pi ** 2 * gauss * (l / a) ** 2 * sincs)


def write_stability_csv(path, rows) -> None:
    """CSV of (aperture, ratio_estimate, std_error, closed_form_bound) rows."""
    with open(path, "w") as fh:
        fh.write("aperture,ratio_estimate,std_error,closed_form_bound\n")
        for aperture, est, se, bound in rows:
            fh.write(f"{aperture:.12g},{est:.12g},{se:.12g},{bound:.12g}\n")


def write_field_csv(path, field: RandomFieldRealization) -> None:
    """Lattice dump of one realization for inspection."""
    with open(path, "w") as fh:
        fh.write(f"# origin={field.origin[0]:.12g},{field.origin[1]:.12g} "
                 f"spacing={field.spacing:.12g} seed={field.seed}\n")
        for row in field.values:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
