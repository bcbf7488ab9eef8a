"""Scenario orchestration: noise injection, trial runs, Monte-Carlo loops
over noise and medium realizations, success metrics and report files."""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .errors import ConfigurationError
from .geometry import (WaveContext, build_image_window, build_linear_array,
                       place_scatterers)
from .greens import (mutual_coherence, sensing_matrix, theorem1_margin,
                     write_coherence_report)
from .foldy_lax import (response_matrix_born, response_matrix_foldy_lax,
                        save_response_matrix)
from .random_medium import (RandomMediumSpec, region_for, response_matrix_random,
                            sample_field)
from .sparse_solvers import SolverParams, theorem2_error_bound
from .imaging import (image_hybrid_l1, image_km, image_mmv, image_music,
                      image_smv, optimal_illuminations, select_rank,
                      write_image_csv, write_pgm, write_support_csv)

__all__ = [
    "NoiseSpec",
    "TrialReport",
    "add_noise",
    "build_scene",
    "run_trial",
    "run_scenario",
    "monte_carlo_stability",
    "coherence_report",
    "write_report_csv",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive complex circular Gaussian noise at a fraction of signal norm."""

    percent: float  # fraction of the signal Frobenius norm
    seed: int = 0

    def __post_init__(self):
        if self.percent < 0:
            raise ConfigurationError("noise percent must be nonnegative")


@dataclass
class TrialReport:
    method: str
    scenario_id: str
    seed: int
    support_exact: bool
    precision: float
    recall: float
    reflectivity_error: float  # relative l2 on the true support; NaN if n/a
    wall_time: float
    error: str = ""


def add_noise(data: np.ndarray, spec: NoiseSpec):
    """Return ``(data + E, ||E||_F)`` with ``||E||_F`` exactly percent * ||data||_F."""
    data = np.asarray(data, dtype=complex)
    target = spec.percent * np.linalg.norm(data)
    if target == 0.0:
        return data.copy(), 0.0
    rng = np.random.default_rng(spec.seed)
    e = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
    e *= target / np.linalg.norm(e)
    return data + e, float(target)


@dataclass
class Scene:
    """Everything a trial needs: geometry, truth, and the noisy response."""

    cfg: ScenarioConfig
    ctx: WaveContext
    sensing: object
    rho: object
    response: object          # noise-free response matrix
    noisy: object             # response matrix with injected noise
    noise_matrix: np.ndarray  # the injected E (zeros if noiseless)


def _scatterer_values(cfg: ScenarioConfig, rng: np.random.Generator):
    if cfg.phases == "random":
        phases = rng.uniform(0.0, 2.0 * np.pi, size=len(cfg.magnitudes))
    else:
        phases = np.asarray(cfg.phases, dtype=float)
    return np.asarray(cfg.magnitudes) * np.exp(1j * phases)


def _medium_spec(cfg: ScenarioConfig, seed: int) -> RandomMediumSpec:
    return RandomMediumSpec(correlation_length=cfg.correlation_length,
                            sigma=cfg.sigma, kernel=cfg.kernel,
                            lattice_spacing=cfg.lattice_spacing,
                            master_seed=seed)


def build_scene(cfg: ScenarioConfig, seed: int, aperture: float | None = None) -> Scene:
    """Construct geometry, draw scatterer phases, run the forward model and
    inject noise.  Sub-seeds are derived deterministically from ``seed``."""
    ctx = WaveContext(wavelength=cfg.wavelength)
    pitch = cfg.pitch if aperture is None else aperture / (cfg.n - 1)
    geom = build_linear_array(cfg.n, pitch)
    window = build_image_window(cfg.center_range, cfg.rows, cfg.cols, cfg.spacing)
    sensing = sensing_matrix(geom, window, ctx)

    phase_rng = np.random.default_rng([seed, 1])
    values = _scatterer_values(cfg, phase_rng)
    entries = [(window.rowcol_to_index(r, c), v)
               for (r, c), v in zip(cfg.cells, values)]
    rho = place_scatterers(window, entries)

    forward = cfg.forward
    if forward == "auto":
        forward = "random-phase" if cfg.medium_kind == "random-phase" else "foldy-lax"
    if cfg.medium_kind == "random-phase":
        spec = _medium_spec(cfg, seed)
        region = region_for(geom, window.points, margin=2 * spec.lattice_spacing)
        field = sample_field(spec, region, seed=seed)
        response = response_matrix_random(field, geom, window, rho, ctx, spec)
    elif forward == "born":
        response = response_matrix_born(sensing, rho)
    else:
        response = response_matrix_foldy_lax(sensing, rho)

    noise_seed = int(np.random.SeedSequence([seed, 2]).generate_state(1)[0])
    noisy_mat, _ = add_noise(response.matrix, NoiseSpec(cfg.noise_percent, seed=noise_seed))
    noise_matrix = noisy_mat - response.matrix
    noisy = type(response)(matrix=noisy_mat, provenance=response.provenance, seed=seed)
    return Scene(cfg=cfg, ctx=ctx, sensing=sensing, rho=rho,
                 response=response, noisy=noisy, noise_matrix=noise_matrix)


def _illuminations(kind: str, scene: Scene, rng: np.random.Generator) -> np.ndarray:
    n = scene.sensing.n
    if kind == "central":
        f = np.zeros((n, 1), dtype=complex)
        f[n // 2, 0] = 1.0
        return f
    if kind.startswith("element:"):
        idx = int(kind.split(":", 1)[1])
        f = np.zeros((n, 1), dtype=complex)
        f[idx, 0] = 1.0
        return f
    if kind.startswith("random:"):
        count = int(kind.split(":", 1)[1])
        picks = rng.choice(n, size=count, replace=False)
        f = np.zeros((n, count), dtype=complex)
        for j, p in enumerate(picks):
            f[p, j] = 1.0
        return f
    if kind.startswith("optimal:"):
        count = int(kind.split(":", 1)[1])
        return optimal_illuminations(scene.noisy, count)
    raise ConfigurationError(f"unknown illumination spec {kind!r}")


def _solver_params(cfg: ScenarioConfig, delta: float) -> SolverParams:
    return SolverParams(delta=delta, max_iterations=cfg.max_iterations,
                        tolerance=cfg.tolerance,
                        support_threshold=cfg.support_threshold)


def _rank(scene: Scene) -> int:
    _, s, _ = scene.noisy.svd()
    return select_rank(s, relative_threshold=scene.cfg.rank_threshold,
                       known_m=scene.cfg.known_rank)


def run_trial(scene: Scene, method: str, seed: int):
    """Run one imaging method against the scene; returns ``(report, result)``."""
    cfg = scene.cfg
    truth = scene.rho
    rng = np.random.default_rng([seed, 3])
    start = time.perf_counter()
    result = None
    error = ""
    try:
        if method in ("smv", "mmv"):
            f = _illuminations(cfg.illuminations, scene, rng)
            if method == "smv":
                f = f[:, :1]
            data = scene.noisy.matrix @ f
            # delta from the exact noise component of the consumed data
            noise_in_data = float(np.linalg.norm(scene.noise_matrix @ f))
            delta = cfg.delta_factor * noise_in_data if noise_in_data > 0 else 0.0
            params = _solver_params(cfg, delta)
            if method == "smv":
                result = image_smv(data[:, 0], f[:, 0], scene.sensing, params)
            else:
                result = image_mmv(data, f, scene.sensing, params)
        elif method == "hybrid":
            result = image_hybrid_l1(scene.noisy, scene.sensing,
                                     _solver_params(cfg, 0.0), m_tilde=_rank(scene),
                                     delta_fraction=cfg.resolved_hybrid_delta_fraction())
        elif method == "music":
            result = image_music(scene.noisy, scene.sensing, m_tilde=_rank(scene))
        elif method == "km":
            kind = cfg.km_illuminations or cfg.illuminations
            f = _illuminations(kind, scene, rng)
            data = scene.noisy.matrix @ f
            result = image_km(data, f, scene.sensing, peak_count=max(truth.m, 1))
        else:
            raise ConfigurationError(f"unknown method {method!r}")
    except Exception as exc:  # abort the trial, record the failure
        error = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - start

    true_support = set(int(i) for i in truth.support)
    if result is None or error:
        report = TrialReport(method=method, scenario_id=cfg.scenario_id, seed=seed,
                             support_exact=False, precision=0.0, recall=0.0,
                             reflectivity_error=float("nan"), wall_time=wall,
                             error=error)
        return report, result
    recovered = set(int(i) for i in result.support)
    tp = len(true_support & recovered)
    precision = tp / len(recovered) if recovered else (1.0 if not true_support else 0.0)
    recall = tp / len(true_support) if true_support else 1.0
    exact = recovered == true_support
    if method in ("smv", "mmv", "hybrid") and truth.m:
        idx = truth.support
        est = np.nan_to_num(result.reflectivity[idx])
        rel = float(np.linalg.norm(est - truth.values[idx])
                    / np.linalg.norm(truth.values[idx]))
    else:
        rel = float("nan")
    report = TrialReport(method=method, scenario_id=cfg.scenario_id, seed=seed,
                         support_exact=exact, precision=precision, recall=recall,
                         reflectivity_error=rel, wall_time=wall)
    return report, result


def write_report_csv(path, reports) -> None:
    """Deterministic trial table (wall times live in a separate file)."""
    with open(path, "w") as fh:
        fh.write("method,scenario,seed,support_exact,precision,recall,"
                 "reflectivity_error,error\n")
        for r in reports:
            err = "" if np.isnan(r.reflectivity_error) else f"{r.reflectivity_error:.12g}"
            fh.write(f"{r.method},{r.scenario_id},{r.seed},{int(r.support_exact)},"
                     f"{r.precision:.12g},{r.recall:.12g},{err},{r.error}\n")


def _write_timings_csv(path, reports) -> None:
    with open(path, "w") as fh:
        fh.write("method,seed,wall_time_s\n")
        for r in reports:
            fh.write(f"{r.method},{r.seed},{r.wall_time:.6f}\n")


def run_scenario(cfg: ScenarioConfig, seed: int | None = None,
                 out_dir=None) -> list:
    """Full pipeline for one seed: forward model, noise, every configured
    method, metrics and artifact files under ``out_dir/<scenario>/<seed>/``."""
    seed = cfg.seed if seed is None else seed
    scene = build_scene(cfg, seed)
    reports = []
    results = {}
    for method in cfg.methods:
        report, result = run_trial(scene, method, seed)
        reports.append(report)
        if result is not None:
            results[method] = result

    if out_dir is not None:
        run_dir = Path(out_dir) / cfg.scenario_id / str(seed)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.ini").write_text(cfg.raw_text or "# built in memory\n")
        write_report_csv(run_dir / "report.csv", reports)
        _write_timings_csv(run_dir / "timings.csv", reports)
        save_response_matrix(run_dir / "response.csv", scene.noisy)
        for method, result in results.items():
            write_support_csv(run_dir / f"{method}_support.csv", result,
                              scene.sensing.window)
            if result.image is not None:
                write_image_csv(run_dir / f"{method}_image.csv", result,
                                scene.sensing.window)
                if cfg.write_pgm:
                    write_pgm(run_dir / f"{method}_image.pgm", result,
                              scene.sensing.window)
    return reports


def monte_carlo_stability(cfg: ScenarioConfig, realizations: int | None = None,
                          out_dir=None):
    """Success-rate table across apertures over seeded realizations.

    Seeds run 1..R so tables are reproducible and comparable across methods;
    failed trials count as non-successes.
    """
    realizations = cfg.realizations if realizations is None else realizations
    if realizations < 10:
        raise ConfigurationError("Monte-Carlo batches need >= 10 realizations")
    apertures = cfg.apertures or [(cfg.n - 1) * cfg.pitch]
    rows = []
    for aperture in apertures:
        per_method = {m: [] for m in cfg.methods}
        for seed in range(1, realizations + 1):
            scene = build_scene(cfg, seed, aperture=aperture)
            for method in cfg.methods:
                report, _ = run_trial(scene, method, seed)
                per_method[method].append(report)
        for method in cfg.methods:
            batch = per_method[method]
            rows.append({
                "aperture": aperture,
                "method": method,
                "success_rate": float(np.mean([r.support_exact for r in batch])),
                "mean_precision": float(np.mean([r.precision for r in batch])),
                "mean_recall": float(np.mean([r.recall for r in batch])),
                "realizations": realizations,
            })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{cfg.scenario_id}_stability.csv", "w") as fh:
            fh.write("aperture,method,success_rate,mean_precision,mean_recall,"
                     "realizations\n")
            for row in rows:
                fh.write(f"{row['aperture']:.12g},{row['method']},"
                         f"{row['success_rate']:.12g},{row['mean_precision']:.12g},"
                         f"{row['mean_recall']:.12g},{row['realizations']}\n")
    return rows


def coherence_report(cfg: ScenarioConfig, out_dir=None) -> dict:
    """Coherence, Theorem-1 margins and Theorem-2 bounds for the scenario.

    The grid-wide coherence is reported alongside the support-restricted one
    (the recovery condition only needs to hold on the scatterer support).
    """
    scene = build_scene(cfg, cfg.seed)
    eps, pair = mutual_coherence(scene.sensing)
    m = scene.rho.m
    report = {"grid_coherence": eps, "grid_pair": pair, "m": m}
    eps_for_margin = eps
    if m >= 2:
        sub = scene.sensing.matrix[:, scene.rho.support]
        eps_supp, pair_supp = mutual_coherence(sub)
        report["support_coherence"] = eps_supp
        supp = scene.rho.support
        report["support_pair"] = (int(supp[pair_supp[0]]), int(supp[pair_supp[1]]))
        eps_for_margin = eps_supp
    margin = theorem1_margin(eps_for_margin, m)
    report["margin"] = margin
    report["certified"] = margin > 0
    bounds = []
    for delta in cfg.delta_grid:
        if m >= 1 and (m - 1) * eps_for_margin < 1:
            b = theorem2_error_bound(delta, m, eps_for_margin)
            bounds.append((delta, b.error_bound, "certified" if margin > 0
                           else "not-certified"))
        else:
            bounds.append((delta, float("nan"), "not-certified"))
    report["bounds"] = bounds

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        margins = {m: margin} if m else {}
        write_coherence_report(out / f"{cfg.scenario_id}_coherence.csv",
                               eps, pair, margins)
        with open(out / f"{cfg.scenario_id}_certificates.csv", "w") as fh:
            fh.write("delta,m,epsilon,theorem2_bound,verdict\n")
            for delta, bound, verdict in bounds:
                b = "" if np.isnan(bound) else f"{bound:.12g}"
                fh.write(f"{delta:.12g},{m},{eps_for_margin:.12g},{b},{verdict}\n")
    return report
