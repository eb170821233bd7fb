"""Physics results from the correlators: central-peak integral, interference
visibility, optimal interferometer delay and parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .io import write_csv
from .model import PulsePair, SystemParams, enumerate_basis
from .propagator import StepperConfig, Trajectory, evolve, initial_state
from .regression import CorrelatorEngine, G3Request, g3, quadrature_weights

BELL_THRESHOLD = 1 / math.sqrt(2)
PLATEAU_RATE = 1e-4


def default_phi_grid(n: int = 13) -> np.ndarray:
    return np.linspace(0.0, math.pi, n)


def default_gamma_d_grid() -> np.ndarray:
    return np.round(np.arange(0, 11) * 0.005, 10)


def default_T_grid() -> np.ndarray:
    return math.pi * np.arange(12.0, 16.0 + 1e-9, 0.5)


# ---------------------------------------------------------------------------
# central peak and visibility
# ---------------------------------------------------------------------------

def integrate_central_peak(grid, T: float, T_bin: float, rule: str = "trapezoid") -> float:
    """P_c = integral of G3 over ``[T - T_bin, T + T_bin]``.

    ``grid`` is anything with ``tau`` and ``values`` arrays (normally a
    :class:`~qdtimebin.regression.CorrelationGrid`).  Window edges that fall
    between grid points are linearly interpolated.
    """
    tau = np.asarray(grid.tau, dtype=float)
    values = np.asarray(grid.values, dtype=float)
    lo, hi = T - T_bin, T + T_bin
    eps = 1e-9 * max(1.0, abs(hi))
    if len(tau) < 2 or tau[0] > lo + eps or tau[-1] < hi - eps:
        span = (tau[0], tau[-1]) if len(tau) else (None, None)
        raise ValueError(f"tau grid {span} does not cover the central window [{lo:.6g}, {hi:.6g}]")
    inside = (tau > lo + eps) & (tau < hi - eps)
    x = np.concatenate([[lo], tau[inside], [hi]])
    y = np.concatenate([[np.interp(lo, tau, values)], values[inside], [np.interp(hi, tau, values)]])
    return float(quadrature_weights(x, rule) @ y)


def peak_positions(grid) -> np.ndarray:
    """tau of every local maximum of G3 (flat tops count once)."""
    idx, _ = find_peaks(np.asarray(grid.values, dtype=float))
    return np.asarray(grid.tau, dtype=float)[idx]


@dataclass(frozen=True)
class CosineFit:
    """Least-squares fit ``P_c(phi) = A + B cos(2 phi)``."""

    A: float
    B: float
    residual: float  # rms residual

    @property
    def visibility(self) -> float:
        return abs(self.B) / self.A if self.A > 0 else float("nan")

    @property
    def relative_residual(self) -> float:
        return self.residual / abs(self.A) if self.A else float("inf")


def cosine_fit(phi_grid, p_c) -> CosineFit:
    phi = np.asarray(phi_grid, dtype=float)
    p = np.asarray(p_c, dtype=float)
    design = np.column_stack([np.ones_like(phi), np.cos(2 * phi)])
    (A, B), *_ = np.linalg.lstsq(design, p, rcond=None)
    rms = float(np.sqrt(np.mean((design @ [A, B] - p) ** 2)))
    return CosineFit(float(A), float(B), rms)


def _check_phase_grid(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1 or len(phi) < 4:
        raise ValueError(f"need at least 4 phases, got {phi.size}")
    if np.ptp(phi) < math.pi / 2 - 1e-12:
        raise ValueError("phase grid must span at least pi/2")
    return phi


def visibility(phi_grid, p_c) -> float:
    """``(max - min) / (max + min)`` of the interference pattern."""
    _check_phase_grid(phi_grid)
    p = np.asarray(p_c, dtype=float)
    if len(p) != len(phi_grid):
        raise ValueError("phi_grid and p_c differ in length")
    hi, lo = float(p.max()), float(p.min())
    if hi + lo <= 0:
        raise ValueError(f"degenerate interference pattern (max + min = {hi + lo:.3g})")
    return (hi - lo) / (hi + lo)


@dataclass(frozen=True)
class VisibilityResult:
    phi_grid: np.ndarray
    p_c: np.ndarray
    visibility: float
    gamma_d: float
    T: float
    fit: CosineFit = None

    def __post_init__(self):
        if not -1e-9 <= self.visibility <= 1 + 1e-9:
            raise ValueError(f"visibility {self.visibility} outside [0, 1]")
        if np.min(self.p_c) < -1e-9:
            raise ValueError(f"negative P_c {np.min(self.p_c)}")

    @property
    def exceeds_bell(self) -> bool:
        return self.visibility > BELL_THRESHOLD

    def to_csv(self, path, header=None) -> None:
        head = dict(header or {})
        head.update({"T": self.T, "gamma_d": self.gamma_d, "visibility": self.visibility})
        if self.fit is not None:
            head.update({"fit_A": self.fit.A, "fit_B": self.fit.B, "fit_rms": self.fit.residual})
        write_csv(path, ["phi", "P_c"], np.column_stack([self.phi_grid, self.p_c]), header=head)


def central_request(pulses: PulsePair, T: float, T_bin: float | None = None, fast: bool = False,
                    **kwargs) -> G3Request:
    """G3 request restricted to the central window."""
    T_bin = 3 * pulses.tau_p if T_bin is None else T_bin
    return G3Request.default(pulses, T=T, fast=fast, tau_range=(T - T_bin, T + T_bin),
                             T_bin=T_bin, **kwargs)


def phase_sweep(params: SystemParams, pulses: PulsePair, T: float = 14 * math.pi,
                T_bin: float | None = None, phi_grid=None, stepper: StepperConfig | None = None,
                fast: bool = False, engine: CorrelatorEngine | None = None,
                **request_kw) -> VisibilityResult:
    """P_c over a phase grid and its visibility.

    P_c depends on phi only through the cos(2 phi) weight, so the correlators
    are computed once and the pattern is re-assembled for each phase.
    """
    phi = _check_phase_grid(default_phi_grid() if phi_grid is None else phi_grid)
    req = central_request(pulses, T, T_bin, fast, **request_kw)
    grid = g3(req, params, pulses, stepper, engine=engine)
    p_c = np.array([integrate_central_peak(grid.at_phase(f), req.T, req.T_bin, req.quadrature)
                    for f in phi])
    return VisibilityResult(phi, p_c, visibility(phi, p_c), params.gamma_d, T, cosine_fit(phi, p_c))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepResult:
    parameter: str
    values: np.ndarray
    results: tuple

    def __post_init__(self):
        if len(self.values) != len(self.results):
            raise ValueError("one result per value required")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("sweep values must be ascending")

    @property
    def visibilities(self) -> np.ndarray:
        return np.array([r.visibility for r in self.results])

    def is_non_increasing(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.visibilities) <= tol))

    def to_csv(self, path, header=None) -> None:
        fits = [r.fit.visibility if r.fit else float("nan") for r in self.results]
        write_csv(path, [self.parameter, "V", "V_fit"],
                  np.column_stack([self.values, self.visibilities, fits]), header=header)


def _sweep_point(args):
    params, pulses, T, T_bin, phi, stepper, fast = args
    return phase_sweep(params, pulses, T, T_bin, phi, stepper, fast)


def _run_tasks(fn, tasks, workers: int):
    # executor.map keeps submission order, so output order never depends on timing
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def sweep_dephasing(gamma_d_values=None, params: SystemParams | None = None,
                    pulses: PulsePair | None = None, T: float = 14 * math.pi,
                    T_bin: float | None = None, phi_grid=None, stepper: StepperConfig | None = None,
                    fast: bool = False, workers: int = 1) -> SweepResult:
    """One phase sweep per dephasing rate; everything else held fixed."""
    values = np.asarray(default_gamma_d_grid() if gamma_d_values is None else gamma_d_values, float)
    if np.any(values < 0) or np.any(np.diff(values) <= 0):
        raise ValueError("gamma_d values must be >= 0 and strictly ascending")
    params = params or SystemParams()
    pulses = pulses or PulsePair()
    phi = default_phi_grid() if phi_grid is None else phi_grid
    tasks = [(params.replace(gamma_d=float(v)), pulses, T, T_bin, phi, stepper, fast) for v in values]
    return SweepResult("gamma_d", values, tuple(_run_tasks(_sweep_point, tasks, workers)))


@dataclass(frozen=True)
class OptimalT:
    T_star: float
    T_values: np.ndarray
    p_c: np.ndarray

    def to_csv(self, path, header=None) -> None:
        head = dict(header or {})
        head["T_star"] = self.T_star
        write_csv(path, ["T", "P_c"], np.column_stack([self.T_values, self.p_c]), header=head)


def _central_pc(args):
    params, pulses, T, T_bin, stepper, fast, engine = args
    req = central_request(pulses, T, T_bin, fast)
    grid = g3(req, params, pulses, stepper, engine=engine)
    return integrate_central_peak(grid, req.T, req.T_bin, req.quadrature)


def find_optimal_T(T_values=None, params: SystemParams | None = None,
                   pulses: PulsePair | None = None, T_bin: float | None = None,
                   stepper: StepperConfig | None = None, fast: bool = False,
                   workers: int = 1) -> OptimalT:
    """Delay maximising the central-peak P_c at phi = 0."""
    T_values = np.asarray(default_T_grid() if T_values is None else T_values, dtype=float)
    if len(T_values) == 0:
        raise ValueError("no candidate delays")
    params = params or SystemParams()
    pulses = pulses or PulsePair()
    if workers <= 1:
        # serial runs share one engine, so propagators are computed once
        h = central_request(pulses, T_values[0], T_bin, fast).lattice_step
        engine = CorrelatorEngine(params, pulses, stepper, h)
        p_c = [_central_pc((params, pulses, T, T_bin, stepper, fast, engine)) for T in T_values]
    else:
        p_c = _run_tasks(_central_pc, [(params, pulses, T, T_bin, stepper, fast, None) for T in T_values],
                         workers)
    p_c = np.asarray(p_c)
    return OptimalT(float(T_values[int(np.argmax(p_c))]), T_values, p_c)


# ---------------------------------------------------------------------------
# populations
# ---------------------------------------------------------------------------

def run_end(pulses: PulsePair) -> float:
    """End of a two-pulse run: three pulse widths past the second pulse."""
    return pulses.center2 + 3 * pulses.tau_p


def two_pulse_run(params: SystemParams, pulses: PulsePair, stepper: StepperConfig | None = None,
                  max_photons: int = 2, t_end: float | None = None) -> Trajectory:
    """Evolution from |m,0> at t = 0 through both pulses."""
    space = enumerate_basis(max_photons)
    return evolve(initial_state(space), 0.0, run_end(pulses) if t_end is None else t_end,
                  params, pulses, stepper, space)


def pulse_probabilities(traj: Trajectory, pulses: PulsePair, rate: float = PLATEAU_RATE) -> tuple:
    """``(p1, p2)`` from the inter-pulse plateau of rho_mm.

    The plateau is the longest stretch between the pulse centres where
    ``|d rho_mm / dt| < rate`` for at least ``tau_p``; rho_mm is read at its
    midpoint.
    """
    t = traj.times
    rho = np.real(traj.element("m", "m"))
    between = (t >= pulses.center1) & (t <= pulses.center2)
    if between.sum() < 3:
        raise ValueError("trajectory does not resolve the interval between the pulses")
    idx = np.nonzero(between)[0]
    flat = np.abs(np.gradient(rho, t))[idx] < rate
    best, start = None, None
    for k, ok in enumerate(np.append(flat, False)):
        if ok and start is None:
            start = k
        elif not ok and start is not None:
            if best is None or k - start > best[1] - best[0]:
                best = (start, k)
            start = None
    if best is None or t[idx[best[1] - 1]] - t[idx[best[0]]] < pulses.tau_p:
        worst = float(np.min(np.abs(np.gradient(rho, t))[idx]))
        raise ValueError(f"no rho_mm plateau of length tau_p between the pulses "
                         f"(smallest |d rho_mm/dt| = {worst:.3g}, threshold {rate:.3g})")
    mid = idx[(best[0] + best[1] - 1) // 2]
    plateau, final = rho[mid], rho[-1]
    return float(1 - plateau), float(plateau - final)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoherenceProfile:
    """Early/late cross correlator resolved in the detection time ``s``.

    ``coherence`` is ``|C| / sqrt(D_late D_early)``, the overlap of the two
    pair amplitudes before any time integration; ``phase`` is ``arg C``.
    """

    s: np.ndarray
    coherence: np.ndarray
    phase: np.ndarray
    weight: np.ndarray = field(repr=False)


def coherence_profile(params: SystemParams, pulses: PulsePair, T: float = 14 * math.pi,
                      tau_prime: float | None = None, s_range: tuple | None = None,
                      stepper: StepperConfig | None = None) -> CoherenceProfile:
    engine = CorrelatorEngine(params, pulses, stepper)
    h = engine.h
    Ti = engine.index(T)
    d = engine.index(pulses.tau_p / 2 if tau_prime is None else tau_prime)
    lo, hi = s_range or (pulses.center2 - 3 * pulses.tau_p, pulses.center2 + 3 * pulses.tau_p)
    s = np.arange(math.ceil(lo / h), math.floor(hi / h) + 1)
    s = s[s - Ti >= 0]
    c = engine.cross(s, d, Ti)
    weight = np.sqrt(np.clip(engine.g2(s, d).real, 0, None) * np.clip(engine.g2(s - Ti, d).real, 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        coh = np.where(weight > 0, np.abs(c) / weight, 0.0)
    return CoherenceProfile(s * h, coh, np.angle(c), weight)
