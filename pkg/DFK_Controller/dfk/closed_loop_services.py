"""
Closed-loop evaluation of DFK controllers.

Covers reference generation, simulation of the feedback loop on continuous
plants (zero-order hold) or on known discrete LPV systems, tracking metrics,
and the analysis quantities used to check stability and tracking bounds on
synthetic fixtures: inversion error, its grid maximum, the residue gap
lambda_2 and the per-step tracking bound.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal

from .design_services import ControllerBank, as_bank
from .exceptions import DivergenceError
from .plant_services import (
    KnownLpvSystem, NoiseSpec, PlantModel, SchedulingMap, draw_noise, hold_interval,
)

logger = logging.getLogger(__name__)

# Published results, kept for reports only.
REFERENCE_RESULTS = {
    'duffing': {
        'k1': {'n_selected': 27, 'rms': (0.0562, 0.0859)},
        'k2': {'n_selected': 26, 'rms': (0.0723, 0.1792)},
        'k3': {'n_selected': 27, 'rms': (0.0534, None)},
        'open_loop_fit': {'design': 0.0903, 'validation': 0.1094},
    },
    'manipulator': {
        'dfk': {'rms': (0.172, 0.148)},
        'gain_scheduling': {'rms': (0.167, 0.152)},
    },
}

REFERENCE_KINDS = ('filtered-uniform', 'filtered-steps')
COMPANIONS = ('none', 'derivative', 'delayed')


# ---------------------------------------------------------------------------
# References
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSpec:
    """
    Filtered random reference.

    `channel_gains` gives one primary channel per entry (scaled copies of
    independent draws); `companion` appends, per primary channel, its
    derivative or its one-sample delay.
    """

    kind: str = 'filtered-uniform'
    amplitude: float = 5.0
    cutoff: float = 1.0
    Ts: float = 0.1
    seed: int = 0
    companion: str = 'derivative'
    dwell: float = 10.0
    channel_gains: tuple = (1.0,)
    order: int = 2

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise ValueError(f"Unknown reference kind: {self.kind}")
        if self.companion not in COMPANIONS:
            raise ValueError(f"Unknown companion channel: {self.companion}")
        if self.amplitude < 0 or self.cutoff <= 0 or self.Ts <= 0:
            raise ValueError("Reference needs amplitude >= 0, cutoff > 0 and Ts > 0")
        if self.order != 2:
            raise ValueError("Only second-order reference filters are supported")

    @property
    def n_channels(self) -> int:
        primaries = len(self.channel_gains)
        return primaries if self.companion == 'none' else 2 * primaries


def reference_filter(cutoff: float, Ts: float):
    """Critically damped unity-gain low-pass w^2 / (s + w)^2, bilinear at Ts."""
    return signal.bilinear([cutoff ** 2], [1.0, 2.0 * cutoff, cutoff ** 2], fs=1.0 / Ts)


def _raw_sequence(spec: ReferenceSpec, rng: np.random.Generator, T: int) -> np.ndarray:
    if spec.kind == 'filtered-uniform':
        return rng.uniform(-spec.amplitude, spec.amplitude, size=T)
    hold = max(1, int(round(spec.dwell / spec.Ts)))
    levels = rng.uniform(-spec.amplitude, spec.amplitude, size=T // hold + 1)
    return np.repeat(levels, hold)[:T]


def generate_reference(spec: ReferenceSpec, T: int) -> np.ndarray:
    """T x n_channels reference; the filter starts at rest."""
    if T < 1:
        raise ValueError("Reference length must be at least 1")
    rng = np.random.default_rng(spec.seed)
    num, den = reference_filter(spec.cutoff, spec.Ts)
    primaries = []
    for gain in spec.channel_gains:
        raw = _raw_sequence(spec, rng, T)
        primaries.append(gain * signal.lfilter(num, den, raw))
    primaries = np.column_stack(primaries)

    previous = np.vstack([np.zeros((1, primaries.shape[1])), primaries[:-1]])
    if spec.companion == 'derivative':
        return np.hstack([primaries, (primaries - previous) / spec.Ts])
    if spec.companion == 'delayed':
        return np.hstack([primaries, previous])
    return primaries


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def rms(z) -> float:
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        raise ValueError("RMS of an empty sequence")
    return float(np.sqrt(np.mean(z ** 2)))


@dataclass
class ClosedLoopRun:
    t: np.ndarray
    r: np.ndarray
    x: np.ndarray
    x_measured: np.ndarray
    p: np.ndarray
    u: np.ndarray
    e: np.ndarray
    te: np.ndarray
    metadata: Dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.t.size

    @property
    def rms_per_channel(self) -> List[float]:
        return [rms(self.r[:, i] - self.x[:, i]) for i in range(self.r.shape[1])]


def tracking_errors(r: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.max(np.abs(r - x), axis=1)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _check_finite(x: np.ndarray, step: int, Ts: float, limit: float):
    size = float(np.max(np.abs(x))) if np.all(np.isfinite(x)) else float('inf')
    if size > limit:
        logger.error(f"Closed loop diverged at step {step}")
        raise DivergenceError(step, time=step * Ts, value=size,
                              message=f"Closed loop unstable: state blew up at step {step}")


def simulate_closed_loop(plant: Union[PlantModel, KnownLpvSystem], controller, reference: np.ndarray,
                         noise: NoiseSpec = NoiseSpec(), T: Optional[int] = None, Ts: float = 0.1,
                         scheduling: SchedulingMap = SchedulingMap(), substeps: int = 10,
                         divergence_limit: float = 1e6) -> ClosedLoopRun:
    """
    Run the DFK loop from zero initial conditions.

    `reference` needs T + 1 rows so that r_{t+1} exists at the last step.
    Continuous plants: x_meas = x + noise, p and the regressor come from the
    measured state, u is held over Ts. Known LPV systems: noise enters as e_t
    through H, the controller sees the state.
    """
    bank: ControllerBank = as_bank(controller)
    reference = np.asarray(reference, dtype=float)
    if reference.ndim == 1:
        reference = reference[:, None]
    T = reference.shape[0] - 1 if T is None else T
    if T < 1:
        raise ValueError("Simulation length T must be at least 1")
    if reference.shape[0] < T + 1:
        raise ValueError(f"Reference has {reference.shape[0]} rows, need T + 1 = {T + 1}")
    if reference.shape[1] != bank.n_x:
        raise ValueError(f"Reference has {reference.shape[1]} channels, controller expects {bank.n_x}")

    if isinstance(plant, KnownLpvSystem):
        return _simulate_known(plant, bank, reference, noise, T, Ts, divergence_limit)
    return _simulate_continuous(plant, bank, reference, noise, T, Ts, scheduling, substeps, divergence_limit)


def _simulate_known(system, bank, reference, noise, T, Ts, limit) -> ClosedLoopRun:
    rng = np.random.default_rng(noise.seed)
    e_seq = draw_noise(noise, (T, system.n_e), scale=np.ones(system.n_e), rng=rng)
    x = np.zeros(system.n_x)
    xs, ps, us = np.empty((T, system.n_x)), np.empty((T, system.n_p)), np.empty((T, bank.n_u))
    for t in range(T):
        p = system.schedule(x)
        u = bank(p, reference[t + 1], x)
        xs[t], ps[t], us[t] = x, p, u
        x = system.step(x, u, e_seq[t])
        _check_finite(x, t + 1, Ts, limit)
    r = reference[:T]
    return ClosedLoopRun(
        t=Ts * np.arange(T), r=r, x=xs, x_measured=xs.copy(), p=ps, u=us, e=e_seq,
        te=tracking_errors(r, xs), metadata={'plant': system.name, 'noise': noise.as_dict()},
    )


def ratio_noise_scale(reference: np.ndarray, scheduling: SchedulingMap, state_dim: int, Ts: float) -> np.ndarray:
    """
    Per measured state channel, the std of the trajectory that channel is
    driven towards. Gaussian-ratio measurement noise on channel i has std
    level * scale[i]; channels the reference does not reach get no noise.
    """
    targets = scheduling.state_targets(reference, Ts)
    scale = np.zeros(state_dim)
    n = min(state_dim, targets.shape[1])
    scale[:n] = np.std(targets[:, :n], axis=0)
    return scale


def _simulate_continuous(model, bank, reference, noise, T, Ts, scheduling, substeps, limit) -> ClosedLoopRun:
    rng = np.random.default_rng(noise.seed)
    scale = None
    if noise.kind == 'gaussian-ratio':
        scale = ratio_noise_scale(reference[:T], scheduling, model.state_dim, Ts)
    e_seq = draw_noise(noise, (T, model.state_dim), scale=scale, rng=rng)

    n_x = bank.n_x
    x = np.zeros(model.state_dim)
    true_states = np.empty((T, model.state_dim))
    measured = np.empty((T, model.state_dim))
    regressors = np.empty((T, n_x))
    features = []
    inputs = np.empty((T, bank.n_u))
    for t in range(T):
        true_states[t] = x
        measured[t] = x + e_seq[t]
        window = measured[max(0, t - 1): t + 1]
        regressor = scheduling.regressor(window)[-1]
        p = scheduling.features(window)[-1]
        u = bank(p, reference[t + 1], regressor)
        regressors[t], inputs[t] = regressor, u
        features.append(p)
        x = hold_interval(model, x, u, t * Ts, Ts, substeps)
        _check_finite(x, t + 1, Ts, limit)

    true_regressors = scheduling.regressor(true_states)
    r = reference[:T]
    return ClosedLoopRun(
        t=Ts * np.arange(T), r=r, x=true_regressors, x_measured=regressors,
        p=np.array(features), u=inputs, e=e_seq, te=tracking_errors(r, true_regressors),
        metadata={'plant': model.name, 'scheduling': scheduling.name, 'noise': noise.as_dict()},
    )


# ---------------------------------------------------------------------------
# Analysis on known systems
# ---------------------------------------------------------------------------

def inversion_error(system: KnownLpvSystem, controller, p, r, x, e) -> float:
    """||r - (A - B K2) x - B K1 r - H e||_inf at one point."""
    bank = as_bank(controller)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    k1, k2 = bank.gain_matrices(p)
    A, B, H = system.A(p), system.B(p), system.H(p)
    residual = r - (A - B @ k2) @ x - B @ k1 @ r - H @ e
    return float(np.max(np.abs(residual)))


def _grid(box, density: int) -> List[np.ndarray]:
    return [np.linspace(lo, hi, density) if hi > lo else np.array([lo]) for lo, hi in np.asarray(box, dtype=float)]


def _mesh(box, density: int) -> np.ndarray:
    """Every grid point of a box, one per row."""
    axes = _grid(box, density)
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))


def _extreme_sums(coefficients: np.ndarray, axes: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Per row i, max and min of sum_j c_ij z_j with each z_j ranging over its axis."""
    high = np.zeros(coefficients.shape[0])
    low = np.zeros(coefficients.shape[0])
    for j, axis in enumerate(axes):
        terms = np.outer(coefficients[:, j], axis)
        high += terms.max(axis=1)
        low += terms.min(axis=1)
    return high, low


def global_inversion_error(system: KnownLpvSystem, controller, density: int = 21) -> float:
    """
    Max inversion error over a uniform grid of P x X (state) x X (reference) x E.

    For fixed p the residual is affine and separable in (x, r, e), so each
    component reaches its grid extremes coordinate by coordinate; only the
    P grid is walked point by point.
    """
    if density < 1:
        raise ValueError("Grid density must be positive")
    for box in (system.p_box, system.x_box, system.e_box):
        if not np.all(np.isfinite(np.asarray(box, dtype=float))):
            raise ValueError("Global inversion error needs bounded boxes")
    bank = as_bank(controller)
    x_axes, e_axes = _grid(system.x_box, density), _grid(system.e_box, density)
    identity = np.eye(system.n_x)
    worst = 0.0
    for p in _mesh(system.p_box, density):
        k1, k2 = bank.gain_matrices(p)
        A, B, H = system.A(p), system.B(p), system.H(p)
        high, low = np.zeros(system.n_x), np.zeros(system.n_x)
        for coefficients, axes in ((-(A - B @ k2), x_axes), (identity - B @ k1, x_axes), (-H, e_axes)):
            part_high, part_low = _extreme_sums(coefficients, axes)
            high, low = high + part_high, low + part_low
        worst = max(worst, float(np.max(np.maximum(high, -low))))
    logger.debug(f"Global inversion error {worst:.4g} on a {density}-point grid")
    return worst


def lambda2_grid(controller_a, controller_b, p_box, density: int = 21) -> float:
    """max over the grid of ||K2_a(p) - K2_b(p)||_1 (summed over channels)."""
    bank_a, bank_b = as_bank(controller_a), as_bank(controller_b)
    points = _mesh(p_box, density)
    gap = np.zeros(len(points))
    for ca, cb in zip(bank_a.channels, bank_b.channels):
        _, k2_a = ca.gains_many(points)
        _, k2_b = cb.gains_many(points)
        gap += np.sum(np.abs(k2_a - k2_b), axis=1)
    return float(np.max(gap))


@dataclass
class TrackingBoundReport:
    margins: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins.size else 0.0

    @property
    def holds(self) -> bool:
        return self.min_margin >= -1e-9


def verify_tracking_bound(system: KnownLpvSystem, oracle, designed, run: ClosedLoopRun,
                          lambda_B: float) -> TrackingBoundReport:
    """
    Check TE_t <= IE(oracle, p_{t-1}, r_t, x_{t-1}, e_{t-1}) + lambda_B |Delta(w_{t-1})|
    for t >= 1, with Delta(w) = (K1_o - K1_h) r - (K2_o - K2_h) x.
    """
    oracle, designed = as_bank(oracle), as_bank(designed)
    lhs, rhs = [], []
    for t in range(1, run.T):
        p, x, r, e = run.p[t - 1], run.x[t - 1], run.r[t], run.e[t - 1]
        ie = inversion_error(system, oracle, p, r, x, e)
        delta = oracle(p, r, x) - designed(p, r, x)
        lhs.append(run.te[t])
        rhs.append(ie + lambda_B * float(np.max(np.abs(delta))))
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    report = TrackingBoundReport(margins=rhs - lhs, lhs=lhs, rhs=rhs)
    logger.info(f"Tracking bound checked over {lhs.size} steps, min margin {report.min_margin:.3g}")
    return report


def matrix_inf_norm_bound(system: KnownLpvSystem, density: int = 21) -> float:
    """max over the P grid of ||B(p)||_inf, the exact lambda_B of a known system."""
    return max(float(np.max(np.sum(np.abs(system.B(p)), axis=1))) for p in _mesh(system.p_box, density))
