"""
Set-membership estimation of the priors consumed by the design program.

  delta     bound on the input noise
  gamma     Lipschitz constant of the inverse map
  lambda_S  reference-to-state gain (windowed heuristic)
  lambda_B  bound on the input matrix (difference quotient)

All scans are pairwise over the data; they are evaluated in row chunks and
reduced with max, so the result does not depend on the chunking.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import EstimationError
from .plant_services import LpvDataset

logger = logging.getLogger(__name__)

CHUNK_ROWS = 128


@dataclass
class PriorBounds:
    delta: float
    gamma: float
    lambda_S: float
    lambda_B: float
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ('delta', 'gamma', 'lambda_S', 'lambda_B'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"Prior {name} must be finite and nonnegative, got {value}")
        if self.lambda_S <= 0:
            raise ValueError("lambda_S must be positive")

    def as_dict(self) -> Dict:
        return {
            'delta': self.delta,
            'gamma': self.gamma,
            'lambda_S': self.lambda_S,
            'lambda_B': self.lambda_B,
        }


def regression_points(dataset: LpvDataset) -> np.ndarray:
    """w_k = (p_k, x_{k+1}, x_k) for k = 0..L-1."""
    return np.hstack([dataset.p, dataset.x_next, dataset.x_now])


def _input_column(dataset: LpvDataset) -> np.ndarray:
    if dataset.n_u != 1:
        raise ValueError("Prior estimation works on one input channel; use dataset.channel(j)")
    return dataset.u[:, 0]


def validation_curve(dataset: LpvDataset, gamma_grid: Sequence[float]) -> List[Tuple[float, float]]:
    """
    Smallest noise bound consistent with the data for each Lipschitz constant:

        delta_min(gamma) = max(0, max_{k,l} (u_k - u_l - gamma ||w_k - w_l||_inf) / 2)
    """
    if dataset.L < 2:
        raise EstimationError("Validation needs at least two samples")
    gammas = np.asarray(sorted(float(g) for g in gamma_grid))
    if gammas.size == 0:
        raise ValueError("gamma_grid must not be empty")
    if gammas[0] < 0:
        raise ValueError("gamma_grid must be nonnegative")

    w = regression_points(dataset)
    u = _input_column(dataset)
    worst = np.zeros(gammas.size)
    for start in range(0, dataset.L, CHUNK_ROWS):
        block = slice(start, start + CHUNK_ROWS)
        dist = np.max(np.abs(w[block, None, :] - w[None, :, :]), axis=2)
        du = u[block, None] - u[None, :]
        for index, gamma in enumerate(gammas):
            worst[index] = max(worst[index], float(np.max(du - gamma * dist)))

    curve = [(float(g), max(0.0, float(v) / 2.0)) for g, v in zip(gammas, worst)]
    logger.debug(f"Validation curve over {gammas.size} gammas: {curve[0]} .. {curve[-1]}")
    return curve


def select_priors(curve: Sequence[Tuple[float, float]], inflation: float = 1.25,
                  knee_tolerance: float = 0.05) -> Tuple[float, float]:
    """
    Pick the knee gamma* of the validation curve and return
    (gamma*, inflation * delta_min(gamma*)).

    The curve is flat for tiny gammas, falls steeply while gamma is below the
    true constant, then flattens on the noise plateau (and only drops to zero
    again for gammas large enough to separate every pair). The knee is the
    first grid point after the steepest drop whose successor lowers
    delta_min by no more than `knee_tolerance` of its value.
    """
    if not curve:
        raise ValueError("Empty validation curve")
    if inflation <= 1:
        raise ValueError("Inflation must exceed 1")
    gammas = [g for g, _ in curve]
    deltas = [d for _, d in curve]
    if max(deltas) == 0.0:
        logger.warning("Validation curve is flat at zero; data are noise-free and Lipschitz at every gamma")
        return gammas[0], 0.0
    if len(curve) == 1:
        return gammas[0], inflation * deltas[0]

    drops = [deltas[i] - deltas[i + 1] for i in range(len(curve) - 1)]
    steepest = int(np.argmax(drops))
    for index in range(steepest + 1, len(curve) - 1):
        delta, following = deltas[index], deltas[index + 1]
        if delta - following <= knee_tolerance * delta + 1e-12:
            return gammas[index], inflation * delta
    logger.warning("Validation curve has no plateau on the grid; using its last point")
    return gammas[-1], inflation * deltas[-1]


def estimate_lambda_S(dataset: LpvDataset, window: int = 50, inflation: float = 1.25) -> float:
    """
    Windowed gain heuristic: the one-step-ahead state plays the reference,
    and lambda_S = inflation * max_W ||x||_W / ||x+||_W over consecutive
    windows of `window` samples.
    """
    if dataset.L < 2:
        raise EstimationError("lambda_S estimation needs at least two samples")
    norms_now = np.max(np.abs(dataset.x_now), axis=1)
    norms_next = np.max(np.abs(dataset.x_next), axis=1)
    if not np.any(norms_now > 0) or not np.any(norms_next > 0):
        raise EstimationError("All states are zero; the reference-to-state gain is undefined")

    ratios = []
    for start in range(0, dataset.L, window):
        num = float(np.max(norms_now[start:start + window]))
        den = float(np.max(norms_next[start:start + window]))
        if den > 0:
            ratios.append(num / den)
    if not ratios:
        raise EstimationError("No window with a nonzero reference; lambda_S undefined")
    value = inflation * max(ratios)
    logger.warning(f"lambda_S = {value:.4g} from the windowed gain heuristic ({len(ratios)} windows)")
    return value


def estimate_lambda_B(dataset: LpvDataset, radius: float, inflation: float = 1.25) -> float:
    """
    Difference quotient over pairs with nearby (p, x) and different inputs:
    lambda_B = inflation * max ||x_{k+1} - x_{l+1}||_inf / |u_k - u_l|.
    """
    u = _input_column(dataset)
    points = np.hstack([dataset.p, dataset.x_now])
    pairs = cKDTree(points).query_pairs(r=radius, p=np.inf, output_type='ndarray')
    if len(pairs):
        du = np.abs(u[pairs[:, 0]] - u[pairs[:, 1]])
        pairs = pairs[du > 0]
        du = du[du > 0]
    if not len(pairs):
        raise EstimationError(
            f"No pairs within radius {radius} with distinct inputs; try a larger radius"
        )
    dx = np.max(np.abs(dataset.x_next[pairs[:, 0]] - dataset.x_next[pairs[:, 1]]), axis=1)
    value = inflation * float(np.max(dx / du))
    logger.info(f"lambda_B = {value:.4g} from {len(pairs)} pairs (radius {radius})")
    return value


def default_gamma_grid(dataset: LpvDataset, points: int = 25) -> np.ndarray:
    """Log-spaced grid spanning the range of pairwise slopes in the data."""
    u = _input_column(dataset)
    w = regression_points(dataset)
    span_u = float(np.ptp(u)) or 1.0
    span_w = float(np.max(np.ptp(w, axis=0))) or 1.0
    center = span_u / span_w
    return np.logspace(np.log10(center) - 2, np.log10(center) + 3, points)


def estimate_priors(dataset: LpvDataset, gamma_grid=None, inflation: float = 1.25,
                    knee_tolerance: float = 0.05, lambda_s_window: int = 50,
                    lambda_s_inflation: float = 1.25, lambda_b_radius: float = 0.2,
                    lambda_b_inflation: float = 1.25, overrides: Optional[Dict] = None,
                    allow_missing_lambda_B: bool = False) -> PriorBounds:
    """
    Run the whole estimation step on a single-input dataset.

    Non-null entries of `overrides` (delta, gamma, lambda_S, lambda_B) are
    taken as given and the matching estimate is skipped. When lambda_B cannot
    be estimated an EstimationError is raised, unless `allow_missing_lambda_B`
    is set; then lambda_B is 0 and provenance marks it unavailable.
    """
    fixed = {key: float(value) for key, value in (overrides or {}).items() if value is not None}
    provenance = {'overrides': sorted(fixed)}

    if 'delta' in fixed and 'gamma' in fixed:
        gamma, delta = fixed['gamma'], fixed['delta']
    else:
        grid = default_gamma_grid(dataset) if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
        curve = validation_curve(dataset, grid)
        gamma, delta = select_priors(curve, inflation=inflation, knee_tolerance=knee_tolerance)
        gamma, delta = fixed.get('gamma', gamma), fixed.get('delta', delta)
        provenance.update({
            'gamma_grid': [float(g) for g in grid],
            'curve': curve,
            'knee_rule': f"first point whose successor improves delta by at most {knee_tolerance:.0%}",
            'inflation': inflation,
        })

    if 'lambda_S' in fixed:
        lambda_S = fixed['lambda_S']
    else:
        lambda_S = estimate_lambda_S(dataset, window=lambda_s_window, inflation=lambda_s_inflation)
        provenance['lambda_S_rule'] = (f"windowed gain heuristic, window {lambda_s_window}, "
                                       f"inflation {lambda_s_inflation}")

    lambda_B_available = True
    if 'lambda_B' in fixed:
        lambda_B = fixed['lambda_B']
    else:
        try:
            lambda_B = estimate_lambda_B(dataset, lambda_b_radius, inflation=lambda_b_inflation)
        except EstimationError as exc:
            if not allow_missing_lambda_B:
                raise
            logger.warning(f"lambda_B unavailable, reported as 0: {exc}")
            lambda_B, lambda_B_available = 0.0, False
        provenance['lambda_B_rule'] = (f"difference quotient, radius {lambda_b_radius}, "
                                       f"inflation {lambda_b_inflation}")
    provenance['lambda_B_available'] = lambda_B_available

    logger.info(f"Priors: delta={delta:.4g} gamma={gamma:.4g} lambda_S={lambda_S:.4g} lambda_B={lambda_B:.4g}")
    return PriorBounds(delta=delta, gamma=gamma, lambda_S=lambda_S, lambda_B=lambda_B, provenance=provenance)
