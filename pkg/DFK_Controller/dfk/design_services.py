"""
Direct feedback design from data.

The controller is u = K1(p) . r_next - K2(p) . x with every gain entry a
linear combination of basis functions. Its coefficients are the sparsest
(l1-minimal) vector b such that

  (a) |u_k - Psi_k b| <= delta                                 for every row k
  (b) |u_l - u_k + (Psi_k - Psi_l) b| <= lambda2_s ||x_l - x_k|| + 2 delta
                                                                for neighbour pairs

where Psi_k b = K1(p_k) . x_{k+1} - K2(p_k) . x_k. Coefficients are
flattened as b[(j-1) n_x m + (l-1) m + i] = a[j, l, i].
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .basis_services import BasisSet
from .estimation_services import PriorBounds
from .exceptions import InfeasibleDesignError
from .lp_services import LinearProgram, LpSolution, OPTIMAL, solve_lp
from .plant_services import LpvDataset

logger = logging.getLogger(__name__)


@dataclass
class Controller:
    """Single-output DFK controller with coefficients a[j, l, i]."""

    basis: BasisSet
    n_x: int
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        expected = (2, self.n_x, self.basis.m)
        if self.coefficients.shape != expected:
            raise ValueError(f"Coefficient tensor has shape {self.coefficients.shape}, expected {expected}")

    @property
    def N(self) -> int:
        return 2 * self.n_x * self.basis.m

    @classmethod
    def zero(cls, basis: BasisSet, n_x: int) -> 'Controller':
        return cls(basis=basis, n_x=n_x, coefficients=np.zeros((2, n_x, basis.m)))

    @classmethod
    def from_flat(cls, b, basis: BasisSet, n_x: int) -> 'Controller':
        return cls(basis=basis, n_x=n_x, coefficients=np.asarray(b, dtype=float).reshape(2, n_x, basis.m))

    def flatten(self) -> np.ndarray:
        return self.coefficients.reshape(-1).copy()

    def gains(self, p) -> Tuple[np.ndarray, np.ndarray]:
        """(K1(p), K2(p)) as n_x-vectors."""
        phi = self.basis.evaluate(p)
        return self.coefficients[0] @ phi, self.coefficients[1] @ phi

    def gains_many(self, points) -> Tuple[np.ndarray, np.ndarray]:
        phi = self.basis.evaluate_many(points)
        return phi @ self.coefficients[0].T, phi @ self.coefficients[1].T

    def __call__(self, p, r_next, x) -> float:
        return evaluate_controller(self, p, r_next, x)


@dataclass
class ControllerBank:
    """One single-output controller per input channel."""

    channels: List[Controller]

    @property
    def n_u(self) -> int:
        return len(self.channels)

    @property
    def n_x(self) -> int:
        return self.channels[0].n_x

    def gain_matrices(self, p) -> Tuple[np.ndarray, np.ndarray]:
        rows = [channel.gains(p) for channel in self.channels]
        return np.array([k1 for k1, _ in rows]), np.array([k2 for _, k2 in rows])

    def __call__(self, p, r_next, x) -> np.ndarray:
        return np.array([evaluate_controller(channel, p, r_next, x) for channel in self.channels])


def as_bank(controller) -> ControllerBank:
    return controller if isinstance(controller, ControllerBank) else ControllerBank([controller])


def evaluate_controller(K: Controller, p, r_next, x) -> float:
    k1, k2 = K.gains(p)
    r_next = np.asarray(r_next, dtype=float).reshape(K.n_x)
    x = np.asarray(x, dtype=float).reshape(K.n_x)
    return float(k1 @ r_next - k2 @ x)


def sparsity_count(K, threshold: float = 1e-6) -> int:
    """Coefficients above threshold * max(1, max |a|)."""
    if threshold <= 0:
        raise ValueError("Sparsity threshold must be positive")
    coefficients = np.concatenate([c.flatten() for c in as_bank(K).channels])
    if coefficients.size == 0:
        return 0
    scale = max(1.0, float(np.max(np.abs(coefficients))))
    return int(np.count_nonzero(np.abs(coefficients) > threshold * scale))


# ---------------------------------------------------------------------------
# Regression data
# ---------------------------------------------------------------------------

def build_psi(dataset: LpvDataset, basis: BasisSet) -> np.ndarray:
    """L x N matrix with Psi_k b = K1(p_k) . x_{k+1} - K2(p_k) . x_k."""
    if basis.n_p != dataset.n_p:
        raise ValueError(f"Basis expects n_p={basis.n_p}, dataset has n_p={dataset.n_p}")
    if dataset.x.shape[0] != dataset.L + 1:
        raise ValueError("Dataset must carry L + 1 state samples")
    phi = basis.evaluate_many(dataset.p)
    L = dataset.L
    forward = (dataset.x_next[:, :, None] * phi[:, None, :]).reshape(L, -1)
    current = (dataset.x_now[:, :, None] * phi[:, None, :]).reshape(L, -1)
    return np.hstack([forward, -current])


def neighbour_features(dataset: LpvDataset) -> np.ndarray:
    return np.hstack([dataset.p, dataset.x_next])


def neighbor_sets(dataset: LpvDataset) -> Tuple[float, List[np.ndarray]]:
    """
    zeta = largest nearest-other-row distance in (p_k, x_{k+1}), infinity
    norm, and Q^k = rows within zeta of row k (k included).
    """
    if dataset.L < 2:
        raise ValueError("Neighbour sets need at least two rows")
    features = neighbour_features(dataset)
    tree = cKDTree(features)
    distances, _ = tree.query(features, k=2, p=np.inf)
    zeta = float(np.max(distances[:, 1]))
    members = tree.query_ball_point(features, r=zeta, p=np.inf)
    sets = [np.asarray(sorted(indices), dtype=int) for indices in members]
    return zeta, sets


def neighbour_pairs(dataset: LpvDataset, zeta: Optional[float] = None,
                    max_pairs: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """Unordered pairs (k < l) with l in Q^k, optionally capped to the nearest ones."""
    features = neighbour_features(dataset)
    tree = cKDTree(features)
    if zeta is None:
        distances, _ = tree.query(features, k=2, p=np.inf)
        zeta = float(np.max(distances[:, 1]))
    pairs = tree.query_pairs(r=zeta, p=np.inf, output_type='ndarray')
    if len(pairs) == 0:
        pairs = np.zeros((0, 2), dtype=int)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))] if len(pairs) else pairs
    if max_pairs is not None and len(pairs) > max_pairs:
        gaps = np.max(np.abs(features[pairs[:, 0]] - features[pairs[:, 1]]), axis=1)
        keep = np.sort(np.argsort(gaps, kind='stable')[:max_pairs])
        logger.warning(f"Neighbour pairs capped: {len(pairs)} -> {max_pairs} nearest")
        pairs = pairs[keep]
    return zeta, pairs


@dataclass
class RegressionProblem:
    psi: np.ndarray
    u_tilde: np.ndarray
    x_now: np.ndarray
    pairs: np.ndarray
    zeta: float
    delta: float
    lambda2_s: float

    @property
    def L(self) -> int:
        return self.psi.shape[0]

    @property
    def N(self) -> int:
        return self.psi.shape[1]


def build_problem(dataset: LpvDataset, basis: BasisSet, delta: float, lambda2_s: float,
                  max_pairs: Optional[int] = None) -> RegressionProblem:
    if dataset.n_u != 1:
        raise ValueError("Design works per input channel; use dataset.channel(j)")
    psi = build_psi(dataset, basis)
    zeta, pairs = neighbour_pairs(dataset, max_pairs=max_pairs)
    return RegressionProblem(
        psi=psi, u_tilde=dataset.u[:, 0].copy(), x_now=dataset.x_now,
        pairs=pairs, zeta=zeta, delta=float(delta), lambda2_s=float(lambda2_s),
    )


def assemble_lp(problem: RegressionProblem) -> LinearProgram:
    """
    Epigraph form over v = (b, t):

        min sum t   s.t.  +-(Psi b - u) <= delta,
                          +-(u_l - u_k + (Psi_k - Psi_l) b) <= lambda2_s ||x_l - x_k|| + 2 delta,
                          +-b - t <= 0.
    """
    if problem.delta < 0:
        raise ValueError("delta must be nonnegative")
    L, N = problem.L, problem.N
    psi, u = problem.psi, problem.u_tilde
    zeros_t = sparse.csr_matrix((L, N))

    blocks = [
        sparse.hstack([sparse.csr_matrix(psi), zeros_t]),
        sparse.hstack([sparse.csr_matrix(-psi), zeros_t]),
    ]
    bounds = [u + problem.delta, -u + problem.delta]

    if len(problem.pairs):
        k, l = problem.pairs[:, 0], problem.pairs[:, 1]
        diff = psi[k] - psi[l]
        offset = u[l] - u[k]
        budget = problem.lambda2_s * np.max(np.abs(problem.x_now[l] - problem.x_now[k]), axis=1) + 2.0 * problem.delta
        zeros_p = sparse.csr_matrix((len(k), N))
        blocks += [
            sparse.hstack([sparse.csr_matrix(diff), zeros_p]),
            sparse.hstack([sparse.csr_matrix(-diff), zeros_p]),
        ]
        bounds += [budget - offset, budget + offset]

    eye = sparse.identity(N, format='csr')
    blocks += [sparse.hstack([eye, -eye]), sparse.hstack([-eye, -eye])]
    bounds += [np.zeros(N), np.zeros(N)]

    cost = np.concatenate([np.zeros(N), np.ones(N)])
    lp = LinearProgram(
        cost=cost,
        A_ub=sparse.vstack(blocks, format='csr'),
        b_ub=np.concatenate(bounds),
        bounds=[(None, None)] * N + [(0.0, None)] * N,
        names=[f"b{i + 1}" for i in range(N)] + [f"t{i + 1}" for i in range(N)],
    )
    logger.info(f"Design LP: {lp.n_vars} variables, {lp.n_constraints} rows ({len(problem.pairs)} neighbour pairs)")
    return lp


# ---------------------------------------------------------------------------
# Design
# ---------------------------------------------------------------------------

@dataclass
class DesignReport:
    channel: int
    L: int
    N: int
    m: int
    zeta: float
    n_pairs: int
    n_constraints: int
    objective: float
    status: str
    n_selected: int
    delta: float
    lambda2_s: float
    lambda_S: float
    lambda_B: float
    stability_product: float
    stable: bool
    max_violation: float
    solve_seconds: float
    fit_rms: float = float('nan')
    lambda_B_available: bool = True
    provenance: Dict = field(default_factory=dict)

    def as_dict(self) -> Dict:
        return {
            'channel': self.channel, 'L': self.L, 'N': self.N, 'm': self.m,
            'zeta': self.zeta, 'n_pairs': self.n_pairs, 'n_constraints': self.n_constraints,
            'objective': self.objective, 'status': self.status, 'n_selected': self.n_selected,
            'delta': self.delta, 'lambda2_s': self.lambda2_s, 'lambda_S': self.lambda_S,
            'lambda_B': self.lambda_B, 'stability_product': self.stability_product,
            'stable': self.stable, 'max_violation': self.max_violation,
            'solve_seconds': self.solve_seconds, 'fit_rms': self.fit_rms,
            'lambda_B_available': self.lambda_B_available,
        }


def design_controller(dataset: LpvDataset, basis: BasisSet, priors: PriorBounds,
                      safety_margin: float = 0.8, lambda2_s: Optional[float] = None,
                      sparsity_threshold: float = 1e-6, tolerance: float = 1e-7,
                      max_iters: int = 200000, max_pairs: Optional[int] = None,
                      channel: int = 0) -> Tuple[Controller, DesignReport]:
    """
    Design a single-output controller on `dataset` (one input column).

    lambda2_s defaults to safety_margin / lambda_S.
    """
    if not 0 < safety_margin < 1:
        raise ValueError("safety_margin must lie in (0, 1)")
    if lambda2_s is None:
        lambda2_s = safety_margin / priors.lambda_S
    logger.info(f"Designing channel {channel}: L={dataset.L}, m={basis.m}, delta={priors.delta:.4g}, "
                f"lambda2_s={lambda2_s:.4g}")

    problem = build_problem(dataset, basis, priors.delta, lambda2_s, max_pairs=max_pairs)
    lp = assemble_lp(problem)
    started = time.perf_counter()
    solution: LpSolution = solve_lp(lp, tolerance=tolerance, max_iters=max_iters)
    elapsed = time.perf_counter() - started

    if solution.status != OPTIMAL:
        logger.error(f"Design LP for channel {channel} is {solution.status}")
        raise InfeasibleDesignError(solution.status, solution.message)

    b = solution.v[:problem.N]
    controller = Controller.from_flat(b, basis, dataset.n_x)
    product = lambda2_s * priors.lambda_S
    report = DesignReport(
        channel=channel, L=dataset.L, N=problem.N, m=basis.m, zeta=problem.zeta,
        n_pairs=len(problem.pairs), n_constraints=lp.n_constraints,
        objective=solution.objective, status=solution.status,
        n_selected=sparsity_count(controller, sparsity_threshold),
        delta=priors.delta, lambda2_s=lambda2_s, lambda_S=priors.lambda_S, lambda_B=priors.lambda_B,
        stability_product=product, stable=product < 1.0,
        max_violation=solution.max_violation, solve_seconds=elapsed,
        fit_rms=input_fit_rms(controller, dataset),
        lambda_B_available=bool(priors.provenance.get('lambda_B_available', True)),
        provenance=dict(priors.provenance),
    )
    if not report.stable:
        logger.warning(f"lambda2_s * lambda_S = {product:.3g} >= 1; stability condition not met")
    logger.info(f"Channel {channel}: objective {solution.objective:.4g}, {report.n_selected}/{problem.N} "
                f"coefficients selected in {elapsed:.2f} s")
    return controller, report


def design_controller_bank(dataset: LpvDataset, basis: BasisSet, priors: Sequence[PriorBounds],
                           **options) -> Tuple[ControllerBank, List[DesignReport]]:
    """One design per input channel, combined into a bank."""
    if len(priors) != dataset.n_u:
        raise ValueError("One PriorBounds per input channel")
    controllers, reports = [], []
    for j in range(dataset.n_u):
        controller, report = design_controller(dataset.channel(j), basis, priors[j], channel=j, **options)
        controllers.append(controller)
        reports.append(report)
    return ControllerBank(controllers), reports


def predicted_inputs(controller, dataset: LpvDataset) -> np.ndarray:
    """u_hat_k = K(p_k, x_{k+1}, x_k) for every data row, shape (L, n_u)."""
    bank = as_bank(controller)
    columns = []
    for channel in bank.channels:
        k1, k2 = channel.gains_many(dataset.p)
        columns.append(np.sum(k1 * dataset.x_next, axis=1) - np.sum(k2 * dataset.x_now, axis=1))
    return np.column_stack(columns)


def input_fit_rms(controller, dataset: LpvDataset) -> float:
    """RMS(u_tilde - u_hat) over all rows and channels."""
    residual = dataset.u[:, :as_bank(controller).n_u] - predicted_inputs(controller, dataset)
    return float(np.sqrt(np.mean(residual ** 2)))
