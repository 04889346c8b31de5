"""
Basis function families over the scheduling domain.

A controller gain is a linear combination of m Lipschitz scalar functions
of the scheduling parameter p. Polynomial families are listed in graded
lexicographic order starting with the constant, so coefficient indices are
reproducible across runs and files.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FAMILIES = ('polynomial', 'gaussian', 'user')


def _graded_lex_exponents(n_p: int, degree: int) -> Tuple[Tuple[int, ...], ...]:
    exponents = []
    for total in range(degree + 1):
        grade = [
            combo for combo in itertools.product(range(total + 1), repeat=n_p)
            if sum(combo) == total
        ]
        # p1^total first, p_np^total last
        grade.sort(reverse=True)
        exponents.extend(grade)
    return tuple(exponents)


@dataclass(frozen=True)
class BasisSet:
    """Ordered family of basis functions phi_1..phi_m of an n_p-vector."""

    family: str
    n_p: int
    degree: Optional[int] = None
    exponents: Tuple[Tuple[int, ...], ...] = ()
    centers: Tuple[Tuple[float, ...], ...] = ()
    widths: Tuple[float, ...] = ()
    functions: Tuple[Callable, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"Unknown basis family: {self.family}")
        if self.n_p < 1:
            raise ValueError("Scheduling dimension n_p must be at least 1")
        if self.m < 1:
            raise ValueError("A basis needs at least one function")

    @property
    def m(self) -> int:
        if self.family == 'polynomial':
            return len(self.exponents)
        if self.family == 'gaussian':
            return len(self.centers)
        return len(self.functions)

    def evaluate(self, p) -> np.ndarray:
        """phi(p) as an m-vector."""
        return self.evaluate_many(np.atleast_2d(np.asarray(p, dtype=float)))[0]

    def evaluate_many(self, points) -> np.ndarray:
        """Rows of phi(p_k) for a stack of points, shape (n, m)."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, self.n_p)
        if points.shape[1] != self.n_p:
            raise ValueError(f"Expected points with {self.n_p} coordinates, got {points.shape[1]}")

        if self.family == 'polynomial':
            powers = np.asarray(self.exponents, dtype=int)
            return np.prod(points[:, None, :] ** powers[None, :, :], axis=2)
        if self.family == 'gaussian':
            centers = np.asarray(self.centers, dtype=float)
            widths = np.asarray(self.widths, dtype=float)
            sq = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
            return np.exp(-sq / (2.0 * widths[None, :] ** 2))
        return np.array([[float(f(p)) for f in self.functions] for p in points])

    def describe(self, index: int) -> str:
        """Human-readable name of function `index` (0-based)."""
        if self.family == 'polynomial':
            terms = []
            for coord, power in enumerate(self.exponents[index], start=1):
                if power == 1:
                    terms.append(f"p{coord}")
                elif power > 1:
                    terms.append(f"p{coord}^{power}")
            return '*'.join(terms) or '1'
        if self.family == 'gaussian':
            return f"gauss(c={self.centers[index]}, w={self.widths[index]})"
        return getattr(self.functions[index], '__name__', f"phi{index + 1}")


def polynomial_basis(n_p: int, degree: int) -> BasisSet:
    """All monomials of total degree <= `degree` in n_p variables."""
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    exponents = _graded_lex_exponents(n_p, degree)
    logger.debug(f"Polynomial basis n_p={n_p} degree={degree}: m={len(exponents)}")
    return BasisSet(family='polynomial', n_p=n_p, degree=degree, exponents=exponents)


def gaussian_basis(centers: Sequence[Sequence[float]], widths, include_constant: bool = False) -> BasisSet:
    """Radial Gaussian bumps; a very wide bump stands in for the constant term."""
    centers = tuple(tuple(float(c) for c in center) for center in centers)
    if not centers:
        raise ValueError("Gaussian basis needs at least one center")
    if np.isscalar(widths):
        widths = (float(widths),) * len(centers)
    widths = tuple(float(w) for w in widths)
    if len(widths) != len(centers) or min(widths) <= 0:
        raise ValueError("Gaussian widths must be positive, one per center")
    if include_constant:
        centers = (tuple(0.0 for _ in centers[0]),) + centers
        widths = (1e6,) + widths
    return BasisSet(family='gaussian', n_p=len(centers[0]), centers=centers, widths=widths)


def user_basis(functions: Sequence[Callable], n_p: int) -> BasisSet:
    """Wrap caller-supplied Lipschitz functions. Not serializable."""
    return BasisSet(family='user', n_p=n_p, functions=tuple(functions))


def evaluate_basis(basis: BasisSet, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("Scheduling point must be finite")
    return basis.evaluate(p)


def lipschitz_bound_on_box(basis: BasisSet, box) -> np.ndarray:
    """
    Upper bound on each function's Lipschitz constant over a box, measured
    with the infinity norm on p (so the gradient is bounded in the 1-norm).

    `box` is a sequence of (low, high) pairs, one per scheduling coordinate.
    """
    box = np.asarray(box, dtype=float)
    if box.shape != (basis.n_p, 2):
        raise ValueError(f"Box must have shape ({basis.n_p}, 2)")
    if not np.all(np.isfinite(box)):
        raise ValueError("Lipschitz bound needs a bounded box")
    reach = np.max(np.abs(box), axis=1)

    if basis.family == 'polynomial':
        bounds = np.zeros(basis.m)
        for index, powers in enumerate(basis.exponents):
            total = 0.0
            for j, power in enumerate(powers):
                if power == 0:
                    continue
                partial = power * reach[j] ** (power - 1)
                for i, other in enumerate(powers):
                    if i != j:
                        partial *= reach[i] ** other
                total += partial
            bounds[index] = total
        return bounds
    if basis.family == 'gaussian':
        # sup |d/dp_j exp(-r^2/2w^2)| = 1 / (w sqrt(e))
        widths = np.asarray(basis.widths, dtype=float)
        return basis.n_p / (widths * math.sqrt(math.e))
    raise ValueError("Lipschitz bounds are only available for polynomial and gaussian families")


def serialize_basis(basis: BasisSet) -> list:
    """Key-value lines describing the basis."""
    lines = [f"basis.family = {basis.family}", f"basis.n_p = {basis.n_p}"]
    if basis.family == 'polynomial':
        lines.append(f"basis.degree = {basis.degree}")
    elif basis.family == 'gaussian':
        for center, width in zip(basis.centers, basis.widths):
            lines.append("basis.gaussian = " + ' '.join(repr(c) for c in center) + f" | {width!r}")
    else:
        raise ValueError("User-defined bases cannot be serialized")
    return lines


def parse_basis(entries: dict, gaussians: Sequence[str] = ()) -> BasisSet:
    family = entries['basis.family']
    n_p = int(entries['basis.n_p'])
    if family == 'polynomial':
        return polynomial_basis(n_p, int(entries['basis.degree']))
    if family == 'gaussian':
        centers, widths = [], []
        for line in gaussians:
            center, width = line.split('|')
            centers.append(tuple(float(c) for c in center.split()))
            widths.append(float(width))
        return BasisSet(family='gaussian', n_p=n_p, centers=tuple(centers), widths=tuple(widths))
    raise ValueError(f"Cannot parse basis family {family}")
