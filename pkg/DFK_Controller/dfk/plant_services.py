"""
Plant simulation and data acquisition.

Continuous plants are integrated with classical fixed-step RK4, the input
held constant over every step (zero-order hold). Acquisition samples the
plant every Ts, corrupts the samples with measurement noise and packs them
into an LpvDataset. Discrete affine LPV fixtures are generated by direct
recursion.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DivergenceError

logger = logging.getLogger(__name__)

GRAVITY = 9.81


# ---------------------------------------------------------------------------
# Plant models
# ---------------------------------------------------------------------------

@dataclass
class PlantModel:
    """Continuous-time plant x' = f(x, u, t)."""

    name: str
    state_dim: int
    input_dim: int
    dynamics: Callable
    parameters: Dict[str, float] = field(default_factory=dict)

    def derivative(self, x, u, t: float = 0.0) -> np.ndarray:
        dx = np.asarray(self.dynamics(x, u, t, self.parameters), dtype=float)
        if dx.shape != (self.state_dim,):
            raise ValueError(f"{self.name} dynamics returned shape {dx.shape}, expected ({self.state_dim},)")
        return dx


def duffing_dynamics(x, u, params) -> np.ndarray:
    """Damped oscillator with cubic spring."""
    alpha1, alpha2, beta = params['alpha1'], params['alpha2'], params['beta']
    u = float(np.ravel(u)[0]) if np.ndim(u) else float(u)
    return np.array([
        x[1],
        -alpha1 * x[0] - alpha2 * x[0] ** 3 - beta * x[1] + u,
    ])


def two_link_terms(z, params):
    """Mass matrix, velocity terms and gravity torque of the planar arm.

    Point masses M1, M2 sit at the link ends; zeta1 is measured from the
    downward vertical and zeta2 relative to the first link, so z = 0 hangs
    straight down.
    """
    l1, l2 = params['l1'], params['l2']
    m1, m2 = params['M1'], params['M2']
    g = params.get('g', GRAVITY)
    q1, q2, dq1, dq2 = z

    c2 = math.cos(q2)
    h = m2 * l1 * l2 * math.sin(q2)
    mass = np.array([
        [(m1 + m2) * l1 ** 2 + m2 * l2 ** 2 + 2.0 * m2 * l1 * l2 * c2, m2 * l2 ** 2 + m2 * l1 * l2 * c2],
        [m2 * l2 ** 2 + m2 * l1 * l2 * c2, m2 * l2 ** 2],
    ])
    velocity = np.array([
        -h * (2.0 * dq1 * dq2 + dq2 ** 2),
        h * dq1 ** 2,
    ])
    gravity = np.array([
        (m1 + m2) * g * l1 * math.sin(q1) + m2 * g * l2 * math.sin(q1 + q2),
        m2 * g * l2 * math.sin(q1 + q2),
    ])
    return mass, velocity, gravity


def two_link_dynamics(z, u, params) -> np.ndarray:
    """Euler-Lagrange dynamics in state order (zeta1, zeta2, dzeta1, dzeta2)."""
    mass, velocity, gravity = two_link_terms(z, params)
    torque = np.asarray(u, dtype=float).reshape(2)
    accel = np.linalg.solve(mass, torque - velocity - gravity)
    return np.array([z[2], z[3], accel[0], accel[1]])


def two_link_energy(z, params) -> float:
    mass, _, _ = two_link_terms(z, params)
    l1, l2 = params['l1'], params['l2']
    m1, m2 = params['M1'], params['M2']
    g = params.get('g', GRAVITY)
    dq = np.asarray(z[2:4], dtype=float)
    kinetic = 0.5 * dq @ mass @ dq
    potential = -(m1 + m2) * g * l1 * math.cos(z[0]) - m2 * g * l2 * math.cos(z[0] + z[1])
    return float(kinetic + potential)


def gravity_compensation(z, params) -> np.ndarray:
    return two_link_terms(z, params)[2]


def duffing_plant(alpha1: float = -1.0, alpha2: float = 1.0, beta: float = 0.2) -> PlantModel:
    return PlantModel(
        name='duffing', state_dim=2, input_dim=1,
        dynamics=lambda x, u, t, prm: duffing_dynamics(x, u, prm),
        parameters={'alpha1': alpha1, 'alpha2': alpha2, 'beta': beta},
    )


def two_link_plant(l1: float = 0.8, l2: float = 0.7, M1: float = 2.5, M2: float = 2.0,
                   g: float = GRAVITY) -> PlantModel:
    return PlantModel(
        name='two_link', state_dim=4, input_dim=2,
        dynamics=lambda z, u, t, prm: two_link_dynamics(z, u, prm),
        parameters={'l1': l1, 'l2': l2, 'M1': M1, 'M2': M2, 'g': g},
    )


def linear_plant(A, B) -> PlantModel:
    """Continuous LTI plant x' = A x + B u."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    return PlantModel(
        name='linear', state_dim=A.shape[0], input_dim=B.shape[1],
        dynamics=lambda x, u, t, prm: A @ np.asarray(x, dtype=float) + B @ np.atleast_1d(np.asarray(u, dtype=float)),
        parameters={},
    )


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

def rk4_step(model: PlantModel, x: np.ndarray, u, t: float, dt: float) -> np.ndarray:
    """One classical RK4 step with u held constant."""
    k1 = model.derivative(x, u, t)
    k2 = model.derivative(x + 0.5 * dt * k1, u, t + 0.5 * dt)
    k3 = model.derivative(x + 0.5 * dt * k2, u, t + 0.5 * dt)
    k4 = model.derivative(x + dt * k3, u, t + dt)
    return x + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def hold_interval(model: PlantModel, x: np.ndarray, u, t: float, Ts: float, substeps: int) -> np.ndarray:
    """Advance over one sampling period with the input held (D/A zero-order hold)."""
    dt = Ts / substeps
    for i in range(substeps):
        x = rk4_step(model, x, u, t + i * dt, dt)
    return x


def _input_at(u_of_t, index: int, t: float, x):
    if callable(u_of_t):
        return u_of_t(t, x)
    samples = np.asarray(u_of_t, dtype=float)
    return samples[min(index, len(samples) - 1)]


def integrate_rk4(model: PlantModel, x0, u_of_t, t_end: float, dt: float,
                  input_period: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate from t = 0 to t_end and return (times, states), x0 included.

    The step is shrunk so that a whole number of steps lands on t_end.
    `u_of_t` is either a callable (t, x) -> u, sampled at the start of each
    hold period, or a sequence of samples, one per hold period. The hold
    period defaults to the integration step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < dt:
        raise ValueError("t_end must be at least one step")
    x = np.asarray(x0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("Initial state must be finite")

    n_steps = int(math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    steps_per_hold = 1 if input_period is None else max(1, int(round(input_period / h)))

    times = h * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, x.size))
    states[0] = x
    u = None
    for step in range(n_steps):
        if step % steps_per_hold == 0:
            u = _input_at(u_of_t, step // steps_per_hold, times[step], x)
        x = rk4_step(model, x, u, times[step], h)
        if not np.all(np.isfinite(x)):
            logger.error(f"{model.name}: non-finite state at step {step + 1}")
            raise DivergenceError(step + 1, time=times[step + 1])
        states[step + 1] = x
    return times, states


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

NOISE_KINDS = ('gaussian-ratio', 'uniform-amplitude', 'none')


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = 'none'
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"Unknown noise kind: {self.kind}")
        if self.level < 0:
            raise ValueError("Noise level must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind != 'none' and self.level > 0

    def as_dict(self) -> dict:
        return {'kind': self.kind, 'level': self.level, 'seed': self.seed}


def draw_noise(spec: NoiseSpec, shape, scale=None, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Draw a noise array of `shape`.

    For gaussian-ratio noise, `scale` holds the per-channel std of the
    noiseless signal; the drawn std is level * scale.
    """
    if not spec.active:
        return np.zeros(shape)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    if spec.kind == 'uniform-amplitude':
        return rng.uniform(-spec.level, spec.level, size=shape)
    if scale is None:
        raise ValueError("gaussian-ratio noise needs the signal scale")
    return rng.standard_normal(shape) * spec.level * np.asarray(scale, dtype=float)


def measure(clean: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Noise-corrupted copy of a whole record; ratio noise scales per channel."""
    clean = np.asarray(clean, dtype=float)
    scale = np.std(clean, axis=0) if spec.kind == 'gaussian-ratio' else None
    return clean + draw_noise(spec, clean.shape, scale=scale)


# ---------------------------------------------------------------------------
# Excitation signals
# ---------------------------------------------------------------------------

class SinusoidExcitation:
    """sum_i A_i sin(w_i t) plus optional white Gaussian noise held per sample."""

    def __init__(self, amplitudes: Sequence[float], frequencies: Sequence[float],
                 noise_std: float = 0.0, Ts: float = 0.1, horizon: int = 0, seed: int = 0):
        if len(amplitudes) != len(frequencies):
            raise ValueError("One amplitude per frequency")
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.frequencies = np.asarray(frequencies, dtype=float)
        self.noise_std = noise_std
        self.Ts = Ts
        self.seed = seed
        self._noise = np.random.default_rng(seed).standard_normal(horizon + 1) * noise_std if noise_std > 0 else None

    def __call__(self, tau: float, z=None) -> np.ndarray:
        value = float(np.sum(self.amplitudes * np.sin(self.frequencies * tau)))
        if self._noise is not None:
            index = min(int(round(tau / self.Ts)), len(self._noise) - 1)
            value += self._noise[index]
        return np.array([value])


class UniformExcitation:
    """i.i.d. inputs uniform in [-U, U], one draw per sample."""

    def __init__(self, amplitude: float, Ts: float, horizon: int, n_u: int = 1, seed: int = 0):
        self.Ts = Ts
        self._samples = np.random.default_rng(seed).uniform(-amplitude, amplitude, size=(horizon + 1, n_u))

    def __call__(self, tau: float, z=None) -> np.ndarray:
        index = min(int(round(tau / self.Ts)), len(self._samples) - 1)
        return self._samples[index].copy()


@dataclass(frozen=True)
class ManipulatorExcitation:
    """
    Piecewise input law for the arm data run.

    Saturation feedback when a joint leaves the working range, silence inside
    quiet windows (sample indices l < k <= l + quiet_length), a two-tone
    sinusoid otherwise.
    """

    amplitude: float = 100.0
    frequencies: Tuple[Tuple[float, float], ...] = ((0.07, 0.8), (0.08, 0.9))
    threshold: float = 1.75
    feedback_gain: float = -20.0
    quiet_starts: Tuple[int, ...] = (500, 1500, 2500, 3500)
    quiet_length: int = 500
    Ts: float = 0.02

    def __call__(self, tau: float, z) -> np.ndarray:
        return excitation_signal(self, tau, z)


def excitation_signal(spec: ManipulatorExcitation, tau: float, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    sample = tau / spec.Ts
    quiet = any(start < sample <= start + spec.quiet_length for start in spec.quiet_starts)
    u = np.zeros(len(spec.frequencies))
    for j, (w1, w2) in enumerate(spec.frequencies):
        if abs(z[j]) >= spec.threshold:
            u[j] = spec.feedback_gain * z[j]
        elif quiet:
            u[j] = 0.0
        else:
            u[j] = spec.amplitude * math.sin(w1 * tau) + spec.amplitude * math.sin(w2 * tau)
    return u


# ---------------------------------------------------------------------------
# Scheduling maps
# ---------------------------------------------------------------------------

SCHEDULING_MAPS = ('identity', 'x1_squared', 'delayed_output', 'positions')


@dataclass(frozen=True)
class SchedulingMap:
    """
    Builds the scheduling parameter and the feedback regressor from measured
    states. History-dependent maps take the sample before the first equal
    to the first.
    """

    name: str = 'identity'

    def __post_init__(self):
        if self.name not in SCHEDULING_MAPS:
            raise ValueError(f"Unknown scheduling map: {self.name}")

    @staticmethod
    def _previous(states: np.ndarray) -> np.ndarray:
        return np.vstack([states[:1], states[:-1]])

    def regressor(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.name == 'delayed_output':
            return np.column_stack([states[:, 0], self._previous(states)[:, 0]])
        return states

    def features(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if self.name == 'identity':
            return states.copy()
        if self.name == 'x1_squared':
            return states[:, :1] ** 2
        if self.name == 'positions':
            return states[:, : states.shape[1] // 2].copy()
        return self.regressor(states)

    def state_targets(self, reference, Ts: float) -> np.ndarray:
        """
        Plant-state trajectory a regressor reference asks for. The delayed
        output map tracks a position only, so its velocity target is the
        backward difference of that position.
        """
        reference = np.atleast_2d(np.asarray(reference, dtype=float))
        if self.name == 'delayed_output':
            position = reference[:, 0]
            return np.column_stack([position, np.diff(position, prepend=position[0]) / Ts])
        return reference.copy()

    def regressor_dim(self, state_dim: int) -> int:
        return 2 if self.name == 'delayed_output' else state_dim

    def feature_dim(self, state_dim: int) -> int:
        if self.name == 'x1_squared':
            return 1
        if self.name == 'positions':
            return state_dim // 2
        return self.regressor_dim(state_dim)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass
class LpvDataset:
    """
    Measured triples (p_k, x_k, u_k), k = 0..L-1, plus the state sample x_L
    so that the regression row k can use x_{k+1}.
    """

    p: np.ndarray
    x: np.ndarray
    u: np.ndarray
    Ts: float
    scheduling: str = 'identity'
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim == 1:
            self.u = self.u[:, None]
        if self.L < 2:
            raise ValueError("A dataset needs at least 2 samples")
        if self.p.shape[0] != self.L or self.x.shape[0] != self.L + 1:
            raise ValueError(
                f"Inconsistent dataset rows: p {self.p.shape[0]}, x {self.x.shape[0]}, u {self.L}"
            )
        for name in ('p', 'x', 'u'):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"Dataset field {name} has non-finite entries")

    @property
    def L(self) -> int:
        return self.u.shape[0]

    @property
    def n_p(self) -> int:
        return self.p.shape[1]

    @property
    def n_x(self) -> int:
        return self.x.shape[1]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def x_now(self) -> np.ndarray:
        return self.x[:-1]

    @property
    def x_next(self) -> np.ndarray:
        return self.x[1:]

    def channel(self, j: int) -> 'LpvDataset':
        """Single-input view on input column j."""
        return LpvDataset(p=self.p, x=self.x, u=self.u[:, j:j + 1], Ts=self.Ts,
                          scheduling=self.scheduling, metadata={**self.metadata, 'channel': j})


def acquire_dataset(model: PlantModel, excitation: Callable, Ts: float, L: int,
                    state_noise: NoiseSpec = NoiseSpec(), input_noise: NoiseSpec = NoiseSpec(),
                    scheduling: SchedulingMap = SchedulingMap(), substeps: int = 10,
                    x0=None) -> LpvDataset:
    """
    Simulate the plant under `excitation`, sample every Ts and store L + 1
    noisy state samples with the L applied inputs.

    The excitation sees the true state at each sampling instant; noise is
    applied to the stored record only.
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    logger.info(f"Acquiring {L} samples from {model.name} at Ts={Ts} s")

    x = np.zeros(model.state_dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    states = np.empty((L + 1, model.state_dim))
    inputs = np.empty((L, model.input_dim))
    states[0] = x
    for k in range(L):
        t = k * Ts
        u = np.atleast_1d(np.asarray(excitation(t, x), dtype=float))
        inputs[k] = u
        x = hold_interval(model, x, u, t, Ts, substeps)
        if not np.all(np.isfinite(x)):
            logger.error(f"{model.name}: acquisition diverged at sample {k + 1}")
            raise DivergenceError(k + 1, time=(k + 1) * Ts)
        states[k + 1] = x

    measured = measure(states, state_noise)
    measured_inputs = measure(inputs, input_noise)
    return LpvDataset(
        p=scheduling.features(measured)[:L],
        x=scheduling.regressor(measured),
        u=measured_inputs,
        Ts=Ts,
        scheduling=scheduling.name,
        metadata={
            'plant': model.name,
            'L': L,
            'Ts': Ts,
            'substeps': substeps,
            'state_noise': state_noise.as_dict(),
            'input_noise': input_noise.as_dict(),
        },
    )


# ---------------------------------------------------------------------------
# Discrete affine LPV fixtures
# ---------------------------------------------------------------------------

def _affine(terms, p) -> np.ndarray:
    value = np.array(terms[0], dtype=float)
    for coef, matrix in zip(np.ravel(p), terms[1:]):
        value = value + coef * np.asarray(matrix, dtype=float)
    return value


@dataclass
class KnownLpvSystem:
    """
    Discrete LPV system x+ = A(p) x + B(p) u + H(p) e with matrices affine in p.

    `A_terms` = (A0, A1, ..., A_np), likewise for B and H. The scheduling
    parameter is produced from the state by `scheduling` (default p = x).
    Boxes are sequences of (low, high) pairs.
    """

    A_terms: Sequence
    B_terms: Sequence
    H_terms: Sequence
    p_box: Sequence
    x_box: Sequence
    e_box: Sequence
    scheduling: Optional[Callable] = None
    name: str = 'known_lpv'

    def __post_init__(self):
        self.A_terms = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A_terms]
        n_x = self.A_terms[0].shape[0]
        self.B_terms = [np.asarray(b, dtype=float).reshape(n_x, -1) for b in self.B_terms]
        self.H_terms = [np.asarray(h, dtype=float).reshape(n_x, -1) for h in self.H_terms]

    @property
    def n_x(self) -> int:
        return self.A_terms[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.B_terms[0].shape[1]

    @property
    def n_e(self) -> int:
        return self.H_terms[0].shape[1]

    @property
    def n_p(self) -> int:
        return len(self.p_box)

    def A(self, p) -> np.ndarray:
        return _affine(self.A_terms, p)

    def B(self, p) -> np.ndarray:
        return _affine(self.B_terms, p)

    def H(self, p) -> np.ndarray:
        return _affine(self.H_terms, p)

    def schedule(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.scheduling(x), dtype=float) if self.scheduling else x.copy()

    def step(self, x, u, e) -> np.ndarray:
        p = self.schedule(x)
        return self.A(p) @ x + self.B(p) @ np.atleast_1d(u) + self.H(p) @ np.atleast_1d(e)


def acquire_lpv_dataset(system: KnownLpvSystem, excitation: Callable, L: int,
                        input_noise: NoiseSpec = NoiseSpec(), process_noise: NoiseSpec = NoiseSpec(),
                        Ts: float = 1.0) -> LpvDataset:
    """Data from the discrete recursion started at x = 0; e drives H."""
    if L < 2:
        raise ValueError("L must be at least 2")
    rng = np.random.default_rng(process_noise.seed)
    e_seq = draw_noise(process_noise, (L, system.n_e), scale=np.ones(system.n_e), rng=rng)
    x = np.zeros(system.n_x)
    states = np.empty((L + 1, system.n_x))
    sched = np.empty((L, system.n_p))
    inputs = np.empty((L, system.n_u))
    states[0] = x
    for k in range(L):
        sched[k] = system.schedule(x)
        inputs[k] = np.atleast_1d(excitation(k * Ts, x))
        x = system.step(x, inputs[k], e_seq[k])
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k + 1)
        states[k + 1] = x
    return LpvDataset(
        p=sched, x=states, u=measure(inputs, input_noise), Ts=Ts, scheduling='system',
        metadata={'plant': system.name, 'L': L, 'Ts': Ts,
                  'input_noise': input_noise.as_dict(), 'state_noise': process_noise.as_dict()},
    )
