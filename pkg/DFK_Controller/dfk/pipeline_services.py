"""
Experiment pipeline built from a validated config.

    acquire -> estimate priors -> design -> simulate

`ExperimentPipeline` turns one config plus one seed into every object a
stage needs. Per-stage random streams are spawned from the seed, so a
trial is reproducible from (config, seed) alone. `monte_carlo` repeats the
whole chain with seeds base, base + 1, ...
"""

import json
import logging
import multiprocessing as mp
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings
from django.utils import timezone

from .basis_services import BasisSet, gaussian_basis, polynomial_basis
from .closed_loop_services import ClosedLoopRun, ReferenceSpec, generate_reference, simulate_closed_loop
from .design_services import design_controller_bank, input_fit_rms, sparsity_count
from .estimation_services import PriorBounds, estimate_priors
from .exceptions import DfkError, DivergenceError, EstimationError, InfeasibleDesignError
from .models import PipelineRun
from .plant_services import (
    KnownLpvSystem, LpvDataset, ManipulatorExcitation, NoiseSpec, SchedulingMap, SinusoidExcitation,
    UniformExcitation, acquire_dataset, acquire_lpv_dataset, duffing_plant, two_link_plant,
)
from .serializers import PipelineConfigSerializer

logger = logging.getLogger(__name__)

STREAMS = (
    'excitation', 'state_noise', 'input_noise',
    'validation_excitation', 'validation_state_noise', 'validation_input_noise',
    'reference', 'simulation_noise',
)

FAILURE_KINDS = {
    DivergenceError: 'divergence',
    InfeasibleDesignError: 'infeasible',
    EstimationError: 'estimation',
}


class ConfigError(DfkError):
    """The experiment config failed validation."""

    def __init__(self, errors):
        self.errors = errors
        super().__init__(f"Invalid config: {json.dumps(errors, default=str)}")


def dfk_setting(name: str):
    return settings.DFK_CONFIG[name]


def resolve_config_path(path) -> Path:
    """Absolute paths as given; bare names are looked up in the bundled config dir."""
    path = Path(path)
    if path.exists() or path.is_absolute():
        return path
    bundled = Path(settings.DFK_CONFIG_DIR) / path
    return bundled if bundled.exists() else path


def validate_config(raw: Dict) -> Dict:
    serializer = PipelineConfigSerializer(data=raw)
    if not serializer.is_valid():
        raise ConfigError(serializer.errors)
    # plain dicts and lists, ready for JSONField and pickling
    return json.loads(json.dumps(serializer.validated_data))


def load_config(path) -> Dict:
    """Read and validate a JSON experiment config; OSError propagates."""
    path = resolve_config_path(path)
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError({'non_field_errors': [f"Not valid JSON: {exc}"]}) from exc
    config = validate_config(raw)
    logger.info(f"Loaded config {config['name']} from {path}")
    return config


def stream_seeds(seed: int) -> Dict[str, int]:
    """Independent integer seeds for every random stream of one trial."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(STREAMS, children)}


def _noise(spec: Dict, seed: int) -> NoiseSpec:
    return NoiseSpec(kind=spec['kind'], level=spec['level'], seed=seed)


class ExperimentPipeline:
    """One config, one seed: every stage of the DFK experiment."""

    def __init__(self, config: Dict, seed: Optional[int] = None):
        self.config = config
        self.seed = config['seed'] if seed is None else int(seed)
        self.streams = stream_seeds(self.seed)
        self.plant = self.build_plant()
        self.scheduling = SchedulingMap(config['acquisition']['scheduling'])

    @property
    def discrete(self) -> bool:
        return isinstance(self.plant, KnownLpvSystem)

    @property
    def Ts(self) -> float:
        return self.config['acquisition']['Ts']

    @property
    def substeps(self) -> int:
        return self.config['acquisition'].get('substeps') or dfk_setting('substeps')

    @property
    def max_pairs(self) -> Optional[int]:
        """Neighbour-pair cap: the config value, else DFK_CONFIG (0 there means no cap)."""
        return self.config['design'].get('max_pairs') or dfk_setting('max_pairs') or None

    @property
    def n_u(self) -> int:
        return self.plant.n_u if self.discrete else self.plant.input_dim

    def build_plant(self):
        plant = self.config['plant']
        if plant['kind'] == 'duffing':
            return duffing_plant(**plant['parameters'])
        if plant['kind'] == 'two_link':
            return two_link_plant(**plant['parameters'])
        lpv = plant['lpv']
        return KnownLpvSystem(
            A_terms=lpv['A_terms'], B_terms=lpv['B_terms'], H_terms=lpv['H_terms'],
            p_box=lpv['p_box'], x_box=lpv['x_box'], e_box=lpv['e_box'], name=self.config['name'],
        )

    def build_excitation(self, spec: Dict, horizon: int, seed: int):
        if spec['kind'] == 'sinusoid':
            return SinusoidExcitation(spec['amplitudes'], spec['frequencies'], noise_std=spec['noise_std'],
                                      Ts=self.Ts, horizon=horizon, seed=seed)
        if spec['kind'] == 'uniform':
            return UniformExcitation(spec['amplitude'], Ts=self.Ts, horizon=horizon, n_u=self.n_u, seed=seed)

        options = {'amplitude': spec['amplitude'], 'Ts': self.Ts}
        if 'tones' in spec:
            options['frequencies'] = tuple(tuple(tone) for tone in spec['tones'])
        if 'quiet_starts' in spec:
            options['quiet_starts'] = tuple(spec['quiet_starts'])
        for key in ('threshold', 'feedback_gain', 'quiet_length'):
            if key in spec:
                options[key] = spec[key]
        return ManipulatorExcitation(**options)

    def build_basis(self, n_p: int) -> BasisSet:
        basis = self.config['basis']
        if basis['family'] == 'polynomial':
            return polynomial_basis(n_p, basis['degree'])
        widths = basis['widths'] if len(basis['widths']) > 1 else basis['widths'][0]
        return gaussian_basis(basis['centers'], widths, include_constant=basis['include_constant'])

    # -- acquisition -------------------------------------------------------

    def acquire(self, excitation_spec: Optional[Dict] = None, L: Optional[int] = None,
                validation: bool = False) -> LpvDataset:
        acquisition = self.config['acquisition']
        spec = excitation_spec or self.config['excitation']
        L = L or acquisition['L']
        prefix = 'validation_' if validation else ''
        excitation = self.build_excitation(spec, L, self.streams[prefix + 'excitation'])
        state_noise = _noise(acquisition['state_noise'], self.streams[prefix + 'state_noise'])
        input_noise = _noise(acquisition['input_noise'], self.streams[prefix + 'input_noise'])

        if self.discrete:
            dataset = acquire_lpv_dataset(self.plant, excitation, L, input_noise=input_noise,
                                          process_noise=state_noise, Ts=self.Ts)
        else:
            dataset = acquire_dataset(self.plant, excitation, self.Ts, L, state_noise=state_noise,
                                      input_noise=input_noise, scheduling=self.scheduling,
                                      substeps=self.substeps)
        dataset.metadata.update({'config': self.config['name'], 'seed': self.seed, 'excitation': spec['kind']})
        return dataset

    def acquire_validation(self) -> Optional[LpvDataset]:
        validation = self.config.get('validation')
        if not validation:
            return None
        return self.acquire(validation['excitation'], validation.get('L'), validation=True)

    # -- estimation and design ---------------------------------------------

    def estimate(self, dataset: LpvDataset) -> List[PriorBounds]:
        """One set of priors per input channel, overrides and delta scaling applied."""
        estimation = self.config['estimation']
        overrides = {key: estimation.get(key) for key in ('delta', 'gamma', 'lambda_S', 'lambda_B')}
        priors = []
        for j in range(dataset.n_u):
            bounds = estimate_priors(
                dataset.channel(j),
                gamma_grid=estimation.get('gamma_grid'),
                inflation=estimation.get('inflation') or dfk_setting('validation_inflation'),
                knee_tolerance=estimation.get('knee_tolerance') or dfk_setting('knee_tolerance'),
                lambda_s_window=dfk_setting('lambda_s_window'),
                lambda_s_inflation=dfk_setting('lambda_s_inflation'),
                lambda_b_radius=estimation.get('lambda_b_radius') or dfk_setting('lambda_b_radius'),
                lambda_b_inflation=dfk_setting('lambda_b_inflation'),
                overrides=overrides,
                allow_missing_lambda_B=estimation.get('allow_missing_lambda_B', False),
            )
            scale = estimation.get('delta_scale', 1.0)
            if scale != 1.0:
                bounds = replace(bounds, delta=bounds.delta * scale,
                                 provenance={**bounds.provenance, 'delta_scale': scale})
            priors.append(bounds)
        return priors

    def design(self, dataset: LpvDataset, priors: Optional[Sequence[PriorBounds]] = None):
        """Design every input channel; returns (bank, reports, priors)."""
        priors = list(priors) if priors is not None else self.estimate(dataset)
        design = self.config['design']
        basis = self.build_basis(dataset.n_p)
        options = {
            'safety_margin': self.config['estimation'].get('safety_margin') or dfk_setting('safety_margin'),
            'lambda2_s': self.config['estimation'].get('lambda2_s'),
            'sparsity_threshold': design.get('sparsity_threshold') or dfk_setting('sparsity_threshold'),
            'tolerance': design.get('lp_tolerance') or dfk_setting('lp_tolerance'),
            'max_iters': design.get('lp_max_iters') or dfk_setting('lp_max_iters'),
            'max_pairs': self.max_pairs,
        }
        bank, reports = design_controller_bank(dataset, basis, priors, **options)
        return bank, reports, priors

    # -- closed loop -------------------------------------------------------

    def reference_spec(self) -> ReferenceSpec:
        reference = self.config['simulation']['reference']
        return ReferenceSpec(
            kind=reference['kind'], amplitude=reference['amplitude'], cutoff=reference['cutoff'],
            Ts=self.Ts, seed=self.streams['reference'], companion=reference['companion'],
            dwell=reference['dwell'], channel_gains=tuple(reference['channel_gains']),
        )

    def simulate(self, controller) -> ClosedLoopRun:
        simulation = self.config.get('simulation')
        if not simulation:
            raise ValueError(f"Config {self.config['name']} has no simulation section")
        T = simulation['T']
        reference = generate_reference(self.reference_spec(), T + 1)
        noise = _noise(simulation['noise'], self.streams['simulation_noise'])
        run = simulate_closed_loop(
            self.plant, controller, reference, noise=noise, T=T, Ts=self.Ts,
            scheduling=self.scheduling, substeps=self.substeps,
            divergence_limit=simulation.get('divergence_limit') or dfk_setting('divergence_limit'),
        )
        run.metadata.update({'config': self.config['name'], 'seed': self.seed})
        logger.info(f"Closed loop {self.config['name']} seed {self.seed}: RMS {run.rms_per_channel}")
        return run

    def run_trial(self) -> 'TrialResult':
        """Acquire, estimate, design and simulate; failures are captured, never raised."""
        started = time.perf_counter()
        try:
            dataset = self.acquire()
            bank, reports, _ = self.design(dataset)
            run = self.simulate(bank)
        except DfkError as exc:
            logger.warning(f"Trial with seed {self.seed} failed: {exc}")
            kind = FAILURE_KINDS.get(type(exc), 'error')
            return TrialResult(seed=self.seed, status=kind, error=str(exc),
                               seconds=time.perf_counter() - started)
        return TrialResult(
            seed=self.seed, status='ok', n_selected=sparsity_count(bank, dfk_setting('sparsity_threshold')),
            rms=run.rms_per_channel, fit_rms=input_fit_rms(bank, dataset),
            objective=float(sum(report.objective for report in reports)),
            seconds=time.perf_counter() - started,
        )


def validation_fit(pipeline: ExperimentPipeline, controller, dataset: LpvDataset) -> Dict[str, float]:
    """Open-loop RMS(u - u_hat) on design data and, when configured, fresh validation data."""
    fit = {'design_fit_rms': input_fit_rms(controller, dataset)}
    validation = pipeline.acquire_validation()
    if validation is not None:
        fit['validation_fit_rms'] = input_fit_rms(controller, validation)
    return fit


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    seed: int
    status: str
    n_selected: int = 0
    rms: List[float] = field(default_factory=list)
    fit_rms: float = float('nan')
    objective: float = float('nan')
    seconds: float = 0.0
    error: str = ''

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def row(self, n_channels: int) -> List:
        rms = self.rms if self.ok else [float('nan')] * n_channels
        return [self.seed, self.status, self.n_selected, *rms, self.fit_rms, self.objective, self.seconds]


@dataclass
class MonteCarloSummary:
    config: str
    n_trials: int
    base_seed: int
    trials: List[TrialResult]
    delta_scale: float = 1.0

    @property
    def completed(self) -> List[TrialResult]:
        return [trial for trial in self.trials if trial.ok]

    @property
    def failures(self) -> int:
        return self.n_trials - len(self.completed)

    @property
    def n_channels(self) -> int:
        return max((len(trial.rms) for trial in self.trials), default=0)

    @property
    def mean_rms(self) -> List[float]:
        done = self.completed
        if not done:
            return [float('nan')] * self.n_channels
        return [float(np.mean([trial.rms[i] for trial in done])) for i in range(self.n_channels)]

    @property
    def mean_n_selected(self) -> float:
        done = self.completed
        return float(np.mean([trial.n_selected for trial in done])) if done else float('nan')

    def header(self) -> List[str]:
        return (['seed', 'status', 'n_selected'] + [f"rms_{i + 1}" for i in range(self.n_channels)]
                + ['fit_rms', 'objective', 'seconds'])

    def as_dict(self) -> Dict:
        values = {
            'config': self.config,
            'n_trials': self.n_trials,
            'base_seed': self.base_seed,
            'delta_scale': self.delta_scale,
            'completed': len(self.completed),
            'failures': self.failures,
            'divergent': sum(trial.status == 'divergence' for trial in self.trials),
            'infeasible': sum(trial.status == 'infeasible' for trial in self.trials),
            'mean_n_selected': self.mean_n_selected,
        }
        for i, value in enumerate(self.mean_rms, start=1):
            values[f"mean_rms_{i}"] = value
        return values


def _run_trial(job) -> TrialResult:
    config, seed = job
    return ExperimentPipeline(config, seed).run_trial()


def monte_carlo(config: Dict, n_trials: int, base_seed: int = 0, workers: int = 1) -> MonteCarloSummary:
    """
    Repeat acquire -> design -> simulate with seeds base_seed + i.

    Trials are independent; with workers > 1 they run in a process pool.
    Results are ordered by seed before aggregation.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    jobs = [(config, base_seed + i) for i in range(n_trials)]
    logger.info(f"Monte Carlo {config['name']}: {n_trials} trials from seed {base_seed}, {workers} worker(s)")
    if workers > 1:
        with mp.Pool(processes=workers) as pool:
            trials = pool.map(_run_trial, jobs)
    else:
        trials = [_run_trial(job) for job in jobs]
    trials = sorted(trials, key=lambda trial: trial.seed)

    summary = MonteCarloSummary(config=config['name'], n_trials=n_trials, base_seed=base_seed, trials=trials,
                                delta_scale=config['estimation'].get('delta_scale', 1.0))
    if summary.failures:
        logger.warning(f"Monte Carlo {config['name']}: {summary.failures} of {n_trials} trials failed")
    logger.info(f"Monte Carlo {config['name']}: mean RMS {summary.mean_rms}, "
                f"mean selected {summary.mean_n_selected:.3g}")
    return summary


def degradation_study(config: Dict, delta_scales: Sequence[float], n_trials: int, base_seed: int = 0,
                      workers: int = 1) -> List[MonteCarloSummary]:
    """Monte Carlo at several inflations of delta; sparser controllers should track worse."""
    summaries = []
    for scale in delta_scales:
        if scale <= 0:
            raise ValueError("delta scales must be positive")
        scaled = json.loads(json.dumps(config))
        scaled['estimation']['delta_scale'] = float(scale)
        summaries.append(monte_carlo(scaled, n_trials, base_seed=base_seed, workers=workers))
    return summaries


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------

def json_safe(value):
    """Recursively convert numpy scalars and arrays; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(key): json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [json_safe(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


@contextmanager
def recorded_run(command: str, config_path='', output_path='', config: Optional[Dict] = None):
    """Track a command invocation as a PipelineRun row."""
    run = PipelineRun.objects.create(
        command=command,
        config_path=str(config_path or ''),
        output_path=str(output_path or ''),
        config_snapshot=json_safe(config or {}),
        status='pending',
    )
    try:
        yield run
    except Exception as exc:
        run.status = 'failed'
        run.error_message = str(exc)
        run.finished_at = timezone.now()
        run.metrics = json_safe(run.metrics)
        run.save()
        logger.error(f"{command} failed: {exc}")
        raise
    run.status = 'completed'
    run.finished_at = timezone.now()
    run.metrics = json_safe(run.metrics)
    run.config_snapshot = json_safe(run.config_snapshot)
    run.save()
