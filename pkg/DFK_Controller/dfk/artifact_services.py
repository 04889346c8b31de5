"""
Artifact files exchanged between pipeline stages.

  dataset    CSV `k, p_1.., x_1.., u_1..` plus a trailing row holding only
             the extra state sample, and a `.meta` key-value sidecar
  controller text file: basis block, n_x and nonzero (j, l, i, value) terms
             per channel
  reports    key-value text (`key = json value`)
  runs       CSV `t, r_1.., x_1.., u.., TE`

Floats are written with repr so every file reads back to the same bits.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np

from .basis_services import parse_basis, serialize_basis
from .closed_loop_services import ClosedLoopRun
from .design_services import Controller, ControllerBank, DesignReport, as_bank
from .exceptions import DatasetFormatError
from .plant_services import LpvDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# Key-value text
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def dump_key_values(values: Dict) -> str:
    """One `key = json` line per entry, in insertion order; numpy values become plain JSON."""
    lines = []
    for key, value in values.items():
        lines.append(f"{key} = {json.dumps(value, default=_jsonable, sort_keys=True)}")
    return '\n'.join(lines) + '\n'


def parse_key_values(text: str) -> Dict:
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if ' = ' not in line:
            raise DatasetFormatError(f"Line {number}: expected 'key = value'")
        key, raw = line.split(' = ', 1)
        try:
            values[key.strip()] = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"Line {number}: bad value for {key.strip()}: {exc}") from exc
    return values


def write_key_values(path: PathLike, values: Dict) -> Path:
    path = Path(path)
    path.write_text(dump_key_values(values))
    return path


def read_key_values(path: PathLike) -> Dict:
    return parse_key_values(Path(path).read_text())


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def dataset_header(n_p: int, n_x: int, n_u: int) -> List[str]:
    return (['k'] + [f"p_{i + 1}" for i in range(n_p)] + [f"x_{i + 1}" for i in range(n_x)]
            + [f"u_{i + 1}" for i in range(n_u)])


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.meta')


def write_dataset(dataset: LpvDataset, path: PathLike) -> Path:
    """
    Write the L measured rows and a trailing row with only x_L, then the
    `.meta` sidecar (dimensions, Ts, scheduling and the dataset metadata).
    """
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(dataset_header(dataset.n_p, dataset.n_x, dataset.n_u))
        for k in range(dataset.L):
            writer.writerow([k] + [repr(float(v)) for v in dataset.p[k]]
                            + [repr(float(v)) for v in dataset.x[k]]
                            + [repr(float(v)) for v in dataset.u[k]])
        writer.writerow([dataset.L] + [''] * dataset.n_p + [repr(float(v)) for v in dataset.x[dataset.L]]
                        + [''] * dataset.n_u)

    meta = {
        'L': dataset.L, 'Ts': dataset.Ts, 'n_p': dataset.n_p, 'n_x': dataset.n_x, 'n_u': dataset.n_u,
        'scheduling': dataset.scheduling,
    }
    meta.update({key: value for key, value in dataset.metadata.items() if key not in meta})
    write_key_values(sidecar_path(path), meta)
    logger.info(f"Wrote dataset with L={dataset.L} to {path}")
    return path


def read_dataset(path: PathLike) -> LpvDataset:
    path = Path(path)
    try:
        meta = read_key_values(sidecar_path(path))
        n_p, n_x, n_u = int(meta['n_p']), int(meta['n_x']), int(meta['n_u'])
        with path.open(newline='') as handle:
            rows = list(csv.reader(handle))
    except (OSError, KeyError, ValueError) as exc:
        raise DatasetFormatError(f"Cannot read dataset {path}: {exc}") from exc

    header, body = rows[0], rows[1:]
    if header != dataset_header(n_p, n_x, n_u):
        raise DatasetFormatError(f"Unexpected dataset header in {path}")
    if len(body) < 3:
        raise DatasetFormatError(f"Dataset {path} has too few rows")
    try:
        data_rows, last = body[:-1], body[-1]
        p = np.array([[float(v) for v in row[1:1 + n_p]] for row in data_rows])
        x = np.array([[float(v) for v in row[1 + n_p:1 + n_p + n_x]] for row in body])
        u = np.array([[float(v) for v in row[1 + n_p + n_x:]] for row in data_rows])
        if any(last[1:1 + n_p]) or any(last[1 + n_p + n_x:]):
            raise DatasetFormatError("Trailing row must only carry the extra state sample")
    except ValueError as exc:
        raise DatasetFormatError(f"Bad number in {path}: {exc}") from exc

    metadata = {key: value for key, value in meta.items() if key not in ('n_p', 'n_x', 'n_u', 'Ts', 'scheduling')}
    return LpvDataset(p=p, x=x, u=u, Ts=float(meta['Ts']), scheduling=meta.get('scheduling', 'identity'),
                      metadata=metadata)


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------

def dump_controller(controller) -> str:
    """Text form of a controller or bank. Only nonzero coefficients are listed, 1-based (j, l, i)."""
    bank = as_bank(controller)
    lines = ['# DFK controller', f"channels = {bank.n_u}"]
    for index, channel in enumerate(bank.channels, start=1):
        lines.append(f"[channel {index}]")
        lines.extend(serialize_basis(channel.basis))
        lines.append(f"n_x = {channel.n_x}")
        for (j, l, i) in zip(*np.nonzero(channel.coefficients)):
            lines.append(f"a {j + 1} {l + 1} {i + 1} = {float(channel.coefficients[j, l, i])!r}")
    return '\n'.join(lines) + '\n'


def parse_controller(text: str) -> ControllerBank:
    """
    Inverse of dump_controller. Coefficients not listed are zero. Malformed
    lines and indices outside the declared basis raise DatasetFormatError.
    """
    sections: List[Tuple[Dict, List[str], List[Tuple[int, int, int, float]]]] = []
    declared = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if line.startswith('[channel'):
            sections.append(({}, [], []))
            continue
        if ' = ' not in line:
            raise DatasetFormatError(f"Controller line {number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split(' = ', 1))
        if key == 'channels':
            declared = int(value)
            continue
        if not sections:
            raise DatasetFormatError(f"Controller line {number}: entry outside a channel block")
        entries, gaussians, terms = sections[-1]
        if key.startswith('a '):
            try:
                j, l, i = (int(v) for v in key.split()[1:])
                terms.append((j - 1, l - 1, i - 1, float(value)))
            except ValueError as exc:
                raise DatasetFormatError(f"Controller line {number}: bad coefficient entry: {exc}") from exc
        elif key == 'basis.gaussian':
            gaussians.append(value)
        else:
            entries[key] = value

    if declared is not None and declared != len(sections):
        raise DatasetFormatError(f"Controller declares {declared} channels, found {len(sections)}")
    channels = []
    for entries, gaussians, terms in sections:
        basis = parse_basis(entries, gaussians)
        controller = Controller.zero(basis, int(entries['n_x']))
        for j, l, i, value in terms:
            if not (0 <= j < 2 and 0 <= l < controller.n_x and 0 <= i < basis.m):
                raise DatasetFormatError(f"Coefficient a {j + 1} {l + 1} {i + 1} is outside the controller shape")
            controller.coefficients[j, l, i] = value
        channels.append(controller)
    if not channels:
        raise DatasetFormatError("Controller file has no channels")
    return ControllerBank(channels)


def write_controller(controller, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(dump_controller(controller))
    return path


def read_controller(path: PathLike) -> ControllerBank:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DatasetFormatError(f"Cannot read controller {path}: {exc}") from exc
    return parse_controller(text)


def write_design_report(reports: Iterable[DesignReport], path: PathLike, extra: Dict = None) -> Path:
    values = dict(extra or {})
    for report in reports:
        prefix = f"channel{report.channel + 1}."
        values.update({prefix + key: value for key, value in report.as_dict().items()})
        values[prefix + 'provenance'] = report.provenance
    return write_key_values(path, values)


# ---------------------------------------------------------------------------
# Closed-loop runs
# ---------------------------------------------------------------------------

def write_run(run: ClosedLoopRun, path: PathLike) -> Path:
    path = Path(path)
    n_x, n_u = run.r.shape[1], run.u.shape[1]
    u_names = ['u'] if n_u == 1 else [f"u_{i + 1}" for i in range(n_u)]
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['t'] + [f"r_{i + 1}" for i in range(n_x)] + [f"x_{i + 1}" for i in range(n_x)]
                        + u_names + ['TE'])
        for k in range(run.T):
            writer.writerow([repr(float(run.t[k]))] + [repr(float(v)) for v in run.r[k]]
                            + [repr(float(v)) for v in run.x[k]] + [repr(float(v)) for v in run.u[k]]
                            + [repr(float(run.te[k]))])
    return path


def write_rows(path: PathLike, header: List[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path
