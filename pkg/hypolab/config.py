"""
Experiment declarations. One JSON document describes the model and every computation run on it, so that certification and simulation refer to the same model.

A minimal document only needs the model:

    {"model": {"kernel": {"name": "difference", "params": {"alpha": 0.2}},
               "potential": {"name": "cosine", "params": {"kappa": 0.5}},
               "domain": {"kind": "torus"}}}
"""
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from hypolab.errors import ConfigError
from hypolab.infomatrix import DirectionGrid
from hypolab.kinetic import TRANSPORTS
from hypolab.model import DirectionPair, PositionDomain, make_kernel, make_potential


def _number(value, name, positive=False, integer=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' should be a number, got {value!r}.")
    if not math.isfinite(value):
        raise ConfigError(f"'{name}' should be finite, got {value!r}.")
    if integer:
        if int(value) != value:
            raise ConfigError(f"'{name}' should be an integer, got {value!r}.")
        value = int(value)
    else:
        value = float(value)
    if positive and not value > 0:
        raise ConfigError(f"'{name}' should be positive, got {value!r}.")
    return value


def _numbers(value, name, length=None, allow_none=False):
    if value is None and allow_none:
        return None
    if not isinstance(value, (list, tuple)) or (length is not None and len(value) != length):
        expected = f'a list of {length} numbers' if length is not None else 'a list of numbers'
        raise ConfigError(f"'{name}' should be {expected}, got {value!r}.")
    return tuple(_number(v, f'{name}[{i}]') for i, v in enumerate(value))


def _range(value, name):
    values = _numbers(value, name, length=2, allow_none=True)
    if values is not None and values[0] > values[1]:
        raise ConfigError(f"'{name}' should satisfy low <= high, got {list(values)}.")
    return values


def _snapshot_times(value, name, t_end):
    times = _numbers(value, name)
    outside = [t for t in times if not 0 <= t <= t_end]
    if outside:
        raise ConfigError(f"'{name}' should lie in [0, t_end={t_end:g}], got {list(outside)}.")
    return times


def _table(data, name, section_cls):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"Section '{name}' should be a table, got {data!r}.")
    known = {f.name for f in fields(section_cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys {unknown} in section '{name}'. Known keys are {sorted(known)}.")
    return data


def _params(data, name):
    params = data.get('params', {})
    if not isinstance(params, dict):
        raise ConfigError(f"'{name}.params' should be a table.")
    for key, value in params.items():
        if not isinstance(value, str):
            _number(value, f'{name}.params.{key}')
    return dict(params)


def _to_json(value):
    if isinstance(value, tuple):
        return [_to_json(v) for v in value]
    if isinstance(value, dict):
        return {key: _to_json(v) for key, v in value.items()}
    return value


@dataclass(frozen=True)
class ModelSection:
    kernel: dict = field(default_factory=lambda: {'name': 'zero', 'params': {}})
    potential: dict = field(default_factory=lambda: {'name': 'zero', 'params': {}})
    domain: dict = field(default_factory=lambda: {'kind': 'torus', 'period': 2 * math.pi, 'dimension': 1})

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'model', cls)
        entries = {}
        for name in ('kernel', 'potential'):
            entry = data.get(name, {'name': 'zero'})
            if not isinstance(entry, dict) or not isinstance(entry.get('name'), str):
                raise ConfigError(f"'model.{name}' should be a table with a 'name'.")
            extra = sorted(set(entry) - {'name', 'params'})
            if extra:
                raise ConfigError(f"Unknown keys {extra} in 'model.{name}'.")
            entries[name] = {'name': entry['name'], 'params': _params(entry, f'model.{name}')}
        domain = data.get('domain', {'kind': 'torus'})
        if not isinstance(domain, dict):
            raise ConfigError("'model.domain' should be a table.")
        try:
            domain = PositionDomain(**domain).to_dict()
        except (TypeError, ValueError) as err:
            raise ConfigError(f'Invalid domain {domain}: {err}') from err
        section = cls(entries['kernel'], entries['potential'], domain)
        section.build()
        return section

    def build(self):
        """
        Returns the (kernel, potential, domain) triple. Raises ConfigError on unknown builtins, invalid parameters or a non periodic potential on a torus.
        """
        kernel = make_kernel(self.kernel['name'], **self.kernel['params'])
        potential = make_potential(self.potential['name'], **self.potential['params'])
        domain = PositionDomain(**self.domain)
        if domain.kind == 'torus' and not potential.periodic:
            raise ConfigError(f"Potential '{potential.name}' is not periodic and cannot be used on a torus.")
        return kernel, potential, domain


@dataclass(frozen=True)
class DirectionSection:
    z1: float = 1.0
    z2: float = 0.3
    search: dict = None

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'direction', cls)
        z1 = _number(data.get('z1', 1.0), 'direction.z1')
        z2 = _number(data.get('z2', 0.3), 'direction.z2')
        if z1 == 0:
            raise ConfigError("'direction.z1' should be nonzero, the metric aa^T + zz^T is singular for z1 = 0.")
        search = data.get('search')
        if search is not None:
            if not isinstance(search, dict) or set(search) != {'z1', 'z2'}:
                raise ConfigError("'direction.search' should be a table with keys 'z1' and 'z2'.")
            search = {key: _numbers(search[key], f'direction.search.{key}', length=3) for key in ('z1', 'z2')}
            for key, (low, high, n) in search.items():
                if int(n) != n or n < 1 or low > high:
                    raise ConfigError(f"'direction.search.{key}' should be [low, high, n] with low <= high and n >= 1.")
            low, high, n = search['z1']
            if 0.0 in np.linspace(low, high, int(n)):
                raise ConfigError("'direction.search.z1' should not contain 0, the metric is singular for z1 = 0.")
        return cls(z1, z2, search)

    @property
    def pair(self):
        return DirectionPair(self.z1, self.z2)


@dataclass(frozen=True)
class CertificationSection:
    points_per_axis: int = 16

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'certification', cls)
        return cls(_number(data.get('points_per_axis', 16), 'certification.points_per_axis', positive=True, integer=True))


@dataclass(frozen=True)
class ChecksSection:
    """
    Declared eigenvalue bounds and constants of the closed-form checkers. Every entry is optional; checkers whose inputs are missing are skipped.
    """
    u_range: tuple = None
    wxx_range: tuple = None
    wxy_range: tuple = None
    vxx_range: tuple = None
    delta: float = None
    stated_threshold: float = None
    lambda_U: float = None
    wxx_eig: float = None
    wxy_eig: float = None
    wdiff_eig: float = None

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'checks', cls)
        values = {name: _range(data.get(name), f'checks.{name}')
                  for name in ('u_range', 'wxx_range', 'wxy_range', 'vxx_range')}
        for name in ('delta', 'stated_threshold', 'wxx_eig', 'wxy_eig', 'wdiff_eig'):
            values[name] = _number(data.get(name), f'checks.{name}', allow_none=True)
        values['lambda_U'] = _number(data.get('lambda_U'), 'checks.lambda_U', positive=True, allow_none=True)
        return cls(**values)


@dataclass(frozen=True)
class PdeSection:
    nx: int = 64
    nv: int = 64
    vmax: float = 6.0
    dt: float = 1e-3
    t_end: float = 2.0
    stride: int = 10
    transport: str = 'spectral'
    tol: float = 1e-10
    damping: float = 0.5
    max_iter: int = 1000
    initial: dict = field(default_factory=lambda: {'kind': 'perturbed', 'amplitude': 0.1})
    # overrides the certified lambda in the dissipation verdict
    lambda_: float = None
    fit_window: tuple = None
    snapshot_times: tuple = ()

    @classmethod
    def from_dict(cls, data):
        data = dict(_table({('lambda_' if k == 'lambda' else k): v for k, v in (data or {}).items()}, 'pde', cls))
        defaults = cls()
        values = {}
        for name in ('nx', 'nv', 'stride', 'max_iter'):
            values[name] = _number(data.get(name, getattr(defaults, name)), f'pde.{name}', positive=True, integer=True)
        for name in ('vmax', 'dt', 't_end', 'tol', 'damping'):
            values[name] = _number(data.get(name, getattr(defaults, name)), f'pde.{name}', positive=True)
        if values['vmax'] < 5:
            raise ConfigError("'pde.vmax' should be at least 5.")
        if values['damping'] > 1:
            raise ConfigError("'pde.damping' should be in (0, 1].")
        transport = data.get('transport', defaults.transport)
        if transport not in TRANSPORTS:
            raise ConfigError(f"'pde.transport' should be one of {TRANSPORTS}, got {transport!r}.")
        values['transport'] = transport
        initial = data.get('initial', defaults.initial)
        if not isinstance(initial, dict) or initial.get('kind') not in ('equilibrium', 'perturbed', 'gaussian'):
            raise ConfigError("'pde.initial' should be a table whose 'kind' is 'equilibrium', 'perturbed' or 'gaussian'.")
        for key, value in initial.items():
            if key != 'kind':
                _number(value, f'pde.initial.{key}', allow_none=True)
        values['initial'] = dict(initial)
        values['lambda_'] = _number(data.get('lambda_'), 'pde.lambda', allow_none=True)
        values['fit_window'] = _range(data.get('fit_window'), 'pde.fit_window')
        values['snapshot_times'] = _snapshot_times(data.get('snapshot_times', []), 'pde.snapshot_times',
                                                   values['t_end'])
        return cls(**values)


@dataclass(frozen=True)
class ParticlesSection:
    n: int = 2000
    dt: float = 1e-3
    t_end: float = 5.0
    seed: int = 0
    snapshot_times: tuple = ()

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'particles', cls)
        defaults = cls()
        n = _number(data.get('n', defaults.n), 'particles.n', positive=True, integer=True)
        if n < 2:
            raise ConfigError("'particles.n' should be at least 2.")
        seed = _number(data.get('seed', defaults.seed), 'particles.seed', integer=True)
        if seed < 0:
            raise ConfigError("'particles.seed' should be nonnegative.")
        t_end = _number(data.get('t_end', defaults.t_end), 'particles.t_end', positive=True)
        return cls(n=n,
                   dt=_number(data.get('dt', defaults.dt), 'particles.dt', positive=True),
                   t_end=t_end,
                   seed=seed,
                   snapshot_times=_snapshot_times(data.get('snapshot_times', []), 'particles.snapshot_times', t_end))


@dataclass(frozen=True)
class OutputsSection:
    directory: str = 'hypolab_output'
    json: bool = True
    csv: bool = True
    latex: bool = False

    @classmethod
    def from_dict(cls, data):
        data = _table(data, 'outputs', cls)
        directory = data.get('directory', cls.directory)
        if not isinstance(directory, str) or not directory:
            raise ConfigError("'outputs.directory' should be a non empty string.")
        flags = {}
        for name in ('json', 'csv', 'latex'):
            value = data.get(name, getattr(cls, name))
            if not isinstance(value, bool):
                raise ConfigError(f"'outputs.{name}' should be true or false.")
            flags[name] = value
        return cls(directory, **flags)


_SECTIONS = {'model': ModelSection,
             'direction': DirectionSection,
             'certification': CertificationSection,
             'checks': ChecksSection,
             'pde': PdeSection,
             'particles': ParticlesSection,
             'outputs': OutputsSection}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    direction: DirectionSection = field(default_factory=DirectionSection)
    certification: CertificationSection = field(default_factory=CertificationSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    pde: PdeSection = field(default_factory=PdeSection)
    particles: ParticlesSection = field(default_factory=ParticlesSection)
    outputs: OutputsSection = field(default_factory=OutputsSection)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError('An experiment should be a table.')
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f'Unknown sections {unknown}. Known sections are {sorted(_SECTIONS)}.')
        if 'model' not in data:
            raise ConfigError("The 'model' section is required.")
        return cls(**{name: section.from_dict(data.get(name)) for name, section in _SECTIONS.items()})

    def to_dict(self):
        data = {name: _to_json(asdict(getattr(self, name))) for name in _SECTIONS}
        data['pde']['lambda'] = data['pde'].pop('lambda_')
        return data

    def build_model(self):
        return self.model.build()


def resolve_threads(flag=None, environ=None):
    """
    Thread count from the --threads flag, then the HYPO_THREADS environment variable, then 1.
    """
    environ = os.environ if environ is None else environ
    value = flag if flag is not None else environ.get('HYPO_THREADS', 1)
    try:
        threads = int(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f'Invalid thread count {value!r}.') from err
    if threads < 1:
        raise ConfigError(f'Thread count should be positive, got {threads}.')
    return threads


def parse_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f'Invalid JSON: {err}') from err
    return ExperimentConfig.from_dict(data)


def load_config(path):
    try:
        with open(path, 'r', encoding='utf8') as file:
            text = file.read()
    except OSError as err:
        raise ConfigError(f'Cannot read config {path}: {err}') from err
    return parse_config(text)


def dump_config(config, path=None):
    """
    Serializes a config to JSON text, also written to 'path' when given.
    """
    text = json.dumps(config.to_dict(), indent=2)
    if path is not None:
        with open(path, 'w', encoding='utf8') as file:
            file.write(text + '\n')
    return text


def search_grid(direction):
    """
    DirectionGrid of a 'direction.search' table.
    """
    return DirectionGrid.from_ranges(direction.search['z1'], direction.search['z2'])
