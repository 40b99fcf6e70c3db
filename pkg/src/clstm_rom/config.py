"""Experiment configuration: a YAML mapping with a fixed schema.

Unknown keys and wrongly typed values are rejected with the line they
appear on.  See README for the full key list.
"""

from dataclasses import dataclass, field, fields, replace

import yaml

SYSTEMS = ("duffing", "predator_prey", "surrogate", "external-csv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetSection:
    hidden: int = 64
    channels: int = 32
    width: int = 3
    stride: int = 1
    residual: bool = False
    epochs: int = 500
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 1.0
    patience: int = 50
    min_delta: float = 1e-8
    input_noise: float = 0.0


@dataclass(frozen=True)
class PodSection:
    energy_target: float = 0.9999
    coeff_cap: int = None
    n_i: int = 0
    blocks: int = 2


@dataclass(frozen=True)
class SurrogateSection:
    n: int = 200
    periodic_modes: int = 3
    transient_modes: int = 3
    fluctuation_modes: int = 0
    fluctuation_amplitude: float = 0.0
    decay: float = 0.6
    omega0: float = 1.0
    omega_slope: float = 0.5
    theta_ref: float = 0.0
    swing_in_steps: int = 0
    noise: float = 0.0
    bank_seed: int = 1234


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "duffing"
    theta: tuple = None
    theta_range: tuple = None
    theta_count: int = None
    test_theta: tuple = None
    test_count: int = 8
    k: int = 1
    w: int = 200
    m: int = 1
    stride: int = 1
    window_stride: int = 1
    dt: float = None
    steps: int = 10_000
    x0: tuple = None
    horizon: int = 1000
    seed: int = 0
    data_dir: str = None
    out: str = "out"
    first_stage: NetSection = field(default_factory=NetSection)
    second_stage: NetSection = field(default_factory=NetSection)
    pod: PodSection = field(default_factory=PodSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)

    def training_thetas(self):
        import numpy as np

        if self.theta is not None:
            return np.asarray(self.theta, dtype=np.float64)
        lo, hi = self.theta_range
        return np.linspace(lo, hi, self.theta_count)

    def test_thetas(self):
        import numpy as np

        if self.test_theta is not None:
            return np.asarray(self.test_theta, dtype=np.float64)
        th = self.training_thetas()
        rng = np.random.default_rng([self.seed, 7919])
        return np.sort(rng.uniform(th.min(), th.max(), size=self.test_count))

    def to_dict(self):
        from dataclasses import asdict

        d = asdict(self)
        for key in ("theta", "theta_range", "test_theta", "x0"):
            if d[key] is not None:
                d[key] = [float(v) for v in d[key]]
        return d


_SECTIONS = {
    "first_stage": NetSection,
    "second_stage": NetSection,
    "pod": PodSection,
    "surrogate": SurrogateSection,
}
_LISTS = {"theta", "theta_range", "test_theta", "x0"}
_OPTIONAL = {"theta", "theta_range", "theta_count", "test_theta", "dt", "x0", "data_dir", "coeff_cap"}


def _expected_type(cls, name):
    default = next(f for f in fields(cls) if f.name == name).default
    if name in _LISTS:
        return tuple
    if name in ("dt", "lr", "lr_decay", "min_delta", "energy_target", "decay", "omega0",
                "omega_slope", "theta_ref", "fluctuation_amplitude", "input_noise", "noise"):
        return float
    if name in ("system", "data_dir", "out"):
        return str
    if isinstance(default, bool):
        return bool
    return int


def _coerce(value, kind, where):
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind is str:
        if isinstance(value, str):
            return value
    elif kind is tuple:
        if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}")


def _lines(node, prefix=""):
    """Map dotted key paths to 1-based source lines."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + str(k.value)
            out[path] = k.start_mark.line + 1
            out.update(_lines(v, path + "."))
    return out


def _build(cls, data, lines, prefix, source):
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: section {prefix.rstrip('.') or 'root'} must be a mapping")
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = prefix + str(key)
        where = f"{source}:{lines.get(path, '?')}: {path}"
        if key not in known:
            raise ConfigError(f"{where}: unknown key")
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value or {}, lines, path + ".", source)[0]
            continue
        if value is None and key in _OPTIONAL:
            kwargs[key] = None
            continue
        kwargs[key] = _coerce(value, _expected_type(cls, key), where)
    return cls(**kwargs), kwargs


def validate(cfg, lines=None, source="<config>"):
    lines = lines or {}

    def err(key, msg):
        raise ConfigError(f"{source}:{lines.get(key, '?')}: {key}: {msg}")

    if cfg.system not in SYSTEMS:
        err("system", f"must be one of {', '.join(SYSTEMS)}")
    if cfg.system != "external-csv":
        if cfg.theta is None and cfg.theta_range is None:
            err("theta", "give a theta list or theta_range + theta_count")
        if cfg.theta is not None and len(cfg.theta) == 0:
            err("theta", "must not be empty")
        if cfg.theta is None:
            if len(cfg.theta_range) != 2 or cfg.theta_count is None or cfg.theta_count < 1:
                err("theta_range", "needs [lo, hi] and theta_count >= 1")
    elif not cfg.data_dir:
        err("data_dir", "external-csv needs data_dir")
    for key in ("k", "w", "m", "stride", "window_stride", "steps", "horizon", "test_count"):
        if getattr(cfg, key) < 1:
            err(key, "must be >= 1")
    if cfg.dt is not None and cfg.dt <= 0:
        err("dt", "must be > 0")
    for sec in ("first_stage", "second_stage"):
        net = getattr(cfg, sec)
        for key in ("hidden", "channels", "width", "stride", "epochs", "batch_size", "patience"):
            if getattr(net, key) < 1:
                err(f"{sec}.{key}", "must be >= 1")
        if net.width % 2 == 0:
            err(f"{sec}.width", "must be odd (same padding)")
        if net.lr <= 0:
            err(f"{sec}.lr", "must be > 0")
        if net.input_noise < 0:
            err(f"{sec}.input_noise", "must be >= 0")
    if not 0 < cfg.pod.energy_target <= 1:
        err("pod.energy_target", "must be in (0, 1]")
    if cfg.pod.coeff_cap is not None and cfg.pod.coeff_cap < 1:
        err("pod.coeff_cap", "must be >= 1")
    if cfg.pod.n_i < 0:
        err("pod.n_i", "must be >= 0")
    if cfg.system in ("duffing", "predator_prey", "surrogate"):
        n_train = cfg.theta_count if cfg.theta is None else len(set(cfg.theta))
        if cfg.k > n_train:
            err("k", f"k={cfg.k} exceeds the {n_train} distinct training parameters")
        available = (cfg.steps + (1 if cfg.system != "surrogate" else 0) - 1) // cfg.stride + 1
        if cfg.system == "surrogate":
            available -= cfg.pod.n_i
        if cfg.w + cfg.m > available:
            err("w", f"w + m = {cfg.w + cfg.m} exceeds the {available} subsampled steps available; "
                     f"raise steps or lower w, m or stride")
    return cfg


def loads(text, source="<config>"):
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        # the construct's start is more useful than where the parser gave up
        mark = getattr(exc, "context_mark", None) or getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else "?"
        raise ConfigError(f"{source}:{line}: YAML syntax error: {exc}") from None
    data = data or {}
    lines = _lines(node) if node is not None else {}
    cfg, _ = _build(ExperimentConfig, data, lines, "", source)
    return validate(cfg, lines, source)


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return loads(text, str(path))


def from_dict(d):
    """Rebuild a config from its :meth:`ExperimentConfig.to_dict` echo."""
    return loads(yaml.safe_dump(d))


def override(cfg, **changes):
    return validate(replace(cfg, **changes))
