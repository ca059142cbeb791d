"""Flat ``section.key = value`` experiment configuration.

Files are INI-style lines without section headers; every key carries its
section as a dotted prefix.  ``#`` and ``;`` start comments.
"""

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field, fields

from .train import TrainConfig


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


def _floats(s):
    s = s.strip()
    if ":" in s:
        lo, hi, step = (float(p) for p in s.split(":"))
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(p) for p in s.split(",") if p.strip()]


def _ints(s):
    return [int(p) for p in s.split(",") if p.strip()]


def _strs(s):
    return [p.strip() for p in s.split(",") if p.strip()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class DataSection:
    source: str = "synthetic"   # synthetic | idx | dir
    n_train: int = 2000
    n_test: int = 500
    dim: int = 64
    classes: int = 4
    separation: float = 4.0
    sigma: float = 0.1
    seed: int = 0
    dir: str = ""
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    idx_side: int = 8


@dataclass
class ModelSection:
    hidden: list = field(default_factory=lambda: [64, 64])
    neuron: str = "LIF"
    T: int = 4
    encoder: str = "direct"
    lam: float = 0.5
    v_th: float = 1.0
    gain: float = 4.0
    detach_reset: bool = False
    checkpoint: str = ""


@dataclass
class AttackSection:
    method: str = "sapgd"
    eps: float = 8 / 255
    n_iter: int = 100
    surrogate: str = "assg"     # assg | atan | triangle
    alpha: float = 4.0
    A: float = 0.87
    beta1: float = 0.9
    beta2: float = 0.9
    gamma: float = 1.5
    M0: float = 1.0
    D0: float = 0.0
    eot_samples: int = 10
    n_samples: int = 500
    loss: str = "tet"
    random_start: bool = False
    assg_reset_on_restart: bool = True
    seed: int = 0


@dataclass
class SweepSection:
    kind: str = "all"           # all | fig4 | fig5 | gamma
    A_grid: list = field(default_factory=lambda: _floats("0.82:0.90:0.01"))
    alpha_grid: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    methods: list = field(default_factory=lambda: ["pgd", "mifgsm", "apgd", "adampgd", "sapgd"])
    budgets: list = field(default_factory=lambda: [10, 50, 100, 400, 1000])
    gamma_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.5, 3.0])
    fig4_method: str = "sapgd"


@dataclass
class ReportSection:
    out: str = "out"


_SECTIONS = {"data": DataSection, "model": ModelSection, "train": TrainConfig,
             "attack": AttackSection, "sweep": SweepSection, "report": ReportSection}

_LIST_PARSERS = {("model", "hidden"): _ints, ("sweep", "A_grid"): _floats,
                 ("sweep", "alpha_grid"): _floats, ("sweep", "methods"): _strs,
                 ("sweep", "budgets"): _ints, ("sweep", "gamma_grid"): _floats}


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackSection = field(default_factory=AttackSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    report: ReportSection = field(default_factory=ReportSection)

    def canonical(self):
        lines = []
        for sec in _SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                if f.init:
                    lines.append(f"{sec}.{f.name} = {getattr(obj, f.name)!r}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def set_seed(self, seed):
        self.data.seed = seed
        self.train.seed = seed
        self.attack.seed = seed


def parse_config(text, base_dir="."):
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   interpolation=None)
    cp.optionxform = str
    cp.read_string("[config]\n" + text)
    raw = dict(cp["config"])
    values = {sec: {} for sec in _SECTIONS}
    problems = []
    for key, val in raw.items():
        sec, _, name = key.partition(".")
        cls = _SECTIONS.get(sec)
        known = {f.name: f for f in fields(cls)} if cls else {}
        if not name or name not in known or not known[name].init:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[sec][name] = _convert(sec, name, known[name], val)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    try:
        cfg = ExperimentConfig(**{sec: _SECTIONS[sec](**kw) for sec, kw in values.items()})
    except ValueError as exc:
        raise ConfigError(problems + [str(exc)]) from exc
    try:
        validate(cfg, base_dir)
    except ConfigError as exc:
        problems += exc.problems
    if problems:
        raise ConfigError(problems)
    return cfg


def _convert(sec, name, f, val):
    parser = _LIST_PARSERS.get((sec, name))
    if parser is not None:
        return parser(val)
    default = f.default
    if isinstance(default, bool):
        return _bool(val)
    if isinstance(default, int):
        return int(val)
    if isinstance(default, float):
        return float(val)
    return val.strip()


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)))


def validate(cfg, base_dir="."):
    problems = []
    d, m, a, s = cfg.data, cfg.model, cfg.attack, cfg.sweep
    if d.source not in ("synthetic", "idx", "dir"):
        problems.append("data.source must be synthetic, idx or dir")
    if d.classes < 2:
        problems.append("data.classes must be >= 2")
    if d.sigma <= 0:
        problems.append("data.sigma must be positive")
    if d.separation < 0:
        problems.append("data.separation must be non-negative")
    if d.source == "idx":
        for key in ("idx_train_images", "idx_train_labels", "idx_test_images", "idx_test_labels"):
            p = getattr(d, key)
            if not p or not os.path.exists(os.path.join(base_dir, p)):
                problems.append(f"data.{key}: file not found: {p!r}")
    if d.source == "dir" and not os.path.isdir(os.path.join(base_dir, d.dir)):
        problems.append(f"data.dir: directory not found: {d.dir!r}")
    if m.checkpoint and not os.path.isdir(os.path.join(base_dir, m.checkpoint)):
        problems.append(f"model.checkpoint: directory not found: {m.checkpoint!r}")
    if m.neuron not in ("LIF", "LIF2", "IF", "PSN"):
        problems.append("model.neuron must be LIF, LIF2, IF or PSN")
    if m.T < 1:
        problems.append("model.T must be >= 1")
    if m.encoder not in ("direct", "poisson"):
        problems.append("model.encoder must be direct or poisson")
    if m.neuron in ("LIF", "LIF2") and not 0 < m.lam < 1:
        problems.append("model.lam must lie in (0, 1)")
    if not m.hidden:
        problems.append("model.hidden needs at least one layer")
    if a.surrogate not in ("assg", "atan", "triangle"):
        problems.append("attack.surrogate must be assg, atan or triangle")
    if not 0 < a.A < 1:
        problems.append("attack.A must lie in (0, 1)")
    for key in ("beta1", "beta2"):
        if not 0 < getattr(a, key) < 1:
            problems.append(f"attack.{key} must lie in (0, 1)")
    if a.gamma < 0 or a.M0 <= 0 or a.D0 < 0:
        problems.append("attack.gamma >= 0, attack.M0 > 0 and attack.D0 >= 0 are required")
    if a.alpha <= 0:
        problems.append("attack.alpha must be positive")
    if a.eps < 0 or a.n_iter < 1:
        problems.append("attack.eps >= 0 and attack.n_iter >= 1 are required")
    if m.encoder == "poisson" and a.eot_samples < 1:
        problems.append("attack.eot_samples must be >= 1 with a poisson encoder")
    if s.kind not in ("all", "fig4", "fig5", "gamma"):
        problems.append("sweep.kind must be all, fig4, fig5 or gamma")
    if any(not 0 < v < 1 for v in s.A_grid):
        problems.append("sweep.A_grid values must lie in (0, 1)")
    if any(v <= 0 for v in s.alpha_grid):
        problems.append("sweep.alpha_grid values must be positive")
    if any(v < 0 for v in s.gamma_grid):
        problems.append("sweep.gamma_grid values must be non-negative")
    if problems:
        raise ConfigError(problems)
    return cfg
