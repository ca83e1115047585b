"""Run configuration: defaults, flat key=value config files, CLI overrides.

Precedence is CLI flag > config file > built-in default. Unknown config keys
are rejected so typos fail loudly.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .network import HyperParams

DEFAULT_PR_THRESHOLDS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


@dataclass
class RunConfig:
    # network / training
    layers: int = 3
    p: int = 100
    q: int = 100
    lr: float = 0.1
    momentum: float = 0.9
    mu: float = 5.0
    nu: float = 0.5
    iters: int = 500
    min_labels: int = 3
    seed: int = 0
    eps: float = 1e-5
    tv_bounds: str = "full"
    epochs: int = 1
    # baselines
    k: int = 17
    window: int = 5
    max_iter: int = 100
    tau: float = 500.0
    sigma: float = 1.0
    min_size: int = 0
    # evaluation
    gt_mode: str = "all"
    pr_thresholds: str = ",".join(str(t) for t in DEFAULT_PR_THRESHOLDS)
    miou_aggregate: str = "pairs"  # pairs | global
    # paths
    input: str = None
    out: str = None
    viz: str = None
    model: str = None
    scribbles: str = None
    gt_dir: str = None
    pred_dir: str = None
    out_dir: str = None
    report: str = None

    def hyperparams(self):
        return HyperParams(
            layers=self.layers,
            feat_dim=self.p,
            max_labels=self.q,
            lr=self.lr,
            momentum=self.momentum,
            mu=self.mu,
            nu=self.nu,
            iters=self.iters,
            min_labels=self.min_labels,
            seed=self.seed,
            eps=self.eps,
            tv_bounds=self.tv_bounds,
        )

    def threshold_list(self):
        try:
            values = [float(t) for t in str(self.pr_thresholds).split(",") if t.strip()]
        except ValueError:
            raise ValueError(f"bad pr_thresholds value: {self.pr_thresholds!r}") from None
        if not values:
            raise ValueError("pr_thresholds must name at least one threshold")
        return values


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return str(raw)


def parse_config_file(path):
    """Read a flat key=value file into a dict; unknown keys are an error."""
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from None
    return values


def build_config(config_path=None, overrides=None):
    """Layer defaults, then the config file, then non-None CLI overrides."""
    cfg = RunConfig()
    if config_path is not None:
        for key, value in parse_config_file(config_path).items():
            setattr(cfg, key, value)
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in _FIELD_TYPES:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    return cfg
