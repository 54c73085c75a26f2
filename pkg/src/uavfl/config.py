"""Experiment configuration: defaults, flat key=value files, validation.

A config file is one `key = value` pair per line with `#` comments. Missing
keys fall back to the defaults below; unknown keys are rejected. Validation
collects every violation before raising so a bad file is reported once.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["ConfigError", "SimConfig", "parse_config", "parse_config_text", "serialize_config"]


class ConfigError(ValueError):
    """Raised with the full list of config violations."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class SimConfig:
    # run
    rounds: int = 100
    num_uavs: int = 30
    select_k: int = 10
    scheme: str = "opt"  # opt | discard | async
    b: int = 2
    tau_max_s: float = 9.0
    seed: int = 0
    aggregate: str = "uniform"  # uniform | weighted
    # learning
    local_epochs: int = 6
    batch_size: int = 10
    lr: float = 0.01
    num_classes: int = 10
    model_hidden: tuple[int, ...] = (32,)
    cut_layer: int = 1
    # dataset
    dataset: str = "synthetic"  # synthetic | mnist
    synthetic_train: int = 5000
    synthetic_test: int = 1000
    synthetic_dim: int = 784
    synthetic_std: float = 0.35
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_test_images: str = ""
    mnist_test_labels: str = ""
    mnist_train_limit: int = 0
    # partition
    partition: str = "iid"  # iid | noniid_shards | imbalanced
    classes_per_user: int = 2
    alpha_d: float = 0.01
    alpha_imd: float = 2.0
    # channel
    carrier_hz: float = 2e9
    bw_uav_hz: float = 1e7
    bw_bs_hz: float = 5e6
    p_uav_dbm: float = 24.0
    p_bs_dbm: float = 40.0
    noise_dbm_per_hz: float = -174.0
    noise_total_dbm: float | None = None
    a0: float = 5.0188
    b0: float = 0.3511
    eta_los_db: float = 21.0
    eta_nlos_db: float = 1.0
    fspl_exponent: int = 2
    bandwidth_share: str = "equal"  # equal | dedicated
    # mobility
    cell_radius: float = 500.0
    bs_height: float = 20.0
    alt_min: float = 20.0
    alt_max: float = 80.0
    speed_mps: float = 10.0
    epoch_dt_s: float = 1.0
    k_min_db: float = 1.8
    k_max_db: float = 5.0
    interruption_prob: float = 0.3
    # protocol
    sl_fraction: float = 0.5
    sl_compute_fraction: float = 0.5
    compute_s_per_sample: float = 1e-4
    activations_per_epoch: bool = False
    # async baseline
    async_alpha: float = 0.4
    async_a: float = 0.5
    max_delay: int = 1


_FIELDS = {f.name: f for f in fields(SimConfig)}
_DEFAULTS = SimConfig()

_SCHEMES = ("opt", "discard", "async")
_PARTITIONS = ("iid", "noniid_shards", "imbalanced")


def _parse_value(key: str, text: str):
    kind = _FIELDS[key].type
    if key == "model_hidden":
        try:
            sizes = tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError:
            raise ValueError(f"{key}: expected comma-separated integers, got {text!r}")
        if not sizes:
            raise ValueError(f"{key}: needs at least one hidden width")
        return sizes
    if key == "noise_total_dbm":
        return None if text == "" else float(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        lowered = text.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    return text


def parse_config_text(text: str) -> SimConfig:
    """Parse config file contents; unknown or malformed keys are fatal."""
    errors = []
    seen: dict[str, int] = {}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            continue
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELDS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} (first on line {seen[key]})")
            continue
        seen[key] = lineno
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise ConfigError(errors)
    config = SimConfig(**values)
    problems = validate(config)
    if problems:
        raise ConfigError(problems)
    return config


def parse_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def serialize_config(config: SimConfig) -> str:
    """Canonical text form: every key, declaration order, one per line."""
    lines = []
    for f in fields(SimConfig):
        value = getattr(config, f.name)
        if f.name == "model_hidden":
            text = ",".join(str(v) for v in value)
        elif value is None:
            text = ""
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def validate(config: SimConfig) -> list[str]:
    """Every constraint violation in the config, empty when valid."""
    errors = []

    def check(ok: bool, message: str):
        if not ok:
            errors.append(message)

    c = config
    check(c.rounds >= 0, "rounds must be >= 0")
    check(c.num_uavs >= 1, "num_uavs must be >= 1")
    check(1 <= c.select_k <= max(c.num_uavs, 1), "select_k must lie in 1..num_uavs")
    check(c.scheme in _SCHEMES, f"scheme must be one of {_SCHEMES}")
    check(c.b >= 1, "b must be >= 1")
    check(c.b <= c.local_epochs, "b must not exceed local_epochs")
    if c.scheme in ("discard", "async"):
        check(c.b == 1, f"scheme {c.scheme} requires b = 1")
    check(c.tau_max_s >= 0.0, "tau_max_s must be >= 0")
    check(c.aggregate in ("uniform", "weighted"), "aggregate must be uniform or weighted")
    check(c.local_epochs >= 1, "local_epochs must be >= 1")
    check(c.batch_size >= 1, "batch_size must be >= 1")
    check(c.lr > 0.0, "lr must be positive")
    check(c.num_classes >= 2, "num_classes must be >= 2")
    check(all(h >= 1 for h in c.model_hidden), "model_hidden widths must be >= 1")
    check(
        1 <= c.cut_layer <= len(c.model_hidden),
        "cut_layer must lie in 1..len(model_hidden)",
    )
    check(c.dataset in ("synthetic", "mnist"), "dataset must be synthetic or mnist")
    if c.dataset == "synthetic":
        check(c.synthetic_train >= c.num_uavs, "synthetic_train must cover num_uavs users")
        check(c.synthetic_test >= 1, "synthetic_test must be >= 1")
        check(c.synthetic_dim >= 1, "synthetic_dim must be >= 1")
        check(c.synthetic_std >= 0.0, "synthetic_std must be >= 0")
    else:
        for key in ("mnist_images", "mnist_labels", "mnist_test_images", "mnist_test_labels"):
            check(bool(getattr(c, key)), f"{key} is required when dataset = mnist")
        check(c.mnist_train_limit >= 0, "mnist_train_limit must be >= 0")
    check(c.partition in _PARTITIONS, f"partition must be one of {_PARTITIONS}")
    check(c.classes_per_user >= 1, "classes_per_user must be >= 1")
    check(c.alpha_d > 0.0, "alpha_d must be positive")
    check(c.alpha_imd > 0.0, "alpha_imd must be positive")
    check(c.carrier_hz > 0.0, "carrier_hz must be positive")
    check(c.bw_uav_hz > 0.0, "bw_uav_hz must be positive")
    check(c.bw_bs_hz > 0.0, "bw_bs_hz must be positive")
    check(c.a0 > 0.0, "a0 must be positive")
    check(c.b0 >= 0.0, "b0 must be >= 0")
    check(c.fspl_exponent in (1, 2), "fspl_exponent must be 1 or 2")
    check(c.bandwidth_share in ("equal", "dedicated"), "bandwidth_share must be equal or dedicated")
    check(c.cell_radius > 0.0, "cell_radius must be positive")
    check(c.bs_height >= 0.0, "bs_height must be >= 0")
    check(c.alt_min <= c.alt_max, "alt_min must not exceed alt_max")
    check(c.speed_mps >= 0.0, "speed_mps must be >= 0")
    check(c.epoch_dt_s > 0.0, "epoch_dt_s must be positive")
    check(c.k_min_db <= c.k_max_db, "k_min_db must not exceed k_max_db")
    check(0.0 <= c.interruption_prob <= 1.0, "interruption_prob must lie in [0, 1]")
    check(0.0 <= c.sl_fraction <= 1.0, "sl_fraction must lie in [0, 1]")
    check(0.0 < c.sl_compute_fraction <= 1.0, "sl_compute_fraction must lie in (0, 1]")
    check(c.compute_s_per_sample >= 0.0, "compute_s_per_sample must be >= 0")
    check(0.0 < c.async_alpha <= 1.0, "async_alpha must lie in (0, 1]")
    check(c.async_a >= 0.0, "async_a must be >= 0")
    check(c.max_delay >= 1, "max_delay must be >= 1")
    return errors
