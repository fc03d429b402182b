"""Scenario parameters and flat key-value config files.

A scenario is fully described by :class:`ScenarioConfig`.  Powers are kept in
linear watts internally; the config file uses dBm / dB, matching the usual
link-budget conventions.  The noise variance can be given directly
(``noise_var``) or derived from a target SNR: sigma^2 is chosen so that the
median-distance user's received pilot SNR ``rho_ul * beta_median / sigma^2``
equals ``snr_db``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

# Path-loss model: beta_dB = -130 - 37.6 * log10(r_km).
PATH_LOSS_INTERCEPT_DB = -130.0
PATH_LOSS_SLOPE_DB = 37.6
# Users closer than this to the BS are pushed out to it, so beta stays bounded.
MIN_USER_DISTANCE_KM = 0.01


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config file."""


def path_loss_db(distance_km):
    """Large-scale fading in dB at the given distance (km)."""
    return PATH_LOSS_INTERCEPT_DB - PATH_LOSS_SLOPE_DB * math.log10(distance_km)


def path_loss_linear(distance_km):
    """Large-scale power gain (linear) at the given distance (km)."""
    return 10.0 ** (path_loss_db(distance_km) / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All scalar parameters of one simulated scenario.

    ``coherence_len`` is metadata only: the coherence block has T symbols but
    only the L pilot symbols are simulated.
    """

    num_users: int
    pilot_len: int
    num_antennas: int
    activity_prob: float
    tx_power_dbm: float = 10.0
    snr_db: float = 10.0
    noise_var: float | None = None  # linear watts; overrides snr_db when set
    cell_radius_km: float = 0.35
    sigmoid_c: float = 10.0
    num_iterations: int = 20
    eib_enabled: bool = False
    seed: int = 1
    coherence_len: int | None = None

    def __post_init__(self):
        if self.num_users < 1:
            raise ConfigError(f"num_users must be >= 1, got {self.num_users}")
        if self.pilot_len < 1:
            raise ConfigError(f"pilot_len must be >= 1, got {self.pilot_len}")
        if self.num_antennas < 1:
            raise ConfigError(f"num_antennas must be >= 1, got {self.num_antennas}")
        # The nominal range is (0, 1]; 0 is admitted for degenerate all-inactive
        # scenarios, which the harness uses to measure pure false-alarm floors.
        if not 0.0 <= self.activity_prob <= 1.0:
            raise ConfigError(f"activity_prob must be in [0, 1], got {self.activity_prob}")
        if not math.isfinite(self.tx_power_dbm):
            raise ConfigError("tx_power_dbm must be finite")
        if self.noise_var is not None and not self.noise_var > 0.0:
            raise ConfigError(f"noise_var must be > 0, got {self.noise_var}")
        if self.noise_var is None and not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite when noise_var is not set")
        if not self.cell_radius_km > MIN_USER_DISTANCE_KM:
            raise ConfigError(
                f"cell_radius_km must exceed the {MIN_USER_DISTANCE_KM} km floor"
            )
        if not self.sigmoid_c > 0.0:
            raise ConfigError(f"sigmoid_c must be > 0, got {self.sigmoid_c}")
        if self.num_iterations < 0:
            raise ConfigError(f"num_iterations must be >= 0, got {self.num_iterations}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.coherence_len is not None and self.coherence_len < self.pilot_len:
            raise ConfigError(
                f"coherence_len ({self.coherence_len}) must be >= pilot_len ({self.pilot_len})"
            )

    # -- derived quantities ------------------------------------------------

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def median_distance_km(self) -> float:
        """Median user distance under uniform placement on the annulus."""
        lo, hi = MIN_USER_DISTANCE_KM, self.cell_radius_km
        return math.sqrt((lo * lo + hi * hi) / 2.0)

    @property
    def median_beta(self) -> float:
        return path_loss_linear(self.median_distance_km)

    @property
    def resolved_noise_var(self) -> float:
        """Noise variance in watts, from ``noise_var`` or the SNR convention."""
        if self.noise_var is not None:
            return self.noise_var
        return self.tx_power_w * self.median_beta / 10.0 ** (self.snr_db / 10.0)

    @property
    def noise_var_eff(self) -> float:
        """Per-entry noise variance of the power-normalized model Y/sqrt(rho)."""
        return self.resolved_noise_var / self.tx_power_w

    @property
    def num_slots(self) -> int:
        """Pilot-matrix columns: one slot per user, two with EIB."""
        return 2 * self.num_users if self.eib_enabled else self.num_users

    @property
    def slot_activity_prob(self) -> float:
        """Per-slot activity prior: epsilon, or epsilon/2 with EIB."""
        return self.activity_prob / 2.0 if self.eib_enabled else self.activity_prob


# -- config files ----------------------------------------------------------
#
# Flat `key = value` lines, '#' comments.  Scenario keys below; the sweep /
# run keys (trials, sweep_param, ...) are layered on top by the experiments
# module but share this parser.

_SCENARIO_KEYS = {
    "n_users": ("num_users", int),
    "pilot_len": ("pilot_len", int),
    "n_antennas": ("num_antennas", int),
    "activity_prob": ("activity_prob", float),
    "tx_power_dbm": ("tx_power_dbm", float),
    "snr_db": ("snr_db", float),
    "noise_var": ("noise_var", float),
    "cell_radius_km": ("cell_radius_km", float),
    "sigmoid_c": ("sigmoid_c", float),
    "iters": ("num_iterations", int),
    "eib": ("eib_enabled", bool),
    "seed": ("seed", int),
    "coherence_len": ("coherence_len", int),
}

_FIELD_TO_KEY = {field: key for key, (field, _) in _SCENARIO_KEYS.items()}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {text!r}") from None


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat key-value lines into a raw string dict."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def scenario_from_keys(raw: dict[str, str]) -> ScenarioConfig:
    """Build a ScenarioConfig from raw file keys, ignoring non-scenario keys."""
    kwargs = {}
    for key, value in raw.items():
        if key not in _SCENARIO_KEYS:
            continue
        field, typ = _SCENARIO_KEYS[key]
        try:
            kwargs[field] = parse_bool(value) if typ is bool else typ(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    missing = {"num_users", "pilot_len", "num_antennas", "activity_prob"} - set(kwargs)
    if missing:
        names = sorted(_FIELD_TO_KEY[f] for f in missing)
        raise ConfigError(f"config is missing required keys: {', '.join(names)}")
    return ScenarioConfig(**kwargs)


def scenario_to_keys(cfg: ScenarioConfig) -> dict[str, str]:
    """Flat file keys for a config, in canonical order, omitting unset options."""
    out: dict[str, str] = {}
    values = asdict(cfg)
    for key, (field, typ) in _SCENARIO_KEYS.items():
        value = values[field]
        if value is None:
            continue
        if typ is bool:
            out[key] = "true" if value else "false"
        else:
            out[key] = repr(value) if isinstance(value, float) else str(value)
    return out


def write_config_file(path, keys: dict[str, str]) -> None:
    lines = [f"{k} = {v}" for k, v in keys.items()]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scenario(path) -> ScenarioConfig:
    return scenario_from_keys(read_config_file(path))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    write_config_file(path, scenario_to_keys(cfg))


def apply_overrides(raw: dict[str, str], overrides: list[str], known_keys) -> dict[str, str]:
    """Apply repeatable ``key=value`` overrides; unknown keys are errors."""
    out = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in known_keys:
            raise ConfigError(f"unknown config key in override: {key!r}")
        out[key] = value.strip()
    return out


def with_updates(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(cfg, **changes)
