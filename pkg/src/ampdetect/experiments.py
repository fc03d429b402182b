"""Monte Carlo harness: trials, equal-error calibration, sweeps, CSV output.

Trials run in fixed-size batches (vectorized over the batch axis); each batch
draws from its own RNG stream keyed by (algorithm, phase, sweep value, batch
index), so results are byte-identical for a given (config, seed) no matter
how many worker processes execute the batches.  Diverged trials are excluded
from error rates and reported in the ``diverged`` column.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import amp
from .config import (
    ConfigError,
    ScenarioConfig,
    _SCENARIO_KEYS,
    read_config_file,
    scenario_from_keys,
    scenario_to_keys,
)
from .denoisers import MampDenoiser, MmseDenoiser
from .detect import TrialMetrics, equal_error_calibrate, user_decisions
from .scenario import gen_pilots, path_loss_linear_array, sample_distances

# Batch width of the vectorized engine.  Part of the RNG stream layout:
# changing it changes which trials share a stream and therefore the sampled
# numbers, so it is a constant, not a knob.
BATCH_SIZE = 256


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    alg_id: int
    eib: bool
    pairwise: bool
    display_name: str


ALGORITHMS = {
    "AMP_NO_EIB": AlgorithmSpec("AMP_NO_EIB", 0, False, False, "AMP without EIB"),
    "AMP_EIB": AlgorithmSpec("AMP_EIB", 1, True, False, "AMP with EIB"),
    "MAMP_EIB": AlgorithmSpec("MAMP_EIB", 2, True, True, "M-AMP with EIB"),
}

_SWEEP_PARAMS = {
    "n_antennas": "num_antennas",
    "pilot_len": "pilot_len",
    "n_users": "num_users",
}

_RUN_KEYS = {"trials", "cal_trials", "threshold_scale", "algorithms", "sweep_param", "sweep_values"}
KNOWN_CONFIG_KEYS = frozenset(_SCENARIO_KEYS) | _RUN_KEYS

CSV_HEADER = [
    "algorithm", "sweep_param", "sweep_value",
    "p_miss", "p_miss_ci", "p_fa", "p_fa_ci",
    "eib_err", "eib_err_ci", "tau_sq_final", "trials", "diverged",
]


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: a base scenario, a swept parameter, and a trial budget."""

    base: ScenarioConfig
    param: str                      # file-style key: n_antennas | pilot_len | n_users
    values: tuple[int, ...]
    algorithms: tuple[str, ...]
    trials: int = 10_000
    cal_trials: int = 2_000
    threshold_scale: float = 1.0    # used when cal_trials == 0

    def __post_init__(self):
        if self.param not in _SWEEP_PARAMS:
            raise ConfigError(f"sweep_param must be one of {sorted(_SWEEP_PARAMS)}, got {self.param!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError(f"sweep values must be strictly increasing, got {self.values}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.cal_trials < 0:
            raise ConfigError(f"cal_trials must be >= 0, got {self.cal_trials}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigError(f"algorithms must be a non-empty subset of {sorted(ALGORITHMS)}")


@dataclass
class ResultRow:
    algorithm: str
    sweep_param: str
    sweep_value: int | float | str
    p_miss: float
    p_miss_ci: float
    p_fa: float
    p_fa_ci: float
    eib_err: float
    eib_err_ci: float
    tau_sq_final: float
    trials: int
    diverged: int


@dataclass
class TrialResult:
    metrics: TrialMetrics
    tau_sq_final: float
    diverged: bool


# -- batched trial simulation -------------------------------------------------


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _draw_trials(cfg: ScenarioConfig, alg: AlgorithmSpec, size: int,
                 rng: np.random.Generator):
    """Draw a batch of trials: ground truth, pilots, normalized received block."""
    n, m, pilot_len = cfg.num_users, cfg.num_antennas, cfg.pilot_len
    num_slots = 2 * n if alg.eib else n

    active = rng.random((size, n)) < cfg.activity_prob
    distances = sample_distances(n, cfg.cell_radius_km, rng, size=(size, n))
    betas = path_loss_linear_array(distances)
    rows = (active[..., None] * np.sqrt(betas)[..., None]) * np.conj(_cn(rng, (size, n, m)))
    if alg.eib:
        bits = rng.integers(0, 2, size=(size, n))
        effective = np.zeros((size, num_slots, m), dtype=complex)
        effective[np.arange(size)[:, None], 2 * np.arange(n) + bits] = rows
        beta_slots = np.repeat(betas, 2, axis=-1)
    else:
        bits = None
        effective = rows
        beta_slots = betas
    pilots = gen_pilots(pilot_len, num_slots, rng, batch=size)
    received = pilots @ effective + np.sqrt(cfg.noise_var_eff) * _cn(rng, (size, pilot_len, m))
    return active, betas, bits, beta_slots, pilots, received


def _make_denoiser(cfg: ScenarioConfig, alg: AlgorithmSpec, beta_slots):
    eps_slot = cfg.activity_prob / 2.0 if alg.eib else cfg.activity_prob
    if alg.pairwise:
        return MampDenoiser(beta_slots, eps_slot, cfg.sigmoid_c)
    return MmseDenoiser(beta_slots, eps_slot)


def _simulate_batch(cfg: ScenarioConfig, alg: AlgorithmSpec, size: int,
                    rng: np.random.Generator, threshold_scale: float,
                    collect_scores: bool):
    """Simulate ``size`` independent trials in one vectorized pass."""
    active, betas, bits, beta_slots, pilots, received = _draw_trials(cfg, alg, size, rng)
    denoiser = _make_denoiser(cfg, alg, beta_slots)
    state, diverged = amp.run_amp_flagged(
        received, pilots, denoiser, cfg.noise_var_eff, cfg.num_iterations
    )
    obs = amp.effective_observation(state, pilots)
    with np.errstate(all="ignore"):
        scores, det_active, det_bits = user_decisions(
            obs, betas, state.tau_sq, threshold_scale, alg.eib
        )

    ok = ~diverged
    okn = ok[:, None]
    misses = int(np.sum(active & ~det_active & okn))
    num_active = int(np.sum(active & okn))
    false_alarms = int(np.sum(~active & det_active & okn))
    num_inactive = int(np.sum(~active & okn))
    if alg.eib:
        evaluated = active & det_active & okn
        eib_errors = int(np.sum(evaluated & (det_bits != bits)))
        eib_evaluated = int(np.sum(evaluated))
    else:
        eib_errors = eib_evaluated = 0
    tau = np.asarray(state.tau_sq)
    tau_sum = float(tau[ok].sum())

    act_scores = inact_scores = None
    if collect_scores:
        act_scores = scores[active & okn]
        inact_scores = scores[~active & okn]
    return (
        misses, num_active, false_alarms, num_inactive, eib_errors, eib_evaluated,
        tau_sum, int(ok.sum()), int(diverged.sum()), act_scores, inact_scores,
    )


def _chunk_task(args):
    cfg, alg_name, size, spawn_key, threshold_scale, collect_scores = args
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=spawn_key))
    return _simulate_batch(cfg, ALGORITHMS[alg_name], size, rng, threshold_scale, collect_scores)


@dataclass
class _PhaseAggregate:
    misses: int = 0
    num_active: int = 0
    false_alarms: int = 0
    num_inactive: int = 0
    eib_errors: int = 0
    eib_evaluated: int = 0
    tau_sum: float = 0.0
    ok: int = 0
    diverged: int = 0
    active_scores: np.ndarray | None = None
    inactive_scores: np.ndarray | None = None


def _run_phase(cfg: ScenarioConfig, alg: AlgorithmSpec, trials: int, phase: int,
               value_key: int, threshold_scale: float, collect_scores: bool,
               workers: int) -> _PhaseAggregate:
    sizes = [BATCH_SIZE] * (trials // BATCH_SIZE)
    if trials % BATCH_SIZE:
        sizes.append(trials % BATCH_SIZE)
    tasks = [
        (cfg, alg.name, size, (alg.alg_id, phase, value_key, idx), threshold_scale, collect_scores)
        for idx, size in enumerate(sizes)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    else:
        results = [_chunk_task(t) for t in tasks]

    agg = _PhaseAggregate()
    act_parts, inact_parts = [], []
    for res in results:
        (miss, act, fa, inact, err, ev, tau_sum, ok, div, a_sc, i_sc) = res
        agg.misses += miss
        agg.num_active += act
        agg.false_alarms += fa
        agg.num_inactive += inact
        agg.eib_errors += err
        agg.eib_evaluated += ev
        agg.tau_sum += tau_sum
        agg.ok += ok
        agg.diverged += div
        if collect_scores:
            act_parts.append(a_sc)
            inact_parts.append(i_sc)
    if collect_scores:
        agg.active_scores = np.concatenate(act_parts) if act_parts else np.array([])
        agg.inactive_scores = np.concatenate(inact_parts) if inact_parts else np.array([])
    return agg


def run_trial(cfg: ScenarioConfig, algorithm: str, rng: np.random.Generator,
              threshold_scale: float = 1.0) -> TrialResult:
    """One full trial: scenario -> encode -> receive -> AMP -> detect -> score."""
    alg = ALGORITHMS[algorithm]
    res = _simulate_batch(cfg, alg, 1, rng, threshold_scale, collect_scores=False)
    (miss, act, fa, inact, err, ev, tau_sum, ok, div, _, _) = res
    metrics = TrialMetrics(
        misses=miss, num_active=act, false_alarms=fa, num_inactive=inact,
        eib_errors=err, eib_evaluated=ev,
    )
    return TrialResult(metrics=metrics, tau_sq_final=tau_sum if ok else math.nan,
                       diverged=bool(div))


# -- aggregation and persistence ----------------------------------------------

_Z95 = 1.959963984540054


def binomial_ci(successes: int, total: int) -> float:
    """Half-width of the 95% Wilson score interval."""
    if total <= 0:
        return math.nan
    z2 = _Z95 * _Z95
    p = successes / total
    denom = 1.0 + z2 / total
    half = _Z95 * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total)) / denom
    return half


def _rate(num: int, den: int) -> float:
    return num / den if den > 0 else math.nan


def run_point(cfg: ScenarioConfig, algorithm: str, trials: int, cal_trials: int,
              workers: int = 1, value_key: int = 0,
              sweep_param: str = "none", sweep_value="",
              threshold_scale: float = 1.0) -> ResultRow:
    """Calibrate (optionally) and evaluate one (config, algorithm) point."""
    alg = ALGORITHMS[algorithm]
    cfg = replace(cfg, eib_enabled=alg.eib)
    scale = threshold_scale
    if cal_trials > 0:
        cal = _run_phase(cfg, alg, cal_trials, 0, value_key, 1.0, True, workers)
        scale = equal_error_calibrate(cal.active_scores, cal.inactive_scores)
    ev = _run_phase(cfg, alg, trials, 1, value_key, scale, False, workers)
    return ResultRow(
        algorithm=algorithm,
        sweep_param=sweep_param,
        sweep_value=sweep_value,
        p_miss=_rate(ev.misses, ev.num_active),
        p_miss_ci=binomial_ci(ev.misses, ev.num_active),
        p_fa=_rate(ev.false_alarms, ev.num_inactive),
        p_fa_ci=binomial_ci(ev.false_alarms, ev.num_inactive),
        eib_err=_rate(ev.eib_errors, ev.eib_evaluated) if alg.eib else math.nan,
        eib_err_ci=binomial_ci(ev.eib_errors, ev.eib_evaluated) if alg.eib else math.nan,
        tau_sq_final=ev.tau_sum / ev.ok if ev.ok else math.nan,
        trials=trials,
        diverged=ev.diverged,
    )


def calibrate_point(cfg: ScenarioConfig, algorithm: str, cal_trials: int,
                    workers: int = 1, value_key: int = 0):
    """Equal-error scale for one point, with the rates it achieves on the
    calibration scores: returns (scale, p_miss, p_fa)."""
    alg = ALGORITHMS[algorithm]
    cfg = replace(cfg, eib_enabled=alg.eib)
    cal = _run_phase(cfg, alg, cal_trials, 0, value_key, 1.0, True, workers)
    scale = equal_error_calibrate(cal.active_scores, cal.inactive_scores)
    p_miss = float(np.mean(cal.active_scores <= scale))
    p_fa = float(np.mean(cal.inactive_scores > scale))
    return scale, p_miss, p_fa


def empirical_tau_trajectory(cfg: ScenarioConfig, algorithm: str, trials: int,
                             value_key: int = 0) -> np.ndarray:
    """Mean tau_t^2 trajectory over non-diverged trials (for SE comparison)."""
    alg = ALGORITHMS[algorithm]
    cfg = replace(cfg, eib_enabled=alg.eib)
    total = np.zeros(cfg.num_iterations + 1)
    count = 0
    sizes = [BATCH_SIZE] * (trials // BATCH_SIZE)
    if trials % BATCH_SIZE:
        sizes.append(trials % BATCH_SIZE)
    for idx, size in enumerate(sizes):
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.seed, spawn_key=(alg.alg_id, 2, value_key, idx))
        )
        active, betas, bits, beta_slots, pilots, received = _draw_trials(cfg, alg, size, rng)
        denoiser = _make_denoiser(cfg, alg, beta_slots)
        state, diverged = amp.run_amp_flagged(
            received, pilots, denoiser, cfg.noise_var_eff, cfg.num_iterations
        )
        ok = ~diverged
        total += state.tau_sq_history[:, ok].sum(axis=1)
        count += int(ok.sum())
    if count == 0:
        return np.full(cfg.num_iterations + 1, math.nan)
    return total / count


def run_sweep(spec: SweepSpec, out_path=None, workers: int = 1,
              progress=None) -> list[ResultRow]:
    """Run every (algorithm, value) point; rows sorted by (algorithm, value).

    When ``out_path`` is set, each completed row is appended immediately (with
    the sidecar written up front), so an interrupted sweep leaves a parseable
    partial CSV behind.
    """
    rows: list[ResultRow] = []
    if out_path is not None:
        write_sidecar(spec, out_path)
    for alg_name in sorted(spec.algorithms):
        for value in spec.values:
            cfg = replace(spec.base, **{_SWEEP_PARAMS[spec.param]: int(value)})
            row = run_point(
                cfg, alg_name, spec.trials, spec.cal_trials, workers=workers,
                value_key=int(value), sweep_param=spec.param, sweep_value=int(value),
                threshold_scale=spec.threshold_scale,
            )
            rows.append(row)
            if out_path is not None:
                persist([row], out_path)
            if progress is not None:
                progress(row)
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_rows(stream, rows: list[ResultRow], include_header: bool) -> None:
    writer = csv.writer(stream)
    if include_header:
        writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([
            row.algorithm, row.sweep_param, _fmt(row.sweep_value),
            _fmt(row.p_miss), _fmt(row.p_miss_ci),
            _fmt(row.p_fa), _fmt(row.p_fa_ci),
            _fmt(row.eib_err), _fmt(row.eib_err_ci),
            _fmt(row.tau_sq_final), row.trials, row.diverged,
        ])


def persist(rows: list[ResultRow], path) -> None:
    """Append rows to the CSV at ``path``, writing the header if absent."""
    try:
        need_header = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a", encoding="utf-8", newline="") as fh:
            write_rows(fh, rows, include_header=need_header)
            fh.flush()
    except OSError as exc:
        raise IOError(f"cannot write results to {path}: {exc}") from exc


def _parse_float(text: str) -> float:
    return math.nan if text == "" else float(text)


def load_results(path) -> list[ResultRow]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise ValueError(f"{path} does not carry the expected result schema")
            out = []
            for rec in reader:
                out.append(ResultRow(
                    algorithm=rec[0], sweep_param=rec[1],
                    sweep_value=int(rec[2]) if rec[2] else "",
                    p_miss=_parse_float(rec[3]), p_miss_ci=_parse_float(rec[4]),
                    p_fa=_parse_float(rec[5]), p_fa_ci=_parse_float(rec[6]),
                    eib_err=_parse_float(rec[7]), eib_err_ci=_parse_float(rec[8]),
                    tau_sq_final=_parse_float(rec[9]),
                    trials=int(rec[10]), diverged=int(rec[11]),
                ))
            return out
    except OSError as exc:
        raise IOError(f"cannot read results from {path}: {exc}") from exc


def sidecar_path(out_path) -> str:
    return str(out_path) + ".config"


def resolved_keys(spec: SweepSpec) -> dict[str, str]:
    """Full resolved configuration of a sweep, in config-file form."""
    keys = scenario_to_keys(spec.base)
    keys["noise_var"] = repr(spec.base.resolved_noise_var)
    keys["sweep_param"] = spec.param
    keys["sweep_values"] = ", ".join(str(v) for v in spec.values)
    keys["algorithms"] = ", ".join(spec.algorithms)
    keys["trials"] = str(spec.trials)
    keys["cal_trials"] = str(spec.cal_trials)
    keys["threshold_scale"] = repr(spec.threshold_scale)
    return keys


def write_sidecar(spec: SweepSpec, out_path) -> None:
    from .config import write_config_file

    try:
        write_config_file(sidecar_path(out_path), resolved_keys(spec))
    except OSError as exc:
        raise IOError(f"cannot write sidecar for {out_path}: {exc}") from exc


# -- sweep-file parsing ---------------------------------------------------------


def _parse_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def sweep_from_keys(raw: dict[str, str]) -> SweepSpec:
    """Build a SweepSpec from parsed config-file keys (plus defaults)."""
    unknown = set(raw) - KNOWN_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = scenario_from_keys(raw)
    if "algorithms" in raw:
        algorithms = tuple(_parse_list(raw["algorithms"]))
    else:
        algorithms = ("AMP_EIB", "MAMP_EIB") if base.eib_enabled else ("AMP_NO_EIB",)
    if "sweep_param" in raw:
        param = raw["sweep_param"]
        if "sweep_values" not in raw:
            raise ConfigError("sweep_param given without sweep_values")
        try:
            values = tuple(int(v) for v in _parse_list(raw["sweep_values"]))
        except ValueError:
            raise ConfigError(f"sweep_values must be integers, got {raw['sweep_values']!r}") from None
    else:
        # Degenerate single-point sweep over the config's own value.
        param = "n_antennas"
        values = (base.num_antennas,)
    try:
        trials = int(raw.get("trials", 10_000))
        cal_trials = int(raw.get("cal_trials", 2_000))
        threshold_scale = float(raw.get("threshold_scale", 1.0))
    except ValueError as exc:
        raise ConfigError(f"bad run parameter: {exc}") from exc
    return SweepSpec(
        base=base, param=param, values=values, algorithms=algorithms,
        trials=trials, cal_trials=cal_trials, threshold_scale=threshold_scale,
    )


def load_sweep(path, overrides: list[str] | None = None) -> SweepSpec:
    from .config import apply_overrides

    raw = read_config_file(path)
    if overrides:
        raw = apply_overrides(raw, overrides, KNOWN_CONFIG_KEYS)
    return sweep_from_keys(raw)
