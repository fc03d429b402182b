"""AMP recursion against pluggable per-slot denoisers, plus state evolution.

Operates on the power-normalized model ``Y' = S X + Z'`` with per-entry noise
variance ``sigma^2 / rho_ul`` (callers divide the received block by
sqrt(rho_ul)).  One iteration:

    V       = Xhat + S^H R                     (per-slot effective observations)
    Xhat'   = eta(V)                           (denoiser)
    R'      = Y' - S Xhat' + (1/L) R J_sum     (residual with Onsager term)
    tau'^2  = ||R'||_F^2 / (L M)               (empirical noise-state tracking)

where ``J_sum`` is the sum over slots of the denoiser Jacobians
``F I + F' v v^H``.  The scalar tau^2 state corresponds to the
uncorrelated-antenna case where the noise covariance is tau^2 I.

All entry points accept leading batch dimensions on Y / S / beta so that
Monte Carlo trials can run as one vectorized batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .denoisers import MampDenoiser, MmseDenoiser


class AmpDivergenceError(RuntimeError):
    """AMP iterate left the finite range (or grew past the divergence guard)."""

    def __init__(self, iteration: int, message: str | None = None):
        super().__init__(message or f"AMP diverged at iteration {iteration}")
        self.iteration = iteration


@dataclass
class AmpState:
    """One AMP iterate. Arrays may carry leading batch dimensions."""

    estimate: np.ndarray          # (..., P, M)
    residual: np.ndarray          # (..., L, M)
    tau_sq: np.ndarray | float    # (...,) scalar per batch element
    iteration: int
    tau_sq_history: np.ndarray | None = field(default=None, repr=False)


def _frobenius_sq(a: np.ndarray) -> np.ndarray:
    return np.einsum("...lm,...lm->...", a.real, a.real) + np.einsum(
        "...lm,...lm->...", a.imag, a.imag
    )


def amp_init(y: np.ndarray, beta_slots: np.ndarray, activity_prior: float,
             noise_var: float, num_slots: int | None = None) -> AmpState:
    """Initial state: zero estimate, residual Y, and the prior variance

    tau_0^2 = sigma^2/rho + (P/L) * eps_slot * mean(beta).
    """
    y = np.asarray(y, dtype=complex)
    pilot_len, num_antennas = y.shape[-2], y.shape[-1]
    beta_slots = np.asarray(beta_slots, dtype=float)
    P = num_slots if num_slots is not None else beta_slots.shape[-1]
    tau0 = noise_var + (P / pilot_len) * activity_prior * beta_slots.mean(axis=-1)
    batch_shape = y.shape[:-2]
    tau0 = np.broadcast_to(np.asarray(tau0), batch_shape).copy() if batch_shape else float(tau0)
    estimate = np.zeros(batch_shape + (P, num_antennas), dtype=complex)
    return AmpState(estimate=estimate, residual=y.copy(), tau_sq=tau0, iteration=0)


def effective_observation(state: AmpState, pilots: np.ndarray) -> np.ndarray:
    """Per-slot pseudo-observations V = Xhat + S^H R (rows are v_n^H)."""
    st = np.swapaxes(pilots, -1, -2).conj()
    return state.estimate + st @ state.residual


def _amp_step(estimate, residual, tau_sq, pilots, y, denoiser, include_onsager):
    """One unchecked update; returns (estimate', residual', tau_sq')."""
    pilot_len = pilots.shape[-2]
    obs = estimate + np.swapaxes(pilots, -1, -2).conj() @ residual
    new_estimate, coeff, coeff_deriv = denoiser(obs, tau_sq)
    new_residual = y - pilots @ new_estimate
    if include_onsager:
        num_antennas = obs.shape[-1]
        trace_part = coeff.sum(axis=-1)[..., None, None] / pilot_len
        weighted = obs.conj() * coeff_deriv[..., None]
        if num_antennas * num_antennas <= 2 * pilot_len * num_antennas:
            rank_corr = residual @ (np.swapaxes(weighted, -1, -2) @ obs)
        else:
            rank_corr = (residual @ np.swapaxes(weighted, -1, -2)) @ obs
        new_residual = new_residual + trace_part * residual + rank_corr / pilot_len
    num_antennas = y.shape[-1]
    new_tau_sq = _frobenius_sq(new_residual) / (pilot_len * num_antennas)
    return new_estimate, new_residual, new_tau_sq


def amp_iterate(state: AmpState, pilots: np.ndarray, y: np.ndarray, denoiser,
                include_onsager: bool = True) -> AmpState:
    """Apply one AMP update; raises AmpDivergenceError on non-finite values."""
    est, res, tau = _amp_step(
        state.estimate, state.residual, state.tau_sq, pilots, y, denoiser, include_onsager
    )
    it = state.iteration + 1
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(res)) and np.all(np.isfinite(tau))):
        raise AmpDivergenceError(it)
    return AmpState(estimate=est, residual=res, tau_sq=tau, iteration=it)


DIVERGENCE_FACTOR = 1e6


def run_amp(y: np.ndarray, pilots: np.ndarray, denoiser, noise_var: float,
            num_iterations: int, include_onsager: bool = True,
            divergence_factor: float = DIVERGENCE_FACTOR) -> AmpState:
    """Initialize and iterate; records the tau^2 trajectory on the final state.

    Aborts with AmpDivergenceError when tau^2 exceeds ``divergence_factor``
    times its initial value (short pilots with Bernoulli matrices can blow
    up; the Monte Carlo harness records such trials instead of crashing).
    """
    state = amp_init(y, denoiser.beta, denoiser.activity_prior, noise_var)
    history = [state.tau_sq]
    guard = divergence_factor * np.asarray(state.tau_sq)
    for _ in range(num_iterations):
        state = amp_iterate(state, pilots, y, denoiser, include_onsager)
        history.append(state.tau_sq)
        if np.any(state.tau_sq > guard):
            raise AmpDivergenceError(state.iteration, "tau^2 exceeded the divergence guard")
    state.tau_sq_history = np.asarray(history)
    return state


def run_amp_flagged(y: np.ndarray, pilots: np.ndarray, denoiser, noise_var: float,
                    num_iterations: int,
                    divergence_factor: float = DIVERGENCE_FACTOR):
    """Batch variant: never raises, returns (state, diverged_mask).

    Diverged batch elements keep iterating on their own garbage (NaNs stay
    confined to their slice) and are excluded by the caller.
    """
    state = amp_init(y, denoiser.beta, denoiser.activity_prior, noise_var)
    guard = divergence_factor * np.asarray(state.tau_sq)
    diverged = np.zeros(np.shape(state.tau_sq), dtype=bool)
    history = [np.asarray(state.tau_sq)]
    est, res, tau = state.estimate, state.residual, state.tau_sq
    with np.errstate(all="ignore"):
        for it in range(num_iterations):
            est, res, tau = _amp_step(est, res, tau, pilots, y, denoiser, True)
            tau = np.asarray(tau)
            history.append(tau)
            diverged |= ~np.isfinite(tau) | (tau > guard)
    final = AmpState(
        estimate=est, residual=res, tau_sq=tau, iteration=num_iterations,
        tau_sq_history=np.asarray(history),
    )
    return final, diverged


def tau_trajectory_rows(histories: np.ndarray):
    """(trial_id, iteration, tau_sq) rows from a (iters+1, B) or (iters+1,) history."""
    histories = np.atleast_2d(np.asarray(histories).T)  # (B, iters+1)
    return [
        (trial, it, float(histories[trial, it]))
        for trial in range(histories.shape[0])
        for it in range(histories.shape[1])
    ]


# -- state evolution ---------------------------------------------------------


def state_evolution(cfg: ScenarioConfig, beta_population: np.ndarray,
                    algorithm: str = "AMP_NO_EIB", num_samples: int = 100_000,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Scalar state-evolution sequence tau_t^2 for t = 0 .. num_iterations.

    tau_{t+1}^2 = sigma^2/rho + (P/L) E ||eta(x + tau_t w) - x||^2 / M,

    with x from the sparse mixture (1-eps_slot) delta_0 + eps_slot CN(0, beta I)
    and beta resampled from ``beta_population`` each iteration (Monte Carlo
    expectation, ``num_samples`` draws per iteration).  For the pair denoiser
    the expectation runs over user pairs with a uniform bit choosing the
    occupied slot.
    """
    try:
        eib, pairwise = _SE_MODES[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; one of {sorted(_SE_MODES)}") from None
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_SE_STREAM,)))
    beta_population = np.asarray(beta_population, dtype=float)
    num_users, pilot_len, m = cfg.num_users, cfg.pilot_len, cfg.num_antennas
    num_slots = 2 * num_users if eib else num_users
    eps_slot = cfg.activity_prob / 2.0 if eib else cfg.activity_prob
    sigma0 = cfg.noise_var_eff

    taus = np.empty(cfg.num_iterations + 1)
    taus[0] = sigma0 + (num_slots / pilot_len) * eps_slot * beta_population.mean()

    for t in range(cfg.num_iterations):
        tau_sq = taus[t]
        betas = rng.choice(beta_population, size=num_samples)
        if pairwise:
            active = rng.random(num_samples) < cfg.activity_prob
            bits = rng.integers(0, 2, size=num_samples)
            gains = np.sqrt(betas)[:, None] * _cn(rng, (num_samples, m))
            truth = np.zeros((num_samples, 2, m), dtype=complex)
            truth[np.arange(num_samples), bits] = active[:, None] * gains
            obs = truth + np.sqrt(tau_sq) * _cn(rng, (num_samples, 2, m))
            den = MampDenoiser(np.repeat(betas[:, None], 2, axis=1), eps_slot, cfg.sigmoid_c)
            values, _, _ = den(obs, tau_sq)
            per_slot_risk = np.abs(values - truth) ** 2
            risk = per_slot_risk.sum() / (2 * num_samples)
        else:
            active = rng.random(num_samples) < eps_slot
            truth = np.where(
                active[:, None], np.sqrt(betas)[:, None] * _cn(rng, (num_samples, m)), 0.0
            )
            obs = truth + np.sqrt(tau_sq) * _cn(rng, (num_samples, m))
            den = MmseDenoiser(betas, eps_slot)
            values, _, _ = den(obs, tau_sq)
            risk = (np.abs(values - truth) ** 2).sum() / num_samples
        taus[t + 1] = sigma0 + (num_slots / pilot_len) * risk / m
    return taus


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# (eib layout, pair denoiser) per algorithm; names shared with experiments.
_SE_MODES = {
    "AMP_NO_EIB": (False, False),
    "AMP_EIB": (True, False),
    "MAMP_EIB": (True, True),
}
_SE_STREAM = 0x5E
