"""Per-slot denoisers for the AMP recursion (uncorrelated-antenna forms).

Each slot n sees an effective observation ``v = x_n + tau * w`` with
``x_n = 0`` (inactive) or ``x_n ~ CN(0, beta_n I)`` (active).  The base
denoiser shrinks by ``beta/(beta + tau^2)`` and gates by the activity
likelihood; the EIB variant additionally gates each slot of a user's pair by
a sigmoid of that slot's share of the pair likelihood, exploiting that at
most one slot of a pair is ever occupied.

All likelihood algebra runs in the log domain so that the
``((tau^2+beta)/tau^2)^(M/2)`` factor cannot overflow at large M.  Gates and
their norm-derivatives are returned separately so the AMP driver can build
Onsager Jacobians without materializing M x M blocks per slot:

    eta(v)       = F(s) * v,                  s = ||v||^2
    d eta / d v  = F(s) I + F'(s) v v^H       (Wirtinger derivative in v)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

# Guards the 1/tau^2 terms in noiseless convergence runs where the residual
# variance underflows; far below any physically meaningful value.
TAU_SQ_FLOOR = 1e-280


@dataclass(frozen=True)
class SlotParams:
    """Parameters of one slot's denoiser: gain, prior, antennas, noise state."""

    beta: float
    activity_prior: float  # epsilon for plain slots, epsilon/2 for EIB slots
    num_antennas: int
    tau_sq: float
    sharpness: float = 10.0  # sigmoid steepness c; used by the EIB pair gate

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.activity_prior <= 1.0:
            raise ValueError(f"activity_prior must be in [0, 1], got {self.activity_prior}")
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if not self.tau_sq > 0.0:
            raise ValueError(f"tau_sq must be > 0, got {self.tau_sq}")


# -- log-domain kernels (broadcast over arbitrary shapes) --------------------


def log_likelihood_kernel(norm_sq, beta, tau_sq, num_antennas):
    """log of the active/inactive likelihood ratio at squared norm ``norm_sq``.

    log Lambda = (1/2) [ s * beta / (tau^2 (tau^2+beta)) - M log((tau^2+beta)/tau^2) ]
    """
    tau_sq = np.maximum(tau_sq, TAU_SQ_FLOOR)
    precision_gap = beta / (tau_sq * (tau_sq + beta))
    return 0.5 * (norm_sq * precision_gap - num_antennas * np.log1p(beta / tau_sq))


def gate_kernel(norm_sq, beta, tau_sq, eps, num_antennas):
    """Activity gate t in (0, 1): posterior-style weighting of the LMMSE output."""
    with np.errstate(divide="ignore"):
        prior = logit(eps)
    return expit(log_likelihood_kernel(norm_sq, beta, tau_sq, num_antennas) + prior)


def gate_coefficients(norm_sq, beta, tau_sq, eps, num_antennas):
    """Base-denoiser gate F = t * beta/(beta+tau^2) and its d/d||v||^2.

    F'(s) = k * (a/2) * t (1 - t) with a the precision gap; the rank-one
    Jacobian correction F'(s) v v^H follows from t depending on v only
    through s = v^H v.
    """
    tau_sq = np.maximum(tau_sq, TAU_SQ_FLOOR)
    shrink = beta / (beta + tau_sq)
    precision_gap = beta / (tau_sq * (tau_sq + beta))
    t = gate_kernel(norm_sq, beta, tau_sq, eps, num_antennas)
    value = t * shrink
    deriv = shrink * 0.5 * precision_gap * t * (1.0 - t)
    return value, deriv


def pair_gate_coefficients(norm_sq, beta, tau_sq, eps, num_antennas, sharpness):
    """EIB-pair gate F = f(phi) * t * beta/(beta+tau^2) and its d/d||v||^2.

    ``norm_sq`` has pairs in adjacent slots along the last axis (even slot =
    bit 0, odd slot = bit 1).  phi is this slot's proportional likelihood
    within its pair; partner terms are held fixed when differentiating, which
    is the per-slot Jacobian scope the residual update sums over.
    """
    tau_sq = np.maximum(tau_sq, TAU_SQ_FLOOR)
    if norm_sq.shape[-1] % 2 != 0:
        raise ValueError("EIB pair layout needs an even slot count")
    log_lam = log_likelihood_kernel(norm_sq, beta, tau_sq, num_antennas)
    partner = np.empty_like(log_lam)
    partner[..., 0::2] = log_lam[..., 1::2]
    partner[..., 1::2] = log_lam[..., 0::2]
    phi = expit(log_lam - partner)
    soft_bit = expit(sharpness * (phi - 0.5))

    shrink = beta / (beta + tau_sq)
    precision_gap = beta / (tau_sq * (tau_sq + beta))
    t = gate_kernel(norm_sq, beta, tau_sq, eps, num_antennas)
    value = soft_bit * t * shrink
    # d/ds of f(phi(s)) t(s): both factors vary through s with slope a/2.
    deriv = (
        shrink * 0.5 * precision_gap * t
        * (sharpness * soft_bit * (1.0 - soft_bit) * phi * (1.0 - phi)
           + soft_bit * (1.0 - t))
    )
    return value, deriv


# -- single-slot operations ---------------------------------------------------


def gate_t(x: np.ndarray, p: SlotParams) -> float:
    """Likelihood-ratio activity gate for one slot; monotone in ||x||^2."""
    s = float(np.vdot(x, x).real)
    return float(gate_kernel(s, p.beta, p.tau_sq, p.activity_prior, p.num_antennas))


def log_likelihood(x: np.ndarray, p: SlotParams) -> float:
    s = float(np.vdot(x, x).real)
    return float(log_likelihood_kernel(s, p.beta, p.tau_sq, p.num_antennas))


def likelihood_lambda(x: np.ndarray, p: SlotParams) -> float:
    """Active-vs-inactive likelihood ratio Lambda; prefer log_likelihood for math."""
    return float(np.exp(log_likelihood(x, p)))


def sigmoid(x, sharpness: float):
    """Soft threshold f(x) = 1 / (1 + exp(-c (x - 1/2))) centered at 1/2."""
    return expit(sharpness * (np.asarray(x, dtype=float) - 0.5))


def eib_coefficient(x_a: np.ndarray, x_b: np.ndarray, p: SlotParams) -> float:
    """Share of the pair likelihood carried by slot a: Lambda_a / (Lambda_a + Lambda_b)."""
    return float(expit(log_likelihood(x_a, p) - log_likelihood(x_b, p)))


def _value_and_jacobian(x, coeff, coeff_deriv):
    value = coeff * x
    jacobian = coeff * np.eye(len(x), dtype=complex) + coeff_deriv * np.outer(x, np.conj(x))
    return value, jacobian


def mmse_denoise(x: np.ndarray, p: SlotParams):
    """Posterior-mean denoiser for one slot: value and M x M Jacobian.

    value = t(x) * beta/(beta+tau^2) * x.  The Jacobian is the closed-form
    Wirtinger derivative, a scaled identity plus the rank-one gate gradient.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape != (p.num_antennas,):
        raise ValueError(f"expected shape ({p.num_antennas},), got {x.shape}")
    s = float(np.vdot(x, x).real)
    coeff, deriv = gate_coefficients(s, p.beta, p.tau_sq, p.activity_prior, p.num_antennas)
    return _value_and_jacobian(x, float(coeff), float(deriv))


def mamp_denoise(x_a: np.ndarray, x_b: np.ndarray, p: SlotParams):
    """EIB-pair denoiser: the base denoiser additionally gated by f(phi) per slot.

    Returns ((value_a, value_b), (jacobian_a, jacobian_b)); each Jacobian is
    taken with the partner slot held fixed, matching the per-slot sum in the
    residual update.
    """
    x_a = np.asarray(x_a, dtype=complex)
    x_b = np.asarray(x_b, dtype=complex)
    norm_sq = np.array([np.vdot(x_a, x_a).real, np.vdot(x_b, x_b).real])
    coeff, deriv = pair_gate_coefficients(
        norm_sq, p.beta, p.tau_sq, p.activity_prior, p.num_antennas, p.sharpness
    )
    val_a, jac_a = _value_and_jacobian(x_a, float(coeff[0]), float(deriv[0]))
    val_b, jac_b = _value_and_jacobian(x_b, float(coeff[1]), float(deriv[1]))
    return (val_a, val_b), (jac_a, jac_b)


# -- vectorized denoisers for the AMP driver ---------------------------------


class MmseDenoiser:
    """Activity-gated MMSE denoiser over all P slots.

    ``beta`` broadcasts against the slot axis; per-trial betas use shape
    (..., P).  Calling returns (values, F, F') with F, F' shaped (..., P).
    """

    pairwise = False

    def __init__(self, beta, activity_prior: float):
        self.beta = np.asarray(beta, dtype=float)
        self.activity_prior = float(activity_prior)

    def __call__(self, observations: np.ndarray, tau_sq):
        num_antennas = observations.shape[-1]
        norm_sq = np.einsum("...pm,...pm->...p", observations.real, observations.real)
        norm_sq += np.einsum("...pm,...pm->...p", observations.imag, observations.imag)
        tau_sq = np.asarray(tau_sq)[..., None] if np.ndim(tau_sq) else tau_sq
        coeff, deriv = gate_coefficients(
            norm_sq, self.beta, tau_sq, self.activity_prior, num_antennas
        )
        return coeff[..., None] * observations, coeff, deriv


class MampDenoiser(MmseDenoiser):
    """Pair-structured denoiser for EIB transmission (adjacent-slot pairs)."""

    pairwise = True

    def __init__(self, beta, activity_prior: float, sharpness: float):
        super().__init__(beta, activity_prior)
        self.sharpness = float(sharpness)

    def __call__(self, observations: np.ndarray, tau_sq):
        num_antennas = observations.shape[-1]
        norm_sq = np.einsum("...pm,...pm->...p", observations.real, observations.real)
        norm_sq += np.einsum("...pm,...pm->...p", observations.imag, observations.imag)
        tau_sq = np.asarray(tau_sq)[..., None] if np.ndim(tau_sq) else tau_sq
        coeff, deriv = pair_gate_coefficients(
            norm_sq, self.beta, tau_sq, self.activity_prior, num_antennas, self.sharpness
        )
        return coeff[..., None] * observations, coeff, deriv
