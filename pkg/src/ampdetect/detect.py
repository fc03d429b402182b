"""Activity decisions, EIB bit decisions, and error accounting.

Detection runs on the final per-slot effective observations (the decoupled
model ``v = x + tau w``), not on the shrunk denoiser outputs.  A slot looks
active when its squared norm exceeds the equal-cost likelihood-ratio
threshold

    ||v||^2  >  scale * M ln((tau^2+beta)/tau^2) * tau^2 (beta+tau^2) / beta,

where ``scale`` trades miss against false alarm (scale = 1 is the equal-cost
point; the calibrator below searches for the equal-error point).  With EIB a
user is declared active when either slot of its pair fires, and the decoded
bit is the slot with the larger log-likelihood (ties decode as 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoisers import log_likelihood_kernel


class CalibrationError(RuntimeError):
    """Equal-error calibration cannot proceed on the given score samples."""


@dataclass
class DetectionReport:
    """Per-trial decisions: activity mask and decoded bits (-1 where absent)."""

    active_mask: np.ndarray  # (N,) bool
    bits: np.ndarray         # (N,) int8, -1 for undecoded/inactive users

    @property
    def detected_active(self) -> set[int]:
        return set(np.flatnonzero(self.active_mask).tolist())

    @property
    def decoded_bits(self) -> dict[int, int]:
        return {
            int(i): int(self.bits[i])
            for i in np.flatnonzero(self.active_mask)
            if self.bits[i] >= 0
        }


@dataclass
class TrialMetrics:
    """Error counters of one trial; numerators and denominators kept apart."""

    misses: int
    num_active: int
    false_alarms: int
    num_inactive: int
    eib_errors: int
    eib_evaluated: int  # truly active users that were detected (bit defined)


def activity_threshold(beta, tau_sq, num_antennas):
    """Equal-cost threshold on ||v||^2 for an active-vs-inactive slot."""
    beta = np.asarray(beta, dtype=float)
    tau_sq = np.asarray(tau_sq, dtype=float)
    return num_antennas * np.log1p(beta / tau_sq) * tau_sq * (beta + tau_sq) / beta


def slot_norms(obs: np.ndarray) -> np.ndarray:
    return np.einsum("...pm,...pm->...p", obs.real, obs.real) + np.einsum(
        "...pm,...pm->...p", obs.imag, obs.imag
    )


def slot_scores(obs: np.ndarray, beta_slots, tau_sq) -> np.ndarray:
    """Squared norms normalized by each slot's threshold (active iff > scale)."""
    tau_b = np.asarray(tau_sq)[..., None] if np.ndim(tau_sq) else tau_sq
    thresholds = activity_threshold(beta_slots, tau_b, obs.shape[-1])
    return slot_norms(obs) / thresholds


def user_decisions(obs: np.ndarray, beta_users, tau_sq, threshold_scale: float,
                   eib: bool):
    """(user_scores, active_mask, bits) for one trial or a batch of trials."""
    beta_users = np.asarray(beta_users, dtype=float)
    if not eib:
        scores = slot_scores(obs, beta_users, tau_sq)
        active = scores > threshold_scale
        bits = np.full(active.shape, -1, dtype=np.int8)
        return scores, active, bits
    beta_slots = np.repeat(beta_users, 2, axis=-1)
    per_slot = slot_scores(obs, beta_slots, tau_sq)
    paired = per_slot.reshape(per_slot.shape[:-1] + (-1, 2))
    scores = paired.max(axis=-1)
    active = scores > threshold_scale
    tau_b = np.asarray(tau_sq)[..., None] if np.ndim(tau_sq) else tau_sq
    log_lam = log_likelihood_kernel(slot_norms(obs), beta_slots, tau_b, obs.shape[-1])
    lam_pairs = log_lam.reshape(log_lam.shape[:-1] + (-1, 2))
    bits = np.where(lam_pairs[..., 0] >= lam_pairs[..., 1], 0, 1).astype(np.int8)
    bits = np.where(active, bits, np.int8(-1))
    return scores, active, bits


def detect_plain(obs: np.ndarray, beta_users, tau_sq,
                 threshold_scale: float = 1.0) -> DetectionReport:
    """Declare user n active iff ||v_n||^2 > scale * threshold(beta_n)."""
    _, active, bits = user_decisions(obs, beta_users, tau_sq, threshold_scale, eib=False)
    return DetectionReport(active_mask=active, bits=bits)


def detect_eib(obs: np.ndarray, beta_users, tau_sq,
               threshold_scale: float = 1.0) -> DetectionReport:
    """Max-of-pair activity rule plus log-likelihood bit decisions."""
    _, active, bits = user_decisions(obs, beta_users, tau_sq, threshold_scale, eib=True)
    return DetectionReport(active_mask=active, bits=bits)


def score_report(report: DetectionReport, truth_active, truth_bits=None) -> TrialMetrics:
    """Count misses, false alarms, and bit errors against ground truth.

    Bit errors are counted only over users that are truly active *and*
    detected; the miss rate is reported separately, keeping the metrics
    orthogonal.
    """
    truth_active = np.asarray(truth_active, dtype=bool)
    detected = report.active_mask
    misses = int(np.sum(truth_active & ~detected))
    false_alarms = int(np.sum(~truth_active & detected))
    evaluated = truth_active & detected
    eib_errors = 0
    if truth_bits is not None:
        truth_bits = np.asarray(truth_bits)
        eib_errors = int(np.sum(evaluated & (report.bits != truth_bits)))
    return TrialMetrics(
        misses=misses,
        num_active=int(truth_active.sum()),
        false_alarms=false_alarms,
        num_inactive=int((~truth_active).sum()),
        eib_errors=eib_errors,
        eib_evaluated=int(evaluated.sum()) if truth_bits is not None else 0,
    )


def equal_error_calibrate(active_scores, inactive_scores, rel_tol: float = 0.1,
                          max_iterations: int = 100) -> float:
    """Bisect the threshold scale until P_miss and P_fa agree within rel_tol.

    ``active_scores`` / ``inactive_scores`` are normalized user scores from
    calibration trials (score > scale means "declared active").  Returns the
    scale with the smallest |P_miss - P_fa| seen if the tolerance target is
    unreachable on the discrete samples.
    """
    active_scores = np.asarray(active_scores, dtype=float)
    inactive_scores = np.asarray(inactive_scores, dtype=float)
    if active_scores.size == 0 or inactive_scores.size == 0:
        raise CalibrationError("need score samples from both classes")
    merged = np.concatenate([active_scores, inactive_scores])
    if np.all(merged == merged[0]):
        raise CalibrationError("degenerate samples: all scores are equal")

    def rates(scale):
        p_miss = float(np.mean(active_scores <= scale))
        p_fa = float(np.mean(inactive_scores > scale))
        return p_miss, p_fa

    lo = float(merged.min())
    lo = lo / 2.0 if lo > 0 else lo - 1.0
    hi = float(merged.max()) * 2.0 + 1.0
    best_scale, best_gap = 1.0, float("inf")
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        p_miss, p_fa = rates(mid)
        gap = abs(p_miss - p_fa)
        if gap < best_gap:
            best_scale, best_gap = mid, gap
        floor = min(p_miss, p_fa)
        if floor > 0 and gap < rel_tol * floor:
            return mid
        if p_miss - p_fa < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return best_scale
