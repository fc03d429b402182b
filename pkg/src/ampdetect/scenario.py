"""Scenario generation: pilots, users, effective channels, received signal.

The received pilot block is ``Y = sqrt(rho_ul) * S @ X + Z`` with ``S`` the
L x P pilot matrix and ``X`` the P x M effective-channel matrix whose row n
is ``x_n^H = alpha_n * h_n^H``.  Without EIB there is one slot (pilot column)
per user, P = N.  With EIB each user owns the adjacent slot pair
(2n, 2n+1); the transmitted bit selects which slot of the pair carries the
channel row, so P = 2N and per-slot activity is epsilon/2.

All generators accept leading batch dimensions where noted and draw from an
explicit ``numpy.random.Generator``; nothing touches global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import MIN_USER_DISTANCE_KM, ScenarioConfig


@dataclass(frozen=True)
class UserState:
    """Ground truth for one user in one coherence block."""

    active: bool
    eib_bit: int | None
    distance_km: float
    large_scale: float
    channel: np.ndarray  # h_n, shape (M,)


@dataclass(frozen=True)
class SignalMatrices:
    """One trial's matrices: effective channels X, received Y, noise Z."""

    effective: np.ndarray          # (P, M)
    received: np.ndarray | None    # (L, M)
    noise: np.ndarray | None       # (L, M)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian, per-entry variance ``var`` (E|z|^2 = var)."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_pilots(pilot_len: int, num_seqs: int, rng: np.random.Generator,
               batch: int | None = None) -> np.ndarray:
    """Draw an L x P pilot matrix with i.i.d. entries from {(+-1 +-j)/sqrt(2L)}.

    Every entry has squared magnitude 1/L, so every column has unit norm.
    With ``batch`` set, returns shape (batch, L, P).
    """
    if pilot_len < 1 or num_seqs < 1:
        raise ValueError(f"pilot dimensions must be positive, got L={pilot_len}, P={num_seqs}")
    corners = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0 * pilot_len)
    shape = (pilot_len, num_seqs) if batch is None else (batch, pilot_len, num_seqs)
    return corners[rng.integers(0, 4, size=shape)]


def sample_distances(num: int, cell_radius_km: float, rng: np.random.Generator,
                     size=None) -> np.ndarray:
    """User distances for uniform placement on the annulus [r_min, R]."""
    lo2 = MIN_USER_DISTANCE_KM ** 2
    hi2 = cell_radius_km ** 2
    shape = num if size is None else size
    return np.sqrt(rng.uniform(lo2, hi2, size=shape))


def gen_users(cfg: ScenarioConfig, rng: np.random.Generator) -> list[UserState]:
    """Draw N users: placement, path loss, Rayleigh channels, activity, bits."""
    n, m = cfg.num_users, cfg.num_antennas
    active = rng.random(n) < cfg.activity_prob
    distances = sample_distances(n, cfg.cell_radius_km, rng)
    betas = path_loss_linear_array(distances)
    channels = np.sqrt(betas)[:, None] * complex_normal(rng, (n, m))
    bits = rng.integers(0, 2, size=n) if cfg.eib_enabled else None
    return [
        UserState(
            active=bool(active[i]),
            eib_bit=int(bits[i]) if bits is not None else None,
            distance_km=float(distances[i]),
            large_scale=float(betas[i]),
            channel=channels[i],
        )
        for i in range(n)
    ]


def path_loss_linear_array(distances_km: np.ndarray) -> np.ndarray:
    """Vectorized large-scale gain; see config.path_loss_linear."""
    return np.asarray(
        10.0 ** ((-130.0 - 37.6 * np.log10(distances_km)) / 10.0)
    )


def draw_beta_population(cfg: ScenarioConfig, size: int, rng: np.random.Generator) -> np.ndarray:
    """Sample of large-scale gains from the scenario's distance distribution."""
    return path_loss_linear_array(sample_distances(size, cfg.cell_radius_km, rng))


def encode(users: list[UserState], pilots: np.ndarray, cfg: ScenarioConfig) -> SignalMatrices:
    """Build the effective-channel matrix X (plain) or X-tilde (EIB).

    Row n of X is ``alpha_n h_n^H``.  With EIB, rows (2n, 2n+1) are
    ``((1 - d_n) x_n, d_n x_n)^H``: an active user occupies exactly one row
    of its pair, an inactive user none.
    """
    n = len(users)
    expected_cols = 2 * n if cfg.eib_enabled else n
    if pilots.shape[-1] != expected_cols:
        raise ValueError(
            f"pilot matrix has {pilots.shape[-1]} columns, expected {expected_cols}"
        )
    m = cfg.num_antennas
    rows = np.zeros((expected_cols, m), dtype=complex)
    for i, user in enumerate(users):
        if not user.active:
            continue
        row = np.conj(user.channel)
        if cfg.eib_enabled:
            rows[2 * i + user.eib_bit] = row
        else:
            rows[i] = row
    return SignalMatrices(effective=rows, received=None, noise=None)


def synthesize_rx(pilots: np.ndarray, effective: np.ndarray, tx_power_w: float,
                  noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Received block Y = sqrt(rho_ul) S X + Z, AWGN with per-entry variance sigma^2."""
    if pilots.shape[-1] != effective.shape[-2]:
        raise ValueError(
            f"dimension mismatch: pilots {pilots.shape} vs effective {effective.shape}"
        )
    signal = np.sqrt(tx_power_w) * (pilots @ effective)
    if noise_var == 0.0:
        return signal
    return signal + complex_normal(rng, signal.shape, var=noise_var)


def build_signals(cfg: ScenarioConfig, rng: np.random.Generator):
    """One full trial draw: (users, pilots, SignalMatrices with Y filled)."""
    users = gen_users(cfg, rng)
    pilots = gen_pilots(cfg.pilot_len, cfg.num_slots, rng)
    encoded = encode(users, pilots, cfg)
    noise = complex_normal(rng, (cfg.pilot_len, cfg.num_antennas), var=cfg.resolved_noise_var)
    received = np.sqrt(cfg.tx_power_w) * (pilots @ encoded.effective) + noise
    signals = SignalMatrices(effective=encoded.effective, received=received, noise=noise)
    return users, pilots, signals
