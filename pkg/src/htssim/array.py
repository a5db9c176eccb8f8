"""Multi-antenna processing: array-fed reflector responses, MVDR receive
beamforming against co-channel interferers, and transmit precoding.
"""

from dataclasses import dataclass
from enum import Enum
import csv
import warnings

import numpy as np
from scipy import linalg

from .channel import complex_normal
from .errors import (DimensionError, DimensionMismatch, DomainError, OutOfGrid,
                     RankDeficient, SingularCovariance)

COND_LIMIT = 1e12
LOADING_FACTOR = 1e-6


@dataclass(frozen=True)
class FeedTable:
    """Per-feed gain and phase tabulated on a regular (phi, theta) grid, radians.

    ``gain`` and ``phase`` have shape ``(n_phi, n_theta, M)``.
    """

    phi: np.ndarray
    theta: np.ndarray
    gain: np.ndarray
    phase: np.ndarray

    @property
    def n_feeds(self):
        return self.gain.shape[2]


def load_feed_table(path):
    """Read an AFR grid CSV with columns ``phi_deg, theta_deg, feed, gain, phase_rad``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    phi_deg = np.array([float(r["phi_deg"]) for r in rows])
    theta_deg = np.array([float(r["theta_deg"]) for r in rows])
    feed = np.array([int(r["feed"]) for r in rows])
    phis, thetas, feeds = np.unique(phi_deg), np.unique(theta_deg), np.unique(feed)
    if len(rows) != len(phis) * len(thetas) * len(feeds):
        raise DomainError("AFR grid is not a complete regular grid")
    gain = np.full((len(phis), len(thetas), len(feeds)), np.nan)
    phase = np.full_like(gain, np.nan)
    ip = np.searchsorted(phis, phi_deg)
    it = np.searchsorted(thetas, theta_deg)
    fi = np.searchsorted(feeds, feed)
    gain[ip, it, fi] = [float(r["gain"]) for r in rows]
    phase[ip, it, fi] = [float(r["phase_rad"]) for r in rows]
    if np.isnan(gain).any():
        raise DomainError("AFR grid has duplicate or missing entries")
    return FeedTable(np.radians(phis), np.radians(thetas), gain, phase)


def save_feed_table(table, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi_deg", "theta_deg", "feed", "gain", "phase_rad"])
        for i, p in enumerate(np.degrees(table.phi)):
            for j, t in enumerate(np.degrees(table.theta)):
                for m in range(table.n_feeds):
                    w.writerow([repr(float(p)), repr(float(t)), m,
                                repr(float(table.gain[i, j, m])), repr(float(table.phase[i, j, m]))])


@dataclass(frozen=True)
class AfrResponse:
    a: np.ndarray
    gain: np.ndarray
    phase: np.ndarray


def _bracket(grid, x, name):
    if x < grid[0] - 1e-12 or x > grid[-1] + 1e-12:
        raise OutOfGrid(f"{name}={x} outside [{grid[0]}, {grid[-1]}]")
    if len(grid) == 1:
        return 0, 0, 0.0
    i = int(np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2))
    w = (x - grid[i]) / (grid[i + 1] - grid[i])
    return i, i + 1, float(np.clip(w, 0.0, 1.0))


def afr_response(table, phi, theta):
    """AFR response ``a_i = g_i exp(j Psi_i)`` by bilinear interpolation of the grid.

    Corner phases are unwrapped against the lower-left corner before
    interpolating so a 2 pi jump between nodes does not average to garbage.
    """
    i0, i1, wp = _bracket(table.phi, phi, "phi")
    j0, j1, wt = _bracket(table.theta, theta, "theta")
    corners = [(i0, j0, (1 - wp) * (1 - wt)), (i1, j0, wp * (1 - wt)),
               (i0, j1, (1 - wp) * wt), (i1, j1, wp * wt)]
    ref = table.phase[i0, j0]
    g = np.zeros(table.n_feeds)
    psi = np.zeros(table.n_feeds)
    for i, j, w in corners:
        g += w * table.gain[i, j]
        ph = table.phase[i, j]
        psi += w * (ref + np.angle(np.exp(1j * (ph - ref))))
    return AfrResponse(g * np.exp(1j * psi), g, psi)


@dataclass(frozen=True)
class ReceivedSnapshot:
    y: np.ndarray
    desired: np.ndarray
    interference: tuple
    noise: np.ndarray


def synthesize_snapshot(a0, h0, s0, interferers, noise_power, rng):
    """Received vector ``h0 a0 s0 + sum_k h_k a_k s_k + z`` with its components kept."""
    a0 = np.asarray(a0, dtype=complex)
    M = a0.shape[0]
    terms = []
    for a_k, h_k, s_k in interferers:
        a_k = np.asarray(a_k, dtype=complex)
        if a_k.shape != (M,):
            raise DimensionMismatch("interferer response length differs from the desired one")
        terms.append(h_k * a_k * s_k)
    desired = h0 * a0 * s0
    z = complex_normal(rng, M, noise_power) if noise_power > 0 else np.zeros(M, dtype=complex)
    y = desired + sum(terms, np.zeros(M, dtype=complex)) + z
    return ReceivedSnapshot(y, desired, tuple(terms), z)


def interference_covariance(interferers, noise_power, M):
    """``sum_k |h_k|^2 E|s_k|^2 a_k a_k^H + noise_power I`` for unit-power symbols."""
    R = noise_power * np.eye(M, dtype=complex)
    for a_k, h_k, p_k in interferers:
        a_k = np.asarray(a_k, dtype=complex)
        R += abs(h_k) ** 2 * p_k * np.outer(a_k, a_k.conj())
    return R


def beamform_weights(R, a0):
    """MVDR (Capon) weights ``R^-1 a0 / (a0^H R^-1 a0)``.

    If ``cond(R)`` exceeds 1e12 the covariance is diagonally loaded with
    ``1e-6 * trace(R) / M`` (with a warning); if that still does not help,
    :class:`SingularCovariance` is raised.
    """
    R = np.asarray(R, dtype=complex)
    a0 = np.asarray(a0, dtype=complex)
    M = a0.shape[0]
    if R.shape != (M, M):
        raise DimensionMismatch("covariance and steering vector sizes differ")
    if not np.allclose(R, R.conj().T, rtol=1e-10, atol=1e-14 * np.abs(R).max()):
        raise DomainError("covariance must be Hermitian")
    R = 0.5 * (R + R.conj().T)
    if np.linalg.cond(R) > COND_LIMIT:
        eps = LOADING_FACTOR * np.trace(R).real / M
        warnings.warn(f"ill-conditioned covariance, diagonal loading {eps:.3e}", stacklevel=2)
        R = R + eps * np.eye(M)
        if not np.isfinite(np.linalg.cond(R)) or np.linalg.cond(R) > COND_LIMIT:
            raise SingularCovariance("covariance singular even after diagonal loading")
    try:
        u = linalg.cho_solve(linalg.cho_factor(R), a0)
    except linalg.LinAlgError:
        raise SingularCovariance("covariance is not positive definite") from None
    return u / np.vdot(a0, u)


def beamform_output(w, y):
    """Combiner output ``w^H y``."""
    w = np.asarray(w)
    y = np.asarray(y)
    if w.shape[0] != y.shape[0]:
        raise DimensionMismatch("weight and snapshot lengths differ")
    return np.vdot(w, y) if y.ndim == 1 else w.conj() @ y


def output_sinr(w, a0, h0, R):
    """Post-combining SINR for unit-power desired symbols."""
    sig = abs(h0) ** 2 * abs(np.vdot(w, a0)) ** 2
    return float(sig / np.real(np.vdot(w, R @ w)))


class PrecoderDesign(str, Enum):
    ZeroForcing = "ZeroForcing"
    RegularizedZeroForcing = "RegularizedZeroForcing"


class PowerNorm(str, Enum):
    SumPower = "SumPower"
    PerFeed = "PerFeed"


@dataclass(frozen=True)
class Precoder:
    W: np.ndarray
    design: PrecoderDesign
    power_norm: PowerNorm
    power: float
    alpha: float | None = None


def design_precoder(H, design=PrecoderDesign.ZeroForcing, power_norm=PowerNorm.SumPower,
                    power=None, noise_power=1.0, alpha=None):
    """Linear precoder for a ``K x M`` channel (K users, M feeds).

    ZF uses the SVD pseudo-inverse ``H^H (H H^H)^-1``; RZF uses
    ``H^H (H H^H + alpha I)^-1`` with ``alpha = K * noise_power`` by default.
    The result is scaled uniformly so that ``trace(W W^H) = power``
    (``SumPower``, default ``power = K``) or the largest feed row energy
    equals ``power`` (``PerFeed``).
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise DimensionMismatch("channel must be a matrix")
    K, M = H.shape
    if K > M:
        raise DimensionError(f"{K} users exceed {M} feeds")
    design = PrecoderDesign(design)
    power_norm = PowerNorm(power_norm)
    if power is None:
        power = float(K)
    if not power > 0:
        raise DomainError("power budget must be positive")
    if design is PrecoderDesign.ZeroForcing:
        U, s, Vh = np.linalg.svd(H, full_matrices=False)
        if s[-1] <= 1e-12 * s[0]:
            raise RankDeficient("zero-forcing needs a full row rank channel")
        W0 = Vh.conj().T @ np.diag(1.0 / s) @ U.conj().T
    else:
        if alpha is None:
            alpha = K * noise_power
        if not alpha > 0:
            raise DomainError("RZF regularizer must be positive")
        W0 = H.conj().T @ np.linalg.solve(H @ H.conj().T + alpha * np.eye(K), np.eye(K))
    if power_norm is PowerNorm.SumPower:
        scale = np.sqrt(power / np.sum(np.abs(W0) ** 2))
    else:
        scale = np.sqrt(power / np.max(np.sum(np.abs(W0) ** 2, axis=1)))
    return Precoder(W0 * scale, design, power_norm, float(power), alpha)


def precoded_transmit(H, W, x, noise_power, rng):
    """Received vector ``y = H W x + z`` for all K users."""
    H = np.asarray(H)
    W = np.asarray(W)
    x = np.asarray(x)
    if H.shape[1] != W.shape[0] or W.shape[1] != x.shape[0]:
        raise DimensionMismatch(f"H {H.shape}, W {W.shape} and x {x.shape} do not chain")
    z = complex_normal(rng, (H.shape[0],) + x.shape[1:], noise_power) if noise_power > 0 else 0.0
    return H @ (W @ x) + z


def precoded_sinr(H, W, noise_power):
    """Per-user SINR of ``H W`` for unit-power independent streams."""
    G = np.abs(np.asarray(H) @ np.asarray(W)) ** 2
    sig = np.diag(G)
    return sig / (G.sum(axis=1) - sig + noise_power)


def synthetic_feed_table(n_feeds=4, phi_deg=(-10.0, 10.0), theta_deg=(-10.0, 10.0), step_deg=0.5,
                         feed_spacing_deg=2.0, feed_beamwidth_deg=4.0, phase_slope=np.pi / 2):
    """Gaussian feed spots along phi with a linear phase progression.

    Stands in for measured AFR data in demos and tests.
    """
    phis = np.arange(phi_deg[0], phi_deg[1] + step_deg / 2, step_deg)
    thetas = np.arange(theta_deg[0], theta_deg[1] + step_deg / 2, step_deg)
    P, T = np.meshgrid(phis, thetas, indexing="ij")
    offsets = (np.arange(n_feeds) - (n_feeds - 1) / 2) * feed_spacing_deg
    gain = np.empty(P.shape + (n_feeds,))
    phase = np.empty_like(gain)
    for m, off in enumerate(offsets):
        r2 = (P - off) ** 2 + T**2
        gain[..., m] = np.exp(-np.log(2) * r2 / (feed_beamwidth_deg / 2) ** 2)
        phase[..., m] = np.angle(np.exp(1j * phase_slope * m * (np.sin(np.radians(P)) * 20 + np.sin(np.radians(T)) * 7)))
    return FeedTable(np.radians(phis), np.radians(thetas), gain, phase)
