"""Channel models: Rician fading, the multibeam channel H = Phi B, the
multicarrier intercarrier-interference matrix, y = Hx + z and delayed CSI.
"""

from dataclasses import dataclass
from enum import Enum
import csv
import warnings

import numpy as np
from scipy import special

from .errors import DimensionMismatch, DomainError, GeometryError
from .geometry import C, ecef, elevation, off_axis_angle

RICIAN_K_CAP = 1e12
# u at which the tapered-aperture pattern is 3 dB down
BEAM_U_3DB = 2.07123


def complex_normal(rng, size=None, variance=1.0):
    """Circularly-symmetric complex Gaussian samples with E|z|^2 = variance."""
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True)
class RicianParams:
    k_factor: float
    los: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not self.k_factor >= 0:
            raise DomainError("Rician factor must be >= 0")
        if abs(abs(self.los) - 1.0) > 1e-12:
            raise DomainError("LoS component must have unit modulus")
        object.__setattr__(self, "k_factor", min(float(self.k_factor), RICIAN_K_CAP))


def draw_rician(params, rng, size=None):
    """Rician coefficient(s) ``sqrt(K/(K+1)) l + sqrt(1/(K+1)) g`` with unit mean power."""
    k = params.k_factor
    g = complex_normal(rng, size)
    return np.sqrt(k / (k + 1.0)) * params.los + np.sqrt(1.0 / (k + 1.0)) * g


def _pattern_amplitude(u):
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-3
    us = u[small]
    # series of J1(u)/(2u) + 36 J3(u)/u^3 about u = 0
    q = (us / 2.0) ** 2
    out[small] = 1.0 - q * (1.0 / 8.0 + 36.0 / 192.0) + q**2 * (1.0 / 48.0 + 36.0 / 1920.0)
    ul = u[~small]
    out[~small] = special.j1(ul) / (2.0 * ul) + 36.0 * special.jv(3, ul) / ul**3
    return out


def beam_gain(theta_off, theta_3db, g_max):
    """Tapered-aperture beam gain (linear) at ``theta_off`` radians off boresight.

    ``G = G_max [J1(u)/(2u) + 36 J3(u)/u^3]^2`` with
    ``u = 2.07123 sin(theta_off) / sin(theta_3db)``; ``theta_3db`` is the
    off-axis angle at which the gain is 3 dB down. ``G(0) = G_max`` exactly.
    """
    theta = np.asarray(theta_off, dtype=float)
    if not theta_3db > 0:
        raise DomainError("theta_3db must be positive")
    if np.any(theta < 0) or np.any(theta >= np.pi / 2):
        raise DomainError("off-axis angle must be in [0, pi/2)")
    u = BEAM_U_3DB * np.sin(theta) / np.sin(theta_3db)
    g = g_max * _pattern_amplitude(u) ** 2
    return float(g) if g.ndim == 0 else g


@dataclass(frozen=True)
class MultibeamChannel:
    """``H = Phi diag(fading) B_gain``; ``fading`` is all ones unless enabled."""

    H: np.ndarray
    phases: np.ndarray
    B_gain: np.ndarray
    fading: np.ndarray
    distances: np.ndarray

    @property
    def Phi(self):
        return np.diag(np.exp(1j * self.phases))


def satellite_position(sat):
    return ecef(sat.subsatellite_lat_deg, sat.subsatellite_lon_deg, sat.orbit_radius_m)


def build_multibeam_channel(sat, beams, users, freq, rng, rician_factor=None,
                            shadowing_std_db=None, phases=None):
    """Multibeam downlink channel between ``len(beams)`` feeds and ``len(users)`` users.

    ``B_gain[k, m] = sqrt(G_tx(theta_km) G_rx(k)) * c / (4 pi d_k f)``, where the
    receive term uses the user's G/T so that the matching noise power is
    ``k_B * bandwidth``. Phases are i.i.d. uniform on [0, 2 pi) unless
    ``phases`` is given.
    """
    if not freq > 0:
        raise DomainError("frequency must be positive")
    sat_pos = satellite_position(sat)
    user_pos = np.array([ecef(u.lat_deg, u.lon_deg) for u in users]).reshape(-1, 3)
    centers = np.array([ecef(b.center_lat_deg, b.center_lon_deg) for b in beams]).reshape(-1, 3)
    el = elevation(user_pos, sat_pos)
    if np.any(el < 0):
        bad = [users[i].id for i in np.flatnonzero(el < 0)]
        raise GeometryError(f"users below the horizon: {bad}")
    d = np.linalg.norm(user_pos - sat_pos, axis=1)
    theta = off_axis_angle(sat_pos, centers[None, :, :], user_pos[:, None, :])
    g_tx = np.empty_like(theta)
    for m, b in enumerate(beams):
        g_tx[:, m] = beam_gain(theta[:, m], np.radians(b.half_power_beamwidth_deg),
                               10 ** (b.peak_gain_dbi / 10))
    g_rx = 10 ** (np.array([u.rx_gain_over_temperature_db_per_k for u in users]) / 10)
    B = np.sqrt(g_tx * g_rx[:, None]) * (C / (4 * np.pi * d[:, None] * freq))
    K = len(users)
    if phases is None:
        phases = rng.uniform(0.0, 2 * np.pi, K)
    phases = np.asarray(phases, dtype=float)
    fading = np.ones(K, dtype=complex)
    if rician_factor is not None:
        fading = fading * draw_rician(RicianParams(rician_factor), rng, K)
    if shadowing_std_db:
        fading = fading * 10 ** (shadowing_std_db * rng.standard_normal(K) / 20)
    H = np.exp(1j * phases)[:, None] * fading[:, None] * B
    return MultibeamChannel(H=H, phases=phases, B_gain=B, fading=fading, distances=d)


def mjp_transmit(H, x, noise_power, rng):
    """Joint-processing input-output relation ``y = H x + z``."""
    H = np.asarray(H)
    x = np.asarray(x)
    if H.ndim != 2 or x.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"H is {H.shape} but x has length {x.shape[0] if x.ndim else 0}")
    if noise_power < 0:
        raise DomainError("noise power must be >= 0")
    z = complex_normal(rng, (H.shape[0],) + x.shape[1:], noise_power)
    return H @ x + z


class McStructure(str, Enum):
    Tridiagonal = "Tridiagonal"
    PairedBlocks = "PairedBlocks"


@dataclass(frozen=True)
class MulticarrierChannel:
    H_mc: np.ndarray
    mu: float
    h: np.ndarray
    structure: McStructure


def multicarrier_mask(M, structure):
    """Boolean sparsity pattern of the off-diagonal coupling."""
    structure = McStructure(structure)
    idx = np.arange(M)
    mask = np.zeros((M, M), dtype=bool)
    if structure is McStructure.Tridiagonal:
        mask[idx[:-1], idx[1:]] = True
        mask[idx[1:], idx[:-1]] = True
    else:
        pairs = idx[: M - M % 2 : 2]
        mask[pairs, pairs + 1] = True
        mask[pairs + 1, pairs] = True
    return mask


def build_multicarrier_channel(M, mu, rician, structure, rng):
    """Intercarrier-interference matrix with Rician per-carrier coefficients.

    Diagonal entries are ``h_i``; a coupled entry ``(r, c)`` is ``mu * h_c``,
    applied symmetrically to both neighbours.
    """
    if M < 1:
        raise DomainError("need at least one carrier")
    if not 0 <= mu < 1:
        raise DomainError("correlation amplitude mu must lie in [0, 1)")
    h = draw_rician(rician, rng, M)
    mask = multicarrier_mask(M, structure)
    H = np.diag(h).astype(complex)
    H = H + np.where(mask, mu * h[None, :], 0.0)
    return MulticarrierChannel(H, float(mu), h, McStructure(structure))


def clarke_rho(f_d, delay, symbol_time):
    """Clarke temporal correlation ``J0(2 pi f_d D T_s)`` for a D-symbol CSI delay."""
    if delay < 0 or int(delay) != delay:
        raise DomainError("delay must be a nonnegative integer")
    if not symbol_time > 0:
        raise DomainError("symbol time must be positive")
    return float(special.j0(2 * np.pi * f_d * delay * symbol_time))


def ar1_coefficient(rho, delay, f_d=0.0, symbol_time=1.0):
    """Per-step AR(1) coefficient whose ``delay``-th power equals ``rho``.

    A complex coefficient handles negative ``rho`` at even delays. For
    ``delay == 0`` the one-symbol Clarke correlation is used.
    """
    if delay == 0:
        return complex(special.j0(2 * np.pi * f_d * symbol_time))
    mag = abs(rho) ** (1.0 / delay)
    return complex(mag * np.exp(1j * np.pi / delay)) if rho < 0 else complex(mag)


@dataclass(frozen=True)
class ChannelProcess:
    """Stationary unit-power AR(1) channel trajectory, ``samples[n]`` = H[n]."""

    samples: np.ndarray
    coefficient: complex

    def __getitem__(self, n):
        return self.samples[n]

    def __len__(self):
        return self.samples.shape[0]


def simulate_channel_process(shape, n_steps, coefficient, rng):
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    a = complex(coefficient)
    if abs(a) > 1:
        raise DomainError("AR(1) coefficient must satisfy |a| <= 1")
    out = np.empty((n_steps,) + shape, dtype=complex)
    out[0] = complex_normal(rng, shape)
    innov = np.sqrt(max(0.0, 1.0 - abs(a) ** 2))
    for n in range(1, n_steps):
        out[n] = a * out[n - 1] + innov * complex_normal(rng, shape)
    return ChannelProcess(out, a)


@dataclass(frozen=True)
class CsiEstimate:
    H_hat: np.ndarray
    delay: int
    sigma2_e: float
    rho: float


def estimate_csi(process, n, delay, f_d, symbol_time, rng):
    """Outdated, noisy channel estimate ``H_hat[n] = H[n - D] + E[n]``.

    ``E`` has i.i.d. zero-mean Gaussian real and imaginary parts, each of
    variance ``1 - rho^2`` with ``rho = J0(2 pi f_d D T_s)``.
    """
    rho = clarke_rho(f_d, delay, symbol_time)
    sigma2 = 1.0 - rho**2
    if sigma2 < 0:
        raise DomainError(f"|rho| = {abs(rho)} > 1 gives negative error variance")
    if n - delay < 0 or n >= len(process):
        raise DomainError(f"time index {n} with delay {delay} is outside the simulated process")
    if delay > 0 and abs(process.coefficient**delay - rho) > 1e-9:
        warnings.warn("channel process lag correlation differs from the Clarke rho", stacklevel=2)
    past = process[n - delay]
    e = np.sqrt(sigma2) * (rng.standard_normal(past.shape) + 1j * rng.standard_normal(past.shape))
    return CsiEstimate(past + e, int(delay), sigma2, rho)


def export_matrix_csv(H, path):
    """Write a complex matrix as CSV with interleaved ``re_j, im_j`` column pairs."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{part}_{j}" for j in range(H.shape[1]) for part in ("re", "im")])
        for row in H:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def import_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    vals = np.array(rows, dtype=float)
    return vals[:, 0::2] + 1j * vals[:, 1::2]
