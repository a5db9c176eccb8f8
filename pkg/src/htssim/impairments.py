"""Baseband transceiver and payload impairments.

Every transform takes and returns a :class:`BasebandSignal`. Stages are
small dataclasses with an ``apply`` method so they can be strung together in
an :class:`ImpairmentChain`.
"""

from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DimensionMismatch, DomainError, NyquistViolation
from .geometry import C, R_E


@dataclass(frozen=True)
class BasebandSignal:
    samples: np.ndarray
    sample_rate: float
    center_freq: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=complex)
        if x.ndim != 1:
            raise DimensionMismatch("baseband signal must be one-dimensional")
        if not self.sample_rate > 0:
            raise DomainError("sample rate must be positive")
        if not np.all(np.isfinite(x)):
            raise DomainError("signal samples must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def time(self):
        return np.arange(len(self)) / self.sample_rate

    def power(self):
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples):
        return BasebandSignal(samples, self.sample_rate, self.center_freq)


def tone(freq, n, sample_rate, amplitude=1.0, phase=0.0):
    t = np.arange(n) / sample_rate
    return BasebandSignal(amplitude * np.exp(1j * (2 * np.pi * freq * t + phase)), sample_rate)


def compose_multicarrier(signals, offsets, phases):
    """Composite multicarrier signal ``sum_m s_m(t) exp(j(2 pi f_m t + theta_m)) / sqrt(M)``."""
    M = len(signals)
    if M == 0 or len(offsets) != M or len(phases) != M:
        raise DimensionMismatch("need one carrier offset and phase per signal")
    fs = signals[0].sample_rate
    n = len(signals[0])
    if any(s.sample_rate != fs or len(s) != n for s in signals):
        raise DimensionMismatch("carrier signals must share sample rate and length")
    f = np.asarray(offsets, dtype=float)
    if np.any(np.abs(f) >= fs / 2):
        raise NyquistViolation(f"carrier offsets must lie inside +-{fs / 2} Hz")
    t = np.arange(n) / fs
    out = np.zeros(n, dtype=complex)
    for s, fm, th in zip(signals, f, phases):
        out += s.samples * np.exp(1j * (2 * np.pi * fm * t + th))
    return BasebandSignal(out / np.sqrt(M), fs, signals[0].center_freq)


@dataclass(frozen=True)
class HpaModel:
    """Odd-order polynomial amplifier; ``coefficients[j]`` is gamma_{2j+1}."""

    coefficients: tuple

    def __post_init__(self):
        c = tuple(complex(v) for v in self.coefficients)
        if not c or c[0] == 0:
            raise DomainError("HPA needs gamma_1 != 0")
        object.__setattr__(self, "coefficients", c)

    @property
    def order(self):
        return len(self.coefficients) - 1

    def gain(self, amplitude):
        """Complex gain applied to an input of magnitude ``amplitude``."""
        a2 = np.abs(np.asarray(amplitude, dtype=float)) ** 2
        g = np.zeros(a2.shape, dtype=complex)
        for j, gamma in enumerate(self.coefficients):
            g = g + gamma * comb(2 * j + 1, j) / 4**j * a2**j
        return g

    def am_am(self, amplitude):
        return np.abs(self.gain(amplitude)) * np.asarray(amplitude, dtype=float)

    def am_pm(self, amplitude):
        return np.angle(self.gain(amplitude))

    def apply(self, signal):
        return apply_hpa(signal, self)


def apply_hpa(x, model):
    """Memoryless polynomial HPA: ``y = [sum_j gamma_{2j+1} C(2j+1, j) / 2^{2j} |x|^{2j}] x``."""
    return x.with_samples(model.gain(np.abs(x.samples)) * x.samples)


@dataclass(frozen=True)
class MemoryPolynomialModel:
    """Linear plus cubic memory polynomial with taps ``a_m`` and ``b_m``, m = 0..Q."""

    linear_taps: tuple = (1.0,)
    cubic_taps: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "linear_taps", tuple(complex(v) for v in self.linear_taps))
        object.__setattr__(self, "cubic_taps", tuple(complex(v) for v in self.cubic_taps))

    def apply(self, signal):
        return apply_memory_polynomial(signal, self)


def _causal_fir(x, taps):
    return np.convolve(x, np.asarray(taps, dtype=complex))[: x.shape[0]]


def apply_memory_polynomial(x, model):
    """``y[n] = sum_m a_m x[n-m] + sum_m b_m |x[n-m]|^2 x[n-m]`` with zero history."""
    s = x.samples
    y = _causal_fir(s, model.linear_taps) + _causal_fir(np.abs(s) ** 2 * s, model.cubic_taps)
    return x.with_samples(y)


@dataclass(frozen=True)
class FirFilter:
    """Linear FIR stage; used for the IMUX and OMUX filters around the HPA."""

    taps: tuple = (1.0,)
    name: str = "fir"

    def apply(self, signal):
        return signal.with_samples(_causal_fir(signal.samples, self.taps))


def apply_frequency_offset(s, f_n, phi_n):
    """Oscillator mismatch rotation ``r(t) = s(t) exp(j(-2 pi f_n t + phi_n))``."""
    if abs(f_n) >= s.sample_rate / 2:
        raise NyquistViolation("frequency offset must be below half the sample rate")
    return s.with_samples(s.samples * np.exp(1j * (-2 * np.pi * f_n * s.time + phi_n)))


@dataclass(frozen=True)
class FrequencyOffset:
    offset_hz: float
    phase_rad: float = 0.0

    def apply(self, signal):
        return apply_frequency_offset(signal, self.offset_hz, self.phase_rad)


@dataclass(frozen=True)
class PhaseNoiseProfile:
    """One-sided phase PSD ``S(f) = sum_a h[a] / f^a`` (rad^2/Hz), a = 0..4."""

    h: tuple

    def __post_init__(self):
        h = tuple(float(v) for v in self.h)
        if len(h) != 5 or any(v < 0 for v in h):
            raise DomainError("need five nonnegative h_alpha coefficients")
        object.__setattr__(self, "h", h)

    def psd(self, f):
        f = np.asarray(f, dtype=float)
        return sum(ha / f**a for a, ha in enumerate(self.h) if ha > 0) + 0.0 * f


def synthesize_phase_noise(profile, n_samples, sample_rate, rng):
    """Phase sequence (rad) with one-sided PSD ``profile.psd`` by spectral shaping.

    White complex Gaussian bins are scaled by ``sqrt(S(f) fs N / 2)`` so the
    one-sided periodogram ``2 |X_k|^2 / (fs N)`` has expectation ``S(f_k)``.
    The DC bin is zero.
    """
    n = int(n_samples)
    if n < 2 or n & (n - 1):
        raise DomainError("n_samples must be a power of two >= 2")
    if not sample_rate > 0:
        raise DomainError("sample rate must be positive")
    if not any(profile.h):
        return np.zeros(n)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    scale = np.zeros_like(f)
    scale[1:] = np.sqrt(profile.psd(f[1:]) * sample_rate * n / 2.0)
    X = scale * (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape)) / np.sqrt(2.0)
    X[-1] = scale[-1] * rng.standard_normal()
    return np.fft.irfft(X, n)


@dataclass(frozen=True)
class PhaseNoise:
    profile: PhaseNoiseProfile
    seed: int = 0

    def apply(self, signal):
        n = len(signal)
        n2 = 1 << max(1, (n - 1).bit_length())
        phi = synthesize_phase_noise(self.profile, n2, signal.sample_rate,
                                     np.random.default_rng(self.seed))[:n]
        return signal.with_samples(signal.samples * np.exp(1j * phi))


@dataclass(frozen=True)
class DopplerGeometry:
    f0: float
    w_s: float
    r_s: float
    theta_max: float
    r_e: float = R_E

    def __post_init__(self):
        if not (self.f0 > 0 and self.w_s > 0):
            raise DomainError("carrier frequency and angular velocity must be positive")
        if self.r_s < self.r_e:
            raise DomainError("orbit radius below the Earth radius")
        if not 0 < self.theta_max <= np.pi / 2:
            raise DomainError("maximum elevation must be in (0, pi/2]")

    @property
    def eta(self):
        """Cosine of the central angle between terminal and orbital plane."""
        return float(np.cos(np.arccos(self.r_e / self.r_s * np.cos(self.theta_max)) - self.theta_max))


def doppler_shift(t, g):
    """Doppler shift (Hz) at time ``t`` (s) from the pass's maximum-elevation instant."""
    t = np.asarray(t, dtype=float)
    eta = g.eta
    wt = g.w_s * t
    den2 = g.r_e**2 + g.r_s**2 - 2 * g.r_e * g.r_s * np.cos(wt) * eta
    if np.any(den2 <= 1e-12 * g.r_s**2):
        raise DomainError("degenerate geometry: zero slant range")
    fd = -(g.f0 / C) * g.w_s * g.r_e * g.r_s * np.sin(wt) * eta / np.sqrt(den2)
    return float(fd) if fd.ndim == 0 else fd


def apply_doppler_time_domain(s, f_d, f0):
    """Time compression/stretching ``r[k] = s(k (1 + f_d(t_k)/f0))`` by cubic interpolation.

    ``f_d`` is a constant in Hz or a callable of the sample times. Warped
    instants that fall outside the input record give zero.
    """
    n = len(s)
    t = s.time
    fd = np.broadcast_to(np.asarray(f_d(t) if callable(f_d) else f_d, dtype=float), (n,))
    ratio = fd / f0
    if np.any(np.abs(ratio) >= 1e-3):
        raise DomainError("|f_d / f0| must stay below 1e-3")
    k = np.arange(n, dtype=float)
    warped = k * (1.0 + ratio)
    x = s.samples
    re = CubicSpline(k, x.real)(warped)
    im = CubicSpline(k, x.imag)(warped)
    y = re + 1j * im
    exact = warped == k
    y[exact] = x[exact]
    y[(warped < 0) | (warped > n - 1)] = 0.0
    return s.with_samples(y)


def apply_doppler_frequency_domain(s, f_d):
    """Residual carrier Doppler after downconversion: rotation by ``-2 pi * integral f_d dt``."""
    t = s.time
    fd = np.broadcast_to(np.asarray(f_d(t) if callable(f_d) else f_d, dtype=float), t.shape)
    phase = 2 * np.pi * np.concatenate([[0.0], np.cumsum(fd[:-1])]) / s.sample_rate
    return s.with_samples(s.samples * np.exp(-1j * phase))


@dataclass(frozen=True)
class Doppler:
    geometry: DopplerGeometry
    time_offset: float = 0.0
    time_domain: bool = True
    frequency_domain: bool = True

    def apply(self, signal):
        fd = lambda t: doppler_shift(t + self.time_offset, self.geometry)  # noqa: E731
        if self.frequency_domain:
            signal = apply_doppler_frequency_domain(signal, fd)
        if self.time_domain:
            signal = apply_doppler_time_domain(signal, fd, self.geometry.f0)
        return signal


@dataclass(frozen=True)
class IqImbalance:
    amplitude: float = 0.0
    phase: float = 0.0

    @property
    def eta(self):
        return complex(np.cos(self.phase / 2), self.amplitude * np.sin(self.phase / 2))

    @property
    def eta_conj(self):
        return complex(self.amplitude * np.cos(self.phase / 2), -np.sin(self.phase / 2))

    def image_rejection(self):
        """Image-to-signal power ratio ``|eta'|^2 / |eta|^2``."""
        return abs(self.eta_conj) ** 2 / abs(self.eta) ** 2

    def apply(self, signal):
        return apply_iq_imbalance(signal, self)


def apply_iq_imbalance(x, imb):
    """Widely-linear I/Q imbalance ``y = eta x + eta' conj(x)``."""
    s = x.samples
    return x.with_samples(imb.eta * s + imb.eta_conj * np.conj(s))


def iq_imbalance_real_form(x, imb):
    """Same impairment written on the I and Q rails separately."""
    xi, xq = x.samples.real, x.samples.imag
    c, s = np.cos(imb.phase / 2), np.sin(imb.phase / 2)
    yi = (1 + imb.amplitude) * (xi * c - xq * s)
    yq = (1 - imb.amplitude) * (xq * c - xi * s)
    return x.with_samples(yi + 1j * yq)


@dataclass(frozen=True)
class ImpairmentChain:
    stages: tuple = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.stages)

    def __len__(self):
        return len(self.stages)


def run_chain(x, chain):
    """Apply the stages left to right; an empty chain returns ``x`` unchanged."""
    stages = chain.stages if isinstance(chain, ImpairmentChain) else tuple(chain)
    for stage in stages:
        x = stage.apply(x)
    return x


def _cplx(pairs):
    return tuple(complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p) for p in pairs)


def chain_from_config(cfg, seed=0, satellite=None):
    """Impairment chain described by a scenario ``ImpairmentConfig``.

    Order: IMUX, HPA, memory polynomial, OMUX, Doppler, frequency offset,
    phase noise, I/Q imbalance. Disabled blocks are skipped.
    """
    stages = []
    if cfg.imux_taps:
        stages.append(FirFilter(_cplx(cfg.imux_taps), "imux"))
    if cfg.hpa:
        stages.append(HpaModel(_cplx(cfg.hpa["coefficients"])))
    if cfg.memory_polynomial:
        mp = cfg.memory_polynomial
        stages.append(MemoryPolynomialModel(_cplx(mp["linear_taps"]), _cplx(mp["cubic_taps"])))
    if cfg.omux_taps:
        stages.append(FirFilter(_cplx(cfg.omux_taps), "omux"))
    if cfg.doppler and satellite is not None:
        d = cfg.doppler
        geom = DopplerGeometry(
            f0=float(d.get("carrier_frequency_hz", 2e9)),
            w_s=satellite.angular_velocity_rad_s,
            r_s=satellite.orbit_radius_m,
            theta_max=np.radians(float(d.get("max_elevation_deg", 90.0))),
        )
        stages.append(Doppler(geom, float(d.get("time_offset_s", 0.0)),
                              bool(d.get("time_domain", True)), bool(d.get("frequency_domain", True))))
    if cfg.frequency_offset:
        fo = cfg.frequency_offset
        stages.append(FrequencyOffset(float(fo.get("offset_hz", 0.0)), float(fo.get("phase_rad", 0.0))))
    if cfg.phase_noise:
        stages.append(PhaseNoise(PhaseNoiseProfile(cfg.phase_noise["h_coefficients"]), seed))
    if cfg.iq_imbalance:
        iq = cfg.iq_imbalance
        stages.append(IqImbalance(float(iq.get("amplitude", 0.0)), float(iq.get("phase_rad", 0.0))))
    return ImpairmentChain(tuple(stages))


def signal_to_bytes(sig):
    """Interleaved re/im little-endian float64 payload and its metadata text."""
    inter = np.empty(2 * len(sig), dtype="<f8")
    inter[0::2] = sig.samples.real
    inter[1::2] = sig.samples.imag
    meta = (
        f"sample_rate_hz = {sig.sample_rate!r}\n"
        f"center_freq_hz = {sig.center_freq!r}\n"
        f"samples = {len(sig)}\n"
    )
    return inter.tobytes(), meta


def save_signal(sig, path):
    """Write ``path`` (samples) and ``path.meta`` (sample rate, center frequency)."""
    path = Path(path)
    data, meta = signal_to_bytes(sig)
    path.write_bytes(data)
    meta_path = path.with_name(path.name + ".meta")
    meta_path.write_text(meta)
    return path, meta_path


def load_signal(path):
    path = Path(path)
    meta = {}
    for line in path.with_name(path.name + ".meta").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if "samples" in meta and raw.size != 2 * int(meta["samples"]):
        raise DimensionMismatch("sample count in metadata does not match the data file")
    return BasebandSignal(raw[0::2] + 1j * raw[1::2], float(meta["sample_rate_hz"]),
                          float(meta.get("center_freq_hz", 0.0)))
