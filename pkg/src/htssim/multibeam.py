"""System-level capacity models for multibeam satellites.

Covers frequency-reuse throughput, beamhopping illumination schedules and
smart-gateway diversity with redundant gateways.

Illumination matrices are stored with rows = time slots and columns = beams,
so the slot count of beam ``i`` is the sum of column ``i``.
"""

from dataclasses import dataclass, replace
from enum import Enum
import csv

import numpy as np

from .errors import DimensionMismatch, DomainError


def _sinr(gamma):
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 1:
        raise DimensionMismatch("SINR vector must be one-dimensional")
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise DomainError("SINR entries must be finite and nonnegative")
    return g


def system_throughput(bandwidth, reuse_factor, gamma):
    """Sum Shannon throughput ``(B / K_f) * sum_i log2(1 + gamma_i)`` in bit/s."""
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    if int(reuse_factor) != reuse_factor or reuse_factor < 1:
        raise DomainError("reuse factor must be an integer >= 1")
    g = _sinr(gamma)
    return float(bandwidth / reuse_factor * np.sum(np.log2(1.0 + g)))


def sinr_from_channel(H, p, noise_power):
    """Per-user SINR for a square channel with one stream per user.

    ``gamma_k = |H[k,k]|^2 p_k / (sum_{j != k} |H[k,j]|^2 p_j + noise_power)``
    """
    H = np.asarray(H)
    p = np.asarray(p, dtype=float)
    if not noise_power > 0:
        raise DomainError("noise power must be positive")
    if H.ndim != 2 or H.shape[0] != H.shape[1] or p.shape != (H.shape[0],):
        raise DimensionMismatch(f"need K x K channel and length-K powers, got {H.shape} and {p.shape}")
    if np.any(p < 0):
        raise DomainError("powers must be nonnegative")
    rx = np.abs(H) ** 2 * p[None, :]
    signal = np.diag(rx)
    interference = rx.sum(axis=1) - signal
    return signal / (interference + noise_power)


@dataclass(frozen=True)
class IlluminationMatrix:
    T: np.ndarray
    slot_duration: float = 1.0
    k_active: int | None = None

    def __post_init__(self):
        T = np.asarray(self.T)
        if T.ndim != 2:
            raise DimensionMismatch("illumination matrix must be 2-D (slots x beams)")
        if not np.all((T == 0) | (T == 1)):
            raise DomainError("illumination entries must be 0 or 1")
        T = T.astype(np.int8)
        T.flags.writeable = False
        object.__setattr__(self, "T", T)
        if not self.slot_duration > 0:
            raise DomainError("slot duration must be positive")
        if self.k_active is not None and np.any(T.sum(axis=1) > self.k_active):
            raise DomainError(f"a slot illuminates more than k_active={self.k_active} beams")

    @property
    def n_slots(self):
        return self.T.shape[0]

    @property
    def n_beams(self):
        return self.T.shape[1]

    def __eq__(self, other):
        if not isinstance(other, IlluminationMatrix):
            return NotImplemented
        return (np.array_equal(self.T, other.T) and self.slot_duration == other.slot_duration
                and self.k_active == other.k_active)

    __hash__ = None


def round_robin_schedule(n_slots, n_beams, k_active, slot_duration=1.0):
    """Cyclic schedule lighting ``k_active`` consecutive beams per slot."""
    T = np.zeros((n_slots, n_beams), dtype=np.int8)
    k = min(k_active, n_beams)
    for t in range(n_slots):
        T[t, (t * k + np.arange(k)) % n_beams] = 1
    return IlluminationMatrix(T, slot_duration, k_active)


def load_illumination_csv(path, slot_duration=1.0, k_active=None):
    with open(path, newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    return IlluminationMatrix(np.array(rows), slot_duration, k_active)


def save_illumination_csv(T, path):
    matrix = T.T if isinstance(T, IlluminationMatrix) else np.asarray(T)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(matrix.tolist())


def slots_per_beam(T):
    """Number of slots assigned to each beam (column sums)."""
    T = T if isinstance(T, IlluminationMatrix) else IlluminationMatrix(T)
    return T.T.sum(axis=0).astype(int)


class ReuseMode(str, Enum):
    FullReuse = "FullReuse"
    PartialReuse = "PartialReuse"


def beamhop_capacity(T, gamma, bandwidth, mode=ReuseMode.FullReuse, reuse_factor=1):
    """Per-beam time-averaged capacity under a beamhopping schedule, bit/s.

    Beam ``i`` transmits a fraction ``N_i,t / N_t`` of the window with the
    full band (``FullReuse``) or a ``1/K_f`` segment (``PartialReuse``).
    """
    T = T if isinstance(T, IlluminationMatrix) else IlluminationMatrix(T)
    g = _sinr(gamma)
    if g.shape[0] != T.n_beams:
        raise DimensionMismatch(f"{T.n_beams} beams in schedule but {g.shape[0]} SINR values")
    mode = ReuseMode(mode)
    if mode is ReuseMode.FullReuse:
        b_eff = bandwidth
    else:
        if reuse_factor < 1:
            raise DomainError("reuse factor must be >= 1")
        b_eff = bandwidth / reuse_factor
    duty = slots_per_beam(T) / T.n_slots
    return duty * b_eff * np.log2(1.0 + g)


class GatewayState(str, Enum):
    Clear = "Clear"
    Faded = "Faded"


@dataclass(frozen=True)
class GatewayTopology:
    """Gateway-to-beam capacity tables for N active and P redundant gateways.

    Rows ``0..N-1`` are the active gateways, rows ``N..N+P-1`` the redundant
    ones (all-zero until traffic is switched onto them).
    """

    n_active: int
    n_redundant: int
    capacity_freq: np.ndarray  # (N+P) x M, bit/s
    capacity_time: np.ndarray  # (N+P) x M, bit/s
    slots: np.ndarray  # (N+P) x M, slot counts
    slot_duration: float
    window_slots: int
    states: tuple = ()
    feeder_capacity: np.ndarray | None = None
    outage: np.ndarray | None = None
    ids: tuple = ()

    def __post_init__(self):
        n = self.n_active + self.n_redundant
        cf = np.array(self.capacity_freq, dtype=float)
        ct = np.array(self.capacity_time, dtype=float)
        x = np.array(self.slots, dtype=np.int64)
        if not (cf.shape == ct.shape == x.shape and cf.ndim == 2 and cf.shape[0] == n):
            raise DimensionMismatch("capacity and slot tables must all be (N+P) x M")
        if np.any(cf < 0) or np.any(ct < 0) or np.any(x < 0):
            raise DomainError("capacities and slot counts must be nonnegative")
        if np.any(x.sum(axis=1) > self.window_slots):
            raise DomainError("a feeder link is connected for more slots than the window holds")
        states = tuple(GatewayState(s) for s in self.states) if self.states else (GatewayState.Clear,) * n
        if len(states) != n:
            raise DimensionMismatch("one state per gateway required")
        feeder = (np.full(n, np.inf) if self.feeder_capacity is None
                  else np.array(self.feeder_capacity, dtype=float))
        outage = np.zeros(cf.shape[1], dtype=bool) if self.outage is None else np.array(self.outage, dtype=bool)
        for name, val in (("capacity_freq", cf), ("capacity_time", ct), ("slots", x),
                          ("feeder_capacity", feeder), ("outage", outage)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "states", states)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(f"gw{i}" for i in range(n)))

    @property
    def n_beams(self):
        return self.capacity_freq.shape[1]

    @property
    def n_gateways(self):
        return self.n_active + self.n_redundant

    @property
    def window_seconds(self):
        return self.window_slots * self.slot_duration

    def clear_mask(self):
        return np.array([s is GatewayState.Clear for s in self.states])

    def with_states(self, states):
        return replace(self, states=tuple(states))


def _check_beam(g, j):
    if not 0 <= j < g.n_beams:
        raise IndexError(f"beam index {j} out of range 0..{g.n_beams - 1}")


def offered_capacity_frequency(g, j):
    """Frequency-multiplexed offered capacity to beam ``j``: sum of Clear gateways' C_F[i][j]."""
    _check_beam(g, j)
    return float(np.sum(g.capacity_freq[g.clear_mask(), j]))


@dataclass(frozen=True)
class TimeCapacity:
    bits_per_window: float
    bits_per_second: float


def offered_capacity_time(g, j):
    """Time-multiplexed offered capacity ``sum_i C_T[i][j] X[i][j] T_s``.

    The sum is a bit count per scheduling window; it is also returned
    averaged over the window duration.
    """
    _check_beam(g, j)
    m = g.clear_mask()
    bits = float(np.sum(g.capacity_time[m, j] * g.slots[m, j] * g.slot_duration))
    return TimeCapacity(bits, bits / g.window_seconds)


def draw_fades(g, probabilities, rng):
    """Independent Bernoulli fade draw per gateway; returns a boolean array."""
    p = np.broadcast_to(np.asarray(probabilities, dtype=float), (g.n_gateways,))
    return rng.random(g.n_gateways) < p


def switch_gateways(g, fade_events):
    """Reroute traffic away from faded active gateways.

    Each faded active gateway hands all of its beam assignments to one Clear,
    still-unused redundant gateway, picking the one with the most residual
    feeder capacity (ties go to the lowest index). When no redundant gateway
    can take the load, the affected beams keep only the capacity offered by
    the remaining Clear gateways and are flagged in ``outage``.
    """
    faded = np.asarray(fade_events, dtype=bool)
    if faded.shape != (g.n_gateways,):
        raise DimensionMismatch("one fade event per gateway required")
    cf = g.capacity_freq.copy()
    ct = g.capacity_time.copy()
    x = g.slots.copy()
    states = [GatewayState.Faded if f else GatewayState.Clear for f in faded]
    outage = np.zeros(g.n_beams, dtype=bool)
    taken = set()
    for i in range(g.n_active):
        if not faded[i]:
            continue
        load = cf[i].sum()
        best, best_residual = None, -np.inf
        for r in range(g.n_active, g.n_gateways):
            if faded[r] or r in taken:
                continue
            residual = g.feeder_capacity[r] - cf[r].sum()
            if residual >= load and residual > best_residual:
                best, best_residual = r, residual
        served = (cf[i] > 0) | (x[i] > 0) | (ct[i] > 0)
        if best is None:
            outage |= served
            continue
        taken.add(best)
        cf[best] += cf[i]
        ct[best] += ct[i]
        x[best] += x[i]
        cf[i] = 0.0
        ct[i] = 0.0
        x[i] = 0
    return replace(g, capacity_freq=cf, capacity_time=ct, slots=x, states=tuple(states), outage=outage)


def topology_from_scenario(scenario, window_slots=None, slot_duration=1.0):
    """Build a GatewayTopology from scenario gateway definitions (active first)."""
    beams = scenario.beam_index()
    active = [gw for gw in scenario.gateways if gw.role.value == "active"]
    redundant = [gw for gw in scenario.gateways if gw.role.value == "redundant"]
    ordered = active + redundant
    n, m = len(ordered), len(beams)
    cf = np.zeros((n, m))
    ct = np.zeros((n, m))
    x = np.zeros((n, m), dtype=np.int64)
    for i, gw in enumerate(ordered):
        for bid, v in gw.capacity_freq_bps.items():
            cf[i, beams[bid]] = v
        for bid, v in gw.capacity_time_bps.items():
            ct[i, beams[bid]] = v
        for bid, v in gw.slots.items():
            x[i, beams[bid]] = v
    if window_slots is None:
        window_slots = int(max(1, x.sum(axis=1).max(initial=0)))
    topo = GatewayTopology(
        n_active=len(active), n_redundant=len(redundant),
        capacity_freq=cf, capacity_time=ct, slots=x,
        slot_duration=slot_duration, window_slots=window_slots,
        feeder_capacity=[gw.feeder_capacity_bps for gw in ordered],
        ids=tuple(gw.id for gw in ordered),
    )
    probs = np.array([gw.fade_probability for gw in ordered])
    return topo, probs
