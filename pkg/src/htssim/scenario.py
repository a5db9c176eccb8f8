"""Scenario domain types, YAML ingestion, validation and serialization.

The scenario file is YAML with top-level sections ``satellites``, ``beams``,
``gateways``, ``users``, ``carriers``, ``impairments`` and ``simulation``.
Numeric keys carry their unit in the name (``bandwidth_hz``, ``lat_deg``).
See ``docs/scenario_format.md`` for the full schema.

Validation collects every problem instead of stopping at the first one;
``load_scenario`` raises the first issue, ``check_scenario`` returns them all.
"""

from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
import hashlib
import math

import yaml

from .errors import DanglingReference, DomainError, ParseError, ValidationError
from .geometry import CONSTANTS, R_E, derive_orbit_rate


class OrbitKind(str, Enum):
    GSO = "GSO"
    NGSO = "NGSO"


class PayloadKind(str, Enum):
    Regenerative = "Regenerative"
    DigitalTransparent = "DigitalTransparent"
    BentPipe = "BentPipe"


class GatewayRole(str, Enum):
    active = "active"
    redundant = "redundant"


@dataclass(frozen=True)
class SatelliteDef:
    id: str
    orbit_kind: OrbitKind
    orbit_radius_m: float
    angular_velocity_rad_s: float
    payload_kind: PayloadKind
    feeds: int
    subsatellite_lat_deg: float = 0.0
    subsatellite_lon_deg: float = 0.0


@dataclass(frozen=True)
class BeamDef:
    id: str
    satellite: str
    center_lat_deg: float
    center_lon_deg: float
    half_power_beamwidth_deg: float
    peak_gain_dbi: float
    tx_power_w: float
    carriers: int


@dataclass(frozen=True)
class GatewayDef:
    id: str
    satellite: str
    role: GatewayRole
    lat_deg: float
    lon_deg: float
    fade_probability: float = 0.0
    feeder_capacity_bps: float = math.inf
    capacity_freq_bps: dict = field(default_factory=dict)
    capacity_time_bps: dict = field(default_factory=dict)
    slots: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UserDef:
    id: str
    beam: str
    lat_deg: float
    lon_deg: float
    traffic_demand_bps: float
    rx_gain_over_temperature_db_per_k: float = 0.0


@dataclass(frozen=True)
class CarrierPlan:
    total_bandwidth_hz: float
    reuse_factor: int
    carrier_bandwidth_hz: float

    @property
    def beam_bandwidth_hz(self):
        return self.total_bandwidth_hz / self.reuse_factor


@dataclass(frozen=True)
class ImpairmentConfig:
    """Optional impairment blocks; ``None`` means disabled (the default)."""

    rician_factor: float | None = None
    shadowing_std_db: float | None = None
    multicarrier: dict | None = None
    hpa: dict | None = None
    memory_polynomial: dict | None = None
    imux_taps: tuple | None = None
    omux_taps: tuple | None = None
    frequency_offset: dict | None = None
    phase_noise: dict | None = None
    doppler: dict | None = None
    iq_imbalance: dict | None = None
    csi: dict | None = None


@dataclass(frozen=True)
class Scenario:
    satellites: tuple
    beams: tuple
    gateways: tuple
    users: tuple
    carriers: CarrierPlan
    impairments: ImpairmentConfig
    seed: int
    monte_carlo_trials: int
    carrier_frequency_hz: float = 20e9
    experiments: dict = field(default_factory=dict)
    source_digest: str = field(default="", compare=False)
    source_path: str = field(default="", compare=False)

    def satellite(self, sat_id):
        return next(s for s in self.satellites if s.id == sat_id)

    def beam_index(self):
        return {b.id: i for i, b in enumerate(self.beams)}


@dataclass(frozen=True)
class Issue:
    kind: type
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.field}: {self.message}"

    def to_exception(self):
        if self.kind is ParseError:
            return ParseError(self.message, line=self.line, field=self.field)
        return self.kind(self.message, field=self.field)


_SECTIONS = ("satellites", "beams", "gateways", "users", "carriers", "impairments", "simulation")
_IMPAIRMENT_KEYS = tuple(f.name for f in fields(ImpairmentConfig))


class _Reader:
    """Typed field access that records issues instead of raising."""

    def __init__(self, lines):
        self.lines = lines
        self.issues = []

    def issue(self, kind, path, message):
        self.issues.append(Issue(kind, path, message, self._line(path)))

    def _line(self, path):
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rsplit(".", 1)[0] if "." in path else ""
        return None

    def get(self, d, key, path, kind=float, default=..., check=None, why=""):
        full = f"{path}.{key}" if path else key
        if not isinstance(d, dict) or key not in d or d[key] is None:
            if default is ...:
                self.issue(ValidationError, full, "required field missing")
                return None
            return default
        raw = d[key]
        try:
            if kind is float:
                if isinstance(raw, bool):
                    raise TypeError
                val = float(raw)
                if math.isnan(val):
                    raise ValueError
            elif kind is int:
                if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                    raise TypeError
                val = int(raw)
            elif kind is str:
                val = str(raw)
            elif isinstance(kind, type) and issubclass(kind, Enum):
                val = kind(raw)
            else:
                val = kind(raw)
        except (TypeError, ValueError):
            self.issue(ValidationError, full, f"cannot interpret {raw!r} as {getattr(kind, '__name__', kind)}")
            return None
        if check is not None and not check(val):
            self.issue(ValidationError, full, f"value {val!r} violates {why}")
        return val


def _node_lines(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _node_lines(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = f"{prefix}[{i}]"
            out[key] = v.start_mark.line + 1
            _node_lines(v, key, out)
    return out


def _parse_text(text):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(f"malformed YAML: {getattr(exc, 'problem', exc)}", line=line) from None
    if not isinstance(data, dict):
        raise ParseError("scenario file must be a mapping of sections", line=1)
    return data, _node_lines(node)


def _complex(v):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, bool):
        raise TypeError
    return complex(float(v), 0.0)


def _build(data, lines):
    r = _Reader(lines)
    for name in data:
        if name not in _SECTIONS:
            r.issue(ValidationError, name, "unknown top-level section")
    for name in ("satellites", "beams", "users", "carriers"):
        if name not in data:
            r.issue(ValidationError, name, "required section missing")

    def seq(name):
        items = data.get(name) or []
        if not isinstance(items, list):
            r.issue(ValidationError, name, "must be a list")
            return []
        return items

    sats = []
    for i, d in enumerate(seq("satellites")):
        p = f"satellites[{i}]"
        kind = r.get(d, "orbit_kind", p, OrbitKind, default=OrbitKind.GSO)
        radius = r.get(d, "orbit_radius_m", p, float, check=lambda v: v > R_E, why="r_s > earth radius")
        rate = r.get(d, "angular_velocity_rad_s", p, float, default=None)
        if radius is not None and radius > R_E:
            kepler = derive_orbit_rate(radius)
            if rate is None:
                rate = CONSTANTS.sidereal_rate if kind is OrbitKind.GSO else kepler
            if rate <= 0:
                r.issue(ValidationError, f"{p}.angular_velocity_rad_s", "w_s must be positive")
            if kind is OrbitKind.GSO and abs(kepler / CONSTANTS.sidereal_rate - 1) > 0.01:
                r.issue(ValidationError, f"{p}.orbit_radius_m",
                        f"GSO radius gives Keplerian rate {kepler:.6e} rad/s, not the sidereal rate")
            if kind is OrbitKind.GSO and abs(rate / CONSTANTS.sidereal_rate - 1) > 0.01:
                r.issue(ValidationError, f"{p}.angular_velocity_rad_s", "GSO w_s inconsistent with sidereal rate")
        sats.append(SatelliteDef(
            id=r.get(d, "id", p, str),
            orbit_kind=kind,
            orbit_radius_m=radius,
            angular_velocity_rad_s=rate,
            payload_kind=r.get(d, "payload_kind", p, PayloadKind, default=PayloadKind.BentPipe),
            feeds=r.get(d, "feeds", p, int, default=1, check=lambda v: v >= 1, why="feeds >= 1"),
            subsatellite_lat_deg=r.get(d, "subsatellite_lat_deg", p, float, default=0.0,
                                       check=lambda v: -90 <= v <= 90, why="latitude range"),
            subsatellite_lon_deg=r.get(d, "subsatellite_lon_deg", p, float, default=0.0),
        ))

    beams = []
    for i, d in enumerate(seq("beams")):
        p = f"beams[{i}]"
        beams.append(BeamDef(
            id=r.get(d, "id", p, str),
            satellite=r.get(d, "satellite", p, str, default=sats[0].id if len(sats) == 1 else ...),
            center_lat_deg=r.get(d, "center_lat_deg", p, float, check=lambda v: -90 <= v <= 90, why="latitude range"),
            center_lon_deg=r.get(d, "center_lon_deg", p, float),
            half_power_beamwidth_deg=r.get(d, "half_power_beamwidth_deg", p, float,
                                           check=lambda v: 0 < v < 90, why="0 < theta_3dB < 90"),
            peak_gain_dbi=r.get(d, "peak_gain_dbi", p, float, check=math.isfinite, why="finite G_max"),
            tx_power_w=r.get(d, "tx_power_w", p, float, check=lambda v: v > 0, why="tx_power > 0"),
            carriers=r.get(d, "carriers", p, int, default=1, check=lambda v: v >= 1, why="N_i >= 1"),
        ))

    def capmap(d, key, p, kind):
        raw = (d or {}).get(key) or {}
        if not isinstance(raw, dict):
            r.issue(ValidationError, f"{p}.{key}", "must map beam id to value")
            return {}
        out = {}
        for bid, v in raw.items():
            val = r.get(raw, bid, f"{p}.{key}", kind, check=lambda x: x >= 0, why="nonnegative")
            out[str(bid)] = val
        return out

    gws = []
    for i, d in enumerate(seq("gateways")):
        p = f"gateways[{i}]"
        gws.append(GatewayDef(
            id=r.get(d, "id", p, str),
            satellite=r.get(d, "satellite", p, str, default=sats[0].id if len(sats) == 1 else ...),
            role=r.get(d, "role", p, GatewayRole, default=GatewayRole.active),
            lat_deg=r.get(d, "lat_deg", p, float, default=0.0),
            lon_deg=r.get(d, "lon_deg", p, float, default=0.0),
            fade_probability=r.get(d, "fade_probability", p, float, default=0.0,
                                   check=lambda v: 0 <= v <= 1, why="probability in [0, 1]"),
            feeder_capacity_bps=r.get(d, "feeder_capacity_bps", p, float, default=math.inf,
                                      check=lambda v: v > 0, why="capacity > 0"),
            capacity_freq_bps=capmap(d, "capacity_freq_bps", p, float),
            capacity_time_bps=capmap(d, "capacity_time_bps", p, float),
            slots=capmap(d, "slots", p, int),
        ))

    users = []
    for i, d in enumerate(seq("users")):
        p = f"users[{i}]"
        users.append(UserDef(
            id=r.get(d, "id", p, str),
            beam=r.get(d, "beam", p, str),
            lat_deg=r.get(d, "lat_deg", p, float, check=lambda v: -90 <= v <= 90, why="latitude range"),
            lon_deg=r.get(d, "lon_deg", p, float),
            traffic_demand_bps=r.get(d, "traffic_demand_bps", p, float, default=0.0,
                                     check=lambda v: v >= 0, why="traffic_demand >= 0"),
            rx_gain_over_temperature_db_per_k=r.get(d, "rx_gain_over_temperature_db_per_k", p, float, default=0.0),
        ))

    c = data.get("carriers") or {}
    if not isinstance(c, dict):
        r.issue(ValidationError, "carriers", "must be a mapping")
        c = {}
    carriers = CarrierPlan(
        total_bandwidth_hz=r.get(c, "total_bandwidth_hz", "carriers", float, check=lambda v: v > 0, why="B > 0"),
        reuse_factor=r.get(c, "reuse_factor", "carriers", int, default=1, check=lambda v: v >= 1, why="K_f >= 1"),
        carrier_bandwidth_hz=r.get(c, "carrier_bandwidth_hz", "carriers", float,
                                   default=c.get("total_bandwidth_hz"),
                                   check=lambda v: v > 0, why="B_c > 0"),
    )
    if None not in (carriers.total_bandwidth_hz, carriers.reuse_factor, carriers.carrier_bandwidth_hz):
        b_i = carriers.total_bandwidth_hz / carriers.reuse_factor
        for i, b in enumerate(beams):
            if b.carriers is None:
                continue
            rhs = b.carriers * carriers.carrier_bandwidth_hz / carriers.reuse_factor
            if abs(b_i - rhs) > 1e-9 * abs(b_i):
                r.issue(ValidationError, f"beams[{i}].carriers",
                        f"bandwidth identity B_i = B/K_f = N_i*B_c/K_f fails: "
                        f"B/K_f = {b_i:g} Hz but N_i*B_c/K_f = {rhs:g} Hz")

    imp = data.get("impairments") or {}
    if not isinstance(imp, dict):
        r.issue(ValidationError, "impairments", "must be a mapping")
        imp = {}
    for key in imp:
        if key not in _IMPAIRMENT_KEYS:
            r.issue(ValidationError, f"impairments.{key}", "unknown impairment block")
    impairments = _build_impairments(imp, r)

    sim = data.get("simulation") or {}
    if not isinstance(sim, dict):
        r.issue(ValidationError, "simulation", "must be a mapping")
        sim = {}
    seed = r.get(sim, "seed", "simulation", int, default=0, check=lambda v: 0 <= v < 2**64, why="64-bit unsigned seed")
    trials = r.get(sim, "monte_carlo_trials", "simulation", int, default=1, check=lambda v: v >= 1,
                   why="positive trial count")
    freq = r.get(sim, "carrier_frequency_hz", "simulation", float, default=20e9, check=lambda v: v > 0,
                 why="carrier frequency > 0")
    experiments = (sim.get("experiments") if isinstance(sim, dict) else None) or {}
    if not isinstance(experiments, dict):
        r.issue(ValidationError, "simulation.experiments", "must be a mapping")
        experiments = {}

    _check_references(r, sats, beams, gws, users)

    scenario = Scenario(
        satellites=tuple(sats), beams=tuple(beams), gateways=tuple(gws), users=tuple(users),
        carriers=carriers, impairments=impairments, seed=seed, monte_carlo_trials=trials,
        carrier_frequency_hz=freq, experiments=experiments,
    )
    return scenario, r.issues


def _build_impairments(imp, r):
    p = "impairments"
    kw = {}
    kw["rician_factor"] = r.get(imp, "rician_factor", p, float, default=None,
                                check=lambda v: v >= 0, why="K_r >= 0")
    kw["shadowing_std_db"] = r.get(imp, "shadowing_std_db", p, float, default=None,
                                   check=lambda v: v >= 0, why="shadowing std >= 0")
    for key in ("multicarrier", "frequency_offset", "doppler", "csi", "phase_noise"):
        block = imp.get(key)
        if block is not None and not isinstance(block, dict):
            r.issue(ValidationError, f"{p}.{key}", "must be a mapping")
            block = None
        kw[key] = dict(block) if block else None
    mc = kw["multicarrier"]
    if mc is not None:
        r.get(mc, "correlation_amplitude", f"{p}.multicarrier", float, default=0.0,
              check=lambda v: 0 <= v < 1, why="0 <= mu < 1")
        if mc.get("structure", "Tridiagonal") not in ("Tridiagonal", "PairedBlocks"):
            r.issue(ValidationError, f"{p}.multicarrier.structure", "must be Tridiagonal or PairedBlocks")
    pn = kw["phase_noise"]
    if pn is not None:
        h = pn.get("h_coefficients")
        if not (isinstance(h, list) and len(h) == 5 and all(isinstance(v, (int, float)) and v >= 0 for v in h)
                and any(v > 0 for v in h)):
            r.issue(ValidationError, f"{p}.phase_noise.h_coefficients",
                    "need five nonnegative h_alpha values (alpha = 0..4), at least one positive")
    hpa = imp.get("hpa")
    if hpa is not None:
        try:
            coeffs = [_complex(v) for v in hpa["coefficients"]]
            if not coeffs or coeffs[0] == 0:
                raise ValueError
            kw["hpa"] = {"coefficients": [[z.real, z.imag] for z in coeffs]}
        except (KeyError, TypeError, ValueError):
            r.issue(ValidationError, f"{p}.hpa.coefficients", "need a nonempty list of complex [re, im] with gamma_1 != 0")
            kw["hpa"] = None
    mp = imp.get("memory_polynomial")
    if mp is not None:
        try:
            lin = [_complex(v) for v in mp.get("linear_taps", [[1.0, 0.0]])]
            cub = [_complex(v) for v in mp.get("cubic_taps", [[0.0, 0.0]])]
            kw["memory_polynomial"] = {
                "linear_taps": [[z.real, z.imag] for z in lin],
                "cubic_taps": [[z.real, z.imag] for z in cub],
            }
        except (TypeError, ValueError, AttributeError):
            r.issue(ValidationError, f"{p}.memory_polynomial", "taps must be lists of complex [re, im]")
            kw["memory_polynomial"] = None
    for key in ("imux_taps", "omux_taps"):
        taps = imp.get(key)
        if taps is None:
            kw[key] = None
            continue
        try:
            kw[key] = tuple((z.real, z.imag) for z in map(_complex, taps))
        except (TypeError, ValueError):
            r.issue(ValidationError, f"{p}.{key}", "FIR taps must be a list of complex [re, im]")
            kw[key] = None
    iq = imp.get("iq_imbalance")
    if iq is not None:
        r.get(iq, "amplitude", f"{p}.iq_imbalance", float, default=0.0)
        r.get(iq, "phase_rad", f"{p}.iq_imbalance", float, default=0.0)
        kw["iq_imbalance"] = dict(iq)
    else:
        kw["iq_imbalance"] = None
    if kw["frequency_offset"] is not None:
        r.get(kw["frequency_offset"], "offset_hz", f"{p}.frequency_offset", float, default=0.0)
    if kw["doppler"] is not None:
        d = kw["doppler"]
        r.get(d, "max_elevation_deg", f"{p}.doppler", float, default=90.0,
              check=lambda v: 0 < v <= 90, why="0 < theta_max <= 90 deg")
    if kw["csi"] is not None:
        d = kw["csi"]
        r.get(d, "doppler_hz", f"{p}.csi", float, check=lambda v: v >= 0, why="f_d >= 0")
        r.get(d, "symbol_time_s", f"{p}.csi", float, check=lambda v: v > 0, why="T_s > 0")
        r.get(d, "max_delay_symbols", f"{p}.csi", int, default=8, check=lambda v: v >= 0, why="D >= 0")
    return ImpairmentConfig(**kw)


def _check_references(r, sats, beams, gws, users):
    for name, items in (("satellites", sats), ("beams", beams), ("gateways", gws), ("users", users)):
        seen = set()
        for i, it in enumerate(items):
            if it.id is None:
                continue
            if it.id in seen:
                r.issue(ValidationError, f"{name}[{i}].id", f"duplicate id {it.id!r}")
            seen.add(it.id)
    sat_ids = {s.id for s in sats}
    beam_ids = {b.id for b in beams}
    for i, b in enumerate(beams):
        if b.satellite is not None and b.satellite not in sat_ids:
            r.issue(DanglingReference, f"beams[{i}].satellite", f"unknown satellite {b.satellite!r}")
    for i, g in enumerate(gws):
        if g.satellite is not None and g.satellite not in sat_ids:
            r.issue(DanglingReference, f"gateways[{i}].satellite", f"unknown satellite {g.satellite!r}")
        for key in ("capacity_freq_bps", "capacity_time_bps", "slots"):
            for bid in getattr(g, key):
                if bid not in beam_ids:
                    r.issue(DanglingReference, f"gateways[{i}].{key}.{bid}", f"unknown beam {bid!r}")
    for i, u in enumerate(users):
        if u.beam is not None and u.beam not in beam_ids:
            r.issue(DanglingReference, f"users[{i}].beam", f"unknown beam {u.beam!r}")


def parse_scenario(text):
    """Parse scenario YAML text; returns ``(scenario, issues)`` without raising on invalid content."""
    data, lines = _parse_text(text)
    scenario, issues = _build(data, lines)
    digest = hashlib.sha256(text.encode() if isinstance(text, str) else text).hexdigest()
    object.__setattr__(scenario, "source_digest", digest)
    return scenario, issues


def check_scenario(path):
    """All diagnostics for the file at ``path`` (empty list when clean)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return [Issue(ParseError, str(path), f"cannot read file: {exc.strerror}")]
    try:
        _, issues = parse_scenario(text)
    except ParseError as exc:
        return [Issue(ParseError, exc.field or "<file>", str(exc.args[0]), exc.line)]
    return issues


def load_scenario(path):
    """Load and fully validate a scenario file.

    Raises
    ------
    ParseError
        Unreadable or malformed YAML.
    DanglingReference
        An id reference (beam->satellite, user->beam, gateway->satellite) does not resolve.
    ValidationError
        Any other invariant violation; the message names the field.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file: {exc.strerror}", field=str(path)) from None
    scenario, issues = parse_scenario(text)
    if issues:
        dangling = [i for i in issues if i.kind is DanglingReference]
        raise (dangling or issues)[0].to_exception()
    object.__setattr__(scenario, "source_path", str(Path(path).resolve()))
    return scenario


def loads_scenario(text):
    scenario, issues = parse_scenario(text)
    if issues:
        dangling = [i for i in issues if i.kind is DanglingReference]
        raise (dangling or issues)[0].to_exception()
    return scenario


def _plain(v):
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def scenario_to_dict(s):
    def rows(items):
        return [{k: _plain(v) for k, v in asdict(it).items()} for it in items]

    imp = {k: _plain(v) for k, v in asdict(s.impairments).items() if v is not None}
    return {
        "satellites": rows(s.satellites),
        "beams": rows(s.beams),
        "gateways": rows(s.gateways),
        "users": rows(s.users),
        "carriers": asdict(s.carriers),
        "impairments": imp,
        "simulation": {
            "seed": s.seed,
            "monte_carlo_trials": s.monte_carlo_trials,
            "carrier_frequency_hz": s.carrier_frequency_hz,
            "experiments": _plain(s.experiments),
        },
    }


def dumps_scenario(s):
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)


def save_scenario(s, path):
    Path(path).write_text(dumps_scenario(s))


def require_positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value}")
    return value
