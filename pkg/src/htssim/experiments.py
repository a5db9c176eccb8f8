"""Named experiment pipelines run by the CLI.

Each experiment is a pure function ``(scenario, trial) -> rows``; all
randomness comes from streams keyed by ``(seed, purpose, trial)``, so trials
can be evaluated in any order or in worker processes with identical output.
Settings come from ``simulation.experiments.<Name>`` in the scenario file.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import array as arr
from . import channel as ch
from . import coverage as cov
from . import export
from . import impairments as imp
from . import multibeam as mb
from . import rng as rngmod
from .errors import ValidationError
from .geometry import CONSTANTS


class Experiment(str, Enum):
    MultibeamThroughput = "MultibeamThroughput"
    Beamhopping = "Beamhopping"
    GatewayDiversity = "GatewayDiversity"
    PrecodingSinr = "PrecodingSinr"
    BeamformingSinr = "BeamformingSinr"
    ImpairmentChainEval = "ImpairmentChainEval"
    CsiSensitivity = "CsiSensitivity"
    CoveragePlan = "CoveragePlan"


@dataclass(frozen=True)
class ExperimentDef:
    columns: tuple  # (name, unit) pairs
    trial: object  # callable(scenario, trial) -> list of row tuples
    artifacts: object = None  # optional callable(scenario) -> {filename: bytes}


def settings(scenario, name):
    return dict(scenario.experiments.get(name) or {})


def _db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(x)


def _resolve(scenario, rel):
    p = Path(rel)
    if not p.is_absolute() and scenario.source_path:
        p = Path(scenario.source_path).parent / p
    return p


def _serving_users(scenario):
    """First user of every beam, in beam order."""
    first = {}
    for u in scenario.users:
        first.setdefault(u.beam, u)
    missing = [b.id for b in scenario.beams if b.id not in first]
    if missing:
        raise ValidationError(f"experiment needs at least one user per beam; none for {missing}", field="users")
    return [first[b.id] for b in scenario.beams]


def _channel(scenario, trial):
    sat = scenario.satellites[0]
    users = _serving_users(scenario)
    rng = rngmod.stream(scenario.seed, "channel", trial)
    return ch.build_multibeam_channel(
        sat, scenario.beams, users, scenario.carrier_frequency_hz, rng,
        rician_factor=scenario.impairments.rician_factor,
        shadowing_std_db=scenario.impairments.shadowing_std_db,
    )


def _noise_power(scenario, bandwidth):
    # channel amplitudes carry G/T, so the matching noise is k_B * bandwidth
    return CONSTANTS.boltzmann * bandwidth


def multibeam_throughput(scenario, trial):
    cp = scenario.carriers
    chan = _channel(scenario, trial)
    p = np.array([b.tx_power_w for b in scenario.beams])
    gamma = mb.sinr_from_channel(chan.H, p, _noise_power(scenario, cp.beam_bandwidth_hz))
    c = mb.system_throughput(cp.total_bandwidth_hz, cp.reuse_factor, gamma)
    return [(trial, c, float(np.mean(_db(gamma))), float(np.min(_db(gamma))))]


def _schedule(scenario):
    st = settings(scenario, Experiment.Beamhopping.value)
    nb = len(scenario.beams)
    k_active = int(st.get("k_active", max(1, (nb + 1) // 2)))
    slot = float(st.get("slot_duration_s", 1e-3))
    if "illumination_csv" in st:
        return mb.load_illumination_csv(_resolve(scenario, st["illumination_csv"]), slot, k_active)
    return mb.round_robin_schedule(int(st.get("slots", nb)), nb, k_active, slot)


def beamhopping(scenario, trial):
    st = settings(scenario, Experiment.Beamhopping.value)
    T = _schedule(scenario)
    if T.n_beams != len(scenario.beams):
        raise ValidationError("illumination matrix column count differs from the beam count",
                              field="simulation.experiments.Beamhopping")
    mode = mb.ReuseMode(st.get("mode", "FullReuse"))
    cp = scenario.carriers
    bw = cp.total_bandwidth_hz if mode is mb.ReuseMode.FullReuse else cp.beam_bandwidth_hz
    chan = _channel(scenario, trial)
    p = np.array([b.tx_power_w for b in scenario.beams])
    noise = _noise_power(scenario, bw)
    # SINR of a beam averaged over the slots in which it is lit; only co-lit beams interfere
    acc = np.zeros(T.n_beams)
    for row in T.T:
        lit = row.astype(bool)
        if lit.any():
            g = mb.sinr_from_channel(chan.H[np.ix_(lit, lit)], p[lit], noise)
            acc[lit] += g
    n_lit = mb.slots_per_beam(T)
    gamma = np.divide(acc, n_lit, out=np.zeros_like(acc), where=n_lit > 0)
    cap = mb.beamhop_capacity(T, gamma, cp.total_bandwidth_hz, mode, cp.reuse_factor)
    return [(trial, b.id, int(n_lit[i]), float(_db(gamma[i])) if gamma[i] > 0 else float("-inf"), float(cap[i]))
            for i, b in enumerate(scenario.beams)]


def gateway_diversity(scenario, trial):
    st = settings(scenario, Experiment.GatewayDiversity.value)
    if not scenario.gateways:
        raise ValidationError("GatewayDiversity needs a gateways section", field="gateways")
    topo, probs = mb.topology_from_scenario(
        scenario, st.get("window_slots"), float(st.get("slot_duration_s", 1e-3)))
    fades = mb.draw_fades(topo, probs, rngmod.stream(scenario.seed, "gateway", trial))
    sw = mb.switch_gateways(topo, fades)
    rows = []
    for j, b in enumerate(scenario.beams):
        tc = mb.offered_capacity_time(sw, j)
        rows.append((trial, b.id, int(fades.sum()), mb.offered_capacity_frequency(sw, j),
                     tc.bits_per_window, tc.bits_per_second, int(sw.outage[j])))
    return rows


def precoding_sinr(scenario, trial):
    st = settings(scenario, Experiment.PrecodingSinr.value)
    cp = scenario.carriers
    chan = _channel(scenario, trial)
    noise = _noise_power(scenario, cp.beam_bandwidth_hz)
    design = arr.PrecoderDesign(st.get("design", "ZeroForcing"))
    norm = arr.PowerNorm(st.get("power_norm", "SumPower"))
    power = float(st.get("total_power_w", sum(b.tx_power_w for b in scenario.beams)))
    if norm is arr.PowerNorm.PerFeed:
        power = float(st.get("feed_power_w", max(b.tx_power_w for b in scenario.beams)))
    pre = arr.design_precoder(chan.H, design, norm, power, noise, st.get("alpha"))
    gamma = arr.precoded_sinr(chan.H, pre.W, noise)
    users = _serving_users(scenario)
    return [(trial, u.id, float(_db(g)), float(cp.beam_bandwidth_hz * np.log2(1 + g)))
            for u, g in zip(users, gamma)]


def _feed_table(scenario):
    st = settings(scenario, Experiment.BeamformingSinr.value)
    if "feed_grid_csv" in st:
        return arr.load_feed_table(_resolve(scenario, st["feed_grid_csv"]))
    return arr.synthetic_feed_table(int(st.get("feeds", 4)))


def beamforming_sinr(scenario, trial):
    st = settings(scenario, Experiment.BeamformingSinr.value)
    table = _feed_table(scenario)
    des = st.get("desired", {"phi_deg": 0.0, "theta_deg": 0.0})
    a0 = arr.afr_response(table, np.radians(des["phi_deg"]), np.radians(des["theta_deg"])).a
    noise = float(st.get("noise_power_w", 1.0))
    rng = rngmod.stream(scenario.seed, "beamforming", trial)
    snr = 10 ** (float(des.get("snr_db", 0.0)) / 10)
    h0 = np.sqrt(snr * noise) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    interferers = []
    for it in st.get("interferers", []):
        a_k = arr.afr_response(table, np.radians(it["phi_deg"]), np.radians(it["theta_deg"])).a
        h_k = np.sqrt(10 ** (float(it.get("inr_db", 10.0)) / 10) * noise) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        interferers.append((a_k, h_k))
    M = a0.shape[0]
    R = arr.interference_covariance([(a, h, 1.0) for a, h in interferers], noise, M)
    w = arr.beamform_weights(R, a0)
    mf = a0 / np.vdot(a0, a0)
    # one QPSK snapshot through the combiner as a sanity sample
    qpsk = lambda: (rng.choice([-1, 1]) + 1j * rng.choice([-1, 1])) / np.sqrt(2)  # noqa: E731
    s0 = qpsk()
    snap = arr.synthesize_snapshot(a0, h0, s0, [(a, h, qpsk()) for a, h in interferers], noise, rng)
    y1 = arr.beamform_output(w, snap.y)
    err = abs(y1 - h0 * s0) ** 2 / abs(h0) ** 2
    return [(trial, float(_db(arr.output_sinr(w, a0, h0, R))), float(_db(arr.output_sinr(mf, a0, h0, R))),
             float(abs(np.vdot(w, a0) - 1)), float(_db(err)))]


def _qpsk_carrier(rng, n, sps):
    nsym = -(-n // sps)
    sym = (rng.choice([-1.0, 1.0], nsym) + 1j * rng.choice([-1.0, 1.0], nsym)) / np.sqrt(2)
    return np.repeat(sym, sps)[:n]


def _test_signal(scenario, trial):
    st = settings(scenario, Experiment.ImpairmentChainEval.value)
    n = int(st.get("samples", 4096))
    fs = float(st.get("sample_rate_hz", 1e6))
    m = int(st.get("carriers", 4))
    spacing = float(st.get("carrier_spacing_hz", fs / (2 * m)))
    sps = int(st.get("samples_per_symbol", 8))
    backoff = 10 ** (-float(st.get("input_backoff_db", 6.0)) / 20)
    rng = rngmod.stream(scenario.seed, "symbols", trial)
    sigs = [imp.BasebandSignal(_qpsk_carrier(rng, n, sps), fs) for _ in range(m)]
    offsets = (np.arange(m) - (m - 1) / 2) * spacing
    phases = rng.uniform(0, 2 * np.pi, m)
    x = imp.compose_multicarrier(sigs, offsets, phases)
    return x.with_samples(x.samples * backoff / np.sqrt(x.power()))


def _chain(scenario, trial):
    seed = rngmod.child_seed(rngmod.stream(scenario.seed, "phase_noise", trial))
    return imp.chain_from_config(scenario.impairments, seed, scenario.satellites[0])


def impairment_chain_eval(scenario, trial):
    x = _test_signal(scenario, trial)
    chain = _chain(scenario, trial)
    y = imp.run_chain(x, chain)
    xs, ys = x.samples, y.samples
    # residual after the best single complex gain, relative to output power (<= 0 dB)
    g = np.vdot(xs, ys) / np.vdot(xs, xs)
    nmse = np.sum(np.abs(ys - g * xs) ** 2) / np.sum(np.abs(ys) ** 2)
    papr = lambda s: float(_db(np.max(np.abs(s) ** 2) / np.mean(np.abs(s) ** 2)))  # noqa: E731
    return [(trial, len(chain), x.power(), y.power(), float(_db(nmse)) if nmse > 0 else float("-inf"),
             papr(xs), papr(ys))]


def impairment_artifacts(scenario):
    """Trial-0 waveform before and after the chain, in the binary signal format."""
    x = _test_signal(scenario, 0)
    y = imp.run_chain(x, _chain(scenario, 0))
    files = {}
    for name, sig in (("waveform_in.c128", x), ("waveform_out.c128", y)):
        data, meta = imp.signal_to_bytes(sig)
        files[name] = data
        files[name + ".meta"] = meta.encode()
    return files


def csi_sensitivity(scenario, trial):
    st = settings(scenario, Experiment.CsiSensitivity.value)
    cfg = scenario.impairments.csi or {}
    fd = float(st.get("doppler_hz", cfg.get("doppler_hz", 50.0)))
    ts = float(st.get("symbol_time_s", cfg.get("symbol_time_s", 1e-3)))
    dmax = int(st.get("max_delay_symbols", cfg.get("max_delay_symbols", 8)))
    n = int(st.get("samples", 2000))
    rows = []
    for d in range(dmax + 1):
        rng = rngmod.stream(scenario.seed, "csi", trial, d)
        rho = ch.clarke_rho(fd, d, ts)
        proc = ch.simulate_channel_process((n,), d + 1, ch.ar1_coefficient(rho, d, fd, ts), rng)
        est = ch.estimate_csi(proc, d, d, fd, ts, rng)
        err = est.H_hat - proc[0]
        emp_var = float(0.5 * (np.var(err.real) + np.var(err.imag)))
        corr = float(np.abs(np.vdot(proc[d], est.H_hat)) /
                     np.sqrt(np.vdot(proc[d], proc[d]).real * np.vdot(est.H_hat, est.H_hat).real))
        rows.append((trial, d, est.rho, est.sigma2_e, emp_var, corr))
    return rows


def _plan_config(scenario, trial):
    st = settings(scenario, Experiment.CoveragePlan.value)
    if "beam_catalog" in st:
        catalog = tuple(cov.BeamTemplate(np.radians(b["half_power_beamwidth_deg"]), 10 ** (b["peak_gain_dbi"] / 10))
                        for b in st["beam_catalog"])
    else:
        catalog = tuple(sorted({cov.BeamTemplate(np.radians(b.half_power_beamwidth_deg), 10 ** (b.peak_gain_dbi / 10))
                                for b in scenario.beams}, key=lambda t: t.theta_3db))
    if "coverage_polygon" in st:
        polygon = tuple(tuple(v) for v in st["coverage_polygon"])
    else:
        lat = [u.lat_deg for u in scenario.users]
        lon = [u.lon_deg for u in scenario.users]
        polygon = ((min(lat) - 1, min(lon) - 1), (min(lat) - 1, max(lon) + 1),
                   (max(lat) + 1, max(lon) + 1), (max(lat) + 1, min(lon) - 1))
    seed = rngmod.child_seed(rngmod.stream(scenario.seed, "coverage", trial))
    return cov.PlanConfig(
        k=int(st.get("clusters", len(scenario.beams))),
        coverage_polygon=polygon,
        catalog=catalog,
        satellite=scenario.satellites[0],
        method=cov.ClusterMethod(st.get("method", "KMeans")),
        balance_tolerance=float(st.get("balance_tolerance", 1.25)),
        containment=float(st.get("containment", 0.95)),
        seed=seed,
    )


def coverage_plan(scenario, trial):
    plan = cov.plan_coverage(scenario.users, _plan_config(scenario, trial))
    rows = []
    for u in scenario.users:
        c = plan.user_cluster[u.id]
        rows.append((trial, u.id, c, float(_db(plan.user_gain[u.id])), float(plan.cluster_demand[c]),
                     float(np.degrees(plan.beams[c].theta_3db))))
    return rows


def coverage_artifacts(scenario):
    plan = cov.plan_coverage(scenario.users, _plan_config(scenario, 0))
    return {
        "beamplan.yaml": export.beamplan_to_text(plan).encode(),
        "footprints.csv": export.footprints_to_csv(plan).encode(),
    }


REGISTRY = {
    Experiment.MultibeamThroughput: ExperimentDef(
        (("trial", "1"), ("throughput_bps", "bit/s"), ("mean_sinr_db", "dB"), ("min_sinr_db", "dB")),
        multibeam_throughput),
    Experiment.Beamhopping: ExperimentDef(
        (("trial", "1"), ("beam", "id"), ("slots", "1"), ("sinr_db", "dB"), ("capacity_bps", "bit/s")),
        beamhopping),
    Experiment.GatewayDiversity: ExperimentDef(
        (("trial", "1"), ("beam", "id"), ("faded_gateways", "1"), ("capacity_freq_bps", "bit/s"),
         ("capacity_time_bits", "bit/window"), ("capacity_time_bps", "bit/s"), ("outage", "bool")),
        gateway_diversity),
    Experiment.PrecodingSinr: ExperimentDef(
        (("trial", "1"), ("user", "id"), ("sinr_db", "dB"), ("rate_bps", "bit/s")),
        precoding_sinr),
    Experiment.BeamformingSinr: ExperimentDef(
        (("trial", "1"), ("mvdr_sinr_db", "dB"), ("matched_filter_sinr_db", "dB"),
         ("distortionless_error", "1"), ("snapshot_error_db", "dB")),
        beamforming_sinr),
    Experiment.ImpairmentChainEval: ExperimentDef(
        (("trial", "1"), ("stages", "1"), ("input_power", "W"), ("output_power", "W"),
         ("nmse_db", "dB"), ("papr_in_db", "dB"), ("papr_out_db", "dB")),
        impairment_chain_eval, impairment_artifacts),
    Experiment.CsiSensitivity: ExperimentDef(
        (("trial", "1"), ("delay_symbols", "symbols"), ("rho", "1"), ("sigma2_e", "1"),
         ("empirical_error_var", "1"), ("empirical_corr", "1")),
        csi_sensitivity),
    Experiment.CoveragePlan: ExperimentDef(
        (("trial", "1"), ("user", "id"), ("cluster", "1"), ("gain_dbi", "dBi"),
         ("cluster_demand_bps", "bit/s"), ("theta_3db_deg", "deg")),
        coverage_plan, coverage_artifacts),
}
