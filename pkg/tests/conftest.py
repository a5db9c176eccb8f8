from pathlib import Path

import numpy as np
import pytest

REPO = Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"

MINIMAL = """\
satellites:
  - {id: s1, orbit_kind: GSO, orbit_radius_m: 42164169.0, payload_kind: BentPipe,
     feeds: 1, subsatellite_lat_deg: 0.0, subsatellite_lon_deg: 10.0}
beams:
  - {id: b1, satellite: s1, center_lat_deg: 45.0, center_lon_deg: 10.0,
     half_power_beamwidth_deg: 0.35, peak_gain_dbi: 50.0, tx_power_w: 100.0, carriers: 1}
users:
  - {id: u1, beam: b1, lat_deg: 45.0, lon_deg: 10.0, traffic_demand_bps: 1.0e8,
     rx_gain_over_temperature_db_per_k: 18.0}
carriers: {total_bandwidth_hz: 500.0e6, reuse_factor: 1, carrier_bandwidth_hz: 500.0e6}
simulation: {seed: 1, monte_carlo_trials: 1}
"""


@pytest.fixture
def minimal_text():
    return MINIMAL


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
