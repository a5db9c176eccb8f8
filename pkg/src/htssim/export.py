"""Text exports for beam plans and footprints."""

import csv
import io

import numpy as np
import yaml


def beamplan_to_dict(plan):
    return {
        "beams": [
            {
                "cluster": b.cluster,
                "center_lat_deg": b.center_lat_deg,
                "center_lon_deg": b.center_lon_deg,
                "half_power_beamwidth_deg": float(np.degrees(b.theta_3db)),
                "peak_gain_dbi": float(10 * np.log10(b.g_max)),
                "demand_bps": float(plan.cluster_demand[b.cluster]),
            }
            for b in plan.beams
        ],
        "users": [
            {"id": uid, "cluster": int(plan.user_cluster[uid]), "gain_linear": plan.user_gain[uid]}
            for uid in sorted(plan.user_gain)
        ],
    }


def beamplan_to_text(plan):
    return yaml.safe_dump(beamplan_to_dict(plan), sort_keys=False)


def footprints_to_csv(plan):
    """One row per footprint vertex: cluster, vertex index, lat, lon (degrees)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cluster", "vertex", "lat_deg", "lon_deg"])
    if plan.tessellation is not None:
        for c in range(len(plan.tessellation.cells)):
            for v, (lat, lon) in enumerate(plan.tessellation.cell_latlon(c)):
                w.writerow([c, v, repr(float(lat)), repr(float(lon))])
    return buf.getvalue()
