"""Spherical-Earth geometry and physical constants.

Positions are Earth-centred Cartesian vectors in meters. Latitudes and
longitudes in degrees only appear at the boundary helpers ``ecef`` and
``unit_vector``; everything else works in radians and meters.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GeodeticConstants:
    earth_radius: float = 6_371_000.0  # m
    speed_of_light: float = 299_792_458.0  # m/s
    earth_gravitational_parameter: float = 3.986004418e14  # m^3/s^2
    boltzmann: float = 1.380649e-23  # J/K
    sidereal_rate: float = 7.2921159e-5  # rad/s


CONSTANTS = GeodeticConstants()
R_E = CONSTANTS.earth_radius
C = CONSTANTS.speed_of_light
MU_E = CONSTANTS.earth_gravitational_parameter


def derive_orbit_rate(r_s):
    """Angular velocity of a circular Keplerian orbit of radius ``r_s`` [m], in rad/s."""
    r_s = float(r_s)
    if not np.isfinite(r_s) or r_s <= R_E:
        raise DomainError(f"orbit radius {r_s} m must exceed the Earth radius {R_E} m")
    return float(np.sqrt(MU_E / r_s**3))


def unit_vector(lat_deg, lon_deg):
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    return np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def ecef(lat_deg, lon_deg, radius=R_E):
    return radius * unit_vector(lat_deg, lon_deg)


def to_latlon(v):
    """Inverse of ``unit_vector`` for any nonzero vector; returns degrees."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    lat = np.degrees(np.arcsin(np.clip(v[..., 2] / r, -1.0, 1.0)))
    lon = np.degrees(np.arctan2(v[..., 1], v[..., 0]))
    return lat, lon


def angle_between(u, v):
    """Angle between vectors (broadcasting over leading axes), radians.

    Uses atan2 of cross and dot products, which stays accurate for tiny angles.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def elevation(ground, sat):
    """Elevation angle [rad] of ``sat`` seen from ``ground`` (both ECEF, m)."""
    ground = np.asarray(ground, dtype=float)
    los = np.asarray(sat, dtype=float) - ground
    up = ground / np.linalg.norm(ground, axis=-1, keepdims=True)
    s = np.sum(los * up, axis=-1) / np.linalg.norm(los, axis=-1)
    return np.arcsin(np.clip(s, -1.0, 1.0))


def off_axis_angle(sat, boresight_point, target):
    """Angle at the satellite between the directions to two ground points, radians."""
    sat = np.asarray(sat, dtype=float)
    return angle_between(np.asarray(boresight_point) - sat, np.asarray(target) - sat)


class Gnomonic:
    """Gnomonic projection about a tangent point.

    Great circles map to straight lines, so spherical Voronoi bisectors
    become half-planes in projected coordinates.
    """

    def __init__(self, center):
        c = np.asarray(center, dtype=float)
        self.center = c / np.linalg.norm(c)
        helper = np.array([0.0, 0.0, 1.0])
        if abs(self.center @ helper) > 0.9:
            helper = np.array([1.0, 0.0, 0.0])
        e1 = np.cross(helper, self.center)
        self.e1 = e1 / np.linalg.norm(e1)
        self.e2 = np.cross(self.center, self.e1)

    def forward(self, v):
        v = np.asarray(v, dtype=float)
        d = v @ self.center
        if np.any(d <= 0):
            raise DomainError("point outside the projection hemisphere")
        return np.stack([v @ self.e1 / d, v @ self.e2 / d], axis=-1)

    def lift(self, xy):
        """Map projected coordinates back to (unnormalized) 3-D direction vectors."""
        xy = np.asarray(xy, dtype=float)
        return (
            self.center
            + xy[..., 0:1] * self.e1
            + xy[..., 1:2] * self.e2
        )

    def inverse(self, xy):
        p = self.lift(xy)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)
