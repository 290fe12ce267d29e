"""LEO pass channel generator: geometry, path loss, antenna gains, fading.

The satellite is modeled on a straight-line fly-over at constant orbital
speed during the scheduling window (flat geometry; the error over a ~100 s
window is negligible for link-budget purposes).  Same seed, same tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ChannelTensor, InvalidArgumentError, SystemConfig

SPEED_OF_LIGHT_MPS = 2.998e8
EARTH_MU_M3S2 = 3.986004418e14


@dataclass(frozen=True)
class FadingSpec:
    """Per-link multiplicative power fading: none, rician, or lognormal."""

    kind: str = "rician"
    rician_k_db: float = 10.0
    lognormal_sigma_db: float = 4.0

    def __post_init__(self):
        if self.kind not in ("none", "rician", "lognormal"):
            raise InvalidArgumentError(f"unknown fading kind {self.kind!r}")


@dataclass(frozen=True)
class GeometryConfig:
    altitude_m: float = 550e3
    carrier_hz: float = 20e9
    sat_gain_dbi: float = 24.0
    terminal_gain_dbi: float = 26.0
    earth_radius_m: float = 6371e3
    # (K, 2) array of [along-track, cross-track] offsets from the
    # sub-satellite point at the window midpoint.
    user_ground_offsets_m: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    fading: FadingSpec = field(default_factory=FadingSpec)
    noise_density_dbm_hz: float = -174.0

    def __post_init__(self):
        if self.altitude_m <= 0 or self.carrier_hz <= 0:
            raise InvalidArgumentError("altitude and carrier frequency must be positive")
        off = np.array(self.user_ground_offsets_m, dtype=float)
        if off.ndim != 2 or off.shape[1] != 2 or not np.isfinite(off).all():
            raise InvalidArgumentError("user_ground_offsets_m must be a finite (K, 2) array")
        off.setflags(write=False)
        object.__setattr__(self, "user_ground_offsets_m", off)


def circular_orbit_speed_mps(altitude_m, earth_radius_m=6371e3):
    """Circular-orbit speed sqrt(mu / (R + h)); about 7590 m/s at 550 km."""
    return float(np.sqrt(EARTH_MU_M3S2 / (earth_radius_m + altitude_m)))


def slant_range(altitude_m, earth_radius_m, ground_offset_m, t_rel_s, orbital_speed_mps):
    """Satellite-to-terminal distance at time t_rel_s from the window midpoint.

    ground_offset_m is the user's (along-track, cross-track) offset from the
    sub-satellite point at the midpoint.  Straight-line fly-over, so the
    distance is at least the altitude and grows monotonically with the
    along-track separation.
    """
    off = np.asarray(ground_offset_m, dtype=float)
    along = off[..., 0]
    cross = off[..., 1]
    x_sat = np.asarray(orbital_speed_mps, dtype=float) * np.asarray(t_rel_s, dtype=float)
    d = np.sqrt((x_sat - along) ** 2 + cross**2 + altitude_m**2)
    return float(d) if np.ndim(d) == 0 else d


def fspl_db(distance_m, carrier_hz):
    """Free-space path loss 20 log10(4 pi d f / c) in dB."""
    d = np.asarray(distance_m, dtype=float)
    f = np.asarray(carrier_hz, dtype=float)
    if (d <= 0).any() if d.ndim else d <= 0:
        raise InvalidArgumentError("distance must be positive")
    out = 20.0 * np.log10(4.0 * np.pi * d * f / SPEED_OF_LIGHT_MPS)
    return float(out) if out.ndim == 0 else out


def noise_power_w(B_hz, noise_density_dbm_hz=-174.0):
    return 10.0 ** ((noise_density_dbm_hz - 30.0) / 10.0) * B_hz


def _fading_factors(rng, kind, shape, rician_k_db, lognormal_sigma_db):
    if kind == "none":
        return np.ones(shape)
    if kind == "rician":
        k_lin = 10.0 ** (rician_k_db / 10.0)
        los = np.sqrt(k_lin / (k_lin + 1.0))
        scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(
            2.0 * (k_lin + 1.0)
        )
        return np.abs(los + scatter) ** 2
    # lognormal shadowing in dB
    return 10.0 ** (rng.standard_normal(shape) * lognormal_sigma_db / 10.0)


def generate_channel(config: SystemConfig, geometry: GeometryConfig, seed: int) -> ChannelTensor:
    """Build the (K, S, T) gain tensor and per-user noise powers for one pass.

    Gains combine antenna gains, free-space loss at the slot-midpoint slant
    range, and i.i.d. fading across (k, s, t).  Deterministic per seed.
    """
    offsets = geometry.user_ground_offsets_m
    if offsets.shape[0] != config.K:
        raise InvalidArgumentError(
            f"geometry provides {offsets.shape[0]} user offsets for K={config.K}"
        )
    speed = circular_orbit_speed_mps(geometry.altitude_m, geometry.earth_radius_m)
    # slot midpoints, centered on the window midpoint
    t_rel = (np.arange(config.T) + 0.5) * config.tau_s - 0.5 * config.T * config.tau_s
    d = slant_range(
        geometry.altitude_m,
        geometry.earth_radius_m,
        offsets[:, None, :],
        t_rel[None, :],
        speed,
    )  # (K, T)
    gain_db = geometry.sat_gain_dbi + geometry.terminal_gain_dbi - fspl_db(d, geometry.carrier_hz)
    h_kt = 10.0 ** (gain_db / 10.0)
    rng = np.random.default_rng(seed)
    factors = _fading_factors(
        rng,
        geometry.fading.kind,
        (config.K, config.S, config.T),
        geometry.fading.rician_k_db,
        geometry.fading.lognormal_sigma_db,
    )
    h = h_kt[:, None, :] * factors
    sigma2 = np.full(config.K, noise_power_w(config.B_hz, geometry.noise_density_dbm_hz))
    return ChannelTensor(h=h, sigma2_w=sigma2)
