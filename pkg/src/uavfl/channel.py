"""Air-to-ground wireless link chain.

Closed-form model of a single UAV-to-base-station link: 3-D geometry,
elevation-dependent line-of-sight probability, excess-loss path loss,
Rician fading amplitudes, and the Shannon transmission rate over an
allocated bandwidth share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "LIGHT_SPEED_M_S",
    "Position",
    "ChannelEnvironment",
    "LinkSample",
    "dbm_to_milliwatts",
    "milliwatts_to_dbm",
    "distance",
    "elevation_angle_deg",
    "los_probability",
    "path_loss_db",
    "rician_amplitudes",
    "channel_gain",
    "transmission_rate_bps",
    "link_sample",
]

LIGHT_SPEED_M_S = 299_792_458.0  # exact, m/s


def dbm_to_milliwatts(value_dbm: float) -> float:
    """Convert a dBm power level to milliwatts."""
    return 10.0 ** (value_dbm / 10.0)


def milliwatts_to_dbm(value_mw: float) -> float:
    """Convert a positive milliwatt power to dBm."""
    if value_mw <= 0.0:
        raise ValueError("power in milliwatts must be positive")
    return 10.0 * math.log10(value_mw)


@dataclass
class Position:
    """A point in metres; the base station sits on the z axis by convention."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for label, v in (("x", self.x), ("y", self.y), ("z", self.z)):
            if not math.isfinite(v):
                raise ValueError(f"position coordinate {label} must be finite")


@dataclass
class ChannelEnvironment:
    """Constants of the air-to-ground propagation and radio environment.

    los_a / los_b shape the sigmoid of line-of-sight probability versus
    elevation angle; excess losses are in dB; powers in dBm; the noise level
    is a spectral density in dBm/Hz unless noise_total_dbm overrides it with
    a literal total. fspl_exponent is the power of distance inside the
    free-space bracket (2 reproduces the reference curves, 1 is the
    conventional free-space form).
    """

    los_a: float = 5.0188
    los_b: float = 0.3511
    excess_loss_los_db: float = 21.0
    excess_loss_nlos_db: float = 1.0
    carrier_hz: float = 2e9
    uav_bandwidth_hz: float = 1e7
    uav_power_dbm: float = 24.0
    bs_bandwidth_hz: float = 5e6
    bs_power_dbm: float = 40.0
    noise_dbm_per_hz: float = -174.0
    noise_total_dbm: float | None = None
    fspl_exponent: int = 2
    light_speed_m_s: float = LIGHT_SPEED_M_S

    def __post_init__(self):
        if self.los_a <= 0.0:
            raise ValueError("los_a must be positive")
        if self.los_b < 0.0:
            raise ValueError("los_b must be non-negative")
        if self.carrier_hz <= 0.0:
            raise ValueError("carrier_hz must be positive")
        if self.uav_bandwidth_hz <= 0.0 or self.bs_bandwidth_hz <= 0.0:
            raise ValueError("bandwidths must be positive")
        if self.fspl_exponent not in (1, 2):
            raise ValueError("fspl_exponent must be 1 or 2")
        if self.light_speed_m_s <= 0.0:
            raise ValueError("light_speed_m_s must be positive")


@dataclass
class LinkSample:
    """One fully evaluated link: geometry through achievable rate."""

    distance_m: float
    elevation_deg: float
    p_los: float
    path_loss_db: float
    los_amplitude: float
    nlos_amplitude: float
    gain: float
    rate_bps: float


def distance(uav: Position, bs: Position) -> float:
    """Euclidean distance in metres between a UAV and the base station."""
    return math.dist((uav.x, uav.y, uav.z), (bs.x, bs.y, bs.z))


def elevation_angle_deg(uav: Position, bs: Position) -> float:
    """Elevation angle in degrees of the line between the two endpoints.

    Measured from the horizontal plane, in [0, 90]. Coincident endpoints
    have no defined angle.
    """
    d = distance(uav, bs)
    if d == 0.0:
        raise ValueError("elevation angle undefined for coincident endpoints")
    ratio = min(1.0, abs(uav.z - bs.z) / d)
    return math.degrees(math.asin(ratio))


def los_probability(theta_deg: float, env: ChannelEnvironment) -> float:
    """Sigmoid probability of a line-of-sight link at elevation theta_deg."""
    return 1.0 / (1.0 + env.los_a * math.exp(-env.los_b * (theta_deg - env.los_a)))


def path_loss_db(p_los: float, distance_m: float, env: ChannelEnvironment) -> float:
    """Mean path loss in dB (negative: it is applied as a gain exponent).

    Combines the LOS/NLOS excess-loss mixture with the squared free-space
    bracket 4*pi*d^fspl_exponent*f/c.
    """
    if p_los <= 0.0 or p_los > 1.0:
        raise ValueError("p_los must lie in (0, 1]")
    if distance_m <= 0.0:
        raise ValueError("distance must be positive")
    excess = env.excess_loss_los_db - env.excess_loss_nlos_db
    bracket = (
        4.0
        * math.pi
        * distance_m**env.fspl_exponent
        * env.carrier_hz
        / env.light_speed_m_s
    )
    return -excess / p_los - 20.0 * math.log10(bracket) - env.excess_loss_nlos_db


def rician_amplitudes(k_linear: float) -> tuple[float, float]:
    """Deterministic LOS and scatter amplitudes (v, s) for Rician factor K.

    Satisfies v**2 + 2*s**2 == 1; K = 0 is pure scatter, K -> inf pure LOS.
    """
    if k_linear < 0.0:
        raise ValueError("Rician factor must be non-negative")
    v = math.sqrt(k_linear / (k_linear + 1.0))
    s = math.sqrt(1.0 / (2.0 * (k_linear + 1.0)))
    return v, s


def channel_gain(path_loss_db_value: float, k_linear: float) -> float:
    """Linear channel power gain: path loss applied to the fading amplitudes."""
    v, s = rician_amplitudes(k_linear)
    return 10.0 ** (path_loss_db_value / 10.0) * (v + s)


def transmission_rate_bps(
    n: float,
    bandwidth_hz: float,
    gain: float,
    power_dbm: float,
    noise_dbm_per_hz: float,
    noise_total_dbm: float | None = None,
) -> float:
    """Shannon rate over an allocated share n of the bandwidth.

    Noise power is the density integrated over the allocated band n*B, or a
    literal total when noise_total_dbm is given.
    """
    if not 0.0 < n <= 1.0:
        raise ValueError("bandwidth share n must lie in (0, 1]")
    if bandwidth_hz <= 0.0:
        raise ValueError("bandwidth must be positive")
    if gain < 0.0:
        raise ValueError("gain must be non-negative")
    if noise_total_dbm is None:
        noise_mw = dbm_to_milliwatts(noise_dbm_per_hz) * (n * bandwidth_hz)
    else:
        noise_mw = dbm_to_milliwatts(noise_total_dbm)
    snr = gain * dbm_to_milliwatts(power_dbm) / noise_mw
    return n * bandwidth_hz * math.log1p(snr) / math.log(2.0)


def link_sample(
    uav: Position,
    bs: Position,
    k_db: float,
    n: float,
    env: ChannelEnvironment,
) -> LinkSample:
    """Evaluate the full uplink chain for one UAV at its current position.

    k_db is the current Rician factor in dB; n the bandwidth share. The rate
    uses the UAV-side transmit power and bandwidth; downlink rates can be
    derived from the returned gain with the base-station constants.
    """
    d = distance(uav, bs)
    theta = elevation_angle_deg(uav, bs)
    p = los_probability(theta, env)
    pl = path_loss_db(p, d, env)
    k_linear = 10.0 ** (k_db / 10.0)
    v, s = rician_amplitudes(k_linear)
    g = 10.0 ** (pl / 10.0) * (v + s)
    rate = transmission_rate_bps(
        n,
        env.uav_bandwidth_hz,
        g,
        env.uav_power_dbm,
        env.noise_dbm_per_hz,
        env.noise_total_dbm,
    )
    return LinkSample(
        distance_m=d,
        elevation_deg=theta,
        p_los=p,
        path_loss_db=pl,
        los_amplitude=v,
        nlos_amplitude=s,
        gain=g,
        rate_bps=rate,
    )
