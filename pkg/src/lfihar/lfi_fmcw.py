"""Laser feedback interferometry under triangular FMCW current modulation.

Signal model (weak feedback, so the feedback phase equals the stimulus phase)::

    P(t)   = P0 * (1 + m * cos(phi(t)))
    phi(t) = 4 * pi * n_ext * L(t) / lambda(t)

    f0 = 2 * L / lambda**2 * (dlambda/dI) * (dI/dt)      beat frequency
    fd = 2 * v * cos(gamma) / lambda                      Doppler shift

With a triangular drive the two half periods see ``f0 + fd`` and ``|f0 - fd|``,
so ``f0 = (f_up + f_down) / 2`` and ``fd = (f_up - f_down) / 2``.

Naming follows FMCW radar: the *up* ramp is the half period in which the
optical frequency rises. Thermal tuning red-shifts the laser as current grows,
so the drive current falls during the up ramp. A target receding along the
beam (positive velocity) therefore gives ``f_up > f_down``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometry, InvalidConfig, NoPeak

EYE_RADIUS = 11.1e-3  # m, converts angular eye velocity to surface velocity
MAX_SURFACE_VELOCITY = 0.06  # m/s, ~300 deg/s on EYE_RADIUS

WAVEFORM_MAGIC = b"LFI1"
_WAVEFORM_HEADER = struct.Struct("<4sII4x")


@dataclass(frozen=True)
class LaserParams:
    wavelength: float = 850e-9  # m
    tuning_coefficient: float = 0.4e-6  # m/A  (0.4 nm/mA)
    incidence_angle: float = math.pi / 4  # rad
    base_power: float = 360e-6  # W
    modulation_depth: float = 0.1
    external_index: float = 1.0

    def validate(self) -> None:
        if not self.wavelength > 0:
            raise InvalidConfig(f"wavelength must be > 0, got {self.wavelength}")
        if not 0 <= self.modulation_depth < 1:
            raise InvalidConfig(f"modulation_depth must be in [0, 1), got {self.modulation_depth}")
        if not 0 <= self.incidence_angle < math.pi / 2:
            raise InvalidConfig(f"incidence_angle must be in [0, pi/2), got {self.incidence_angle}")
        if not self.tuning_coefficient > 0:
            raise InvalidConfig(f"tuning_coefficient must be > 0, got {self.tuning_coefficient}")
        if not self.external_index > 0:
            raise InvalidConfig(f"external_index must be > 0, got {self.external_index}")


@dataclass(frozen=True)
class RampConfig:
    update_rate: float = 1e3  # Hz, one up + one down ramp per period
    current_swing: float = 4e-3  # A peak-to-peak
    adc_rate: float = 4e6  # samples/s
    spectrum_size: int = 16384  # FFT length per ramp after zero padding

    @property
    def samples_per_ramp(self) -> int:
        return int(round(self.adc_rate / (2 * self.update_rate)))

    @property
    def slope(self) -> float:
        """Magnitude of the drive-current slope dI/dt in A/s."""
        return self.current_swing * 2 * self.update_rate

    def validate(self) -> None:
        if self.update_rate <= 0 or self.adc_rate <= 0:
            raise InvalidConfig("update_rate and adc_rate must be positive")
        per_ramp = self.adc_rate / (2 * self.update_rate)
        if per_ramp < 64:
            raise InvalidConfig(f"only {per_ramp:g} samples per ramp, need >= 64")
        if abs(per_ramp - round(per_ramp)) > 1e-9:
            raise InvalidConfig(f"adc_rate / (2 * update_rate) = {per_ramp:g} is not an integer")
        n = self.spectrum_size
        if n < self.samples_per_ramp or n & (n - 1):
            raise InvalidConfig(
                f"spectrum_size {n} must be a power of two >= {self.samples_per_ramp}"
            )


@dataclass(frozen=True)
class MotionSample:
    time: float  # s
    distance: float  # m
    velocity: float  # m/s, eye surface velocity; its beam projection is v*cos(gamma)

    def validate(self, max_velocity: float = MAX_SURFACE_VELOCITY) -> None:
        if not self.distance > 0:
            raise InvalidConfig(f"distance must be > 0, got {self.distance}")
        if abs(self.velocity) > max_velocity:
            raise InvalidConfig(f"|velocity| {abs(self.velocity)} exceeds {max_velocity}")


@dataclass(frozen=True)
class RampFrequencies:
    f_up: float
    f_down: float


@dataclass(frozen=True)
class SensorNoise:
    """Per-sample Gaussian measurement noise of the extracted features."""

    distance_std: float = 66.85e-6  # m
    velocity_std: float = math.radians(2.95) * EYE_RADIUS  # m/s

    @classmethod
    def from_angular(cls, distance_std: float, angular_std_deg: float, radius: float = EYE_RADIUS):
        return cls(distance_std, math.radians(angular_std_deg) * radius)


def beat_frequency(distance: float, laser: LaserParams, ramp: RampConfig) -> float:
    """Forward beat frequency f0 for a static target at ``distance``."""
    lam = laser.wavelength
    return 2 * laser.external_index * distance / lam**2 * laser.tuning_coefficient * ramp.slope


def doppler_frequency(velocity: float, laser: LaserParams) -> float:
    """Forward, signed Doppler frequency for eye surface velocity ``velocity``."""
    return 2 * laser.external_index * velocity * math.cos(laser.incidence_angle) / laser.wavelength


def predict_ramp_freqs(sample: MotionSample, laser: LaserParams, ramp: RampConfig) -> RampFrequencies:
    f0 = beat_frequency(sample.distance, laser, ramp)
    fd = doppler_frequency(sample.velocity, laser)
    return RampFrequencies(abs(f0 + fd), abs(f0 - fd))


def drive_current(ramp: RampConfig) -> np.ndarray:
    """Drive-current offset from the ramp midpoint over one triangle period."""
    n = ramp.samples_per_ramp
    t = np.arange(n) / ramp.adc_rate
    falling = ramp.current_swing / 2 - ramp.slope * t
    rising = -ramp.current_swing / 2 + ramp.slope * t
    return np.concatenate([falling, rising])


def synth_interference(sample: MotionSample, laser: LaserParams, ramp: RampConfig) -> np.ndarray:
    """Photodiode signal for one full triangle period.

    Returns ``2 * samples_per_ramp`` samples, up ramp first.
    """
    ramp.validate()
    laser.validate()
    sample.validate()
    n_total = 2 * ramp.samples_per_ramp
    t = np.arange(n_total) / ramp.adc_rate
    wavelength = laser.wavelength + laser.tuning_coefficient * drive_current(ramp)
    beam_velocity = sample.velocity * math.cos(laser.incidence_angle)
    path = sample.distance + beam_velocity * t
    phase = 4 * np.pi * laser.external_index * path / wavelength
    return laser.base_power * (1 + laser.modulation_depth * np.cos(phase))


def _peak_frequency(segment: np.ndarray, ramp: RampConfig, noise_floor: float) -> float:
    x = segment - segment.mean()
    mag = np.abs(np.fft.rfft(x, n=ramp.spectrum_size))
    body = mag[1:]
    k = int(np.argmax(body)) + 1
    if mag[k] <= noise_floor * float(np.median(body)):
        raise NoPeak(f"peak {mag[k]:.3g} below {noise_floor:g}x median bin magnitude")
    offset = 0.0
    if 1 < k < len(mag) - 1:
        a, b, c = mag[k - 1], mag[k], mag[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            offset = 0.5 * (a - c) / denom
    return (k + offset) * ramp.adc_rate / ramp.spectrum_size


def extract_ramp_freqs(signal: np.ndarray, ramp: RampConfig, noise_floor: float = 5.0) -> RampFrequencies:
    """Dominant frequency of each ramp half, refined by three-point parabolic fit.

    Raises:
        NoPeak: if either half has no bin above ``noise_floor`` times the
            median non-DC magnitude.
    """
    ramp.validate()
    signal = np.asarray(signal, dtype=float)
    n = ramp.samples_per_ramp
    if signal.shape != (2 * n,):
        raise InvalidConfig(f"expected {2 * n} samples for one period, got {signal.shape}")
    return RampFrequencies(
        _peak_frequency(signal[:n], ramp, noise_floor),
        _peak_frequency(signal[n:], ramp, noise_floor),
    )


def combine_freqs(rf: RampFrequencies) -> tuple[float, float]:
    """Return ``(f0, fd)``; the sign of ``fd`` carries the velocity direction."""
    return (rf.f_up + rf.f_down) / 2, (rf.f_up - rf.f_down) / 2


def freq_to_distance(f0: float, laser: LaserParams, ramp: RampConfig) -> float:
    if ramp.slope == 0:
        raise InvalidConfig("ramp slope is zero; distance is unobservable")
    if f0 < 0:
        raise ValueError(f"beat frequency must be >= 0, got {f0}")
    lam = laser.wavelength
    return f0 * lam**2 / (2 * laser.external_index * laser.tuning_coefficient * ramp.slope)


def freq_to_velocity(fd: float, laser: LaserParams) -> float:
    cos_g = math.cos(laser.incidence_angle)
    if abs(cos_g) < 1e-12:
        raise DegenerateGeometry("incidence angle of pi/2 makes the Doppler shift vanish")
    return fd * laser.wavelength / (2 * laser.external_index * cos_g)


def measure(sample: MotionSample, laser: LaserParams, ramp: RampConfig) -> tuple[float, float]:
    """Noiseless synth -> extract -> convert; returns ``(distance, velocity)``."""
    rf = extract_ramp_freqs(synth_interference(sample, laser, ramp), ramp)
    f0, fd = combine_freqs(rf)
    return freq_to_distance(f0, laser, ramp), freq_to_velocity(fd, laser)


def add_sensor_noise(
    distance: np.ndarray,
    velocity: np.ndarray,
    noise: SensorNoise = SensorNoise(),
    seed: int | np.random.SeedSequence | np.random.Generator | None = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Add independent zero-mean Gaussian noise to a (distance, velocity) trace."""
    if noise.distance_std < 0 or noise.velocity_std < 0:
        raise ValueError("noise standard deviations must be >= 0")
    rng = np.random.default_rng(seed)
    distance = np.array(distance, dtype=float)
    velocity = np.array(velocity, dtype=float)
    d_noise = rng.standard_normal(distance.shape)
    v_noise = rng.standard_normal(velocity.shape)
    if noise.distance_std > 0:
        distance += noise.distance_std * d_noise
    if noise.velocity_std > 0:
        velocity += noise.velocity_std * v_noise
    return distance, velocity


def write_waveform(path: str | Path, signal: np.ndarray, adc_rate: float) -> None:
    """Dump ``signal`` as little-endian float64 after a 16-byte header.

    Header: magic ``LFI1``, u32 sample count, u32 adc rate, 4 reserved zero bytes.
    """
    data = np.ascontiguousarray(signal, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_WAVEFORM_HEADER.pack(WAVEFORM_MAGIC, data.size, int(round(adc_rate))))
        fh.write(data.tobytes())


def read_waveform(path: str | Path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    magic, count, rate = _WAVEFORM_HEADER.unpack_from(raw)
    if magic != WAVEFORM_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_WAVEFORM_HEADER.size)
    if data.size != count:
        raise ValueError(f"{path}: header says {count} samples, found {data.size}")
    return data.copy(), rate
