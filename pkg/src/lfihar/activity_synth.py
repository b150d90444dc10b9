"""Synthetic head- and eye-movement recordings for seven activities.

Eye events (saccades, blinks, smooth pursuit, reading sweeps) are generated as
angular gaze velocity, projected onto two LFI sensors and converted to the
features an LFI sensor reports: eye surface velocity along the sensor's
sensitive direction and distance to the reflecting structure (iris, retina
when the beam falls through the pupil, lid during blinks). The IMU stream is
gravity plus periodic head motion and jitter.

Every generator is a pure function of its arguments and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import uniform_filter1d

from .config import Config, ConfigError
from .lfi_fmcw import EYE_RADIUS, SensorNoise, add_sensor_noise

ACTIVITIES = ("talk", "read", "video", "walk", "type", "solve", "cycle")
TRANSITION = "transition"
LABELS = ACTIVITIES + (TRANSITION,)
TRANSITION_CODE = LABELS.index(TRANSITION)

LFI_CHANNELS = ("v1", "d1", "v2", "d2")
IMU_CHANNELS = ("accx", "accy", "accz", "gyrx", "gyry", "gyrz")
CHANNELS = LFI_CHANNELS + IMU_CHANNELS
LFI_RATE = 1000.0
IMU_RATE = 860.0
# Both rates land on whole samples every 1/20 s; segment boundaries use this grid.
TIME_GRID = 0.05

GRAVITY = 9.81
STATIONARY = ("talk", "read", "video", "type", "solve")
PHYSICAL = ("walk", "cycle")


@dataclass(frozen=True)
class EyeGeometry:
    iris: float = 25.5e-3  # d_I
    retina: float = 45.0e-3  # d_R
    lid: float = 21.0e-3  # d_L

    def validate(self) -> None:
        if not self.lid < self.iris < self.retina:
            raise ValueError(f"need lid < iris < retina, got {self}")


@dataclass(frozen=True)
class LfiSensorPose:
    """Where a sensor looks: which gaze direction it resolves and where its beam meets the pupil."""

    direction: float  # deg, 0 = horizontal gaze axis
    gain: float  # projection loss from the incidence geometry
    pupil_center: tuple[float, float]  # gaze (h, v) in deg at which the beam hits the pupil centre
    pupil_radius: float = 2.5  # deg


DEFAULT_SENSORS = (
    LfiSensorPose(direction=60.0, gain=0.85, pupil_center=(-5.0, 2.5)),
    LfiSensorPose(direction=15.0, gain=1.0, pupil_center=(4.5, -2.5)),
)


@dataclass(frozen=True)
class ActivityProfile:
    activity: str
    # eye
    saccade_rate: float = 2.0  # 1/s
    saccade_amplitude_mean: float = 5.0  # deg, gamma distributed
    saccade_amplitude_shape: float = 2.0
    fixation_regularity: float = 1.5  # gamma shape of inter-saccade intervals (<1 is bursty)
    vertical_ratio: float = 0.5
    gaze_range: float = 12.0  # deg
    blink_rate: float = 0.2  # 1/s
    blink_duration: float = 0.15  # s
    reading_pattern: bool = False
    line_saccades: float = 8.0
    pursuit_rate: float = 0.0  # 1/s
    pursuit_speed: float = 10.0  # deg/s
    glance_rate: float = 0.0  # 1/s, down-and-back gaze shifts
    glance_amplitude: float = 15.0  # deg
    drift_rms: float = 0.002  # m/s
    vor_amplitude: float = 0.0  # deg/s eye counter-rotation at the head-motion frequency
    slip_amplitude: float = 0.0  # m, glasses slippage along the beam
    # head
    head_pitch: float = 0.0  # deg
    imu_frequency: float = 0.5  # Hz
    acc_amplitude: tuple[float, float, float] = (0.02, 0.02, 0.02)  # m/s^2
    gyro_amplitude: tuple[float, float, float] = (0.01, 0.01, 0.01)  # rad/s
    harmonics: tuple[float, ...] = (1.0,)
    imu_burstiness: float = 0.0  # 0 steady, 1 on/off bursts
    acc_jitter: float = 0.03  # m/s^2
    gyro_jitter: float = 0.01  # rad/s

    @property
    def imu_oscillation(self) -> float:
        return max(max(self.acc_amplitude), max(self.gyro_amplitude))

    def validate(self) -> None:
        rates = (self.saccade_rate, self.blink_rate, self.pursuit_rate, self.glance_rate)
        if min(rates) < 0:
            raise ValueError(f"{self.activity}: rates must be >= 0")
        if self.activity == "read" and not self.reading_pattern:
            raise ValueError("read profile must set reading_pattern")


TRANSITION_PROFILE = ActivityProfile(
    activity=TRANSITION,
    saccade_rate=2.5,
    saccade_amplitude_mean=8.0,
    blink_rate=0.3,
    head_pitch=-10.0,
    imu_frequency=1.0,
    acc_amplitude=(0.6, 0.6, 0.8),
    gyro_amplitude=(0.4, 0.4, 0.3),
    imu_burstiness=1.0,
    acc_jitter=0.1,
    gyro_jitter=0.03,
)

_FLOAT_FIELDS = (
    "saccade_rate saccade_amplitude_mean saccade_amplitude_shape fixation_regularity "
    "vertical_ratio gaze_range blink_rate blink_duration line_saccades pursuit_rate "
    "pursuit_speed glance_rate glance_amplitude drift_rms vor_amplitude slip_amplitude "
    "head_pitch imu_frequency imu_burstiness acc_jitter gyro_jitter"
).split()
_TRIPLE_FIELDS = ("acc_amplitude", "gyro_amplitude")


def profile_from_config(cfg: Config, activity: str) -> ActivityProfile:
    prefix = f"profile.{activity}."
    if not cfg.keys(prefix):
        raise ConfigError(f"missing activity profile for {activity!r} (no '{prefix}*' keys)")
    known = set(_FLOAT_FIELDS) | set(_TRIPLE_FIELDS) | {"reading_pattern", "harmonics"}
    for key in cfg.keys(prefix):
        name = key[len(prefix):]
        if name not in known:
            entry = cfg.entries[key]
            raise ConfigError(f"unknown profile field {name!r} for {activity!r}", entry.source, entry.line)
    kwargs: dict = {"activity": activity}
    for name in _FLOAT_FIELDS:
        if prefix + name in cfg:
            kwargs[name] = cfg.get_float(prefix + name)
    for name in _TRIPLE_FIELDS:
        if prefix + name in cfg:
            values = cfg.get_list(prefix + name, float)
            if len(values) != 3:
                entry = cfg.entries[prefix + name]
                raise ConfigError(f"{prefix + name} needs 3 values", entry.source, entry.line)
            kwargs[name] = tuple(values)
    if prefix + "harmonics" in cfg:
        kwargs["harmonics"] = tuple(cfg.get_list(prefix + "harmonics", float))
    if prefix + "reading_pattern" in cfg:
        kwargs["reading_pattern"] = cfg.get_bool(prefix + "reading_pattern")
    profile = ActivityProfile(**kwargs)
    try:
        profile.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return profile


def profiles_from_config(cfg: Config) -> dict[str, ActivityProfile]:
    profiles = {a: profile_from_config(cfg, a) for a in ACTIVITIES}
    weakest_physical = min(profiles[a].imu_oscillation for a in PHYSICAL)
    strongest_stationary = max(profiles[a].imu_oscillation for a in STATIONARY)
    if weakest_physical < 10 * strongest_stationary:
        raise ConfigError(
            "walk/cycle head-motion amplitude must be >= 10x every stationary profile's"
        )
    return profiles


# --------------------------------------------------------------------------- eye


def _smooth_noise(rng: np.random.Generator, n: int, width: int) -> np.ndarray:
    """Unit-RMS low-pass Gaussian noise (moving average of white noise)."""
    if n == 0:
        return np.zeros(0)
    white = rng.standard_normal(n + width)
    c = np.cumsum(white)
    out = (c[width:] - c[:-width])[:n]
    return out / math.sqrt(width)


def _add_saccade(omega_h: np.ndarray, omega_v: np.ndarray, start: int,
                 dh: float, dv: float, rate: float) -> None:
    """Triangular velocity pulse integrating to a gaze jump of (dh, dv) degrees.

    Duration follows the main sequence, 21 ms + 2.2 ms/deg, clipped to 20-80 ms.
    """
    if start >= len(omega_h):
        return
    amplitude = math.hypot(dh, dv)
    duration = min(max(21.0 + 2.2 * amplitude, 20.0), 80.0) * 1e-3
    n = max(int(round(duration * rate)), 2)
    shape = 1.0 - np.abs(np.linspace(-1.0, 1.0, n + 2)[1:-1])
    shape *= rate / shape.sum()  # discrete pulse integrates to exactly 1 deg
    stop = min(start + n, len(omega_h))
    omega_h[start:stop] += dh * shape[: stop - start]
    omega_v[start:stop] += dv * shape[: stop - start]


def _saccade_events(profile: ActivityProfile, duration: float, rng: np.random.Generator, scale: float):
    """Yield ``(time, dh, dv)`` gaze jumps in degrees."""
    if profile.saccade_rate <= 0:
        return []
    rate = profile.saccade_rate * scale
    events = []
    h = v = 0.0
    t = rng.uniform(0, 1 / rate)
    k = max(profile.fixation_regularity, 1e-3)
    if profile.reading_pattern:
        line_left = -profile.gaze_range * 0.6
        h = line_left
        count = 0
        per_line = max(int(round(rng.normal(profile.line_saccades, 1.5))), 3)
        while t < duration:
            if count < per_line:
                amp = rng.gamma(profile.saccade_amplitude_shape,
                                profile.saccade_amplitude_mean / profile.saccade_amplitude_shape)
                events.append((t, amp, rng.normal(0, 0.15)))
                h += amp
                count += 1
            else:
                dv = 1.2 if v < profile.gaze_range * 0.5 else -v - profile.gaze_range * 0.5
                events.append((t, line_left - h, dv))
                v += dv
                h = line_left
                count = 0
                per_line = max(int(round(rng.normal(profile.line_saccades, 1.5))), 3)
            t += rng.gamma(k, 1 / (rate * k))
        return events
    while t < duration:
        amp = rng.gamma(profile.saccade_amplitude_shape,
                        profile.saccade_amplitude_mean / profile.saccade_amplitude_shape)
        ang = rng.uniform(0, 2 * np.pi)
        dh, dv = amp * math.cos(ang), amp * math.sin(ang) * profile.vertical_ratio
        if abs(h + dh) > profile.gaze_range:
            dh = -dh
        if abs(v + dv) > profile.gaze_range * profile.vertical_ratio:
            dv = -dv
        events.append((t, dh, dv))
        h += dh
        v += dv
        t += rng.gamma(k, 1 / (rate * k))
    return events


def _poisson_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return np.zeros(0)
    count = rng.poisson(rate * duration)
    return np.sort(rng.uniform(0, duration, count))


def gen_eye_trajectory(
    profile: ActivityProfile,
    duration: float,
    geometry: EyeGeometry = EyeGeometry(),
    seed=0,
    *,
    sensors: tuple[LfiSensorPose, LfiSensorPose] = DEFAULT_SENSORS,
    noise: SensorNoise | None = SensorNoise(),
    intensity: float = 1.0,
    rate: float = LFI_RATE,
) -> dict[str, np.ndarray]:
    """Velocity and distance channels ``v1, d1, v2, d2`` of both LFI sensors.

    ``intensity`` scales saccade rate and head-coupled eye motion; it is the knob
    used for inter-participant heterogeneity. ``noise=None`` disables sensor noise.
    """
    if duration <= 0:
        raise ValueError("duration must be > 0")
    geometry.validate()
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    omega_h = np.zeros(n)
    omega_v = np.zeros(n)

    for t0, dh, dv in _saccade_events(profile, duration, rng, intensity):
        _add_saccade(omega_h, omega_v, int(t0 * rate), dh, dv, rate)

    for t0 in _poisson_times(profile.pursuit_rate, duration, rng):
        length = int(rng.uniform(0.5, 2.0) * rate)
        ang = rng.uniform(0, 2 * np.pi)
        s = int(t0 * rate)
        omega_h[s:s + length] += profile.pursuit_speed * math.cos(ang)
        omega_v[s:s + length] += profile.pursuit_speed * math.sin(ang) * profile.vertical_ratio

    for t0 in _poisson_times(profile.glance_rate, duration, rng):
        s = int(t0 * rate)
        dwell = int(rng.uniform(0.6, 1.5) * rate)
        amp = profile.glance_amplitude * rng.uniform(0.8, 1.2)
        _add_saccade(omega_h, omega_v, s, 0.0, -amp, rate)
        _add_saccade(omega_h, omega_v, s + dwell, 0.0, amp, rate)

    t = np.arange(n) / rate
    if profile.vor_amplitude > 0:
        wander = 1 + 0.03 * _smooth_noise(rng, n, int(rate))
        phase = 2 * np.pi * profile.imu_frequency * np.cumsum(wander) / rate
        omega_h += profile.vor_amplitude * intensity * np.sin(phase + rng.uniform(0, 2 * np.pi))
        omega_v += 0.5 * profile.vor_amplitude * intensity * np.sin(phase + rng.uniform(0, 2 * np.pi))

    gaze_h = np.cumsum(omega_h) / rate
    gaze_v = np.cumsum(omega_v) / rate
    # keep the pupil-crossing geometry anchored to a slowly wandering fixation centre
    gaze_h -= uniform_filter1d(gaze_h, int(10 * rate), mode="nearest")
    gaze_v -= uniform_filter1d(gaze_v, int(10 * rate), mode="nearest")

    blink = np.zeros(n, dtype=bool)
    lid_velocity = np.zeros(n)
    for t0 in _poisson_times(profile.blink_rate, duration, rng):
        s = int(t0 * rate)
        length = max(int(rng.normal(profile.blink_duration, 0.2 * profile.blink_duration) * rate), 20)
        stop = min(s + length, n)
        blink[s:stop] = True
        half = length // 2
        lobe = np.sin(np.linspace(0, np.pi, half))
        seg = np.concatenate([-lobe, lobe, np.zeros(length - 2 * half)]) * 0.04
        lid_velocity[s:stop] += seg[: stop - s]

    slip = np.zeros(n)
    if profile.slip_amplitude > 0:
        slip = profile.slip_amplitude * intensity * np.sin(
            2 * np.pi * profile.imu_frequency * t + rng.uniform(0, 2 * np.pi)
        ) + profile.slip_amplitude * 0.5 * _smooth_noise(rng, n, int(rate))

    deg = np.pi / 180 * EYE_RADIUS
    out: dict[str, np.ndarray] = {}
    for idx, pose in enumerate(sensors, start=1):
        a = math.radians(pose.direction)
        v = pose.gain * deg * (math.cos(a) * omega_h + math.sin(a) * omega_v)
        v = v + profile.drift_rms * _smooth_noise(rng, n, int(0.05 * rate))
        v = np.where(blink, lid_velocity, v)
        in_pupil = np.hypot(gaze_h - pose.pupil_center[0], gaze_v - pose.pupil_center[1]) < pose.pupil_radius
        d = np.where(in_pupil, geometry.retina, geometry.iris)
        d = np.where(blink, geometry.lid, d)
        d = uniform_filter1d(d, 5, mode="nearest")
        d = d + slip
        if noise is not None:
            d, v = add_sensor_noise(d, v, noise, rng)
        out[f"v{idx}"] = v
        out[f"d{idx}"] = d
    return out


# --------------------------------------------------------------------------- imu


def gen_imu(
    profile: ActivityProfile,
    duration: float,
    seed=0,
    *,
    intensity: float = 1.0,
    rate: float = IMU_RATE,
) -> dict[str, np.ndarray]:
    """Accelerometer (m/s^2) and gyroscope (rad/s) channels at ``rate``."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate))
    pitch = math.radians(profile.head_pitch)
    gravity = (0.0, GRAVITY * math.sin(pitch), GRAVITY * math.cos(pitch))

    wander = 1 + 0.03 * _smooth_noise(rng, n, int(rate))
    phase = 2 * np.pi * profile.imu_frequency * np.cumsum(wander) / rate
    envelope = np.ones(n)
    if profile.imu_burstiness > 0:
        slow = _smooth_noise(rng, n, int(2 * rate))
        envelope = (1 - profile.imu_burstiness) + profile.imu_burstiness * (slow > 0.3)
        envelope = uniform_filter1d(envelope, int(0.2 * rate), mode="nearest")

    def oscillation(amplitude: float) -> np.ndarray:
        if amplitude == 0:
            return np.zeros(n)
        sig = np.zeros(n)
        for h, w in enumerate(profile.harmonics, start=1):
            sig += w * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        return amplitude * intensity * envelope * sig

    out = {}
    for name, g, amp in zip(("accx", "accy", "accz"), gravity, profile.acc_amplitude):
        out[name] = g + oscillation(amp) + profile.acc_jitter * rng.standard_normal(n)
    for name, amp in zip(("gyrx", "gyry", "gyrz"), profile.gyro_amplitude):
        out[name] = oscillation(amp) + profile.gyro_jitter * rng.standard_normal(n)
    return out


# --------------------------------------------------------------------------- participant


@dataclass(frozen=True)
class ParticipantSpec:
    id: str
    seed: int
    durations: dict[str, float]  # seconds per activity
    personal_scale: dict[str, tuple[float, float]] = field(default_factory=dict)  # channel -> (gain, offset)
    activity_scale: dict[str, float] = field(default_factory=dict)  # activity -> intensity
    eye_geometry: EyeGeometry = EyeGeometry()
    gap_range: tuple[float, float] = (2.0, 10.0)
    style: dict[str, dict[str, float]] = field(default_factory=dict)  # activity -> personal habits

    @property
    def shift(self) -> float:
        """Largest multiplicative departure of any activity intensity from 1."""
        if not self.activity_scale:
            return 1.0
        return max(max(s, 1 / s) for s in self.activity_scale.values())

    def validate(self, window_seconds: float = 30.0) -> None:
        for act, dur in self.durations.items():
            if dur <= 2 * window_seconds:
                raise ValueError(f"{self.id}: {act} lasts {dur}s, need > {2 * window_seconds}s")
        for ch, (gain, _) in self.personal_scale.items():
            if not 0.5 <= gain <= 2.0:
                raise ValueError(f"{self.id}: gain {gain} for {ch} outside [0.5, 2]")
        for act, s in self.activity_scale.items():
            if not 0.5 <= s <= 2.0:
                raise ValueError(f"{self.id}: intensity {s} for {act} outside [0.5, 2]")


@dataclass
class SensorStream:
    """Multichannel recording of one participant.

    ``labels`` are integer indices into ``LABELS`` sampled at ``label_rate``.
    """

    participant_id: str
    channels: dict[str, np.ndarray]
    rates: dict[str, float]
    labels: np.ndarray
    label_rate: float

    @property
    def duration(self) -> float:
        return min(len(x) / self.rates[k] for k, x in self.channels.items())

    def select(self, names) -> "SensorStream":
        return replace(self, channels={k: self.channels[k] for k in names},
                       rates={k: self.rates[k] for k in names})


def _grid(x: float) -> float:
    return round(x / TIME_GRID) * TIME_GRID


# habits drawn per participant and activity (multiplicative factors); head
# pitch is jittered separately as an additive offset in degrees
STYLE_FACTORS = ("saccade_rate", "saccade_amplitude_mean", "blink_rate")


def personal_profile(profile: ActivityProfile, style: dict[str, float]) -> ActivityProfile:
    """How one participant performs an activity: ``profile`` with ``style`` applied.

    ``head_pitch`` is added in degrees; any other numeric field is multiplied.
    """
    if not style:
        return profile
    changes = {}
    for name, factor in style.items():
        if name == "head_pitch":
            changes[name] = profile.head_pitch + factor
        elif name in _TRIPLE_FIELDS:
            changes[name] = tuple(a * factor for a in getattr(profile, name))
        elif name in _FLOAT_FIELDS:
            changes[name] = getattr(profile, name) * factor
        else:
            raise ValueError(f"unknown style key {name!r}")
    return replace(profile, **changes)


def gen_participant(spec: ParticipantSpec, profiles: dict[str, ActivityProfile],
                    noise: SensorNoise | None = SensorNoise()) -> tuple[SensorStream, list]:
    """Generate one participant's full session.

    Activities run once each in a seeded random order, separated by 2-10 s
    transitions. Returns the stream and the segment list
    ``[(label, start_s, stop_s), ...]``.
    """
    missing = [a for a in ACTIVITIES if a not in profiles]
    if missing:
        raise ValueError(f"missing profiles: {missing}")
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    order_rng = np.random.default_rng(root.spawn(1)[0])
    order = [ACTIVITIES[i] for i in order_rng.permutation(len(ACTIVITIES))]

    plan = []
    for i, act in enumerate(order):
        if i > 0:
            plan.append((TRANSITION, _grid(order_rng.uniform(*spec.gap_range))))
        plan.append((act, _grid(spec.durations[act])))

    seg_seeds = root.spawn(len(plan) * 2 + 1)
    lfi_parts = {c: [] for c in LFI_CHANNELS}
    imu_parts = {c: [] for c in IMU_CHANNELS}
    label_parts = []
    segments = []
    t = 0.0
    for j, (label, dur) in enumerate(plan):
        profile = TRANSITION_PROFILE if label == TRANSITION else personal_profile(
            profiles[label], spec.style.get(label, {}))
        scale = spec.activity_scale.get(label, 1.0)
        eye = gen_eye_trajectory(profile, dur, spec.eye_geometry, seg_seeds[2 * j], noise=noise, intensity=scale)
        imu = gen_imu(profile, dur, seg_seeds[2 * j + 1], intensity=scale)
        for c in LFI_CHANNELS:
            lfi_parts[c].append(eye[c])
        for c in IMU_CHANNELS:
            imu_parts[c].append(imu[c])
        label_parts.append(np.full(len(eye["v1"]), LABELS.index(label), dtype=np.int8))
        segments.append((label, round(t, 6), round(t + dur, 6)))
        t += dur

    channels = {c: np.concatenate(p) for c, p in lfi_parts.items()}
    channels.update({c: np.concatenate(p) for c, p in imu_parts.items()})
    for c, (gain, offset) in spec.personal_scale.items():
        channels[c] = gain * channels[c] + offset
    rates = {c: LFI_RATE for c in LFI_CHANNELS} | {c: IMU_RATE for c in IMU_CHANNELS}
    stream = SensorStream(spec.id, channels, rates, np.concatenate(label_parts), LFI_RATE)
    return stream, segments


# Mean per-activity durations of the recorded study, scaled so the shortest
# activity (read) lasts 300 s.
RECORDED_MEAN_DURATIONS = {
    "talk": 597, "read": 506, "video": 619, "walk": 649, "type": 865, "solve": 673, "cycle": 534,
}


def default_durations(min_seconds: float = 300.0) -> dict[str, float]:
    scale = min_seconds / min(RECORDED_MEAN_DURATIONS.values())
    return {a: _grid(d * scale) for a, d in RECORDED_MEAN_DURATIONS.items()}


def make_cohort(
    n_participants: int = 8,
    seed: int = 0,
    *,
    min_seconds: float = 300.0,
    duration_jitter: float = 0.1,
    n_shifted: int = 2,
    shift: float = 1.6,
    gain_range: tuple[float, float] = (0.8, 1.25),
    intensity_jitter: float = 0.1,
    style_jitter: float = 0.0,
    pitch_jitter: float = 0.0,
) -> list[ParticipantSpec]:
    """Participant specs for a synthetic cohort.

    The last ``n_shifted`` participants perform every activity at an intensity
    of ``shift`` or ``1/shift`` (chosen per activity), the others within
    ``1 +/- intensity_jitter``. Every participant also gets personal habits per
    activity: log-normal factors (sigma ``style_jitter``) on saccade rate,
    saccade size and blink rate, and a head pitch offset with standard
    deviation ``pitch_jitter`` degrees.
    """
    root = np.random.SeedSequence(seed)
    specs = []
    base = default_durations(min_seconds)
    for i, child in enumerate(root.spawn(n_participants)):
        rng = np.random.default_rng(child)
        pid = f"P{i + 1}"
        durations = {a: _grid(d * (1 + rng.uniform(0, duration_jitter))) for a, d in base.items()}
        personal = {c: (float(rng.uniform(*gain_range)), 0.0) for c in CHANNELS}
        if i >= n_participants - n_shifted:
            activity_scale = {a: float(shift if rng.random() < 0.5 else 1 / shift) for a in ACTIVITIES}
        else:
            activity_scale = {a: float(rng.uniform(1 - intensity_jitter, 1 + intensity_jitter))
                              for a in ACTIVITIES}
        geometry = EyeGeometry(
            iris=25.5e-3 + rng.uniform(-1e-3, 1e-3),
            retina=45.0e-3 + rng.uniform(-1e-3, 1e-3),
            lid=21.0e-3 + rng.uniform(-0.5e-3, 0.5e-3),
        )
        style = {}
        for a in ACTIVITIES:
            habits = {k: float(np.exp(rng.normal(0, style_jitter))) for k in STYLE_FACTORS}
            habits["head_pitch"] = float(rng.normal(0, pitch_jitter))
            style[a] = habits
        specs.append(ParticipantSpec(pid, int(child.generate_state(1)[0]), durations,
                                     personal, activity_scale, geometry, style=style))
    return specs


def cohort_from_config(cfg: Config, seed: int) -> list[ParticipantSpec]:
    return make_cohort(
        n_participants=cfg.get_int("cohort.participants", 8),
        seed=seed,
        min_seconds=cfg.get_float("cohort.min_seconds", 300.0),
        duration_jitter=cfg.get_float("cohort.duration_jitter", 0.1),
        n_shifted=cfg.get_int("cohort.shifted_participants", 2),
        shift=cfg.get_float("cohort.shift", 1.6),
        intensity_jitter=cfg.get_float("cohort.intensity_jitter", 0.1),
        style_jitter=cfg.get_float("cohort.style_jitter", 0.0),
        pitch_jitter=cfg.get_float("cohort.pitch_jitter", 0.0),
    )
