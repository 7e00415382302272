"""Synthetic head-tracking traces, trial trimming, sliding-window extraction,
train/test splitting and dataset file I/O.

A tracking sample is one row of 19 float64 fields at 80 Hz:

    t, pos(x,y,z), linvel(x,y,z), linacc(x,y,z),
    euler(yaw,pitch,roll), angvel(yaw,pitch,roll), angacc(yaw,pitch,roll)

Axes: x right, y up, z forward. Angles are radians about fixed world axes;
positive yaw turns the head left, positive pitch tilts it up, positive roll
leans it left. Only derivative channels feed the classifier, so the
convention is internal, but the dataset files follow it.

The generator stands in for human data collection: each 4-second trial is
built from closed-form motion primitives (positions/angles plus their
analytic derivatives) with an idle lead-in and tail, per-subject speed,
amplitude and noise multipliers, clipped Gaussian channel noise, and
accelerations taken as first differences of the stored velocities.
"""

import logging
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigError, DataFormatError
from .labels import ClassLabel, label_from_name

logger = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 80.0
DT = 1.0 / SAMPLE_RATE_HZ
WINDOW_LEN = 40
GRAVITY = 9.81

SAMPLE_FIELDS = (
    "t",
    "pos_x", "pos_y", "pos_z",
    "vel_x", "vel_y", "vel_z",
    "acc_x", "acc_y", "acc_z",
    "yaw", "pitch", "roll",
    "angvel_yaw", "angvel_pitch", "angvel_roll",
    "angacc_yaw", "angacc_pitch", "angacc_roll",
)
N_FIELDS = len(SAMPLE_FIELDS)

COL_T = 0
COL_POS = (1, 2, 3)
COL_Y = 2
COL_LINVEL = (4, 5, 6)
COL_LINACC = (7, 8, 9)
COL_EULER = (10, 11, 12)
COL_ANGVEL = (13, 14, 15)
COL_ANGACC = (16, 17, 18)

# axis offsets within a 3-channel group
AX_X, AX_Y, AX_Z = 0, 1, 2          # position/velocity
AX_YAW, AX_PITCH, AX_ROLL = 0, 1, 2  # angles


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class Trial:
    """One labeled collection trial: a [N, 19] sample block plus metadata.

    ``onset`` is the first sample index at which the motion primitive is
    active (0 for idle trials); the latency harness measures against it.
    """

    label: ClassLabel
    subject: int
    trial_index: int
    data: np.ndarray
    onset: int = 0

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data


@dataclass(frozen=True)
class SubjectProfile:
    """Per-subject multipliers on the generator's nominal motion parameters."""

    freq_mult: float = 1.0
    amp_mult: float = 1.0
    noise_mult: float = 1.0
    head_height: float = 1.65

    def __post_init__(self):
        if min(self.freq_mult, self.amp_mult, self.noise_mult, self.head_height) <= 0:
            raise ConfigError("subject profile multipliers must be positive")


@dataclass
class GeneratorConfig:
    """Nominal motion/noise parameters of the synthetic cohort.

    All values can be overridden from a flat key=value config file.
    """

    subjects: int = 20
    trials_per_class: int = 4
    seed: int = 0
    trial_seconds: float = 4.0

    step_freq_hz: float = 1.8
    jog_freq_hz: float = 2.8
    step_amp_m: float = 0.05       # half of the ~0.1 m peak-to-peak head bob
    jog_amp_m: float = 0.08
    drift_speed_ms: float = 0.5
    strafe_speed_ms: float = 0.6
    squat_depth_m: float = 0.40
    jump_height_m: float = 0.35
    rotate_angle_rad: float = 1.1
    tilt_angle_rad: float = 0.6
    lean_angle_rad: float = 0.5
    lean_shift_m: float = 0.15
    nod_freq_hz: float = 2.0
    nod_amp_rad: float = 0.30
    shake_freq_hz: float = 1.8
    shake_amp_rad: float = 0.40

    noise_pos_m: float = 0.002
    noise_linvel_ms: float = 0.01
    noise_euler_rad: float = 0.004
    noise_angvel_rads: float = 0.02

    freq_jitter: float = 0.15
    amp_jitter: float = 0.20
    noise_jitter: float = 0.30
    head_height_min_m: float = 1.50
    head_height_max_m: float = 1.80

    def validate(self):
        if self.subjects < 1 or self.trials_per_class < 1:
            raise ConfigError("need at least one subject and one trial per class")
        jog_low = self.jog_freq_hz * (1.0 - self.freq_jitter)
        step_high = self.step_freq_hz * (1.0 + self.freq_jitter)
        if jog_low <= step_high:
            raise ConfigError(
                "jogging frequency range must sit strictly above the stepping range"
            )
        if self.jump_height_m * (1.0 - self.amp_jitter) <= 0.10:
            raise ConfigError("jump peak displacement must exceed 0.10 m")
        if self.squat_depth_m * (1.0 - self.amp_jitter) <= 0.10:
            raise ConfigError("squat depth must exceed 0.10 m")
        if self.trial_seconds * SAMPLE_RATE_HZ < 2 * WINDOW_LEN:
            raise ConfigError("trials too short to windowize after trimming")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown generator config key: {key!r}")
            kwargs[key] = type(getattr(cls(), key))(value)
        return cls(**kwargs).validate()


@dataclass(frozen=True)
class Window:
    """A 40-sample slice of a trial, with per-stream channel views."""

    trial: Trial
    start: int

    def __post_init__(self):
        if self.start < 0 or self.start + WINDOW_LEN > self.trial.n_samples:
            raise ValueError("window out of trial bounds")

    @property
    def label(self):
        return self.trial.label

    @property
    def samples(self):
        return self.trial.data[self.start:self.start + WINDOW_LEN]

    @property
    def body_view(self):
        """[40, 3] linear velocity."""
        return self.samples[:, COL_LINVEL[0]:COL_LINVEL[-1] + 1]

    @property
    def head_view(self):
        """[40, 6] angular velocity followed by angular acceleration."""
        return self.samples[:, COL_ANGVEL[0]:COL_ANGACC[-1] + 1]

    @property
    def vertical_positions(self):
        """[40] head heights, for the jump/squat displacement gate."""
        return self.samples[:, COL_Y]


# ---------------------------------------------------------------------------
# Motion primitives (closed-form position + analytic velocity)
# ---------------------------------------------------------------------------

def _add_osc(pos, vel, t, t0, dur, amp, freq):
    """Hann-windowed sinusoid: smooth burst of oscillation."""
    u = (t - t0) / dur
    active = (u >= 0.0) & (u <= 1.0)
    ua = u[active]
    ta = t[active] - t0
    env = 0.5 * (1.0 - np.cos(2.0 * np.pi * ua))
    denv = np.pi * np.sin(2.0 * np.pi * ua) / dur
    phase = 2.0 * np.pi * freq * ta
    pos[active] += amp * env * np.sin(phase)
    vel[active] += amp * (
        denv * np.sin(phase) + env * 2.0 * np.pi * freq * np.cos(phase)
    )


def _add_move(pos, vel, t, t0, dur, delta):
    """Smoothstep displacement by ``delta`` over [t0, t0+dur]; persists after."""
    u = np.clip((t - t0) / dur, 0.0, 1.0)
    pos += delta * u * u * (3.0 - 2.0 * u)
    inside = (t >= t0) & (t <= t0 + dur)
    ui = u[inside]
    vel[inside] += delta * 6.0 * ui * (1.0 - ui) / dur


def _add_jump(pos, vel, t, t0, height, dip=0.08):
    """Crouch dip, constant-acceleration push, ballistic flight, landing
    absorption and recovery. Returns the active duration."""
    d_dip, d_push, d_abs, d_rec = 0.18, 0.10, 0.12, 0.40
    v0 = np.sqrt(2.0 * GRAVITY * (height + dip))
    d_flight = 2.0 * v0 / GRAVITY
    absorb_depth = 0.5 * v0 * d_abs

    segments = []
    cursor = t0
    # dip: smoothstep to -dip
    segments.append(("move", cursor, d_dip, 0.0, -dip))
    cursor += d_dip
    # push: y = -dip + 0.5*a*tau^2 with a = v0/d_push
    segments.append(("push", cursor, d_push, -dip, v0 / d_push))
    cursor += d_push
    launch_y = -dip + 0.5 * v0 * d_push
    # flight: y = launch + v0*tau - g/2*tau^2, lands back at launch_y with -v0
    segments.append(("flight", cursor, d_flight, launch_y, v0))
    cursor += d_flight
    # absorb: decelerate -v0 -> 0, ends absorb_depth below the landing point
    segments.append(("absorb", cursor, d_abs, launch_y, v0 / d_abs))
    cursor += d_abs
    # recover: smoothstep back up to baseline
    recover_from = launch_y - absorb_depth
    segments.append(("move", cursor, d_rec, recover_from, -recover_from))
    cursor += d_rec

    for kind, start, dur, base, aux in segments:
        tau = t - start
        inside = (tau >= 0.0) & (tau < dur)
        ti = tau[inside]
        if kind == "move":
            u = ti / dur
            pos[inside] += base + aux * u * u * (3.0 - 2.0 * u)
            vel[inside] += aux * 6.0 * u * (1.0 - u) / dur
        elif kind == "push":
            pos[inside] += base + 0.5 * aux * ti * ti
            vel[inside] += aux * ti
        elif kind == "flight":
            pos[inside] += base + aux * ti - 0.5 * GRAVITY * ti * ti
            vel[inside] += aux - GRAVITY * ti
        elif kind == "absorb":
            pos[inside] += base - aux * ti + 0.5 * (aux / dur) * ti * ti
            vel[inside] += -aux + (aux / dur) * ti
    return cursor - t0


# ---------------------------------------------------------------------------
# Trial generation
# ---------------------------------------------------------------------------

def draw_subject_profile(config: GeneratorConfig, subject: int) -> SubjectProfile:
    rng = np.random.default_rng([config.seed, 0x0BD7, subject])
    return SubjectProfile(
        freq_mult=rng.uniform(1.0 - config.freq_jitter, 1.0 + config.freq_jitter),
        amp_mult=rng.uniform(1.0 - config.amp_jitter, 1.0 + config.amp_jitter),
        noise_mult=rng.uniform(1.0 - config.noise_jitter, 1.0 + config.noise_jitter),
        head_height=rng.uniform(config.head_height_min_m, config.head_height_max_m),
    )


def _clipped_noise(rng, sigma, shape):
    """Gaussian channel noise hard-clipped at 4 sigma so contract bounds on
    idle magnitudes hold by construction."""
    if sigma == 0.0:
        return np.zeros(shape)
    return np.clip(rng.normal(0.0, sigma, shape), -4.0 * sigma, 4.0 * sigma)


def generate_trial(label: ClassLabel, subject: SubjectProfile, rng,
                   config: GeneratorConfig = None, subject_id: int = 0,
                   trial_index: int = 1) -> Trial:
    """Synthesize one 4-second trial of the given class.

    Positions/angles come from closed-form primitives with analytic
    velocities; accelerations are first differences of the (noisy) stored
    velocities, matching how a headset SDK derives them.
    """
    cfg = (config or GeneratorConfig()).validate()
    n = int(round(cfg.trial_seconds * SAMPLE_RATE_HZ))
    t = np.arange(n) * DT

    pos = np.zeros((n, 3))
    linvel = np.zeros((n, 3))
    euler = np.zeros((n, 3))
    angvel = np.zeros((n, 3))

    fm, am = subject.freq_mult, subject.amp_mult
    t_on = rng.uniform(0.4, 0.8)
    onset = 0

    if label == ClassLabel.BEING_IDLE:
        pass
    elif label in (ClassLabel.STEPPING_IN_PLACE, ClassLabel.STEPPING_FORWARD,
                   ClassLabel.STEPPING_BACKWARD, ClassLabel.JOGGING_IN_PLACE):
        jog = label == ClassLabel.JOGGING_IN_PLACE
        freq = (cfg.jog_freq_hz if jog else cfg.step_freq_hz) * fm
        amp = (cfg.jog_amp_m if jog else cfg.step_amp_m) * am
        dur = rng.uniform(2.2, 2.8)
        _add_osc(pos[:, AX_Y], linvel[:, AX_Y], t, t_on, dur, amp, freq)
        if label == ClassLabel.STEPPING_FORWARD:
            _add_move(pos[:, AX_Z], linvel[:, AX_Z], t, t_on, dur,
                      cfg.drift_speed_ms * am * dur / 1.5)
        elif label == ClassLabel.STEPPING_BACKWARD:
            _add_move(pos[:, AX_Z], linvel[:, AX_Z], t, t_on, dur,
                      -cfg.drift_speed_ms * am * dur / 1.5)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label in (ClassLabel.STRAFING_LEFT, ClassLabel.STRAFING_RIGHT):
        dur = rng.uniform(1.4, 2.0)
        sign = -1.0 if label == ClassLabel.STRAFING_LEFT else 1.0
        _add_move(pos[:, AX_X], linvel[:, AX_X], t, t_on, dur,
                  sign * cfg.strafe_speed_ms * am * dur / 1.5)
        _add_osc(pos[:, AX_Y], linvel[:, AX_Y], t, t_on, dur,
                 0.6 * cfg.step_amp_m * am, cfg.step_freq_hz * fm)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label in (ClassLabel.SQUATTING_DOWN, ClassLabel.STANDING_UP):
        dur = rng.uniform(1.0, 1.6)
        depth = cfg.squat_depth_m * am
        if label == ClassLabel.SQUATTING_DOWN:
            _add_move(pos[:, AX_Y], linvel[:, AX_Y], t, t_on, dur, -depth)
        else:
            pos[:, AX_Y] -= depth  # trial starts crouched
            _add_move(pos[:, AX_Y], linvel[:, AX_Y], t, t_on, dur, depth)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label == ClassLabel.JUMPING:
        _add_jump(pos[:, AX_Y], linvel[:, AX_Y], t, t_on, cfg.jump_height_m * am)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label in (ClassLabel.ROTATING_LEFT, ClassLabel.ROTATING_RIGHT):
        dur = rng.uniform(1.0, 1.5)
        sign = 1.0 if label == ClassLabel.ROTATING_LEFT else -1.0
        _add_move(euler[:, AX_YAW], angvel[:, AX_YAW], t, t_on, dur,
                  sign * cfg.rotate_angle_rad * am)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label in (ClassLabel.TILTING_UP, ClassLabel.TILTING_DOWN):
        dur = rng.uniform(1.0, 1.5)
        sign = 1.0 if label == ClassLabel.TILTING_UP else -1.0
        _add_move(euler[:, AX_PITCH], angvel[:, AX_PITCH], t, t_on, dur,
                  sign * cfg.tilt_angle_rad * am)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label in (ClassLabel.LEANING_LEFT, ClassLabel.LEANING_RIGHT):
        dur = rng.uniform(1.0, 1.5)
        sign = 1.0 if label == ClassLabel.LEANING_LEFT else -1.0
        _add_move(euler[:, AX_ROLL], angvel[:, AX_ROLL], t, t_on, dur,
                  sign * cfg.lean_angle_rad * am)
        _add_move(pos[:, AX_X], linvel[:, AX_X], t, t_on, dur,
                  -sign * cfg.lean_shift_m * am)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label == ClassLabel.NODDING:
        cycles = rng.uniform(2.0, 3.0)
        freq = cfg.nod_freq_hz * fm
        _add_osc(euler[:, AX_PITCH], angvel[:, AX_PITCH], t, t_on, cycles / freq,
                 cfg.nod_amp_rad * am, freq)
        onset = int(t_on * SAMPLE_RATE_HZ)
    elif label == ClassLabel.SHAKING:
        cycles = rng.uniform(2.0, 3.0)
        freq = cfg.shake_freq_hz * fm
        _add_osc(euler[:, AX_YAW], angvel[:, AX_YAW], t, t_on, cycles / freq,
                 cfg.shake_amp_rad * am, freq)
        onset = int(t_on * SAMPLE_RATE_HZ)
    else:
        raise ConfigError(f"cannot generate trials for label {label!r}")

    pos[:, AX_Y] += subject.head_height

    nm = subject.noise_mult
    pos += _clipped_noise(rng, cfg.noise_pos_m * nm, (n, 3))
    linvel += _clipped_noise(rng, cfg.noise_linvel_ms * nm, (n, 3))
    euler += _clipped_noise(rng, cfg.noise_euler_rad * nm, (n, 3))
    angvel += _clipped_noise(rng, cfg.noise_angvel_rads * nm, (n, 3))

    data = np.empty((n, N_FIELDS))
    data[:, COL_T] = t
    data[:, COL_POS[0]:COL_POS[-1] + 1] = pos
    data[:, COL_LINVEL[0]:COL_LINVEL[-1] + 1] = linvel
    data[:, COL_LINACC[0]:COL_LINACC[-1] + 1] = _first_difference(linvel)
    data[:, COL_EULER[0]:COL_EULER[-1] + 1] = euler
    data[:, COL_ANGVEL[0]:COL_ANGVEL[-1] + 1] = angvel
    data[:, COL_ANGACC[0]:COL_ANGACC[-1] + 1] = _first_difference(angvel)
    return Trial(label=label, subject=subject_id, trial_index=trial_index,
                 data=data, onset=onset)


def _first_difference(velocity):
    acc = np.empty_like(velocity)
    acc[1:] = (velocity[1:] - velocity[:-1]) / DT
    acc[0] = acc[1]
    return acc


def make_idle_samples(config: GeneratorConfig, head_height: float, seconds: float,
                      rng) -> np.ndarray:
    """Noise-only samples at a given head height (latency-stream prefixes)."""
    n = int(round(seconds * SAMPLE_RATE_HZ))
    data = np.zeros((n, N_FIELDS))
    data[:, COL_T] = np.arange(n) * DT
    data[:, COL_Y] = head_height
    data[:, COL_POS[0]:COL_POS[-1] + 1] += _clipped_noise(rng, config.noise_pos_m, (n, 3))
    linvel = _clipped_noise(rng, config.noise_linvel_ms, (n, 3))
    data[:, COL_LINVEL[0]:COL_LINVEL[-1] + 1] = linvel
    data[:, COL_LINACC[0]:COL_LINACC[-1] + 1] = _first_difference(linvel)
    data[:, COL_EULER[0]:COL_EULER[-1] + 1] += _clipped_noise(rng, config.noise_euler_rad, (n, 3))
    angvel = _clipped_noise(rng, config.noise_angvel_rads, (n, 3))
    data[:, COL_ANGVEL[0]:COL_ANGVEL[-1] + 1] = angvel
    data[:, COL_ANGACC[0]:COL_ANGACC[-1] + 1] = _first_difference(angvel)
    return data


def generate_dataset(config: GeneratorConfig) -> list:
    """Full synthetic cohort: subjects x 18 classes x trials, with per-trial
    derived seeds so generation order (or parallelism) cannot change results."""
    config.validate()
    trials = []
    for subject_id in range(config.subjects):
        profile = draw_subject_profile(config, subject_id)
        for label in ClassLabel:
            if label == ClassLabel.INVALID:
                continue
            for trial_index in range(1, config.trials_per_class + 1):
                rng = np.random.default_rng(
                    [config.seed, subject_id, int(label), trial_index]
                )
                trials.append(generate_trial(
                    label, profile, rng, config,
                    subject_id=subject_id, trial_index=trial_index,
                ))
    return trials


# ---------------------------------------------------------------------------
# Trimming and windowing
# ---------------------------------------------------------------------------

def trim_idle(trial: Trial, vel_threshold: float = 0.05,
              angvel_threshold: float = 0.1):
    """Drop leading/trailing spans where both velocity magnitudes stay below
    threshold. Idle trials pass through untouched; returns None when the
    remainder is too short to windowize."""
    if trial.label == ClassLabel.BEING_IDLE:
        return trial
    linvel = trial.data[:, COL_LINVEL[0]:COL_LINVEL[-1] + 1]
    angvel = trial.data[:, COL_ANGVEL[0]:COL_ANGVEL[-1] + 1]
    quiet = (np.linalg.norm(linvel, axis=1) < vel_threshold) & (
        np.linalg.norm(angvel, axis=1) < angvel_threshold
    )
    active = np.flatnonzero(~quiet)
    if active.size == 0:
        return None
    lead, last = int(active[0]), int(active[-1])
    kept = trial.data[lead:last + 1]
    if kept.shape[0] < WINDOW_LEN:
        return None
    return replace(trial, data=kept, onset=max(trial.onset - lead, 0))


def windowize(trial: Trial):
    """All length-40 stride-1 windows of a trial."""
    if trial.n_samples < WINDOW_LEN:
        raise ValueError(
            f"trial has {trial.n_samples} samples; need at least {WINDOW_LEN}"
        )
    return [Window(trial, start) for start in range(trial.n_samples - WINDOW_LEN + 1)]


class WindowSet:
    """A flat, indexable collection of windows over a list of trials.

    Stores (trial_row, start, label) vectors rather than materialized
    windows; batches are gathered on demand.
    """

    def __init__(self, trials, trial_rows, starts, labels):
        self.trials = trials
        self.trial_rows = np.asarray(trial_rows, dtype=np.int32)
        self.starts = np.asarray(starts, dtype=np.int32)
        self.labels = np.asarray(labels, dtype=np.int64)

    @classmethod
    def from_trials(cls, trials):
        rows, starts, labels = [], [], []
        for row, trial in enumerate(trials):
            count = trial.n_samples - WINDOW_LEN + 1
            if count < 1:
                raise ValueError(f"trial {row} too short to windowize")
            rows.extend([row] * count)
            starts.extend(range(count))
            labels.extend([int(trial.label)] * count)
        return cls(list(trials), rows, starts, labels)

    @property
    def n(self):
        return len(self.labels)

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> Window:
        return Window(self.trials[self.trial_rows[i]], int(self.starts[i]))

    def sample_block(self, rows, columns):
        """Gather [len(rows), 40, len(columns)] for the given window rows."""
        cols = np.asarray(columns)
        block = np.empty((len(rows), WINDOW_LEN, len(cols)))
        for i, r in enumerate(rows):
            start = self.starts[r]
            block[i] = self.trials[self.trial_rows[r]].data[
                start:start + WINDOW_LEN, cols
            ]
        return block

    def canonical_rank(self):
        """Content-derived total order: (subject, class, trial_index, start)."""
        subj = np.array([self.trials[r].subject for r in self.trial_rows], dtype=np.int64)
        tidx = np.array([self.trials[r].trial_index for r in self.trial_rows], dtype=np.int64)
        return ((subj * 32 + self.labels) * 16 + tidx) * 2048 + self.starts

    def filter_labels(self, keep, remap=None):
        """Subset by label membership; ``remap`` optionally renumbers labels
        (e.g. head gestures 10..17 -> 0..7 for an 8-class model)."""
        keep_set = {int(k) for k in keep}
        mask = np.isin(self.labels, sorted(keep_set))
        out = WindowSet(
            self.trials, self.trial_rows[mask], self.starts[mask], self.labels[mask]
        )
        if remap is not None:
            out.labels = np.array([remap[int(l)] for l in out.labels], dtype=np.int64)
        return out

    def subsample_per_label(self, cap: int, seed: int):
        """Deterministically keep at most ``cap`` windows per label value."""
        keep_rows = []
        for value in np.unique(self.labels):
            rows = np.flatnonzero(self.labels == value)
            if len(rows) > cap:
                rng = np.random.default_rng([seed, int(value)])
                rows = np.sort(rng.choice(rows, size=cap, replace=False))
            keep_rows.append(rows)
        rows = np.concatenate(keep_rows)
        return WindowSet(
            self.trials, self.trial_rows[rows], self.starts[rows], self.labels[rows]
        )


class StreamView:
    """Adapter presenting a WindowSet as per-stream training arrays.

    ``column_groups`` is one tuple of sample columns per network stream, e.g.
    (COL_LINVEL, COL_ANGVEL + COL_ANGACC) for the two-stream model.
    """

    def __init__(self, window_set: WindowSet, column_groups, labels=None):
        self.window_set = window_set
        self.column_groups = [tuple(g) for g in column_groups]
        self._all_cols = tuple(sorted({c for g in self.column_groups for c in g}))
        self._col_pos = {c: i for i, c in enumerate(self._all_cols)}
        self.labels = window_set.labels if labels is None else np.asarray(labels)

    @property
    def n(self):
        return self.window_set.n

    def gather(self, rows):
        block = self.window_set.sample_block(rows, self._all_cols)
        return [
            np.ascontiguousarray(block[:, :, [self._col_pos[c] for c in group]])
            for group in self.column_groups
        ]

    def canonical_rank(self):
        return self.window_set.canonical_rank()


# Column groups for the standard model variants / comparison grid.
BODY_STREAM = COL_LINVEL
HEAD_STREAM = COL_ANGVEL + COL_ANGACC
COMBINED_STREAM = COL_LINVEL + COL_ANGVEL + COL_ANGACC

STREAM_GROUPS = {
    "linvel": COL_LINVEL,
    "linacc": COL_LINACC,
    "linvel+linacc": COL_LINVEL + COL_LINACC,
    "angvel": COL_ANGVEL,
    "angacc": COL_ANGACC,
    "angvel+angacc": COL_ANGVEL + COL_ANGACC,
}


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_dataset(trials, vel_threshold: float = 0.05, angvel_threshold: float = 0.1,
                  train_trials: int = 3):
    """Trim every trial, then windowize: collection trials 1..3 feed the
    training set, trial 4 the test set.

    Every (subject, class) group must contain exactly train_trials + 1
    trials; trials whose trimmed remainder is too short are skipped with a
    warning.
    """
    if not trials:
        raise DataFormatError("empty trial list")
    groups = {}
    for trial in trials:
        groups.setdefault((trial.subject, int(trial.label)), []).append(trial)
    expected = train_trials + 1
    for (subject, label), members in sorted(groups.items()):
        if len(members) != expected:
            raise DataFormatError(
                f"subject {subject} class {ClassLabel(label).canonical_name}: "
                f"{len(members)} trials, expected {expected}"
            )
        indices = sorted(t.trial_index for t in members)
        if indices != list(range(1, expected + 1)):
            raise DataFormatError(
                f"subject {subject} class {ClassLabel(label).canonical_name}: "
                f"trial indices {indices}, expected 1..{expected}"
            )
    train_kept, test_kept = [], []
    for trial in trials:
        trimmed = trim_idle(trial, vel_threshold, angvel_threshold)
        if trimmed is None:
            logger.warning(
                "skipping subject %d %s trial %d: too short after trimming",
                trial.subject, trial.label.canonical_name, trial.trial_index,
            )
            continue
        (train_kept if trial.trial_index <= train_trials else test_kept).append(trimmed)
    return WindowSet.from_trials(train_kept), WindowSet.from_trials(test_kept)


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

DATASET_HEADER = "# hmdact dataset v1"


def write_dataset(trials, path):
    """Line-oriented text format: one trial header then one line of 19
    full-precision decimal fields per sample. Reprs round-trip float64
    exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DATASET_HEADER + "\n")
        for trial in trials:
            fh.write(
                f"trial subject={trial.subject} "
                f"class={trial.label.canonical_name} "
                f"index={trial.trial_index} onset={trial.onset}\n"
            )
            for row in trial.data:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_dataset(path):
    """Parse a dataset file; malformed input raises DataFormatError with the
    offending line number."""
    trials = []
    header = None
    rows = []

    def flush(line_no):
        nonlocal header, rows
        if header is None:
            return
        if not rows:
            raise DataFormatError("trial with no samples", line=line_no)
        subject, label, index, onset = header
        trials.append(Trial(
            label=label, subject=subject, trial_index=index,
            data=np.array(rows), onset=onset,
        ))
        header, rows = None, []

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("trial "):
                flush(line_no)
                kv = {}
                for token in line.split()[1:]:
                    if "=" not in token:
                        raise DataFormatError(
                            f"bad trial header token {token!r}", line=line_no
                        )
                    key, value = token.split("=", 1)
                    kv[key] = value
                try:
                    header = (
                        int(kv["subject"]),
                        label_from_name(kv["class"]),
                        int(kv["index"]),
                        int(kv.get("onset", 0)),
                    )
                except KeyError as exc:
                    raise DataFormatError(
                        f"trial header missing field {exc}", line=line_no
                    ) from exc
                except ValueError as exc:
                    raise DataFormatError(str(exc), line=line_no) from exc
                continue
            if header is None:
                raise DataFormatError("sample line before any trial header", line=line_no)
            parts = line.split()
            if len(parts) != N_FIELDS:
                raise DataFormatError(
                    f"expected {N_FIELDS} fields, got {len(parts)}", line=line_no
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"bad number: {exc}", line=line_no) from exc
        flush(line_no=-1)
    if not trials:
        raise DataFormatError("no trials in file")
    return trials
