# emulation of the phase-sensing pipeline: waveform synthesis, three-register
# extremum detection with the 0.4T filter, and phase recovery by linear extrapolation
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from resources import ConfigValidationError, ContractViolation

PEAK = "peak"
VALLEY = "valley"
anchor_phase = {PEAK: 0.0, VALLEY: np.pi}
filter_fraction = 0.4


@dataclass(frozen=True)
class WaveformConfig:
    oversample: int = 20
    period: float = 0.2
    amplitude: float = 1.0
    quant_bits: int = None
    dump: bool = False

    def __post_init__(self):
        errors = []
        if int(self.oversample) != self.oversample or self.oversample < 3:
            errors.append(f"oversample must be an integer >= 3, got {self.oversample}")
        if not self.period > 0:
            errors.append(f"period must be > 0, got {self.period}")
        if not self.amplitude > 0:
            errors.append(f"amplitude must be > 0, got {self.amplitude}")
        if self.quant_bits is not None and (int(self.quant_bits) != self.quant_bits or self.quant_bits < 1):
            errors.append(f"quant_bits must be a positive integer or null, got {self.quant_bits}")
        if not isinstance(self.dump, bool):
            errors.append(f"dump must be true or false, got {self.dump!r}")
        if errors:
            raise ConfigValidationError(errors, context="waveform config")

    @property
    def sample_interval(self):
        return self.period / self.oversample


@dataclass
class ExtremaTrack:
    times: list = field(default_factory=list)
    kinds: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    def before(self, t):
        """Number of accepted extrema stamped at or before t."""
        return int(np.searchsorted(self.times, t + 1e-12, side="right"))


def quantize(v, bits, amplitude):
    # uniform grid of 2**bits levels spanning [-A, A]
    levels = 2 ** int(bits)
    step = 2.0 * amplitude / (levels - 1)
    q = np.clip(np.round((np.asarray(v) + amplitude) / step), 0, levels - 1)
    return -amplitude + q * step


def voltage(t, phase, wcfg):
    v = wcfg.amplitude * np.cos(2 * np.pi * t / wcfg.period + phase)
    if wcfg.quant_bits is not None:
        v = quantize(v, wcfg.quant_bits, wcfg.amplitude)
    return v


def synth_waveform(times, psi, wcfg):
    """
    Sample v_i(t) = A·cos(2πt/T + φ_i(t)) on the uniform grid t_s = t_0 + j·T/oversample.

    Args:
        times (array-like): trajectory sample times, strictly increasing.
        psi (array-like): phases with shape (len(times), n).
        wcfg (WaveformConfig): waveform settings.

    Returns:
        tuple: (t_s, V) with V of shape (len(t_s), n).

    Raises:
        ContractViolation: if the trajectory is sampled more coarsely than the waveform grid.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    if len(times) < 2 or psi.shape[0] != len(times):
        raise ContractViolation("trajectory needs at least two samples, one phase row per time")
    spacing = np.diff(times).max()
    if spacing > wcfg.sample_interval * (1 + 1e-9):
        raise ContractViolation(
            f"trajectory too sparse for interpolation: sample spacing {spacing:.4g} exceeds "
            f"T/oversample = {wcfg.sample_interval:.4g}"
        )
    count = int(np.floor((times[-1] - times[0]) / wcfg.sample_interval + 1e-9)) + 1
    t_s = times[0] + np.arange(count) * wcfg.sample_interval
    unwrapped = np.unwrap(psi, axis=0)
    phases = np.column_stack([np.interp(t_s, times, unwrapped[:, i]) for i in range(psi.shape[1])])
    return t_s, voltage(t_s[:, None], phases, wcfg)


class ExtremaDetector:
    """
    Streaming peak/valley detector for one oscillator.

    Keeps the last three samples in registers. The middle sample is a peak
    when it rises strictly above the older neighbour and is not exceeded by
    the newer one (valley mirrored), so a two-sample plateau at the top of a
    quantized cosine registers once. Accepted extrema are more than 0.4T
    apart and alternate in kind.
    """

    def __init__(self, wcfg):
        self.wcfg = wcfg
        self.registers = deque(maxlen=3)
        self.track = ExtremaTrack()

    def push(self, t, v):
        self.registers.append((t, v))
        if len(self.registers) < 3:
            return None
        (_, v0), (t1, v1), (_, v2) = self.registers
        if v1 > v0 and v1 >= v2:
            kind = PEAK
        elif v1 < v0 and v1 <= v2:
            kind = VALLEY
        else:
            return None
        if self.track.times:
            if t1 - self.track.times[-1] <= filter_fraction * self.wcfg.period:
                return None
            if kind == self.track.kinds[-1]:
                return None
        self.track.times.append(t1)
        self.track.kinds.append(kind)
        return kind


def detect_extrema(t_s, stream, wcfg):
    detector = ExtremaDetector(wcfg)
    for t, v in zip(np.asarray(t_s, dtype=float), np.asarray(stream, dtype=float)):
        detector.push(t, v)
    return detector.track


def estimate_phase(track, t):
    """
    Real-time phase (mod 2π) of one oscillator at time t, or None when fewer
    than two extrema have been accepted by t.

    Anchored at the latest extremum (peak 0, valley π). The slope comes from
    the same-kind predecessor when one exists (2π span), else from the
    preceding opposite-kind extremum (π span).
    """
    count = track.before(t)
    if count < 2:
        return None
    t_anchor = track.times[count - 1]
    if count >= 3:
        span, t_prev = 2 * np.pi, track.times[count - 3]
    else:
        span, t_prev = np.pi, track.times[count - 2]
    slope = span / (t_anchor - t_prev)
    phase = anchor_phase[track.kinds[count - 1]] + slope * (t - t_anchor)
    return wrap_2pi(phase)


def wrap_2pi(x):
    wrapped = np.mod(x, 2 * np.pi)
    return float(0.0 if wrapped >= 2 * np.pi else wrapped)


def relative_phase(track_ref, track_i, t):
    ref = estimate_phase(track_ref, t)
    own = estimate_phase(track_i, t)
    if ref is None or own is None:
        return None
    return wrap_2pi(own - ref)


class PhaseSensor:
    """
    Streaming sensor for a running OIM: fed the integrator state every step,
    it samples the synthesized waveforms on the oversampled grid and reports
    characteristic phases relative to oscillator 0.
    """

    def __init__(self, n, wcfg):
        self.n = n
        self.wcfg = wcfg
        self.detectors = [ExtremaDetector(wcfg) for _ in range(n)]
        self._next = 0
        self._last = None
        self._dumped = []

    def _emit(self, t, phase):
        v = voltage(t, phase, self.wcfg)
        if self.wcfg.dump:
            self._dumped.append((t, v))
        for detector, value in zip(self.detectors, v):
            detector.push(t, value)

    def feed(self, t, psi):
        psi = np.asarray(psi, dtype=float)
        ts = self.wcfg.sample_interval
        if self._last is None:
            if self._next * ts <= t + 1e-12:
                self._emit(self._next * ts, psi)
                self._next += 1
            self._last = (t, psi)
            return
        t_prev, psi_prev = self._last
        if t - t_prev > ts * (1 + 1e-9):
            raise ContractViolation(f"sensor fed too sparsely: step {t - t_prev:.4g} exceeds T/oversample = {ts:.4g}")
        delta = np.pi - np.mod(np.pi - (psi - psi_prev), 2 * np.pi)
        while self._next * ts <= t + 1e-12:
            ts_j = self._next * ts
            frac = (ts_j - t_prev) / (t - t_prev) if t > t_prev else 1.0
            self._emit(ts_j, psi_prev + frac * delta)
            self._next += 1
        self._last = (t, psi)

    def phases(self, t):
        """Characteristic phases (oscillator 0 pinned at 0), or None if any estimate is unavailable."""
        ref = self.detectors[0].track
        out = np.zeros(self.n)
        for i in range(1, self.n):
            value = relative_phase(ref, self.detectors[i].track, t)
            if value is None:
                return None
            out[i] = value
        if estimate_phase(ref, t) is None:
            return None
        return out

    def waveforms(self):
        """Emitted samples as a waveform frame, or None unless wcfg.dump is set."""
        if not self.wcfg.dump:
            return None
        t_s = np.array([t for t, _ in self._dumped])
        V = np.array([v for _, v in self._dumped]).reshape(len(t_s), self.n)
        return waveform_frame(t_s, V)


def recover_phases(psi, wcfg, duration_periods=3.0):
    """End-to-end recovery for a constant phase vector: synthesize, detect, extrapolate at the end."""
    psi = np.asarray(psi, dtype=float)
    times = np.arange(int(duration_periods * wcfg.oversample) + 1) * wcfg.sample_interval
    t_s, V = synth_waveform(times, np.tile(psi, (len(times), 1)), wcfg)
    tracks = [detect_extrema(t_s, V[:, i], wcfg) for i in range(V.shape[1])]
    t_end = t_s[-1]
    out = [relative_phase(tracks[0], track, t_end) for track in tracks]
    if any(x is None for x in out):
        warnings.warn("phase estimate unavailable for at least one oscillator", UserWarning)
        return None
    return np.array(out)


def waveform_frame(t_s, V):
    # debugging dump with columns t, v_0, ..., v_{n-1}
    frame = pd.DataFrame(V, columns=[f"v_{i}" for i in range(V.shape[1])])
    frame.insert(0, "t", t_s)
    return frame
