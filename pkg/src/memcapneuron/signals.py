"""Spike detection, spectra, regime classification and synchronisation analysis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import find_peaks

from .integrator import DEFAULT_DT_OUT, CircuitTrace, IntegratorConfig, simulate_circuit
from .model import DC, DCPlusAC, CircuitState, FixedResistor, ModelParams, TABLE1_R

__all__ = [
    "SpikeTrain",
    "Spectrum",
    "SyncReport",
    "ResponseClass",
    "Regime",
    "InsufficientSpikes",
    "NoLimitCycle",
    "upcrossings",
    "detect_spikes",
    "natural_frequency",
    "single_sided_spectrum",
    "spectral_peaks",
    "classify_regime",
    "sync_analysis",
    "lattice_match",
    "lock_interval",
    "sync_report_from_trace",
    "natural_frequency_dc",
    "Burst",
    "segment_bursts",
    "LIMIT_CYCLE_INIT",
]

# Initial condition next to the limit cycle used for all cycle-following runs.
LIMIT_CYCLE_INIT = CircuitState(6.6, 2.0207)


class InsufficientSpikes(ValueError):
    pass


class NoLimitCycle(ValueError):
    pass


@dataclass(frozen=True)
class SpikeTrain:
    times: np.ndarray
    criterion: str = "upcrossing"
    threshold: float = float("nan")
    t_start: float = 0.0
    t_stop: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.times)

    def rate(self) -> float:
        """Mean spike rate (spikes per time unit) over the analysed window."""
        if len(self.times) < 2:
            return 0.0
        return (len(self.times) - 1) / (self.times[-1] - self.times[0])


def upcrossings(t, y, level, debounce: int = 10) -> np.ndarray:
    """Times at which ``y`` crosses ``level`` upwards, linearly interpolated.

    A crossing is ignored if it follows the previous accepted one by fewer
    than ``debounce`` samples.
    """
    y = np.asarray(y, dtype=float)
    idx = np.flatnonzero((y[:-1] < level) & (y[1:] >= level))
    if idx.size == 0:
        return np.empty(0)
    keep = [idx[0]]
    for i in idx[1:]:
        if i - keep[-1] >= debounce:
            keep.append(i)
    idx = np.asarray(keep)
    frac = (level - y[idx]) / (y[idx + 1] - y[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def detect_spikes(series, p: ModelParams | None = None, criterion: str = "upcrossing", t=None, dt=None,
                  debounce: int = 10, prominence: float = 0.25) -> SpikeTrain:
    """Spike times in a uniformly sampled signal.

    Parameters
    ----------
    series : CircuitTrace or array_like
        A trace, or samples of ``x`` (``criterion="upcrossing"``) or ``V_C``
        (``criterion="vc_peaks"``).
    p : ModelParams
        Supplies the contact onset ``x_c`` used as the crossing level.
    criterion : {"upcrossing", "vc_peaks"}
        ``upcrossing``: upward crossings of ``x`` through ``x_c``.
        ``vc_peaks``: local maxima of ``V_C`` whose prominence exceeds the
        given fraction of the peak-to-peak range.
    t, dt : optional
        Sample times, or the spacing of samples starting at 0.
    """
    p = p or ModelParams()
    if isinstance(series, CircuitTrace):
        t = series.t
        y = series.x if criterion == "upcrossing" else series.V_C
    else:
        y = np.asarray(series, dtype=float)
        if t is None:
            t = (dt if dt is not None else 1.0) * np.arange(len(y))
    t = np.asarray(t, dtype=float)
    if len(y) < 2:
        return SpikeTrain(np.empty(0), criterion, float("nan"))
    if criterion == "upcrossing":
        times = upcrossings(t, y, p.x_c, debounce)
        level = p.x_c
    elif criterion == "vc_peaks":
        span = float(np.ptp(y))
        level = prominence * span
        if span == 0:
            times = np.empty(0)
        else:
            pk, _ = find_peaks(y, prominence=level, distance=max(1, debounce))
            times = t[pk]
    else:
        raise ValueError(f"unknown spike criterion {criterion!r}")
    return SpikeTrain(np.asarray(times), criterion, level, float(t[0]), float(t[-1]))


def natural_frequency(train: SpikeTrain, discard_head: int = 0):
    """Angular spike frequency ``2*pi / mean interval``.

    Returns
    -------
    omega : float
    interval_std : float
    """
    times = train.times[discard_head:]
    if len(times) < 5:
        raise InsufficientSpikes(f"need >= 5 spikes after discarding {discard_head}, have {len(times)}")
    isi = np.diff(times)
    return 2 * math.pi / isi.mean(), float(isi.std())


@dataclass(frozen=True)
class Burst:
    times: np.ndarray

    @property
    def n_spikes(self) -> int:
        return len(self.times)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def stop(self) -> float:
        return float(self.times[-1])

    @property
    def mean_interval(self) -> float:
        return float(np.diff(self.times).mean()) if len(self.times) > 1 else float("nan")

    @property
    def cv(self) -> float:
        isi = np.diff(self.times)
        return float(isi.std() / isi.mean()) if len(isi) > 1 else float("nan")


def segment_bursts(train: SpikeTrain, gap_factor: float = 5.0, min_spikes: int = 3) -> list[Burst]:
    """Group spikes into bursts separated by long quiescent gaps.

    An interval longer than ``gap_factor`` times the median interval ends a
    burst. Groups with fewer than ``min_spikes`` spikes are dropped.
    """
    t = np.asarray(train.times)
    if len(t) < 2:
        return []
    isi = np.diff(t)
    cut = np.flatnonzero(isi > gap_factor * np.median(isi)) + 1
    return [Burst(g) for g in np.split(t, cut) if len(g) >= min_spikes]


@dataclass(frozen=True)
class Spectrum:
    """Single-sided amplitude spectrum on an angular-frequency grid."""

    omega: np.ndarray
    P1: np.ndarray
    n: int
    dt: float
    mean: float = 0.0

    @property
    def d_omega(self) -> float:
        return 2 * math.pi / (self.n * self.dt)


def single_sided_spectrum(series, dt: float, window: str | None = None) -> Spectrum:
    """Single-sided DFT amplitude ``P1`` of a uniformly sampled signal.

    The mean is removed first and reported as ``Spectrum.mean``. Interior
    bins are doubled; DC and Nyquist are not. With ``window="hann"`` the
    samples are tapered and amplitudes corrected by the window's coherent
    gain, which keeps leakage sidelobes below a few percent.
    """
    y = np.asarray(series, dtype=float)
    n = y.size
    if n < 8:
        raise ValueError("need at least 8 samples")
    mean = float(y.mean())
    y = y - mean
    gain = 1.0
    if window == "hann":
        w = np.hanning(n)
        gain = w.mean()
        y = y * w
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    X = np.fft.rfft(y)
    P1 = np.abs(X) / n / gain
    P1[1:] *= 2.0
    if n % 2 == 0:
        P1[-1] /= 2.0
    omega = 2 * math.pi * np.fft.rfftfreq(n, dt)
    return Spectrum(omega, P1, n, dt, mean)


def spectral_peaks(spec: Spectrum, rel_height: float = 0.05):
    """Local maxima of ``P1`` (excluding DC) above ``rel_height`` of the maximum.

    Returns
    -------
    omega, amplitude : ndarray
        Sorted by decreasing amplitude.
    """
    P = spec.P1.copy()
    P[0] = 0.0
    top = P.max()
    if top <= 0:
        return np.empty(0), np.empty(0)
    idx, _ = find_peaks(P, height=rel_height * top)
    order = np.argsort(P[idx])[::-1]
    idx = idx[order]
    return spec.omega[idx], P[idx]


class Regime(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"


def classify_regime(waveform, s0: float = 1.0) -> Regime:
    """Spike-shape regime from the skewness of ``V_C`` over one period.

    Strongly negative skew means downward (negative) spikes, regime I; strongly
    positive means upward spikes, regime III; anything in between is the
    near-harmonic regime II.
    """
    if waveform is None:
        raise NoLimitCycle("no limit-cycle waveform to classify")
    v = np.asarray(waveform, dtype=float)
    if v.size < 3 or np.ptp(v) == 0:
        raise NoLimitCycle("waveform is flat")
    c = v - v.mean()
    skew = float(np.mean(c**3) / np.mean(c**2) ** 1.5)
    if skew < -s0:
        return Regime.I
    if skew > s0:
        return Regime.III
    return Regime.II


def skewness(v) -> float:
    c = np.asarray(v, dtype=float)
    c = c - c.mean()
    return float(np.mean(c**3) / np.mean(c**2) ** 1.5)


# -- synchronisation ----------------------------------------------------------


class ResponseClass(str, enum.Enum):
    HARMONIC = "Harmonic"
    LOCKED = "Locked"
    QUASIPERIODIC = "Quasiperiodic"
    SPIKE_TRAIN_LOW_FREQ = "SpikeTrainLowFreq"


@dataclass(frozen=True)
class LatticeMatch:
    N: int
    M: int
    sign: int
    predicted: float
    observed: float
    error: float


@dataclass
class SyncReport:
    V_dc: float
    delta_V: float
    omega_source: float
    omega_natural_dc: float
    spike_omega: float
    omega_lattice: float
    peaks: list
    matches: list
    unmatched: list
    locked: bool
    lock_ratio: Fraction | None
    response_class: ResponseClass
    d_omega: float
    spectrum: Spectrum | None = field(default=None, repr=False)
    n_unmatched_dc: int = 0

    @property
    def dominant_omega(self) -> float:
        return self.peaks[0][0] if self.peaks else float("nan")

    @property
    def best(self):
        """(N, M) of the match explaining the dominant peak, if any."""
        for m in self.matches:
            if self.peaks and m.observed == self.peaks[0][0]:
                return m.N, m.sign * m.M
        return None

    def all_matched(self) -> bool:
        return not self.unmatched


def lattice_match(omega_obs, omega_nat, omega_src, tol, n_max: int = 5, m_max: int = 5):
    """Closest ``N*omega_nat +- M*omega_src`` to ``omega_obs``, if within ``tol``."""
    best = None
    for N in range(n_max + 1):
        for M in range(m_max + 1):
            if N == 0 and M == 0:
                continue
            for sign in ((1,) if M == 0 else (1, -1)):
                pred = N * omega_nat + sign * M * omega_src
                err = abs(omega_obs - pred)
                if err <= tol and (best is None or (N + M, err) < (best.N + best.M, best.error)):
                    best = LatticeMatch(N, M, sign, pred, omega_obs, err)
    return best


def _lock_ratio(rate_ratio: float, max_den: int = 3, tol: float = 0.01):
    """Small-integer fraction ``p/q`` (p, q <= max_den) within ``tol`` of ``rate_ratio``."""
    best = None
    for q in range(1, max_den + 1):
        for p in range(1, max_den + 1):
            frac = Fraction(p, q)
            rel = abs(rate_ratio - p / q) / (p / q)
            if rel <= tol and (best is None or rel < best[1]):
                best = (frac, rel)
    return best[0] if best else None


def sync_analysis(
    p: ModelParams,
    V_dc: float,
    delta_V: float,
    omega_source: float,
    T: float = 2.0,
    omega_natural: float | None = None,
    r: float = TABLE1_R,
    t_transient: float | None = None,
    init: CircuitState = LIMIT_CYCLE_INIT,
    dt_out: float = DEFAULT_DT_OUT,
    cfg: IntegratorConfig | None = None,
    rel_height: float = 0.05,
    tol_bins: float = 2.0,
    lock_tol: float = 0.01,
) -> SyncReport:
    """Response of the spiking circuit to ``V_dc + delta_V sin(omega_source t)``.

    The first ``t_transient`` (default ``T/4``) is discarded. Spectral peaks
    of ``V_C`` above ``rel_height`` of the largest are matched against the
    lattice ``N omega_natural +- M omega_source`` (N, M <= 5) within
    ``tol_bins`` frequency bins. Locking is decided from spike rates: the
    spike rate must be ``p/q`` times the source frequency, ``p, q <= 3``.
    """
    if omega_natural is None:
        omega_natural = natural_frequency_dc(p, V_dc, r=r, dt_out=dt_out, cfg=cfg)
    t_tr = T / 4 if t_transient is None else t_transient
    trace = simulate_circuit(p, DCPlusAC(V_dc, delta_V, omega_source), FixedResistor(r), init, T, cfg, dt_out, t_from=t_tr)
    return sync_report_from_trace(trace, p, V_dc, delta_V, omega_source, omega_natural, rel_height, tol_bins, lock_tol)


def sync_report_from_trace(trace, p, V_dc, delta_V, omega_source, omega_natural,
                           rel_height=0.05, tol_bins=2.0, lock_tol=0.01) -> SyncReport:
    """Build a :class:`SyncReport` from an already simulated driven trace.

    The lattice's natural line is the mean spike frequency of the driven run
    when it spikes, since the drive pulls the oscillator slightly off its DC
    frequency. The number of peaks left unmatched against the DC value is
    kept as ``n_unmatched_dc``.
    """
    spec_plain = single_sided_spectrum(trace.V_C, trace.dt)
    spec = single_sided_spectrum(trace.V_C, trace.dt, window="hann")
    w, a = spectral_peaks(spec, rel_height)
    tol = tol_bins * spec.d_omega
    peaks = list(zip(w.tolist(), a.tolist()))

    train = detect_spikes(trace, p)
    spiking = len(train) >= 2
    spike_omega = 2 * math.pi * train.rate()
    omega_lat = spike_omega if spiking else omega_natural

    matches, unmatched = [], []
    n_unmatched_dc = 0
    for wo, amp in peaks:
        m = lattice_match(wo, omega_lat, omega_source, tol)
        (matches if m else unmatched).append(m if m else (wo, amp))
        if lattice_match(wo, omega_natural, omega_source, tol) is None:
            n_unmatched_dc += 1

    ratio = _lock_ratio(spike_omega / omega_source, tol=lock_tol) if spiking else None
    if not spiking:
        cls = ResponseClass.HARMONIC
    elif ratio is not None:
        cls = ResponseClass.LOCKED
    elif spike_omega > 3 * omega_source:
        cls = ResponseClass.SPIKE_TRAIN_LOW_FREQ
    else:
        cls = ResponseClass.QUASIPERIODIC
    return SyncReport(
        V_dc, delta_V, omega_source, omega_natural, spike_omega, omega_lat, peaks, matches, unmatched,
        ratio is not None, ratio, cls, spec.d_omega, spec_plain, n_unmatched_dc,
    )


def lock_interval(
    p: ModelParams,
    V_dc: float,
    delta_V: float,
    omega_natural: float,
    ratio: Fraction = Fraction(1),
    step: float = 0.02,
    tol: float = 2e-3,
    max_span: float = 1.0,
    **kw,
):
    """Contiguous range of ``omega_source`` locked at ``ratio`` around its centre.

    Starting at ``omega_natural / ratio`` the source frequency is stepped
    outwards by ``step`` (relative) until locking at ``ratio`` is lost, and
    each edge is refined by bisection to ``tol`` (relative).

    Returns
    -------
    lo, hi : float
        Edges of the plateau as multiples of ``omega_natural``; both NaN when
        even the centre does not lock.
    """
    centre = 1.0 / float(ratio)

    def locked(f):
        rep = sync_analysis(p, V_dc, delta_V, f * omega_natural, omega_natural=omega_natural, **kw)
        return rep.lock_ratio == ratio

    if not locked(centre):
        return float("nan"), float("nan")
    edges = []
    for sgn in (-1, 1):
        inside = centre
        out = centre + sgn * step
        while locked(out):
            inside = out
            if abs(out - centre) >= max_span:
                break
            out += sgn * step
        while abs(out - inside) > tol:
            mid = 0.5 * (inside + out)
            if locked(mid):
                inside = mid
            else:
                out = mid
        edges.append(inside)
    return edges[0], edges[1]


def natural_frequency_dc(p: ModelParams, V: float, r: float = TABLE1_R, T: float = 1.5,
                         init: CircuitState = LIMIT_CYCLE_INIT, dt_out: float = DEFAULT_DT_OUT,
                         cfg: IntegratorConfig | None = None) -> float:
    """Natural angular spike frequency under constant drive ``V``.

    The first third of the run is discarded as transient.
    """
    trace = simulate_circuit(p, DC(V), FixedResistor(r), init, T, cfg, dt_out, t_from=T / 3)
    omega, _ = natural_frequency(detect_spikes(trace, p))
    return omega
