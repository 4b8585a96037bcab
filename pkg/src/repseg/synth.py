"""Synthetic quasi-periodic aperture signals with exact ground-truth parsings."""

from __future__ import annotations

import numpy as np

from .types import FeatureSignal, FrameSeries, Parsing, SynthSpec


def pulse_periods(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(-spec.period_jitter, spec.period_jitter, spec.n_reps)
    return np.maximum(4, np.rint(spec.base_period * (1.0 + u))).astype(int)


def synth_generate(spec: SynthSpec) -> tuple[FeatureSignal, Parsing]:
    """Raised-cosine pulse train plus white noise; returns (signal, truth).

    Pulse k lasts p_k = base_period * (1 + u_k) frames (rounded), u_k uniform
    in +-period_jitter, and rises from 0 to its amplitude and back. Lead-in and
    lead-out frames sit at the resting level 0. Noise variance is the clean
    signal's mean power divided by 10**(snr/10).
    """
    rng = np.random.default_rng(spec.seed)
    periods = pulse_periods(spec, rng)
    pulses = []
    for k, p in enumerate(periods):
        amp = spec.alt_amplitude if k % 2 else 1.0
        pulses.append(amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(p) / p)))
    clean = np.concatenate([np.zeros(spec.lead_in), *pulses, np.zeros(spec.lead_out)])

    bounds = spec.lead_in + np.concatenate([[0], np.cumsum(periods)])
    truth = Parsing.from_pairs(zip(bounds[:-1], bounds[1:]), clean.size, "manual")

    values = clean
    if spec.noise_snr_db is not None:
        noise_var = np.mean(clean ** 2) / 10.0 ** (spec.noise_snr_db / 10.0)
        values = clean + rng.normal(0.0, np.sqrt(noise_var), clean.size)
    return FeatureSignal(spec.fps, values, "lip_aperture"), truth


def _face_template() -> np.ndarray:
    """A crude frontal 68-point layout (iBUG order, 0-based) in pixels."""
    pts = np.zeros((68, 2))
    t = np.linspace(np.pi, 0.0, 17)
    pts[0:17] = np.c_[320 + 110 * np.cos(t), 250 + 130 * np.sin(t)]  # jaw
    pts[17:22] = np.c_[np.linspace(230, 300, 5), np.full(5, 180)]
    pts[22:27] = np.c_[np.linspace(340, 410, 5), np.full(5, 180)]
    pts[27:31] = np.c_[np.full(4, 320), np.linspace(200, 260, 4)]
    pts[31:36] = np.c_[np.linspace(295, 345, 5), np.full(5, 275)]
    for k, cx in ((36, 265), (42, 375)):
        a = np.linspace(0, 2 * np.pi, 7)[:-1]
        pts[k:k + 6] = np.c_[cx + 22 * np.cos(a), 205 + 8 * np.sin(a)]
    a = np.linspace(np.pi, -np.pi, 13)[:-1]
    pts[48:60] = np.c_[320 + 45 * np.cos(a), 325 - 14 * np.sin(a)]  # outer lip
    a = np.linspace(np.pi, -np.pi, 9)[:-1]
    pts[60:68] = np.c_[320 + 30 * np.cos(a), 325 - 6 * np.sin(a)]  # inner lip
    return pts


def synth_landmarks(signal: FeatureSignal, scale: float = 30.0, drift_px: float = 0.0,
                    seed: int = 0) -> FrameSeries:
    """Animate a 68-point face so the lower lip and jaw follow ``signal``.

    Frames move the lower-lip landmarks (0-based 55..59, 65..67) and the chin
    down by ``scale * value`` pixels; ``drift_px`` adds a slow random-walk head
    translation shared by all landmarks.
    """
    base = _face_template()
    n = len(signal)
    coords = np.repeat(base[None], n, axis=0)
    lower = list(range(55, 60)) + list(range(65, 68))
    jaw = list(range(5, 12))
    open_px = scale * signal.values
    coords[:, lower, 1] += open_px[:, None]
    coords[:, jaw, 1] += 0.6 * open_px[:, None]
    if drift_px:
        rng = np.random.default_rng(seed)
        walk = np.cumsum(rng.normal(0, drift_px / np.sqrt(max(n, 1)), (n, 2)), axis=0)
        coords += walk[:, None, :]
    return FrameSeries(signal.fps, coords)
