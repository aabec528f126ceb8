import numpy as np
import pytest
from scipy import signal as sps

from resvc.analysis import extract_mcep
from resvc.mlsa import inverse_filter, synthesis_filter
from resvc.signal import Waveform

RATE = 22050


def make_speech(seed, dur_s, f0hz=120.0, vibrato=0.03,
                formants=((500, 1500, 2500), (80, 120, 160)), rate=RATE):
    """Synthetic voiced utterance: glottal-ish pulse train through a few
    resonators, modest broadband floor, int16-scale amplitude.

    The floor goes in after the resonators; shaping it with them would
    leave a 60+ dB spectral range that no real recording has.
    """
    rng = np.random.default_rng(seed)
    n = int(dur_s * rate)
    t = np.arange(n) / rate
    f0 = f0hz * (1.0 + vibrato * np.sin(2 * np.pi * 0.7 * t + rng.uniform(0, 6)))
    phase = np.cumsum(f0) / rate
    pulses = np.zeros(n)
    fired = np.floor(phase)
    pulses[1:][fired[1:] > fired[:-1]] = 1.0
    y = pulses * np.sqrt(rate / f0hz)
    for fc, bw in zip(*formants):
        r = np.exp(-np.pi * bw / rate)
        y = sps.lfilter([1 - r], [1, -2 * r * np.cos(2 * np.pi * fc / rate), r * r], y)
    y = y / np.sqrt(np.mean(y ** 2))
    y = y + 0.02 * rng.standard_normal(n)
    return Waveform(y / np.sqrt(np.mean(y ** 2)) * 3000.0, rate)


def fundamental_hz(w, lo, hi):
    """Autocorrelation pitch of the middle half, parabolic refinement."""
    x = w.samples[len(w) // 4: 3 * len(w) // 4]
    x = x - x.mean()
    ac = np.correlate(x, x, "full")[len(x) - 1:]
    k0 = int(w.sample_rate / hi)
    k1 = int(w.sample_rate / lo)
    k = k0 + int(np.argmax(ac[k0:k1]))
    if 0 < k < len(ac) - 1:
        a, b, c = ac[k - 1], ac[k], ac[k + 1]
        den = a - 2 * b + c
        if den < 0:
            k = k + 0.5 * (a - c) / den
    return w.sample_rate / k


def snr_db(reference, estimate):
    n = min(len(reference), len(estimate))
    err = reference.samples[:n] - estimate.samples[:n]
    return 10 * np.log10(np.sum(reference.samples[:n] ** 2) / np.sum(err ** 2))


@pytest.fixture(scope="session")
def speech():
    return make_speech


@pytest.fixture(scope="session", autouse=True)
def warm_filters():
    # the first filter call pays the JIT compile; keep it out of timed tests
    w = make_speech(0, 0.3)
    mc = extract_mcep(w)
    synthesis_filter(inverse_filter(w, mc), mc)
