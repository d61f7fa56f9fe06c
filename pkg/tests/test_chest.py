import numpy as np
import pytest
from scipy.signal import resample

from cogmint.chest import MeasurementSet, matching_pursuit, residual_energy
from cogmint.geometry import SPEED_OF_LIGHT, Point2, VirtualAnchor
from cogmint.signal import (
    ReceivedSignal,
    WaveformParams,
    make_pulse,
    path_amplitude,
    synthesize_received,
)

FS = 16e9
WF = WaveformParams(0.5e-9, 7.0e9)
TP = WF.pulse_duration


def centered_template(pulse, n):
    s = np.zeros(n, complex)
    half = (len(pulse.samples) - 1) // 2
    s[(np.arange(len(pulse.samples)) - half) % n] = pulse.samples
    return s


def build_signal(delays, amplitudes, pulse, n):
    """Bandlimited multipath signal from spectrum phase ramps."""
    freqs = np.fft.fftfreq(n, d=1.0 / FS)
    spec = np.fft.fft(centered_template(pulse, n))
    rf = np.zeros(n, complex)
    for tau, alpha in zip(delays, amplitudes):
        rf += alpha * spec * np.exp(-2j * np.pi * freqs * tau)
    return ReceivedSignal(np.fft.ifft(rf), FS, n / FS, WF)


def oracle_fine_grid_mp(r, pulse, n_paths, oversample=16):
    """Exhaustive greedy search on a 16x oversampled delay grid.

    No interpolation, no frequency-domain delay model: upsampled circular
    correlation, integer-lag subtraction.  Granularity 1/(16 fs).
    """
    n = len(r.samples)
    nf = n * oversample
    fsf = FS * oversample
    rf = resample(r.samples, nf)
    sf = resample(centered_template(pulse, n), nf)
    energy = np.sum(np.abs(sf) ** 2) / fsf
    resid = rf.copy()
    found = []
    for _ in range(n_paths):
        corr = np.fft.ifft(np.fft.fft(resid) * np.conj(np.fft.fft(sf))) / fsf
        g = int(np.argmax(np.abs(corr)))
        alpha = corr[g] / energy
        resid = resid - alpha * np.roll(sf, g)
        found.append((g / fsf, alpha))
    return found


def test_noiseless_single_path_against_oracle():
    va = VirtualAnchor(1, 1, Point2(3.0, 4.03), np.zeros((2, 2)), 0, ())
    p = Point2(0.0, 0.0)
    rng = np.random.default_rng(0)
    rx = synthesize_received(p, [va], WF, None, 0.0, 60e-9, rng, FS,
                             scenario_seed=9, ref_gain=1.0)
    pulse = make_pulse(WF, FS)
    tau_true, alpha_true = path_amplitude(p, va, WF, 9, 1.0)

    (est,) = matching_pursuit(rx, pulse, 1)
    assert abs(est.delay_hat - tau_true) < 0.02 * TP
    assert abs(est.amplitude_hat - alpha_true) < 0.02 * abs(alpha_true)
    assert est.range_hat == pytest.approx(SPEED_OF_LIGHT * est.delay_hat)

    ((tau_o, alpha_o),) = oracle_fine_grid_mp(rx, pulse, 1)
    assert abs(est.delay_hat - tau_o) < 0.02 * TP
    assert abs(est.amplitude_hat - alpha_o) < 0.03 * abs(alpha_o)


def test_two_paths_recovered_in_noise():
    pulse = make_pulse(WF, FS)
    n = 960
    gap = 3.0 * TP
    hits = 0
    trials = 50
    rng = np.random.default_rng(123)
    for _ in range(trials):
        tau1 = 10e-9 + rng.uniform(0, 1) / FS
        tau2 = tau1 + gap + rng.uniform(0, 1) / FS
        phases = np.exp(2j * np.pi * rng.uniform(size=2))
        rx = build_signal([tau1, tau2], phases, pulse, n)
        snr = 1000.0  # 30 dB
        sigma = np.sqrt(FS / (2 * snr))
        noisy = ReceivedSignal(
            rx.samples + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)),
            FS, n / FS, WF,
        )
        ests = matching_pursuit(noisy, pulse, 2)
        got = sorted(e.delay_hat for e in ests)
        if (abs(got[0] - tau1) < 0.05 * TP) and (abs(got[1] - tau2) < 0.05 * TP):
            hits += 1
    assert hits >= 0.95 * trials


def test_zero_signal_gives_zero_amplitudes_smallest_delays():
    pulse = make_pulse(WF, FS)
    rx = ReceivedSignal(np.zeros(512, complex), FS, 512 / FS, WF)
    ests = matching_pursuit(rx, pulse, 2)
    assert all(e.amplitude_hat == 0 for e in ests)
    assert [round(e.delay_hat * FS) for e in ests] == [0, 1]


def test_too_many_paths_rejected():
    pulse = make_pulse(WF, FS)
    rx = ReceivedSignal(np.zeros(16, complex), FS, 16 / FS, WF)
    with pytest.raises(ValueError):
        matching_pursuit(rx, pulse, 17)


def test_residual_energy_empty_and_exact():
    pulse = make_pulse(WF, FS)
    rx = build_signal([12e-9], [1.5 - 0.5j], pulse, 960)
    total = np.sum(np.abs(rx.samples) ** 2) / FS
    assert residual_energy(rx, [], pulse) == pytest.approx(total, rel=1e-12)
    ests = matching_pursuit(rx, pulse, 1)
    assert residual_energy(rx, ests, pulse) <= 1e-6 * total


def test_residual_monotone_in_iterations():
    pulse = make_pulse(WF, FS)
    rng = np.random.default_rng(8)
    n = 768
    samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    rx = ReceivedSignal(samples, FS, n / FS, WF)
    ests = matching_pursuit(rx, pulse, 10)
    energies = [residual_energy(rx, ests[:m], pulse) for m in range(11)]
    for e_prev, e_next in zip(energies, energies[1:]):
        assert e_next <= e_prev * (1 + 1e-12)


def test_scale_equivariance():
    pulse = make_pulse(WF, FS)
    rx = build_signal([9e-9, 14e-9], [1.0, 0.6j], pulse, 960)
    k = 2.0 - 3.0j
    scaled = ReceivedSignal(rx.samples * k, FS, rx.duration, WF)
    a = matching_pursuit(rx, pulse, 2)
    b = matching_pursuit(scaled, pulse, 2)
    for ea, eb in zip(a, b):
        assert eb.delay_hat == ea.delay_hat
        assert eb.amplitude_hat == pytest.approx(k * ea.amplitude_hat, rel=1e-9)


def test_shift_equivariance():
    pulse = make_pulse(WF, FS)
    rx = build_signal([9e-9, 14e-9], [1.0, 0.6j], pulse, 960)
    shift = 37
    rolled = ReceivedSignal(np.roll(rx.samples, shift), FS, rx.duration, WF)
    a = matching_pursuit(rx, pulse, 2)
    b = matching_pursuit(rolled, pulse, 2)
    for ea, eb in zip(a, b):
        assert eb.delay_hat == pytest.approx(ea.delay_hat + shift / FS, abs=1e-15)


def test_measurement_set_rejects_coincident_delays():
    pulse = make_pulse(WF, FS)
    rx = build_signal([9e-9], [1.0], pulse, 512)
    ests = matching_pursuit(rx, pulse, 1)
    MeasurementSet({1: ests}, 0, FS)  # fine
    with pytest.raises(ValueError):
        MeasurementSet({1: ests + ests}, 0, FS)
