"""Run the ECG spectral screen and the PPG template screen on synthetic batteries.

Clean ECG-like records across 40-160 bpm, the same with beat-to-beat jitter,
white noise, and clean/noisy pulse waves for the PPG screen.

    python scripts/curation_battery.py --n 100
"""
import argparse
from collections import Counter

from pulsebench.curation import ecg_quality_screen, ppg_accept
from pulsebench.rng import derive_seed, make_rng
from pulsebench.signal_store import Waveform
from pulsebench.synthgen import SynthConfig, generate


def ecg_battery(n, duration_s, jitter):
    out = Counter()
    for i in range(n):
        r = make_rng(derive_seed(10, "clean", i))
        w, _ = generate(SynthConfig(duration_s=duration_s, beat_rate_bpm=float(r.uniform(40, 160)),
                                    hrv_jitter_frac=jitter, seed=i))
        out[ecg_quality_screen(w).verdict] += 1
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--duration", type=float, default=300.0, help="ECG record length in seconds")
    args = ap.parse_args()

    for jitter in (0.0, 0.05, 0.1):
        print(f"ECG clean, jitter {jitter:.2f}: {dict(ecg_battery(args.n, args.duration, jitter))}")
    noise = Counter()
    for i in range(args.n):
        r = make_rng(derive_seed(10, "noise", i))
        x = r.normal(0.0, float(r.uniform(0.5, 2.0)), int(args.duration * 100))
        noise[ecg_quality_screen(Waveform(x)).verdict] += 1
    print(f"ECG white noise: {dict(noise)}")

    for sd in (0.0, 0.05, 0.3):
        ppg = Counter()
        for i in range(args.n):
            w, _ = generate(SynthConfig(duration_s=30, morphology="raised_cosine", noise_sd=sd,
                                        beat_rate_bpm=60 + 40 * (i % 5) / 4, seed=i))
            ppg[ppg_accept(w)[0]] += 1
        print(f"PPG noise sd {sd:.2f}: {dict(ppg)}")


if __name__ == "__main__":
    main()
