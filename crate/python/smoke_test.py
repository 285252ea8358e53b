"""Smoke test for the Python bindings.

Build and install the extension first, e.g.

    pip install --no-build-isolation ./crates/python

then run ``python python/smoke_test.py``.
"""

import math

import timbre


def main():
    rf = timbre.receptive_fields("full")
    assert rf["d2"] == 39, rf
    assert rf["encoder"] == 43, rf

    assert abs(timbre.lr_schedule(700) - 5e-4) < 1e-12
    assert abs(timbre.lr_schedule(350) - 2.5e-4) < 1e-12

    sr = 32000
    tone = [0.3 * math.sin(2 * math.pi * 440 * n / sr) for n in range(sr // 2)]
    mel = timbre.log_mel(tone, sr)
    assert len(mel) == len(tone) // 160 + 1, len(mel)
    assert len(mel[0]) == 100
    peak = max(range(100), key=lambda b: mel[len(mel) // 2][b])
    assert 0 < peak < 50, peak

    try:
        timbre.receptive_fields("huge")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print("timbre", timbre.__version__, "ok")


if __name__ == "__main__":
    main()
