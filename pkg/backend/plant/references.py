import numpy as np


def reference_two_tone(t):
    """Two-tone reference sin(2 pi t / 50) + sin(2 pi t / 5)."""
    t = np.asarray(t, dtype=float)
    return np.sin(2 * np.pi * t / 50) + np.sin(2 * np.pi * t / 5)


def reference_ramp(t):
    """Smooth ramp 1e-6 / 8 * t^3 * (7 - 0.03 t); equals 1 at t = 200."""
    t = np.asarray(t, dtype=float)
    return 1e-6 / 8 * t ** 3 * (7 - 0.03 * t)


def reference_zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


REFERENCES = {
    'two-tone': reference_two_tone,
    'ramp': reference_ramp,
    'zero': reference_zero,
}


def reference_trajectory(name, horizon):
    """y_d(1..horizon) for a named reference."""
    try:
        function = REFERENCES[name]
    except KeyError:
        raise ValueError(f"unknown reference '{name}', expected one of {sorted(REFERENCES)}")
    return function(np.arange(1, horizon + 1))
