"""
Plain-text plant files.

    # krilc plant
    n_a 2
    n_b 2
    horizon 3
    a
    <n_a coefficients for t = 1>
    ...
    b
    <n_b coefficients for t = 1>
    ...

Coefficients are written with 17 significant digits so a reload is bit-exact.
"""
from pathlib import Path

import numpy as np

from backend.exceptions import ConfigurationError
from .systems import LtvArxModel

HEADER = '# krilc plant'


def _format_row(row):
    return ' '.join(format(float(value), '.17g') for value in row)


def plant_to_text(model):
    lines = [
        HEADER,
        f'n_a {model.n_a}',
        f'n_b {model.n_b}',
        f'horizon {model.horizon}',
        'a',
        *(_format_row(row) for row in model.a),
        'b',
        *(_format_row(row) for row in model.b),
    ]
    return '\n'.join(lines) + '\n'


def plant_from_text(text):
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith('#')]
    try:
        header = dict(line.split() for line in lines[:3])
        n_a, n_b, horizon = int(header['n_a']), int(header['n_b']), int(header['horizon'])
        if lines[3] != 'a' or lines[4 + horizon] != 'b':
            raise ValueError("missing 'a' or 'b' section marker")
        a = np.array([[float(value) for value in line.split()] for line in lines[4:4 + horizon]])
        b = np.array([[float(value) for value in line.split()] for line in lines[5 + horizon:5 + 2 * horizon]])
    except (KeyError, IndexError, ValueError) as e:
        raise ConfigurationError(f"Malformed plant file: {e}")

    if a.shape != (horizon, n_a) or b.shape != (horizon, n_b):
        raise ConfigurationError(
            f"Plant file declares {horizon}x{n_a} / {horizon}x{n_b} coefficients, "
            f"found {a.shape} / {b.shape}"
        )
    return LtvArxModel(a=a, b=b)


def dump_plant(model, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(plant_to_text(model))
    return path


def load_plant(path):
    try:
        return plant_from_text(Path(path).read_text())
    except OSError as e:
        raise ConfigurationError(f"Cannot read plant file {path}: {e}")
