"""
DC, TC and DI kernel matrices and their hyper-parameter box.

Indices k, l are 1-based as in the kernel formulas; storage is 0-based and the
shift is applied once, when the index grid is built.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import block_diag

from backend.exceptions import ParameterDomainError


class KernelFamily(str, Enum):
    DC = 'DC'
    TC = 'TC'
    DI = 'DI'

    @property
    def n_eta(self):
        return 3 if self is KernelFamily.DC else 2

    @property
    def parameter_names(self):
        return ('c', 'alpha', 'beta')[:self.n_eta]


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family, matrix size and hyper-parameters in natural scale."""
    family: KernelFamily
    n: int
    eta: tuple

    def __post_init__(self):
        object.__setattr__(self, 'family', KernelFamily(self.family))
        object.__setattr__(self, 'eta', tuple(float(value) for value in self.eta))

    @property
    def c(self):
        return self.eta[0]

    @property
    def alpha(self):
        return self.eta[1]

    @property
    def beta(self):
        return self.eta[2] if self.family is KernelFamily.DC else None

    def violations(self):
        """Return a list of (name, value, bound) for every violated constraint."""
        problems = []
        if int(self.n) != self.n or self.n < 1:
            problems.append(('n', self.n, 'n >= 1'))
        if len(self.eta) != self.family.n_eta:
            problems.append(('eta', self.eta, f'{self.family.n_eta} entries for {self.family.value}'))
            return problems
        if not np.all(np.isfinite(self.eta)):
            problems.append(('eta', self.eta, 'finite values'))
            return problems
        if self.c < 0:
            problems.append(('c', self.c, 'c >= 0'))
        if not 0 <= self.alpha < 1:
            problems.append(('alpha', self.alpha, '0 <= alpha < 1'))
        if self.family is KernelFamily.DC and abs(self.beta) > 1:
            problems.append(('beta', self.beta, '|beta| <= 1'))
        return problems

    def in_domain(self):
        return not self.violations()

    def validate(self):
        problems = self.violations()
        if problems:
            raise ParameterDomainError(*problems[0])
        return self


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    config: KernelConfig = None
    blocks: tuple = field(default=())

    SYMMETRY_RTOL = 1e-12
    PSD_RTOL = 1e-10

    @property
    def n(self):
        return self.values.shape[0]

    def is_symmetric(self):
        scale = max(np.max(np.abs(self.values)), np.finfo(float).tiny)
        return bool(np.max(np.abs(self.values - self.values.T)) <= self.SYMMETRY_RTOL * scale)

    def is_psd(self):
        eigenvalues = np.linalg.eigvalsh(0.5 * (self.values + self.values.T))
        largest = np.max(np.abs(eigenvalues)) if eigenvalues.size else 0.0
        return bool(np.all(eigenvalues >= -self.PSD_RTOL * largest))


def _index_grid(n):
    index = np.arange(1, n + 1, dtype=float)
    return np.meshgrid(index, index, indexing='ij')


def build_kernel(config):
    """
    Realise the kernel matrix of a validated config.

    DC: c * alpha^((k+l)/2) * beta^|k-l|
    TC: c * alpha^max(k,l)
    DI: c * alpha^k on the diagonal
    """
    config.validate()
    n = int(config.n)

    if config.family is KernelFamily.DI:
        values = np.diag(config.c * config.alpha ** np.arange(1, n + 1, dtype=float))
    else:
        k, l = _index_grid(n)
        if config.family is KernelFamily.TC:
            values = config.c * config.alpha ** np.maximum(k, l)
        else:
            values = config.c * config.alpha ** ((k + l) / 2) * config.beta ** np.abs(k - l)

    return KernelMatrix(values=values, config=config, blocks=(config,))


def block_diag_model_kernel(pb, pa):
    """Input-side block first, output-side block second, zeros elsewhere."""
    return KernelMatrix(
        values=block_diag(pb.values, pa.values),
        config=None,
        blocks=tuple(pb.blocks) + tuple(pa.blocks),
    )
