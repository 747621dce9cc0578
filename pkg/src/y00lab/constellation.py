"""Geometry of the 2M-ary phase constellation and its mapper.

The cipher transmits one data bit per qumode on one of M antipodal BPSK
bases.  Basis index k' selects the base phase (pi/M)*k'; the logical bit is
interleaved between adjacent bases (b = x XOR (k' mod 2)) so that within
each half-circle neighbouring points carry opposite bit values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Reduce an angle (scalar or array) to the canonical range [0, 2pi)."""
    w = np.mod(theta, TWO_PI)
    # float rounding can land tiny negatives exactly on 2pi
    return np.where(w >= TWO_PI, 0.0, w)[()]


def circular_diff(a, b):
    """Signed circular difference a - b, in (-pi, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b), TWO_PI)
    return np.where(d > np.pi, d - TWO_PI, d)[()]


@dataclass(frozen=True)
class ConstellationSpec:
    """M antipodal bases on the circle at mean photon number S.

    m = log2(M) is the number of running-key bits consumed per qumode.
    """

    M: int
    S: float
    m: int = field(init=False)

    def __post_init__(self):
        if self.M < 2 or (self.M & (self.M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 2, got {self.M}")
        if not self.S > 0:
            raise ValueError(f"S must be positive, got {self.S}")
        object.__setattr__(self, "m", self.M.bit_length() - 1)

    @property
    def spacing(self) -> float:
        """Angular distance pi/M between adjacent constellation points."""
        return np.pi / self.M


def check_basis_index(k, M):
    k = np.asarray(k)
    if np.any((k < 0) | (k >= M)):
        raise ValueError(f"basis index out of range [0, {M})")


def point_index(x, k, spec: ConstellationSpec):
    """Signal point index l = k' + M*b with interleaved bit b = x XOR (k' mod 2).

    Bijective between {0,1} x [0,M) and [0,2M); the phase of point l is
    (pi/M)*l.
    """
    x = np.asarray(x)
    k = np.asarray(k)
    check_basis_index(k, spec.M)
    b = x ^ (k & 1)
    return (k + spec.M * b)[()]


def signal_phase(x, k, spec: ConstellationSpec):
    """Transmitted phase for data bit x in basis k', in [0, 2pi)."""
    return wrap_angle(spec.spacing * point_index(x, k, spec))


def quantize_to_sector(theta, spec: ConstellationSpec):
    """Index of the constellation point circularly nearest to theta.

    Ties (theta exactly between two points) resolve toward the smaller
    index.
    """
    t = np.asarray(theta) / spec.spacing
    ell = np.ceil(t - 0.5).astype(np.int64)
    return np.mod(ell, 2 * spec.M)[()]


def basis_of_point(ell, M):
    """Basis index of signal point l (the inverse of point_index on k')."""
    return np.mod(ell, M)


def bit_of_point(ell, M):
    """Data bit carried by signal point l under the interleaved mapping."""
    ell = np.asarray(ell)
    b = ell // M
    return (b ^ (ell & 1))[()]


def gamma(spec: ConstellationSpec) -> float:
    """Random-cipher characteristic: number of basis spacings covered by
    one phase-noise standard deviation 1/sqrt(S)."""
    return spec.M / (np.pi * np.sqrt(spec.S))
