"""Seeded elliptical samples.

The random stream is numpy's Philox-4x64 counter-based generator keyed by the
seed. Raw 64-bit words are mapped to open-interval uniforms
``((w >> 11) + 0.5) / 2**53`` and then through inverse CDFs (normal quantile,
regularized incomplete gamma inverse), so a sample depends only on the seed,
the ``EllipticalSpec`` and these documented transforms.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidInput
from .spd import as_spd, sqrtm

GENERATOR_VERSION = 1
EXAMPLE1_SEED = 0x5CA77E12


@dataclass(frozen=True)
class EllipticalSpec:
    family: str           # "gaussian", "student_t" or "cauchy"
    sigma: np.ndarray
    n: int
    seed: int
    nu: float = None

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in ("gaussian", "student_t", "cauchy"):
            raise InvalidInput(f"unknown family {self.family!r}")
        if fam == "student_t" and (self.nu is None or not self.nu > 0):
            raise InvalidInput("student_t needs nu > 0")
        if int(self.n) != self.n or self.n < 0:
            raise InvalidInput("n must be a nonnegative integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInput("seed must be a 64-bit unsigned integer")

    @property
    def degrees_of_freedom(self):
        fam = self.family.lower()
        if fam == "cauchy":
            return 1.0
        return None if fam == "gaussian" else float(self.nu)


def uniform_stream(seed, size):
    """``size`` uniforms in (0, 1) from the Philox stream keyed by ``seed``."""
    bg = np.random.Philox(key=int(seed))
    words = bg.random_raw(size).astype(np.uint64)
    return ((words >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53


def spherical(n, p, seed, nu=None):
    """Spherical draws: standard normal rows, or normal/sqrt(chi2_nu/nu) rows when ``nu`` is set."""
    if nu is None:
        return special.ndtri(uniform_stream(seed, n * p)).reshape(n, p)
    U = uniform_stream(seed, n * (p + 1)).reshape(n, p + 1)
    Z = special.ndtri(U[:, :p])
    g = special.gammaincinv(nu / 2.0, U[:, p]) * (2.0 / nu)
    return Z / np.sqrt(g)[:, None]


def sample_elliptical(spec):
    """Rows ``x_i = Sigma^{1/2} z_i`` with ``z_i`` from the spherical family."""
    sigma = as_spd(spec.sigma, "Sigma")
    p = sigma.shape[0]
    Z = spherical(int(spec.n), p, spec.seed, spec.degrees_of_freedom)
    return Z @ sqrtm(sigma)


def example1_dataset():
    """100 draws from a bivariate t_3 with identity scatter under the pinned seed."""
    return sample_elliptical(EllipticalSpec("student_t", np.eye(2), 100, EXAMPLE1_SEED, nu=3.0))


def sample_matrix_normal(A, B, n, seed, nu=None):
    """Matrix-valued samples with row scatter ``A`` and column scatter ``B``.

    Returns an ``(n, p1, p2)`` array whose row-major vectorization has scatter
    ``kron(A, B)``. With ``nu`` set, each matrix is scaled by an independent
    ``1/sqrt(chi2_nu/nu)`` (matrix t).
    """
    A = as_spd(A, "A")
    B = as_spd(B, "B")
    p1, p2 = A.shape[0], B.shape[0]
    Z = spherical(n, p1 * p2, seed, nu).reshape(n, p1, p2)
    return sqrtm(A) @ Z @ sqrtm(B)
