"""Slater determinants and fixed-(n_alpha, n_beta) determinant spaces.

Conventions used throughout the package:

* Spatial orbitals are indexed 0..K-1.  Spin orbitals use the interleaved
  index p = 2*P + s with s = 0 for alpha, 1 for beta; tensors in
  :mod:`ducctk.operators` are stored in this indexing.
* A determinant is the pair of occupation bitmasks (alpha, beta) over
  spatial orbitals, bit P set when spatial orbital P carries that spin.
* The canonical phase convention places all alpha creators before all
  beta creators, each group in increasing spatial-orbital order:
  |D> = a+_{A1} ... a+_{An_a} a+_{B1} ... a+_{Bn_b} |vac>,  A1 < A2 < ...
  Every matrix element, CI vector and oracle in the package refers to this
  ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InvalidReferenceError


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def occupied_list(mask: int) -> list[int]:
    """Indices of set bits, ascending."""
    out = []
    p = 0
    while mask:
        if mask & 1:
            out.append(p)
        mask >>= 1
        p += 1
    return out


@dataclass(frozen=True, order=True)
class Determinant:
    """Occupation bitmasks over spatial orbitals, one per spin channel."""

    alpha: int
    beta: int

    @property
    def n_alpha(self) -> int:
        return popcount(self.alpha)

    @property
    def n_beta(self) -> int:
        return popcount(self.beta)

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    def occupation_vector(self, n_spinorbitals: int) -> np.ndarray:
        """0/1 occupations over interleaved spin orbitals."""
        occ = np.zeros(n_spinorbitals)
        for p in occupied_list(self.alpha):
            occ[2 * p] = 1.0
        for p in occupied_list(self.beta):
            occ[2 * p + 1] = 1.0
        return occ

    def occupied_spinorbitals(self) -> list[int]:
        """Occupied interleaved spin-orbital indices, ascending."""
        alpha = [2 * p for p in occupied_list(self.alpha)]
        beta = [2 * p + 1 for p in occupied_list(self.beta)]
        return sorted(alpha + beta)

    def to_occupation_string(self, n_spatial: int) -> str:
        """Interleaved 0/1 string (a0 b0 a1 b1 ...), leftmost = spin orbital 0."""
        chars = []
        for p in range(n_spatial):
            chars.append("1" if (self.alpha >> p) & 1 else "0")
            chars.append("1" if (self.beta >> p) & 1 else "0")
        return "".join(chars)

    @classmethod
    def from_occupation_string(cls, bits: str) -> "Determinant":
        if len(bits) % 2 != 0 or set(bits) - {"0", "1"}:
            raise ValueError(f"bad occupation string {bits!r}")
        alpha = beta = 0
        for p in range(len(bits) // 2):
            if bits[2 * p] == "1":
                alpha |= 1 << p
            if bits[2 * p + 1] == "1":
                beta |= 1 << p
        return cls(alpha, beta)

    @classmethod
    def aufbau(cls, n_spatial: int, n_alpha: int, n_beta: int) -> "Determinant":
        """Occupy the lowest-index spatial orbitals in each spin channel."""
        if n_alpha > n_spatial or n_beta > n_spatial:
            raise InvalidReferenceError(
                f"cannot place ({n_alpha}, {n_beta}) electrons in {n_spatial} orbitals"
            )
        return cls((1 << n_alpha) - 1, (1 << n_beta) - 1)


def apply_spinorbital_ops(det: Determinant, n_spatial: int, ops):
    """Apply a creation/annihilation string to a determinant.

    ops is [(spin_orbital_index, is_creation), ...] left-to-right (the
    rightmost op acts first).  Returns (Determinant, phase) under the
    blocked phase convention, or None when the string annihilates the
    determinant.
    """
    mask = det.alpha | (det.beta << n_spatial)
    phase = 1
    for p, dag in reversed(ops):
        pos = (p >> 1) + (p & 1) * n_spatial
        occ = (mask >> pos) & 1
        if (dag and occ) or (not dag and not occ):
            return None
        if popcount(mask & ((1 << pos) - 1)) & 1:
            phase = -phase
        mask = mask | (1 << pos) if dag else mask & ~(1 << pos)
    full = (1 << n_spatial) - 1
    return Determinant(mask & full, mask >> n_spatial), float(phase)


def _strings(n_spatial: int, n_occ: int) -> np.ndarray:
    """All n_occ-bit masks over n_spatial orbitals, ascending as integers."""
    masks = [
        sum(1 << p for p in combo)
        for combo in combinations(range(n_spatial), n_occ)
    ]
    return np.array(sorted(masks), dtype=np.int64)


class DeterminantSpace:
    """All determinants with fixed (n_alpha, n_beta) in K spatial orbitals.

    Determinants are enumerated in lexicographic (alpha, beta) bitmask-pair
    order; the flat index is i_alpha * n_beta_strings + i_beta.
    """

    def __init__(self, n_spatial: int, n_alpha: int, n_beta: int):
        if n_alpha > n_spatial or n_beta > n_spatial or min(n_alpha, n_beta) < 0:
            raise InvalidReferenceError(
                f"({n_alpha}, {n_beta}) electrons do not fit in {n_spatial} orbitals"
            )
        self.n_spatial = n_spatial
        self.n_alpha = n_alpha
        self.n_beta = n_beta
        self.alpha_strings = _strings(n_spatial, n_alpha)
        self.beta_strings = _strings(n_spatial, n_beta)
        self._alpha_index = {int(m): i for i, m in enumerate(self.alpha_strings)}
        self._beta_index = {int(m): i for i, m in enumerate(self.beta_strings)}

    @property
    def n_spinorbitals(self) -> int:
        return 2 * self.n_spatial

    @property
    def n_alpha_strings(self) -> int:
        return len(self.alpha_strings)

    @property
    def n_beta_strings(self) -> int:
        return len(self.beta_strings)

    def __len__(self) -> int:
        return self.n_alpha_strings * self.n_beta_strings

    def index(self, det: Determinant) -> int:
        try:
            ia = self._alpha_index[det.alpha]
            ib = self._beta_index[det.beta]
        except KeyError:
            raise KeyError(f"{det} not in space {self!r}") from None
        return ia * self.n_beta_strings + ib

    def determinant(self, i: int) -> Determinant:
        ia, ib = divmod(i, self.n_beta_strings)
        return Determinant(int(self.alpha_strings[ia]), int(self.beta_strings[ib]))

    def determinants(self):
        for ia in range(self.n_alpha_strings):
            a = int(self.alpha_strings[ia])
            for ib in range(self.n_beta_strings):
                yield Determinant(a, int(self.beta_strings[ib]))

    def __contains__(self, det: Determinant) -> bool:
        return det.alpha in self._alpha_index and det.beta in self._beta_index

    def __repr__(self) -> str:
        return (
            f"DeterminantSpace(K={self.n_spatial}, "
            f"n_alpha={self.n_alpha}, n_beta={self.n_beta}, dim={len(self)})"
        )
