"""Second-quantized operator algebra over spin-orbital amplitude tensors.

Storage conventions
-------------------
An operator is kept as (scalar, one_body, two_body) with

    O = scalar
      + sum_{pq}   one_body[p, q]       N[ a+_p a_q ]
      + 1/4 sum_{pqrs} two_body[p, q, r, s] N[ a+_p a+_q a_s a_r ]

where N[.] denotes normal ordering with respect to the operator's declared
vacuum and two_body is fully antisymmetric: v[p,q,r,s] = -v[q,p,r,s]
= -v[p,q,s,r] = v[q,p,s,r].  Note the index/operator correspondence: the
third tensor index labels the *last* annihilator a_r.  Indices are
interleaved spin orbitals (alpha0, beta0, alpha1, ...).

Hermitian conjugation acts as h -> h.T and v[p,q,r,s] -> v[r,s,p,q]
(real amplitudes throughout).

Products and commutators are evaluated with explicit Wick contraction
formulas for the rank pairs (1,1), (1,2), (2,1) and (2,2), written against
a general 0/1 occupation vector gamma (all zeros for the bare vacuum), and
truncated at normal-ordered particle-hole rank <= 2.  Every contraction
line below is verified against the brute-force Fock-space oracle in
:mod:`ducctk.oracles`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

import numpy as np

from .determinants import Determinant
from .errors import IncompatibleOperatorError, InvalidReferenceError

if TYPE_CHECKING:  # pragma: no cover
    from .ccsd import ClusterAmplitudes

HERMITICITY_TOL = 1e-12


class BareVacuum:
    """True vacuum; the single shared instance is `BARE_VACUUM`."""

    def __repr__(self):
        return "BareVacuum"

    def __eq__(self, other):
        return isinstance(other, BareVacuum)

    def __hash__(self):
        return hash("BareVacuum")


BARE_VACUUM = BareVacuum()


@dataclass(frozen=True)
class FermiVacuum:
    """Normal ordering relative to a reference determinant."""

    reference: Determinant


Vacuum = Union[BareVacuum, FermiVacuum]


def occupation_vector(vacuum: Vacuum, n_spinorbitals: int) -> np.ndarray:
    if isinstance(vacuum, BareVacuum):
        return np.zeros(n_spinorbitals)
    return vacuum.reference.occupation_vector(n_spinorbitals)


def antisymmetrize_two_body(raw: np.ndarray) -> np.ndarray:
    """Project raw[p,q,r,s] {a+_p a+_q a_s a_r} coefficients onto the
    antisymmetric 1/4-convention tensor (see module docstring)."""
    return (
        raw
        - raw.transpose(1, 0, 2, 3)
        - raw.transpose(0, 1, 3, 2)
        + raw.transpose(1, 0, 3, 2)
    )


@dataclass(frozen=True)
class NormalOrderedOperator:
    """Scalar + one-body + antisymmetrized two-body amplitudes.

    Treat instances as immutable; the arrays are never written after
    construction.
    """

    n_spinorbitals: int
    vacuum: Vacuum
    scalar: float
    one_body: np.ndarray
    two_body: np.ndarray

    @classmethod
    def zero(cls, n: int, vacuum: Vacuum = BARE_VACUUM) -> "NormalOrderedOperator":
        return cls(n, vacuum, 0.0, np.zeros((n, n)), np.zeros((n, n, n, n)))

    def replace(self, **kw) -> "NormalOrderedOperator":
        data = {
            "n_spinorbitals": self.n_spinorbitals,
            "vacuum": self.vacuum,
            "scalar": self.scalar,
            "one_body": self.one_body,
            "two_body": self.two_body,
        }
        data.update(kw)
        return NormalOrderedOperator(**data)

    def dagger(self) -> "NormalOrderedOperator":
        return self.replace(
            one_body=self.one_body.T.copy(),
            two_body=self.two_body.transpose(2, 3, 0, 1).copy(),
        )

    def hermiticity_violation(self) -> float:
        dh = np.max(np.abs(self.one_body - self.one_body.T), initial=0.0)
        dv = np.max(
            np.abs(self.two_body - self.two_body.transpose(2, 3, 0, 1)), initial=0.0
        )
        return max(dh, dv)

    def antisymmetry_violation(self) -> float:
        v = self.two_body
        return max(
            np.max(np.abs(v + v.transpose(1, 0, 2, 3)), initial=0.0),
            np.max(np.abs(v + v.transpose(0, 1, 3, 2)), initial=0.0),
        )

    def validate(self, tol: float = HERMITICITY_TOL) -> None:
        if self.hermiticity_violation() > tol:
            raise IncompatibleOperatorError(
                f"operator not Hermitian to {tol}: "
                f"violation {self.hermiticity_violation():.3e}"
            )
        if self.antisymmetry_violation() > tol:
            raise IncompatibleOperatorError(
                f"two-body tensor not antisymmetric to {tol}"
            )

    def symmetrized(self) -> "NormalOrderedOperator":
        """(O + O^dagger)/2, removing numerical asymmetry."""
        return self.replace(
            one_body=0.5 * (self.one_body + self.one_body.T),
            two_body=0.5 * (self.two_body + self.two_body.transpose(2, 3, 0, 1)),
        )

    def __add__(self, other: "NormalOrderedOperator") -> "NormalOrderedOperator":
        _check_compatible(self, other)
        return self.replace(
            scalar=self.scalar + other.scalar,
            one_body=self.one_body + other.one_body,
            two_body=self.two_body + other.two_body,
        )

    def __sub__(self, other: "NormalOrderedOperator") -> "NormalOrderedOperator":
        return self + (other * -1.0)

    def __mul__(self, c: float) -> "NormalOrderedOperator":
        return self.replace(
            scalar=c * self.scalar,
            one_body=c * self.one_body,
            two_body=c * self.two_body,
        )

    __rmul__ = __mul__


@dataclass(frozen=True)
class AntiHermitianGenerator:
    """Same tensor layout as NormalOrderedOperator, zero scalar,
    h = -h.T and v[p,q,r,s] = -v[r,s,p,q]."""

    n_spinorbitals: int
    vacuum: Vacuum
    one_body: np.ndarray
    two_body: np.ndarray

    scalar: float = 0.0

    @classmethod
    def zero(cls, n: int, vacuum: Vacuum = BARE_VACUUM) -> "AntiHermitianGenerator":
        return cls(n, vacuum, np.zeros((n, n)), np.zeros((n, n, n, n)))

    def anti_hermiticity_violation(self) -> float:
        dh = np.max(np.abs(self.one_body + self.one_body.T), initial=0.0)
        dv = np.max(
            np.abs(self.two_body + self.two_body.transpose(2, 3, 0, 1)), initial=0.0
        )
        return max(dh, dv)

    def validate(self, tol: float = HERMITICITY_TOL) -> None:
        if self.anti_hermiticity_violation() > tol:
            raise IncompatibleOperatorError(
                f"generator not anti-Hermitian to {tol}"
            )

    def scaled(self, c: float) -> "AntiHermitianGenerator":
        return AntiHermitianGenerator(
            self.n_spinorbitals, self.vacuum, c * self.one_body, c * self.two_body
        )


TensorOperator = Union[NormalOrderedOperator, AntiHermitianGenerator]


def _check_compatible(a: TensorOperator, b: TensorOperator) -> None:
    if a.n_spinorbitals != b.n_spinorbitals:
        raise IncompatibleOperatorError(
            f"spin-orbital counts differ: {a.n_spinorbitals} vs {b.n_spinorbitals}"
        )
    if a.vacuum != b.vacuum:
        raise IncompatibleOperatorError(f"vacua differ: {a.vacuum} vs {b.vacuum}")


def _check_reference(reference: Determinant, n_spinorbitals: int) -> None:
    if n_spinorbitals % 2 != 0:
        raise InvalidReferenceError("spin-orbital count must be even")
    n_spatial = n_spinorbitals // 2
    if reference.n_electrons > n_spinorbitals:
        raise InvalidReferenceError(
            f"reference holds {reference.n_electrons} electrons "
            f"in {n_spinorbitals} spin orbitals"
        )
    full = (1 << n_spatial) - 1
    if reference.alpha & ~full or reference.beta & ~full:
        raise InvalidReferenceError(
            f"reference occupies orbitals beyond {n_spatial} spatials"
        )


def normal_order(
    op: NormalOrderedOperator, reference: Determinant
) -> NormalOrderedOperator:
    """Re-express a bare-vacuum operator relative to a Fermi vacuum.

    The scalar becomes <ref|op|ref>, the one-body part the Fock operator
    built from op's tensors and the reference occupations; the two-body
    amplitudes are unchanged.
    """
    if not isinstance(op.vacuum, BareVacuum):
        raise IncompatibleOperatorError("normal_order expects a bare-vacuum operator")
    _check_reference(reference, op.n_spinorbitals)
    gamma = reference.occupation_vector(op.n_spinorbitals)
    fock = op.one_body + np.einsum("piqi,i->pq", op.two_body, gamma)
    scalar = (
        op.scalar
        + float(np.einsum("ii,i->", op.one_body, gamma))
        + 0.5 * float(np.einsum("ijij,i,j->", op.two_body, gamma, gamma))
    )
    return NormalOrderedOperator(
        op.n_spinorbitals, FermiVacuum(reference), scalar, fock, op.two_body.copy()
    )


def to_bare_vacuum(op: NormalOrderedOperator) -> NormalOrderedOperator:
    """Inverse of :func:`normal_order`; identity on bare-vacuum operators."""
    if isinstance(op.vacuum, BareVacuum):
        return op
    gamma = occupation_vector(op.vacuum, op.n_spinorbitals)
    h_bare = op.one_body - np.einsum("piqi,i->pq", op.two_body, gamma)
    scalar = (
        op.scalar
        - float(np.einsum("ii,i->", h_bare, gamma))
        - 0.5 * float(np.einsum("ijij,i,j->", op.two_body, gamma, gamma))
    )
    return NormalOrderedOperator(
        op.n_spinorbitals, BARE_VACUUM, scalar, h_bare, op.two_body.copy()
    )


def fock_part(op: NormalOrderedOperator) -> NormalOrderedOperator:
    """F_N: the one-body piece of a Fermi-vacuum operator (no scalar)."""
    return op.replace(scalar=0.0, two_body=np.zeros_like(op.two_body))


def fluctuation_part(op: NormalOrderedOperator) -> NormalOrderedOperator:
    """H_N: the full Fermi-vacuum operator minus its scalar."""
    return op.replace(scalar=0.0)


def _product_truncated(a: TensorOperator, b: TensorOperator, gamma: np.ndarray):
    """Wick expansion of the product A*B, keeping ranks 0..2.

    Returns (c0, c1, v2) where v2 is already antisymmetrized.  Each term
    below is one contraction class; eta = 1 - gamma are the particle
    occupations.  Signs/multiplicities follow from bringing contracted
    pairs adjacent; the Fock-space oracle pins them down in the tests.
    """
    eta = 1.0 - gamma
    a1, a2 = a.one_body, a.two_body
    b1, b2 = b.one_body, b.two_body

    c0 = a.scalar * b.scalar
    c1 = a.scalar * b1 + b.scalar * a1
    v2 = a.scalar * b2 + b.scalar * a2
    raw = np.zeros_like(v2)

    # one-body x one-body
    raw += np.einsum("pq,rs->prqs", a1, b1)
    c1 += np.einsum("pq,q,qs->ps", a1, eta, b1)
    c1 -= np.einsum("pq,p,rp->rq", a1, gamma, b1)
    c0 += float(np.einsum("pq,p,q,qp->", a1, gamma, eta, b1))

    # one-body x two-body
    raw += 0.5 * np.einsum("pq,q,qstu->pstu", a1, eta, b2)
    raw -= 0.5 * np.einsum("pq,p,rstp->rstq", a1, gamma, b2)
    c1 -= np.einsum("pq,p,q,qstp->st", a1, gamma, eta, b2)

    # two-body x one-body
    raw += 0.5 * np.einsum("pqrs,r,ru->pqus", a2, eta, b1)
    raw -= 0.5 * np.einsum("pqrs,q,tq->ptrs", a2, gamma, b1)
    c1 += np.einsum("pqrs,p,r,rp->qs", a2, gamma, eta, b1)

    # two-body x two-body (rank-3 and rank-4 normal products dropped)
    raw += 0.125 * np.einsum("pqrs,r,s,rsvw->pqvw", a2, eta, eta, b2)
    raw += 0.125 * np.einsum("pqrs,p,q,tupq->turs", a2, gamma, gamma, b2)
    raw += np.einsum("pqrs,p,r,ruvp->quvs", a2, gamma, eta, b2)
    c1 -= 0.5 * np.einsum("pqrs,p,r,s,rsvp->qv", a2, gamma, eta, eta, b2)
    c1 -= 0.5 * np.einsum("pqrs,p,q,r,rupq->us", a2, gamma, gamma, eta, b2)
    c0 += 0.25 * float(
        np.einsum("pqrs,p,q,r,s,rspq->", a2, gamma, gamma, eta, eta, b2)
    )

    v2 += antisymmetrize_two_body(raw)
    return c0, c1, v2


def operator_product_truncated(
    a: TensorOperator, b: TensorOperator, max_rank: int = 2
) -> NormalOrderedOperator:
    """Normal-ordered product A*B truncated at particle-hole rank max_rank."""
    _check_compatible(a, b)
    if max_rank not in (1, 2):
        raise ValueError(f"max_rank must be 1 or 2, got {max_rank}")
    gamma = occupation_vector(a.vacuum, a.n_spinorbitals)
    c0, c1, v2 = _product_truncated(a, b, gamma)
    if max_rank == 1:
        v2 = np.zeros_like(v2)
    return NormalOrderedOperator(a.n_spinorbitals, a.vacuum, c0, c1, v2)


def commutator_truncated(
    a: TensorOperator, b: TensorOperator, max_rank: int = 2
) -> NormalOrderedOperator:
    """[A, B] truncated at normal-ordered rank max_rank (1 or 2).

    The rank of a term is its particle-hole rank relative to the operands'
    shared vacuum; rank-3 normal products arising from two-body cross terms
    are dropped.
    """
    ab = operator_product_truncated(a, b, max_rank)
    ba = operator_product_truncated(b, a, max_rank)
    return ab - ba


def generator_from_cluster(t: "ClusterAmplitudes") -> AntiHermitianGenerator:
    """sigma = T1 + T2 - T1+ - T2+ as amplitude tensors."""
    n = t.n_spinorbitals
    h = np.zeros((n, n))
    v = np.zeros((n, n, n, n))
    virt = np.asarray(t.virtuals, dtype=int)
    occ = np.asarray(t.occupied, dtype=int)
    if virt.size and occ.size:
        h[np.ix_(virt, occ)] = t.t1
        h[np.ix_(occ, virt)] = -t.t1.T
        v[np.ix_(virt, virt, occ, occ)] = t.t2
        v[np.ix_(occ, occ, virt, virt)] = -t.t2.transpose(2, 3, 0, 1)
    return AntiHermitianGenerator(n, BARE_VACUUM, h, v)
