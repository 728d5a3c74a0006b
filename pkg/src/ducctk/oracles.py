"""Brute-force Fock-space matrix oracles.

Everything here works directly with second-quantized strings applied to
occupation bitmasks, term by term, with no Slater-Condon shortcuts and no
shared code with the production sigma build in :mod:`ducctk.ci`.  These
routines anchor the algebra tests: dense/sparse sector matrices, full
Fock-space matrices, and extraction of normal-ordered amplitudes of rank
<= 2 from an arbitrary matrix.

Bit layout: blocked, bit P = alpha spatial orbital P, bit K+P = beta
spatial orbital P, matching the canonical determinant phase convention of
:mod:`ducctk.determinants`.  Tensor indices arriving here are interleaved
spin orbitals and are mapped to blocked bit positions internally.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.sparse.linalg import LinearOperator, eigsh

from .determinants import Determinant, DeterminantSpace
from .errors import OracleTooLargeError
from .operators import (
    BARE_VACUUM,
    BareVacuum,
    NormalOrderedOperator,
    TensorOperator,
    antisymmetrize_two_body,
    occupation_vector,
    to_bare_vacuum,
)

DEFAULT_ORACLE_CAP = 20000
_FULL_FOCK_MAX_SPINORBITALS = 14


def _blocked_position(p: int, n_spatial: int) -> int:
    """Interleaved spin-orbital index -> blocked bit position."""
    return (p >> 1) + (p & 1) * n_spatial


def _bare_tensors(op: TensorOperator):
    """(scalar, h, v) in the bare-vacuum representation."""
    if isinstance(op.vacuum, BareVacuum):
        return op.scalar, op.one_body, op.two_body
    if isinstance(op, NormalOrderedOperator):
        bare = to_bare_vacuum(op)
        return bare.scalar, bare.one_body, bare.two_body
    # Generators carry no scalar; rebuild through the operator conversion.
    tmp = NormalOrderedOperator(
        op.n_spinorbitals, op.vacuum, 0.0, op.one_body, op.two_body
    )
    bare = to_bare_vacuum(tmp)
    return bare.scalar, bare.one_body, bare.two_body


def _term_arrays(h: np.ndarray, v: np.ndarray, n_spatial: int, tol: float = 1e-14):
    """Flatten nonzero tensor entries into blocked-position term lists.

    Two-body terms run over canonical p<q, r<s only; by antisymmetry this
    carries the full 1/4-convention operator.
    """
    n = h.shape[0]
    pos = np.array([_blocked_position(p, n_spatial) for p in range(n)], dtype=np.int64)
    pq = np.argwhere(np.abs(h) > tol)
    t1p = pos[pq[:, 0]] if len(pq) else np.zeros(0, dtype=np.int64)
    t1q = pos[pq[:, 1]] if len(pq) else np.zeros(0, dtype=np.int64)
    t1v = h[pq[:, 0], pq[:, 1]] if len(pq) else np.zeros(0)

    iu = np.array([(p, q) for p in range(n) for q in range(p + 1, n)], dtype=np.int64)
    if len(iu):
        vv = v[iu[:, 0][:, None], iu[:, 1][:, None], iu[:, 0][None, :], iu[:, 1][None, :]]
        # vv[c, a] = v[p_c, q_c, p_a, q_a] with p<q pairs; operator term is
        # v[p,q,r,s] a+_p a+_q a_s a_r summed over p<q, r<s.
        cc, aa = np.nonzero(np.abs(vv) > tol)
        t2p = pos[iu[cc, 0]]
        t2q = pos[iu[cc, 1]]
        t2r = pos[iu[aa, 0]]
        t2s = pos[iu[aa, 1]]
        t2v = vv[cc, aa]
    else:
        t2p = t2q = t2r = t2s = np.zeros(0, dtype=np.int64)
        t2v = np.zeros(0)
    return (t1p, t1q, t1v), (t2p, t2q, t2r, t2s, t2v)


@njit(cache=True)
def _parity_below(mask, pos):
    m = mask & ((np.int64(1) << pos) - 1)
    count = 0
    while m:
        m &= m - 1
        count += 1
    return 1 - 2 * (count & 1)


@njit(cache=True)
def _lookup(sorted_masks, value):
    i = np.searchsorted(sorted_masks, value)
    if i < len(sorted_masks) and sorted_masks[i] == value:
        return i
    return -1


@njit(cache=True)
def _sector_accumulate(
    alpha_strings,
    beta_strings,
    n_spatial,
    scalar,
    t1p,
    t1q,
    t1v,
    t2p,
    t2q,
    t2r,
    t2s,
    t2v,
    x,
    y,
    dense,
    build_dense,
):
    """y += M x (or dense += M when build_dense) for the sector matrix M.

    Terms are plain strings a+_p a_q and a+_p a+_q a_s a_r applied bit by
    bit; targets outside the sector are dropped (projection).
    """
    na = len(alpha_strings)
    nb = len(beta_strings)
    amask_all = (np.int64(1) << n_spatial) - 1
    for ia in range(na):
        abits = alpha_strings[ia]
        for ib in range(nb):
            mask = abits | (beta_strings[ib] << n_spatial)
            col = ia * nb + ib
            xval = 0.0 if build_dense else x[col]
            if build_dense:
                dense[col, col] += scalar
            else:
                y[col] += scalar * xval
            for t in range(len(t1v)):
                q = t1q[t]
                if not (mask >> q) & 1:
                    continue
                ph = _parity_below(mask, q)
                m1 = mask & ~(np.int64(1) << q)
                p = t1p[t]
                if (m1 >> p) & 1:
                    continue
                ph *= _parity_below(m1, p)
                m2 = m1 | (np.int64(1) << p)
                ja = _lookup(alpha_strings, m2 & amask_all)
                if ja < 0:
                    continue
                jb = _lookup(beta_strings, m2 >> n_spatial)
                if jb < 0:
                    continue
                row = ja * nb + jb
                if build_dense:
                    dense[row, col] += t1v[t] * ph
                else:
                    y[row] += t1v[t] * ph * xval
            for t in range(len(t2v)):
                # apply a_r, a_s, a+_q, a+_p right-to-left
                r = t2r[t]
                if not (mask >> r) & 1:
                    continue
                ph = _parity_below(mask, r)
                m1 = mask & ~(np.int64(1) << r)
                s = t2s[t]
                if not (m1 >> s) & 1:
                    continue
                ph *= _parity_below(m1, s)
                m2 = m1 & ~(np.int64(1) << s)
                q = t2q[t]
                if (m2 >> q) & 1:
                    continue
                ph *= _parity_below(m2, q)
                m3 = m2 | (np.int64(1) << q)
                p = t2p[t]
                if (m3 >> p) & 1:
                    continue
                ph *= _parity_below(m3, p)
                m4 = m3 | (np.int64(1) << p)
                ja = _lookup(alpha_strings, m4 & amask_all)
                if ja < 0:
                    continue
                jb = _lookup(beta_strings, m4 >> n_spatial)
                if jb < 0:
                    continue
                row = ja * nb + jb
                if build_dense:
                    dense[row, col] += t2v[t] * ph
                else:
                    y[row] += t2v[t] * ph * xval


def to_fock_matrix(
    op: TensorOperator, space: DeterminantSpace, cap: int = DEFAULT_ORACLE_CAP
) -> np.ndarray:
    """Exact dense matrix of op over the determinant space.

    Hermitian iff op is Hermitian.  Raises OracleTooLargeError above cap.
    """
    dim = len(space)
    if dim > cap:
        raise OracleTooLargeError(f"space dimension {dim} exceeds oracle cap {cap}")
    scalar, h, v = _bare_tensors(op)
    (t1p, t1q, t1v), (t2p, t2q, t2r, t2s, t2v) = _term_arrays(h, v, space.n_spatial)
    dense = np.zeros((dim, dim))
    dummy = np.zeros(1)
    _sector_accumulate(
        space.alpha_strings,
        space.beta_strings,
        space.n_spatial,
        scalar,
        t1p, t1q, t1v,
        t2p, t2q, t2r, t2s, t2v,
        dummy, dummy, dense, True,
    )
    return dense


def sector_linear_operator(op: TensorOperator, space: DeterminantSpace) -> LinearOperator:
    """Matrix-free LinearOperator for the sector matrix (for ARPACK checks)."""
    scalar, h, v = _bare_tensors(op)
    (t1p, t1q, t1v), (t2p, t2q, t2r, t2s, t2v) = _term_arrays(h, v, space.n_spatial)
    dim = len(space)
    dense = np.zeros((1, 1))

    def matvec(x):
        y = np.zeros(dim)
        _sector_accumulate(
            space.alpha_strings,
            space.beta_strings,
            space.n_spatial,
            scalar,
            t1p, t1q, t1v,
            t2p, t2q, t2r, t2s, t2v,
            np.ascontiguousarray(x, dtype=np.float64).ravel(), y, dense, False,
        )
        return y

    return LinearOperator((dim, dim), matvec=matvec, dtype=np.float64)


def lowest_eigenvalue_arpack(
    op: TensorOperator, space: DeterminantSpace, v0: np.ndarray | None = None
) -> float:
    """Ground-state eigenvalue through ARPACK on the brute-force matrix."""
    lo = sector_linear_operator(op, space)
    if v0 is None:
        v0 = np.zeros(len(space))
        v0[0] = 1.0
    vals = eigsh(lo, k=1, which="SA", v0=v0, return_eigenvectors=False, tol=1e-12)
    return float(vals[0])


# ---------------------------------------------------------------------------
# Full Fock space (all particle-number sectors) tools, used by the
# normal-ordered rank-extraction oracle.  Sizes are capped at
# 2**_FULL_FOCK_MAX_SPINORBITALS.
# ---------------------------------------------------------------------------


def _parity_table(dim: int) -> np.ndarray:
    par = np.zeros(dim, dtype=np.int8)
    for m in range(1, dim):
        par[m] = par[m >> 1] ^ (m & 1)
    return par


def full_fock_matrix(op: TensorOperator) -> np.ndarray:
    """Dense matrix over all 2**n occupation states (blocked bit layout)."""
    n = op.n_spinorbitals
    if n > _FULL_FOCK_MAX_SPINORBITALS:
        raise OracleTooLargeError(f"{n} spin orbitals too many for full Fock space")
    scalar, h, v = _bare_tensors(op)
    return full_fock_matrix_from_tensors(scalar, h, v)


def full_fock_matrix_from_tensors(
    scalar: float, h: np.ndarray, v: np.ndarray
) -> np.ndarray:
    n = h.shape[0]
    if n > _FULL_FOCK_MAX_SPINORBITALS:
        raise OracleTooLargeError(f"{n} spin orbitals too many for full Fock space")
    if n % 2 != 0:
        raise ValueError("spin-orbital count must be even")
    n_spatial = n // 2
    dim = 1 << n
    masks = np.arange(dim, dtype=np.int64)
    par = _parity_table(dim)
    M = scalar * np.eye(dim)

    def apply_ops(ops):
        """ops left-to-right; returns (targets, phases, alive) over all masks."""
        cur = masks.copy()
        phase = np.ones(dim, dtype=np.float64)
        alive = np.ones(dim, dtype=bool)
        for p, dag in reversed(ops):
            pos = _blocked_position(p, n_spatial)
            bit = np.int64(1) << pos
            occ = (cur & bit) != 0
            ok = ~occ if dag else occ
            alive &= ok
            below = par[cur & (bit - 1)]
            phase = np.where(below == 1, -phase, phase)
            cur = np.where(dag, cur | bit, cur & ~bit)
        return cur, phase, alive

    for p in range(n):
        for q in range(n):
            if abs(h[p, q]) < 1e-300:
                continue
            tgt, ph, alive = apply_ops([(p, True), (q, False)])
            idx = np.nonzero(alive)[0]
            M[tgt[idx], idx] += h[p, q] * ph[idx]
    for p in range(n):
        for q in range(p + 1, n):
            for r in range(n):
                for s in range(r + 1, n):
                    val = v[p, q, r, s]
                    if abs(val) < 1e-300:
                        continue
                    tgt, ph, alive = apply_ops(
                        [(p, True), (q, True), (s, False), (r, False)]
                    )
                    idx = np.nonzero(alive)[0]
                    M[tgt[idx], idx] += val * ph[idx]
    return M


def fock_index(det: Determinant, n_spatial: int) -> int:
    return det.alpha | (det.beta << n_spatial)


class _State:
    """A signed single-determinant Fock vector (blocked mask, phase)."""

    __slots__ = ("mask", "phase")

    def __init__(self, mask: int, phase: float = 1.0):
        self.mask = mask
        self.phase = phase

    def apply(self, pos: int, dag: bool):
        occ = (self.mask >> pos) & 1
        if (dag and occ) or (not dag and not occ):
            return None
        below = self.mask & ((1 << pos) - 1)
        if bin(below).count("1") & 1:
            self.phase = -self.phase
        self.mask = self.mask | (1 << pos) if dag else self.mask & ~(1 << pos)
        return self


def extract_normal_ordered(M: np.ndarray, n: int, gamma: np.ndarray):
    """Rank-<=2 normal-ordered amplitudes of a full-Fock matrix.

    gamma is the 0/1 reference occupation over interleaved spin orbitals
    (all zero extracts bare-vacuum amplitudes).  Any rank-3+ content of M
    is invisible to the quasiparticle sandwiches used here, so the result
    is the exact rank-truncated expansion.  Returns (scalar, h, v) with v
    in the antisymmetrized 1/4 convention.
    """
    n_spatial = n // 2
    dim = 1 << n
    if M.shape != (dim, dim):
        raise ValueError("matrix/orbital count mismatch")
    occupied = [p for p in range(n) if gamma[p] > 0.5]
    is_hole = [gamma[p] > 0.5 for p in range(n)]
    ref_mask = 0
    for p in occupied:
        ref_mask |= 1 << _blocked_position(p, n_spatial)

    def qp_state(labels):
        """b+_{x1} b+_{x2} ... |Phi> with x1<x2<... (rightmost first)."""
        st = _State(ref_mask)
        for x in sorted(labels, reverse=True):
            # b+_x is a+_x for particles, a_x for holes
            res = st.apply(_blocked_position(x, n_spatial), not is_hole[x])
            if res is None:
                raise ValueError(f"cannot build quasiparticle state {labels}")
        return st

    def slot_value(mat, ops):
        """Coefficient of the normal-ordered string `ops` in mat.

        ops is the plain a-string left-to-right [(index, dag), ...].
        """
        bdag = [(dag != is_hole[p]) for p, dag in ops]
        creators = [p for (p, _), d in zip(ops, bdag) if d]
        annihilators = [p for (p, _), d in zip(ops, bdag) if not d]
        if len(set(creators)) != len(creators) or len(set(annihilators)) != len(
            annihilators
        ):
            raise ValueError("repeated quasiparticle label in slot string")
        # stable partition creators-first = the normal-ordered b string;
        # track the permutation parity of the reorder.
        order = [i for i, d in enumerate(bdag) if d] + [
            i for i, d in enumerate(bdag) if not d
        ]
        sign = 1.0
        seen = []
        for i in order:
            sign *= (-1.0) ** sum(1 for j in seen if j > i)
            seen.append(i)
        bra = qp_state(creators)
        ket = qp_state(annihilators)
        # denominator: apply the b-ordered string to the ket state
        probe = _State(ket.mask, ket.phase)
        for i in reversed(order):
            p, dag = ops[i]
            if probe.apply(_blocked_position(p, n_spatial), dag) is None:
                raise ValueError("normal-ordered slot string annihilated its ket")
        if probe.mask != bra.mask:
            raise ValueError("slot string does not connect its sandwich states")
        den = sign * probe.phase * bra.phase
        val = bra.phase * ket.phase * mat[bra.mask, ket.mask]
        return val / den

    scalar = float(M[ref_mask, ref_mask])
    M1 = M - scalar * np.eye(dim)
    h = np.zeros((n, n))
    for p in range(n):
        for q in range(n):
            h[p, q] = slot_value(M1, [(p, True), (q, False)])
    # subtract the reconstructed rank-<=1 matrix: (s, h) at Fermi vacuum
    # converts exactly to bare tensors with v = 0.
    s_bare = scalar - float(np.einsum("ii,i->", h, gamma))
    M2 = M - full_fock_matrix_from_tensors(s_bare, h, np.zeros((n, n, n, n)))
    v = np.zeros((n, n, n, n))
    raw = np.zeros((n, n, n, n))
    for p in range(n):
        for q in range(p + 1, n):
            for r in range(n):
                for s in range(r + 1, n):
                    raw[p, q, r, s] = slot_value(
                        M2, [(p, True), (q, True), (s, False), (r, False)]
                    )
    # raw holds the coefficient of each canonical string once; rebuild the
    # full antisymmetric tensor (coefficients are defined per canonical
    # combination, so no 1/4 rescaling here).
    v = (
        raw
        - raw.transpose(1, 0, 2, 3)
        - raw.transpose(0, 1, 3, 2)
        + raw.transpose(1, 0, 3, 2)
    )
    return scalar, h, v


def extract_rank2_operator(
    M: np.ndarray, op_like: TensorOperator
) -> NormalOrderedOperator:
    """Extraction returning an operator tagged with op_like's vacuum."""
    n = op_like.n_spinorbitals
    gamma = occupation_vector(op_like.vacuum, n)
    s, h, v = extract_normal_ordered(M, n, gamma)
    return NormalOrderedOperator(n, op_like.vacuum, s, h, v)
