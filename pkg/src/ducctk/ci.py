"""Determinant CI engine: sigma builds, exact diagonalization, diagnostics.

The sigma build factorizes over alpha/beta strings.  Same-spin one- and
two-body contributions are folded into dense string-space matrices (H_a,
H_b); the opposite-spin two-body part is applied through E^alpha x E^beta
intermediates gathered per spatial-orbital pair.  Only Sz-conserving
tensor blocks act within a fixed-(n_alpha, n_beta) space; other blocks
have identically vanishing matrix elements there, so ignoring them equals
projection and keeps agreement with the dense oracle exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .determinants import Determinant, DeterminantSpace, occupied_list
from .errors import ContractError, ConvergenceError, DegenerateVectorError
from .operators import BareVacuum, NormalOrderedOperator, TensorOperator, to_bare_vacuum


@dataclass
class CIVector:
    """Coefficient vector over a DeterminantSpace."""

    space: DeterminantSpace
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64).ravel()
        if self.data.size != len(self.space):
            raise ContractError(
                f"vector length {self.data.size} != space dimension {len(self.space)}"
            )

    @classmethod
    def zero(cls, space: DeterminantSpace) -> "CIVector":
        return cls(space, np.zeros(len(space)))

    @classmethod
    def from_determinant(cls, space: DeterminantSpace, det: Determinant) -> "CIVector":
        v = np.zeros(len(space))
        v[space.index(det)] = 1.0
        return cls(space, v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def normalized(self) -> "CIVector":
        n = self.norm()
        if n < 1e-8:
            raise DegenerateVectorError(f"vector norm {n:.3e} too small")
        return CIVector(self.space, self.data / n)

    def dot(self, other: "CIVector") -> float:
        return float(self.data @ other.data)

    def as_matrix(self) -> np.ndarray:
        return self.data.reshape(
            self.space.n_alpha_strings, self.space.n_beta_strings
        )

    def copy(self) -> "CIVector":
        return CIVector(self.space, self.data.copy())


# ---------------------------------------------------------------------------
# string link tables
# ---------------------------------------------------------------------------


def _parity_below(mask: int, pos: int) -> int:
    return -1 if bin(mask & ((1 << pos) - 1)).count("1") & 1 else 1


def _single_links(strings, index, n_spatial):
    """Links I <- E_PQ J = a+_P a_Q with phases, including P == Q."""
    I, J, P, Q, PH = [], [], [], [], []
    for j, mask in enumerate(strings):
        mask = int(mask)
        for q in occupied_list(mask):
            ph1 = _parity_below(mask, q)
            m1 = mask & ~(1 << q)
            for p in range(n_spatial):
                if (m1 >> p) & 1:
                    continue
                ph = ph1 * _parity_below(m1, p)
                I.append(index[m1 | (1 << p)])
                J.append(j)
                P.append(p)
                Q.append(q)
                PH.append(ph)
    return (
        np.array(I, dtype=np.int32),
        np.array(J, dtype=np.int32),
        np.array(P, dtype=np.int16),
        np.array(Q, dtype=np.int16),
        np.array(PH, dtype=np.float64),
    )


def _double_links(strings, index, n_spatial):
    """Links I <- a+_P a+_Q a_S a_R J with P>Q, R>S, with phases."""
    I, J, PQRS, CP, AP, PH = [], [], [], [], [], []
    pair_index = {}
    pairs = []
    for p in range(n_spatial):
        for q in range(p):
            pair_index[(p, q)] = len(pairs)
            pairs.append((p, q))
    for j, mask in enumerate(strings):
        mask = int(mask)
        occ = occupied_list(mask)
        for ri, r in enumerate(occ):
            for s in occ[:ri]:  # r > s
                ph1 = _parity_below(mask, r)
                m1 = mask & ~(1 << r)
                ph1 *= _parity_below(m1, s)
                m2 = m1 & ~(1 << s)
                empt = [p for p in range(n_spatial) if not (m2 >> p) & 1]
                for pi, p in enumerate(empt):
                    for q in empt[:pi]:  # p > q
                        ph = ph1 * _parity_below(m2, q)
                        m3 = m2 | (1 << q)
                        ph *= _parity_below(m3, p)
                        I.append(index[m3 | (1 << p)])
                        J.append(j)
                        PQRS.append(((p * n_spatial + q) * n_spatial + r) * n_spatial + s)
                        CP.append(pair_index[(p, q)])
                        AP.append(pair_index[(r, s)])
                        PH.append(ph)
    return (
        np.array(I, dtype=np.int32),
        np.array(J, dtype=np.int32),
        np.array(PQRS, dtype=np.int64),
        np.array(CP, dtype=np.int32),
        np.array(AP, dtype=np.int32),
        np.array(PH, dtype=np.float64),
        pairs,
    )


def _group_singles(links, n_spatial):
    """Sort single links by (P, Q) and return group slices."""
    sI, sJ, sP, sQ, sPH = links
    key = sP.astype(np.int64) * n_spatial + sQ
    order = np.argsort(key, kind="stable")
    key = key[order]
    bounds = np.searchsorted(key, np.arange(n_spatial * n_spatial + 1))
    return sI[order], sJ[order], sPH[order], bounds


class SpaceTables:
    """Precomputed string link tables for one DeterminantSpace."""

    def __init__(self, space: DeterminantSpace):
        self.space = space
        K = space.n_spatial
        self.K = K
        a_index = {int(m): i for i, m in enumerate(space.alpha_strings)}
        b_index = {int(m): i for i, m in enumerate(space.beta_strings)}
        self.a_singles = _single_links(space.alpha_strings, a_index, K)
        self.b_singles = _single_links(space.beta_strings, b_index, K)
        self.a_doubles = _double_links(space.alpha_strings, a_index, K)
        self.b_doubles = _double_links(space.beta_strings, b_index, K)
        self.pairs = self.a_doubles[6]
        self.a_grouped = _group_singles(self.a_singles, K)
        self.b_grouped = _group_singles(self.b_singles, K)
        # occupancy matrices for diagonals
        self.a_occ = np.array(
            [[(int(m) >> p) & 1 for p in range(K)] for m in space.alpha_strings],
            dtype=np.float64,
        )
        self.b_occ = np.array(
            [[(int(m) >> p) & 1 for p in range(K)] for m in space.beta_strings],
            dtype=np.float64,
        )


_TABLE_CACHE: dict = {}


def tables_for(space: DeterminantSpace) -> SpaceTables:
    key = id(space)
    tab = _TABLE_CACHE.get(key)
    if tab is None or tab.space is not space:
        tab = SpaceTables(space)
        _TABLE_CACHE[key] = tab
    return tab


def _string_hamiltonian(singles, doubles, h_spin, v_spin, n_strings):
    """Dense string-space matrix folding one-body + same-spin two-body."""
    H = np.zeros((n_strings, n_strings))
    sI, sJ, sP, sQ, sPH = singles
    if len(sI):
        np.add.at(H, (sI, sJ), h_spin[sP, sQ] * sPH)
    dI, dJ, dPQRS, _, _, dPH, _ = doubles
    if len(dI):
        np.add.at(H, (dI, dJ), v_spin.ravel()[dPQRS] * dPH)
    return H


class CompiledOperator:
    """Sz-conserving blocks of a bare-vacuum operator bound to a space."""

    def __init__(self, op: TensorOperator, space: DeterminantSpace):
        if not isinstance(op.vacuum, BareVacuum):
            op = to_bare_vacuum(op)  # type: ignore[arg-type]
        if op.n_spinorbitals != space.n_spinorbitals:
            raise ContractError(
                f"operator over {op.n_spinorbitals} spin orbitals applied to "
                f"space with {space.n_spinorbitals}"
            )
        self.space = space
        self.tables = tables_for(space)
        self.scalar = float(op.scalar)
        h, v = op.one_body, op.two_body
        haa = np.ascontiguousarray(h[0::2, 0::2])
        hbb = np.ascontiguousarray(h[1::2, 1::2])
        vaaaa = np.ascontiguousarray(v[0::2, 0::2, 0::2, 0::2])
        vbbbb = np.ascontiguousarray(v[1::2, 1::2, 1::2, 1::2])
        vabab = v[0::2, 1::2, 0::2, 1::2]
        t = self.tables
        self.Ha = _string_hamiltonian(
            t.a_singles, t.a_doubles, haa, vaaaa, space.n_alpha_strings
        )
        self.Hb = _string_hamiltonian(
            t.b_singles, t.b_doubles, hbb, vbbbb, space.n_beta_strings
        )
        K = t.K
        # [P,R,Q,S] pair-major layout for the E^a x E^b contraction
        self.vab = np.ascontiguousarray(
            vabab.transpose(0, 2, 1, 3).reshape(K * K, K * K)
        )
        self.has_ab = bool(np.any(self.vab))
        self.haa, self.hbb = haa, hbb
        self.vaaaa, self.vbbbb, self.vabab = vaaaa, vbbbb, vabab

    def _beta_gather(self, C: np.ndarray) -> np.ndarray:
        """D[qs, ia, ib] = (E^b_QS C) for every (Q, S)."""
        t = self.tables
        na, nb = C.shape
        gI, gJ, gPH, bounds = t.b_grouped
        D = np.zeros((t.K * t.K, na, nb))
        for g in range(t.K * t.K):
            lo, hi = bounds[g], bounds[g + 1]
            if lo == hi:
                continue
            D[g][:, gI[lo:hi]] = C[:, gJ[lo:hi]] * gPH[lo:hi]
        return D

    def matvec(self, x: np.ndarray) -> np.ndarray:
        space = self.space
        na, nb = space.n_alpha_strings, space.n_beta_strings
        C = x.reshape(na, nb)
        sigma = self.scalar * C
        sigma = sigma + self.Ha @ C
        sigma += C @ self.Hb.T
        if self.has_ab:
            t = self.tables
            D = self._beta_gather(C)
            F = (self.vab @ D.reshape(t.K * t.K, -1)).reshape(t.K * t.K, na, nb)
            gI, gJ, gPH, bounds = t.a_grouped
            for g in range(t.K * t.K):
                lo, hi = bounds[g], bounds[g + 1]
                if lo == hi:
                    continue
                sigma[gI[lo:hi], :] += gPH[lo:hi, None] * F[g][gJ[lo:hi], :]
        return sigma.ravel()

    def diagonal(self) -> np.ndarray:
        t = self.tables
        occ_a, occ_b = t.a_occ, t.b_occ
        ea = occ_a @ np.diag(self.haa)
        eb = occ_b @ np.diag(self.hbb)
        # same-spin pair terms: 1/2 sum_{P != Q occ} v[P,Q,P,Q]
        waa = np.einsum("pqpq->pq", self.vaaaa)
        wbb = np.einsum("pqpq->pq", self.vbbbb)
        ea = ea + 0.5 * np.einsum("ip,pq,iq->i", occ_a, waa, occ_a)
        eb = eb + 0.5 * np.einsum("ip,pq,iq->i", occ_b, wbb, occ_b)
        wab = np.einsum("pqpq->pq", self.vabab)
        cross = occ_a @ wab @ occ_b.T
        return (self.scalar + ea[:, None] + eb[None, :] + cross).ravel()

    def transition_densities(self, bra: np.ndarray, ket: np.ndarray):
        """Same-spin G1/pairwise G2 and opposite-spin G2 between two states.

        Returns (G1a, G1b, G2aa, G2bb, G2ab) with
          G1s[P,Q]        = <bra| E^s_PQ |ket>
          G2ss[cp, ap]    = <bra| a+_P a+_Q a_S a_R |ket>   (canonical pairs)
          G2ab[P,R,Q,S]   = <bra| E^a_PR E^b_QS |ket>
        """
        t = self.tables
        K = t.K
        na, nb = self.space.n_alpha_strings, self.space.n_beta_strings
        L = bra.reshape(na, nb)
        R = ket.reshape(na, nb)

        sI, sJ, sP, sQ, sPH = t.a_singles
        G1a = np.zeros((K, K))
        if len(sI):
            dots = np.einsum("ij,ij->i", L[sI, :], R[sJ, :])
            np.add.at(G1a, (sP.astype(int), sQ.astype(int)), sPH * dots)
        sI, sJ, sP, sQ, sPH = t.b_singles
        G1b = np.zeros((K, K))
        if len(sI):
            dots = np.einsum("ji,ji->i", L[:, sI], R[:, sJ])
            np.add.at(G1b, (sP.astype(int), sQ.astype(int)), sPH * dots)

        n_pairs = len(t.pairs)
        dI, dJ, _, dCP, dAP, dPH, _ = t.a_doubles
        G2aa = np.zeros((n_pairs, n_pairs))
        if len(dI):
            dots = np.einsum("ij,ij->i", L[dI, :], R[dJ, :])
            np.add.at(G2aa, (dCP, dAP), dPH * dots)
        dI, dJ, _, dCP, dAP, dPH, _ = t.b_doubles
        G2bb = np.zeros((n_pairs, n_pairs))
        if len(dI):
            dots = np.einsum("ji,ji->i", L[:, dI], R[:, dJ])
            np.add.at(G2bb, (dCP, dAP), dPH * dots)

        # G2ab = (E^a' L) . (E^b R), both gathered per orbital pair
        Rb = self._beta_gather(R)
        gI, gJ, gPH, bounds = t.a_grouped
        U = np.zeros((K * K, na, nb))
        for g in range(K * K):
            lo, hi = bounds[g], bounds[g + 1]
            if lo == hi:
                continue
            U[g][gJ[lo:hi], :] = gPH[lo:hi, None] * L[gI[lo:hi], :]
        G2ab = (U.reshape(K * K, -1) @ Rb.reshape(K * K, -1).T).reshape(K, K, K, K)
        return G1a, G1b, G2aa, G2bb, G2ab


def apply_operator(op: TensorOperator, v: CIVector) -> CIVector:
    """H |v> without materializing the matrix; linear in v."""
    comp = CompiledOperator(op, v.space)
    return CIVector(v.space, comp.matvec(v.data))


def expectation_value(op: TensorOperator, v: CIVector) -> float:
    """Rayleigh quotient <v|op|v> / <v|v>."""
    comp = CompiledOperator(op, v.space)
    nrm2 = float(v.data @ v.data)
    if nrm2 < 1e-16:
        raise DegenerateVectorError("zero-norm vector")
    return float(v.data @ comp.matvec(v.data)) / nrm2


@dataclass
class GroundStateConfig:
    dense_cap: int = 4000
    residual_tol: float = 1e-9
    max_iterations: int = 400
    max_subspace: int = 24
    restart_size: int = 8
    hermiticity_tol: float = 1e-10


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def ground_state(
    op: NormalOrderedOperator,
    space: DeterminantSpace,
    config: GroundStateConfig | None = None,
    guess: CIVector | None = None,
):
    """Lowest eigenpair; dense below dense_cap, Davidson above.

    The returned vector is normalized with its largest-magnitude
    coefficient positive.
    """
    config = config or GroundStateConfig()
    bare = to_bare_vacuum(op)
    if bare.hermiticity_violation() > config.hermiticity_tol:
        raise ContractError(
            f"ground_state requires a Hermitian operator to {config.hermiticity_tol}"
        )
    dim = len(space)
    if dim <= config.dense_cap:
        from . import oracles

        M = oracles.to_fock_matrix(bare, space, cap=config.dense_cap)
        vals, vecs = scipy.linalg.eigh(M)
        vec = _fix_sign(vecs[:, 0])
        return float(vals[0]), CIVector(space, vec)
    energy, vec = _davidson(CompiledOperator(bare, space), config, guess)
    return energy, CIVector(space, _fix_sign(vec))


def _davidson(comp: CompiledOperator, config: GroundStateConfig, guess=None):
    dim = len(comp.space)
    diag = comp.diagonal()
    if guess is not None:
        v0 = guess.data / np.linalg.norm(guess.data)
    else:
        v0 = np.zeros(dim)
        v0[int(np.argmin(diag))] = 1.0
    V = [v0]
    AV = [comp.matvec(v0)]
    residual_history = []
    theta, x = None, None
    for _ in range(config.max_iterations):
        m = len(V)
        Vm = np.stack(V, axis=1)
        AVm = np.stack(AV, axis=1)
        Hm = Vm.T @ AVm
        Hm = 0.5 * (Hm + Hm.T)
        vals, vecs = scipy.linalg.eigh(Hm)
        theta = float(vals[0])
        y = vecs[:, 0]
        x = Vm @ y
        Ax = AVm @ y
        resid = Ax - theta * x
        rnorm = float(np.linalg.norm(resid))
        residual_history.append(rnorm)
        if rnorm < config.residual_tol:
            return theta, x
        if m >= config.max_subspace:
            keep = vecs[:, : config.restart_size]
            newV = Vm @ keep
            newAV = AVm @ keep
            V = [np.ascontiguousarray(newV[:, i]) for i in range(newV.shape[1])]
            AV = [np.ascontiguousarray(newAV[:, i]) for i in range(newAV.shape[1])]
            Vm = np.stack(V, axis=1)
        denom = diag - theta
        denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom), denom)
        t = resid / denom
        # orthogonalize twice against the subspace
        for _ in range(2):
            t = t - Vm @ (Vm.T @ t)
        tnorm = np.linalg.norm(t)
        if tnorm < 1e-12:
            t = np.random.default_rng(len(residual_history)).normal(size=dim)
            for _ in range(2):
                t = t - Vm @ (Vm.T @ t)
            tnorm = np.linalg.norm(t)
        t /= tnorm
        V.append(t)
        AV.append(comp.matvec(t))
        if len(V) > config.max_subspace:  # safety, should not trigger
            V = V[-config.max_subspace :]
            AV = AV[-config.max_subspace :]
    raise ConvergenceError(
        f"Davidson failed to reach {config.residual_tol} in "
        f"{config.max_iterations} iterations (last residual {residual_history[-1]:.3e})",
        residuals=residual_history,
    )


def overlap(a: CIVector, b: CIVector) -> float:
    """|<a|b>| for normalized vectors."""
    na, nb = a.norm(), b.norm()
    if na < 1e-8 or nb < 1e-8:
        raise DegenerateVectorError("zero-norm input to overlap")
    return abs(a.dot(b)) / (na * nb)


def delta_norm(a: CIVector, b: CIVector) -> float:
    """min_phi || a - phi b ||_2 = sqrt(2 - 2 |<a|b>|) for normalized inputs."""
    ov = overlap(a, b)
    return float(np.sqrt(max(0.0, 2.0 - 2.0 * ov)))
