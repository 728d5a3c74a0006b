"""Generalized-UCCSD VQE by exact exponential state algebra.

The ansatz is |psi(theta)> = e^{A(theta)} |ref> with
A = sum_k theta_k (X_k - X_k+), X_k running over generalized singles and
doubles on the operator's spin orbitals.  Spin-flip labels are excluded:
they act outside the fixed-(n_alpha, n_beta) determinant space and their
gradients vanish identically there.

The exponential action uses scaling-and-squaring with a truncated Taylor
series; gradients use the Wilcox integral
    dE/dtheta_k = 2 * int_0^1 <H psi| e^{(1-s)A} D_k e^{sA} |ref> ds
evaluated by Gauss-Legendre quadrature, with the node vectors expanded in
a Taylor basis shared across nodes and all D_k resolved at once through
transition density matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .ci import CIVector, CompiledOperator, transition_densities
from .determinants import Determinant, apply_spinorbital_ops
from .errors import ConfigError, ContractError, DegenerateVectorError
from .operators import BARE_VACUUM, AntiHermitianGenerator, NormalOrderedOperator

if TYPE_CHECKING:  # pragma: no cover
    from .ccsd import ClusterAmplitudes


def _spin(p: int) -> int:
    return p & 1


@dataclass(frozen=True)
class SingleLabel:
    p: int  # creation, p > q, same spin
    q: int


@dataclass(frozen=True)
class DoubleLabel:
    p: int  # creation pair p > q
    q: int
    r: int  # annihilation pair r > s
    s: int


def canonical_single(p: int, q: int):
    """(label, sign) for the generator pair a+_p a_q - h.c."""
    if p == q:
        raise ValueError("trivial single (p == q)")
    if p > q:
        return SingleLabel(p, q), 1.0
    return SingleLabel(q, p), -1.0


def canonical_double(create, annihilate):
    """(label, sign) for a+_{c1} a+_{c2} a_{a2} a_{a1} - h.c. with the pairs
    given in any order; sign tracks pair reordering and the dagger flip."""
    (c1, c2), sc = sorted(create, reverse=True), 1.0
    if tuple(create) != (c1, c2):
        sc = -sc
    (a1, a2), sa = sorted(annihilate, reverse=True), 1.0
    if tuple(annihilate) != (a1, a2):
        sa = -sa
    if c1 == c2 or a1 == a2:
        raise ValueError("repeated index in double label")
    sign = sc * sa
    if (c1, c2) == (a1, a2):
        raise ValueError("number-conserving double is identically zero")
    if (c1, c2) > (a1, a2):
        return DoubleLabel(c1, c2, a1, a2), sign
    return DoubleLabel(a1, a2, c1, c2), -sign


class ExcitationPool:
    """Ordered Sz-conserving generator labels over n spin orbitals.

    kind="gucc" enumerates all orbital pairs; kind="ucc" keeps only
    occupied<->virtual labels relative to a reference determinant.
    """

    def __init__(self, n_spinorbitals: int, kind: str = "gucc",
                 reference: Determinant | None = None):
        if n_spinorbitals % 2:
            raise ConfigError("spin-orbital count must be even")
        self.n_spinorbitals = n_spinorbitals
        self.kind = kind
        n = n_spinorbitals
        singles = [
            SingleLabel(p, q)
            for p in range(n)
            for q in range(p)
            if _spin(p) == _spin(q)
        ]
        pairs = [(p, q) for p in range(n) for q in range(p)]
        by_class: dict = {}
        for pq in pairs:
            by_class.setdefault(_spin(pq[0]) + _spin(pq[1]), []).append(pq)
        doubles = []
        for cls_pairs in by_class.values():
            for i, cp in enumerate(cls_pairs):
                for ap in cls_pairs[:i]:
                    doubles.append(DoubleLabel(cp[0], cp[1], ap[0], ap[1]))
        if kind == "ucc":
            if reference is None:
                raise ConfigError("ucc pool needs a reference determinant")
            occ = set(reference.occupied_spinorbitals())

            def keep_single(lab):
                return (lab.p not in occ) and (lab.q in occ)

            def keep_double(lab):
                create_virt = lab.p not in occ and lab.q not in occ
                annih_occ = lab.r in occ and lab.s in occ
                create_occ = lab.p in occ and lab.q in occ
                annih_virt = lab.r not in occ and lab.s not in occ
                return (create_virt and annih_occ) or (create_occ and annih_virt)

            singles = [l for l in singles if keep_single(l)]
            doubles = [l for l in doubles if keep_double(l)]
        elif kind != "gucc":
            raise ConfigError(f"unknown pool kind {kind!r}")
        self.labels = singles + doubles
        self.n_singles = len(singles)
        self.index = {lab: k for k, lab in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ConfigError("duplicate pool labels")
        self._build_scatter()

    def __len__(self) -> int:
        return len(self.labels)

    def _build_scatter(self):
        """Precompute tensor slots for build_generator and the mapping from
        transition densities to gradient components."""
        n = self.n_spinorbitals
        K = n // 2
        s_idx, s_k = [], []
        d_idx, d_sign, d_k = [], [], []
        for k, lab in enumerate(self.labels):
            if isinstance(lab, SingleLabel):
                s_idx.append(lab.p * n + lab.q)
                s_k.append(k)
            else:
                p, q, r, s = lab.p, lab.q, lab.r, lab.s
                for (a, b, c, d), sg in (
                    ((p, q, r, s), 1.0), ((q, p, s, r), 1.0),
                    ((q, p, r, s), -1.0), ((p, q, s, r), -1.0),
                    ((r, s, p, q), -1.0), ((s, r, q, p), -1.0),
                    ((s, r, p, q), 1.0), ((r, s, q, p), 1.0),
                ):
                    d_idx.append(((a * n + b) * n + c) * n + d)
                    d_sign.append(sg)
                    d_k.append(k)
        self._s_idx = np.array(s_idx, dtype=np.int64)
        self._s_k = np.array(s_k, dtype=np.int64)
        self._d_idx = np.array(d_idx, dtype=np.int64)
        self._d_sign = np.array(d_sign)
        self._d_k = np.array(d_k, dtype=np.int64)

        # gradient gather: one (forward, backward, sign) slot pair per label
        # into the concatenated density vector [G1a, G1b, G2aa, G2bb, G2ab]
        pair_index = {}
        cnt = 0
        for a in range(K):
            for b in range(a):
                pair_index[(a, b)] = cnt
                cnt += 1
        n_pairs = cnt
        off_g1b = K * K
        off_aa = 2 * K * K
        off_bb = off_aa + n_pairs * n_pairs
        off_ab = off_bb + n_pairs * n_pairs
        fwd, bwd, sgn = [], [], []
        for lab in self.labels:
            if isinstance(lab, SingleLabel):
                P, Q = lab.p >> 1, lab.q >> 1
                base = 0 if _spin(lab.p) == 0 else off_g1b
                fwd.append(base + P * K + Q)
                bwd.append(base + Q * K + P)
                sgn.append(1.0)
            else:
                p, q, r, s = lab.p, lab.q, lab.r, lab.s
                spins = (_spin(p), _spin(q))
                if spins == (0, 0):
                    cp = pair_index[(p >> 1, q >> 1)]
                    ap = pair_index[(r >> 1, s >> 1)]
                    fwd.append(off_aa + cp * n_pairs + ap)
                    bwd.append(off_aa + ap * n_pairs + cp)
                    sgn.append(1.0)
                elif spins == (1, 1):
                    cp = pair_index[(p >> 1, q >> 1)]
                    ap = pair_index[(r >> 1, s >> 1)]
                    fwd.append(off_bb + cp * n_pairs + ap)
                    bwd.append(off_bb + ap * n_pairs + cp)
                    sgn.append(1.0)
                else:
                    # mixed: X = sc*sa * E^a[cA,aA] E^b[cB,aB]
                    if _spin(p) == 0:
                        cA, cB, sc = p >> 1, q >> 1, 1.0
                    else:
                        cA, cB, sc = q >> 1, p >> 1, -1.0
                    if _spin(s) == 1:
                        aB, aA, sa = s >> 1, r >> 1, 1.0
                    else:
                        aA, aB, sa = s >> 1, r >> 1, -1.0
                    fwd.append(off_ab + ((cA * K + aA) * K + cB) * K + aB)
                    bwd.append(off_ab + ((aA * K + cA) * K + aB) * K + cB)
                    sgn.append(sc * sa)
        self._g_fwd = np.array(fwd, dtype=np.int64)
        self._g_bwd = np.array(bwd, dtype=np.int64)
        self._g_sign = np.array(sgn)

    def build_generator(self, theta: np.ndarray) -> AntiHermitianGenerator:
        """A(theta) = sum_k theta_k (X_k - X_k+) as amplitude tensors."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (len(self),):
            raise ContractError(
                f"parameter vector length {theta.shape} != pool size {len(self)}"
            )
        n = self.n_spinorbitals
        h = np.zeros(n * n)
        if len(self._s_idx):
            h[self._s_idx] = theta[self._s_k]
            hm = h.reshape(n, n)
            hm -= hm.T.copy()
        else:
            hm = h.reshape(n, n)
        v = np.zeros(n * n * n * n)
        if len(self._d_idx):
            v[self._d_idx] = self._d_sign * theta[self._d_k]
        return AntiHermitianGenerator(n, BARE_VACUUM, hm, v.reshape(n, n, n, n))

    def gradient_from_densities(self, G1a, G1b, G2aa, G2bb, G2ab) -> np.ndarray:
        flat = np.concatenate(
            [G1a.ravel(), G1b.ravel(), G2aa.ravel(), G2bb.ravel(), G2ab.ravel()]
        )
        return self._g_sign * (flat[self._g_fwd] - flat[self._g_bwd])


# ---------------------------------------------------------------------------
# exponential action
# ---------------------------------------------------------------------------

_MAX_TAYLOR_TERMS = 400


def _norm_estimate(comp: CompiledOperator, v: np.ndarray) -> float:
    """Deterministic lower-ish bound on ||A||_2 by power iteration."""
    w = v / (np.linalg.norm(v) or 1.0)
    est = 0.0
    for _ in range(4):
        w = comp.matvec(w)
        nrm = np.linalg.norm(w)
        if nrm < 1e-14:
            break
        est = max(est, nrm)
        w /= nrm
    return est


def _taylor_apply(comp: CompiledOperator, v: np.ndarray, scale: float, tol: float):
    acc = v.copy()
    term = v
    for k in range(1, _MAX_TAYLOR_TERMS):
        term = comp.matvec(term) * (scale / k)
        acc += term
        if np.linalg.norm(term) < tol:
            return acc
    raise ContractError("Taylor series for the exponential did not converge")


def expm_apply_compiled(
    comp: CompiledOperator, v: np.ndarray, tol: float = 1e-12
) -> np.ndarray:
    est = _norm_estimate(comp, v) * 1.25
    squarings = max(0, math.ceil(math.log2(est))) if est > 1.0 else 0
    scale = 0.5**squarings
    y = v
    for _ in range(2**squarings):
        y = _taylor_apply(comp, y, scale, tol)
    return y


def apply_exponential(
    a: AntiHermitianGenerator, v: CIVector, tol: float = 1e-12
) -> CIVector:
    """e^A |v> by scaling-and-squaring Taylor action; norm-preserving."""
    a.validate()
    comp = CompiledOperator(a, v.space)
    out = expm_apply_compiled(comp, v.data, tol)
    nin, nout = np.linalg.norm(v.data), np.linalg.norm(out)
    if abs(nout - nin) > 1e-8 * max(1.0, nin):
        raise ContractError(
            f"exponential action lost unitarity: |v|={nin:.12f} -> {nout:.12f}"
        )
    return CIVector(v.space, out)


# ---------------------------------------------------------------------------
# energy / gradient
# ---------------------------------------------------------------------------


@dataclass
class VqeConfig:
    amp_tol: float = 1e-8
    grad_tol: float = 1e-5
    max_iterations: int = 5000
    quadrature_order: int = 16
    exp_tol: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search: int = 30
    trace_path: str | None = None

    def __post_init__(self):
        if self.quadrature_order < 2:
            raise ConfigError("quadrature order must be >= 2")


@dataclass
class VQEResult:
    energy: float
    theta: np.ndarray
    iterations: int
    gradient_inf_norm: float
    converged: bool
    termination_reason: str
    min_energy_evaluated: float
    n_energy_evaluations: int
    overlap_with_fci: float | None = None
    delta_norm: float | None = None


class VqeProblem:
    """Energy/gradient evaluations for one (H, reference, pool) triple."""

    def __init__(self, h: NormalOrderedOperator, ref: CIVector,
                 pool: ExcitationPool, config: VqeConfig | None = None):
        self.config = config or VqeConfig()
        if abs(ref.norm() - 1.0) > 1e-10:
            raise ContractError("reference ket must be normalized")
        if pool.n_spinorbitals != h.n_spinorbitals:
            raise ContractError("pool and operator spin-orbital counts differ")
        self.h = h
        self.ref = ref
        self.pool = pool
        self.space = ref.space
        self.comp_h = CompiledOperator(h, self.space)
        nodes, weights = np.polynomial.legendre.leggauss(
            self.config.quadrature_order
        )
        self.nodes = 0.5 * (nodes + 1.0)
        self.weights = 0.5 * weights
        self.min_energy = np.inf
        self.n_energy = 0
        self._state_cache: dict = {}

    def _compiled_generator(self, theta) -> CompiledOperator:
        gen = self.pool.build_generator(theta)
        return CompiledOperator(gen, self.space)

    def state(self, theta) -> np.ndarray:
        key = np.asarray(theta).tobytes()
        hit = self._state_cache.get(key)
        if hit is not None:
            return hit
        if not np.any(theta):
            psi = self.ref.data.copy()
        else:
            comp_a = self._compiled_generator(theta)
            psi = expm_apply_compiled(comp_a, self.ref.data, self.config.exp_tol)
        if len(self._state_cache) > 8:
            self._state_cache.clear()
        self._state_cache[key] = psi
        return psi

    def energy(self, theta) -> float:
        psi = self.state(theta)
        e = float(psi @ self.comp_h.matvec(psi)) / float(psi @ psi)
        if not np.isfinite(e):
            raise ContractError("non-finite energy evaluated")
        self.min_energy = min(self.min_energy, e)
        self.n_energy += 1
        return e

    def _taylor_basis(self, comp_a, v, max_norm_tol):
        basis = [v.copy()]
        term = v
        for m in range(1, _MAX_TAYLOR_TERMS):
            term = comp_a.matvec(term) / m
            basis.append(term.copy())
            if np.linalg.norm(term) < max_norm_tol:
                return np.stack(basis, axis=0)
        raise ContractError("node-basis Taylor series did not converge")

    def gradient(self, theta) -> np.ndarray:
        psi = self.state(theta)
        hpsi = self.comp_h.matvec(psi)
        K = self.space.n_spatial
        n_pairs = K * (K - 1) // 2
        acc = [
            np.zeros((K, K)), np.zeros((K, K)),
            np.zeros((n_pairs, n_pairs)), np.zeros((n_pairs, n_pairs)),
            np.zeros((K, K, K, K)),
        ]
        if not np.any(theta):
            G = transition_densities(self.space, hpsi, self.ref.data)
            for a, g in zip(acc, G):
                a += g
        else:
            comp_a = self._compiled_generator(theta)
            est = _norm_estimate(comp_a, self.ref.data) * 1.25
            if est <= 4.0:
                u = self._taylor_basis(comp_a, self.ref.data, self.config.exp_tol)
                w = self._taylor_basis(comp_a, hpsi, self.config.exp_tol)
                Mu, Mw = u.shape[0], w.shape[0]
                for s, wt in zip(self.nodes, self.weights):
                    r_s = np.power(s, np.arange(Mu)) @ u
                    v_s = np.power(s - 1.0, np.arange(Mw)) @ w
                    G = transition_densities(self.space, v_s, r_s)
                    for a, g in zip(acc, G):
                        a += wt * g
            else:
                # chained incremental propagation between sorted nodes
                order = np.argsort(self.nodes)
                r_cur, r_at = self.ref.data.copy(), 0.0
                v_cur, v_at = hpsi.copy(), 0.0  # v(s) = e^{-(1-s)A} hpsi
                r_states = {}
                v_states = {}
                for j in order:
                    s = self.nodes[j]
                    r_cur = _chained_exp(comp_a, r_cur, s - r_at, self.config.exp_tol)
                    r_at = s
                    r_states[j] = r_cur.copy()
                for j in order[::-1]:
                    s = self.nodes[j]
                    # from s=1 downward: v(1) = hpsi; step by (s - prev)
                    v_cur = _chained_exp(
                        comp_a, v_cur, (s - 1.0) - v_at, self.config.exp_tol
                    )
                    v_at = s - 1.0
                    v_states[j] = v_cur.copy()
                for j, wt in enumerate(self.weights):
                    G = transition_densities(self.space, v_states[j], r_states[j])
                    for a, g in zip(acc, G):
                        a += wt * g
        return 2.0 * self.pool.gradient_from_densities(*acc)


def _chained_exp(comp, v, dt, tol):
    if dt == 0.0:
        return v
    return _taylor_apply(comp, v, dt, tol)


def energy(theta, pool: ExcitationPool, h: NormalOrderedOperator,
           ref: CIVector, config: VqeConfig | None = None) -> float:
    return VqeProblem(h, ref, pool, config).energy(np.asarray(theta, dtype=float))


def gradient(theta, pool: ExcitationPool, h: NormalOrderedOperator,
             ref: CIVector, config: VqeConfig | None = None) -> np.ndarray:
    return VqeProblem(h, ref, pool, config).gradient(np.asarray(theta, dtype=float))


# ---------------------------------------------------------------------------
# initial parameter guesses
# ---------------------------------------------------------------------------


def initial_parameters_zero(pool: ExcitationPool) -> np.ndarray:
    return np.zeros(len(pool))


def _register(theta, pool, label_sign, value):
    label, sign = label_sign
    k = pool.index.get(label)
    if k is not None:
        theta[k] += sign * value


def initial_parameters_mp2(pool: ExcitationPool, amplitudes: "ClusterAmplitudes") -> np.ndarray:
    """t2 mapped onto matching double labels; everything else zero."""
    theta = np.zeros(len(pool))
    occ, virt = amplitudes.occupied, amplitudes.virtuals
    t2 = amplitudes.t2
    for ai, a in enumerate(virt):
        for bi, b in enumerate(virt):
            if b >= a:
                continue
            for ii, i in enumerate(occ):
                for ji, j in enumerate(occ):
                    if j >= i:
                        continue
                    val = t2[ai, bi, ii, ji]
                    if val != 0.0:
                        _register(theta, pool, canonical_double((a, b), (i, j)), val)
    t1 = amplitudes.t1
    for ai, a in enumerate(virt):
        for ii, i in enumerate(occ):
            val = t1[ai, ii]
            if val != 0.0 and _spin(a) == _spin(i):
                _register(theta, pool, canonical_single(a, i), val)
    return theta


def initial_parameters_from_vector(
    pool: ExcitationPool, vector: CIVector, reference: Determinant
) -> np.ndarray:
    """CC analysis of a CI expansion: t1 = c_i^a/c0,
    t2 = c_ij^ab/c0 - disconnected t1 products; mapped like MP2."""
    space = vector.space
    v = vector.normalized().data
    c0 = v[space.index(reference)]
    if abs(c0) < 1e-6:
        raise DegenerateVectorError(
            f"reference weight |c0| = {abs(c0):.2e} too small for CC analysis"
        )
    occ = reference.occupied_spinorbitals()
    virt = [p for p in range(space.n_spinorbitals) if p not in set(occ)]
    K = space.n_spatial
    t1 = {}
    for i in occ:
        for a in virt:
            if _spin(a) != _spin(i):
                continue
            res = apply_spinorbital_ops(reference, K, [(a, True), (i, False)])
            if res is None:
                continue
            det, ph = res
            if det in space:
                t1[(a, i)] = ph * v[space.index(det)] / c0
    theta = np.zeros(len(pool))
    for (a, i), val in t1.items():
        _register(theta, pool, canonical_single(a, i), val)
    for ii, i in enumerate(occ):
        for j in occ[:ii]:  # i > j
            for ai, a in enumerate(virt):
                for b in virt[:ai]:  # a > b
                    if _spin(a) + _spin(b) != _spin(i) + _spin(j):
                        continue
                    res = apply_spinorbital_ops(
                        reference, K,
                        [(a, True), (b, True), (j, False), (i, False)],
                    )
                    if res is None:
                        continue
                    det, ph = res
                    if det not in space:
                        continue
                    c2 = ph * v[space.index(det)] / c0
                    t2 = (
                        c2
                        - t1.get((a, i), 0.0) * t1.get((b, j), 0.0)
                        + t1.get((a, j), 0.0) * t1.get((b, i), 0.0)
                    )
                    if t2 != 0.0:
                        _register(theta, pool, canonical_double((a, b), (i, j)), t2)
    return theta


def initial_parameters(kind: str, pool: ExcitationPool, *, amplitudes=None,
                       vector=None, reference=None) -> np.ndarray:
    if kind == "zero":
        return initial_parameters_zero(pool)
    if kind == "mp2":
        if amplitudes is None:
            raise ConfigError("mp2 guess needs cluster amplitudes")
        return initial_parameters_mp2(pool, amplitudes)
    if kind == "vector":
        if vector is None or reference is None:
            raise ConfigError("vector guess needs a CI vector and reference")
        return initial_parameters_from_vector(pool, vector, reference)
    raise ConfigError(f"unknown initial-parameter kind {kind!r}")


# ---------------------------------------------------------------------------
# BFGS with strong Wolfe line search
# ---------------------------------------------------------------------------


class _LineSearchFailure(Exception):
    pass


def _strong_wolfe(f, df, x, d, f0, g0, c1, c2, max_iter):
    """Returns (alpha, f_alpha, g_alpha_vec); raises _LineSearchFailure."""
    gd0 = float(g0 @ d)
    if gd0 >= 0:
        raise _LineSearchFailure("non-descent direction")

    def phi(a):
        return f(x + a * d)

    def dphi(a):
        g = df(x + a * d)
        return float(g @ d), g

    a_prev, f_prev = 0.0, f0
    a_cur = 1.0
    a_max = 64.0
    for i in range(max_iter):
        f_cur = phi(a_cur)
        if f_cur > f0 + c1 * a_cur * gd0 or (i > 0 and f_cur >= f_prev):
            return _zoom(phi, dphi, a_prev, a_cur, f_prev, f0, gd0, c1, c2, max_iter)
        gd_cur, g_cur = dphi(a_cur)
        if abs(gd_cur) <= -c2 * gd0:
            return a_cur, f_cur, g_cur
        if gd_cur >= 0:
            return _zoom(phi, dphi, a_cur, a_prev, f_cur, f0, gd0, c1, c2, max_iter)
        a_prev, f_prev = a_cur, f_cur
        if a_cur >= a_max:
            raise _LineSearchFailure("step exceeded maximum")
        a_cur = min(2.0 * a_cur, a_max)
    raise _LineSearchFailure("bracketing exhausted")


def _zoom(phi, dphi, a_lo, a_hi, f_lo, f0, gd0, c1, c2, max_iter):
    for _ in range(max_iter):
        a = 0.5 * (a_lo + a_hi)
        f_a = phi(a)
        if f_a > f0 + c1 * a * gd0 or f_a >= f_lo:
            a_hi = a
        else:
            gd_a, g_a = dphi(a)
            if abs(gd_a) <= -c2 * gd0:
                return a, f_a, g_a
            if gd_a * (a_hi - a_lo) >= 0:
                a_hi = a_lo
            a_lo, f_lo = a, f_a
        if abs(a_hi - a_lo) < 1e-14:
            break
    raise _LineSearchFailure("zoom interval collapsed")


def vqe_minimize(
    h: NormalOrderedOperator,
    ref: CIVector,
    pool: ExcitationPool,
    config: VqeConfig | None = None,
    theta0: np.ndarray | None = None,
) -> VQEResult:
    """BFGS with strong-Wolfe line search; terminates on either paper
    criterion (max amplitude change < amp_tol or gradient inf-norm <
    grad_tol) or on max_iterations / line-search failure."""
    config = config or VqeConfig()
    problem = VqeProblem(h, ref, pool, config)
    n = len(pool)
    x = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    if x.shape != (n,):
        raise ContractError(f"theta0 length {x.shape} != pool size {n}")

    trace_fh = open(config.trace_path, "w") if config.trace_path else None

    def emit(iteration, e, ginf, dmax):
        if trace_fh is not None:
            trace_fh.write(
                json.dumps(
                    {
                        "iteration": iteration,
                        "energy": e,
                        "grad_inf_norm": ginf,
                        "max_theta_change": dmax,
                    }
                )
                + "\n"
            )

    # cache so f/df at the same point are not recomputed
    fcache: dict = {}
    gcache: dict = {}

    def f(z):
        key = z.tobytes()
        if key not in fcache:
            fcache[key] = problem.energy(z)
            if len(fcache) > 64:
                oldest = next(iter(fcache))
                if oldest != key:
                    fcache.pop(oldest)
        return fcache[key]

    def df(z):
        key = z.tobytes()
        if key not in gcache:
            gcache[key] = problem.gradient(z)
            if len(gcache) > 8:
                oldest = next(iter(gcache))
                if oldest != key:
                    gcache.pop(oldest)
        return gcache[key]

    try:
        B = np.eye(n)  # inverse-Hessian approximation
        e = f(x)
        g = df(x)
        ginf = float(np.max(np.abs(g), initial=0.0))
        emit(0, e, ginf, 0.0)
        iterations = 0
        converged = False
        reason = "max_iterations"
        for it in range(1, config.max_iterations + 1):
            iterations = it - 1
            if ginf < config.grad_tol:
                converged = True
                reason = "gradient_tolerance"
                break
            d = -(B @ g)
            if float(g @ d) >= 0:
                B = np.eye(n)
                d = -g
            try:
                alpha, e_new, g_new = _strong_wolfe(
                    f, df, x, d, e, g,
                    config.wolfe_c1, config.wolfe_c2, config.max_line_search,
                )
            except _LineSearchFailure as exc:
                reason = f"line_search_failure: {exc}"
                break
            s = alpha * d
            dmax = float(np.max(np.abs(s), initial=0.0))
            x = x + s
            y = g_new - g
            e, g = e_new, g_new
            ginf = float(np.max(np.abs(g), initial=0.0))
            iterations = it
            emit(it, e, ginf, dmax)
            if dmax < config.amp_tol:
                converged = True
                reason = "amplitude_change"
                break
            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                rho = 1.0 / sy
                By = B @ y
                B = (
                    B
                    - rho * (np.outer(s, By) + np.outer(By, s))
                    + rho * (rho * float(y @ By) + 1.0) * np.outer(s, s)
                )
        else:
            iterations = config.max_iterations
        if ginf < config.grad_tol and not converged:
            converged = True
            reason = "gradient_tolerance"
    finally:
        if trace_fh is not None:
            trace_fh.close()

    return VQEResult(
        energy=e,
        theta=x,
        iterations=iterations,
        gradient_inf_norm=ginf,
        converged=converged,
        termination_reason=reason,
        min_energy_evaluated=problem.min_energy,
        n_energy_evaluations=problem.n_energy,
    )
