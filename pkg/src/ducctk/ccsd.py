"""Spin-orbital MP2 and CCSD with DIIS acceleration.

Amplitude equations follow the standard spin-orbital intermediate scheme
(Fae/Fmi/Fme, Wmnij/Wabef/Wmbej); everything is einsum over occupied and
virtual index blocks of the interleaved spin-orbital tensors.  Amplitudes
are stored as t1[a, i] and t2[a, b, i, j] (virtual-major), antisymmetric
in (a, b) and (i, j) by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .determinants import Determinant
from .errors import ConvergenceError, DegeneracyError
from .fcidump import ActiveSpaceSpec
from .operators import NormalOrderedOperator, normal_order


@dataclass
class ClusterAmplitudes:
    """T1/T2 amplitudes tied to a reference determinant's occ/virt split."""

    n_spinorbitals: int
    occupied: tuple
    virtuals: tuple
    t1: np.ndarray  # (nv, no)
    t2: np.ndarray  # (nv, nv, no, no), antisymmetric in (a,b) and (i,j)

    @classmethod
    def zeros(cls, n: int, occupied, virtuals) -> "ClusterAmplitudes":
        no, nv = len(occupied), len(virtuals)
        return cls(n, tuple(occupied), tuple(virtuals),
                   np.zeros((nv, no)), np.zeros((nv, nv, no, no)))

    def copy(self) -> "ClusterAmplitudes":
        return ClusterAmplitudes(
            self.n_spinorbitals, self.occupied, self.virtuals,
            self.t1.copy(), self.t2.copy(),
        )

    def max_abs(self) -> float:
        return max(
            np.max(np.abs(self.t1), initial=0.0),
            np.max(np.abs(self.t2), initial=0.0),
        )

    def __add__(self, other: "ClusterAmplitudes") -> "ClusterAmplitudes":
        return ClusterAmplitudes(
            self.n_spinorbitals, self.occupied, self.virtuals,
            self.t1 + other.t1, self.t2 + other.t2,
        )

    def save_text(self, path) -> None:
        """Audit export: one 'kind indices value' row per amplitude."""
        lines = [f"# t1/t2 amplitudes  n_spinorbitals={self.n_spinorbitals}"]
        lines.append("# occupied " + " ".join(map(str, self.occupied)))
        lines.append("# virtual " + " ".join(map(str, self.virtuals)))
        for ai, a in enumerate(self.virtuals):
            for ii, i in enumerate(self.occupied):
                val = self.t1[ai, ii]
                if val != 0.0:
                    lines.append(f"t1 {a} {i} {float(val)!r}")
        for ai, a in enumerate(self.virtuals):
            for bi, b in enumerate(self.virtuals):
                if b >= a:
                    continue
                for ii, i in enumerate(self.occupied):
                    for ji, j in enumerate(self.occupied):
                        if j >= i:
                            continue
                        val = self.t2[ai, bi, ii, ji]
                        if val != 0.0:
                            lines.append(f"t2 {a} {b} {i} {j} {float(val)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load_text(cls, path, n: int, occupied, virtuals) -> "ClusterAmplitudes":
        amp = cls.zeros(n, occupied, virtuals)
        vmap = {a: i for i, a in enumerate(amp.virtuals)}
        omap = {i: k for k, i in enumerate(amp.occupied)}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "t1":
                a, i = int(parts[1]), int(parts[2])
                amp.t1[vmap[a], omap[i]] = float(parts[3])
            elif parts[0] == "t2":
                a, b, i, j = (int(x) for x in parts[1:5])
                val = float(parts[5])
                ai, bi, ii, ji = vmap[a], vmap[b], omap[i], omap[j]
                amp.t2[ai, bi, ii, ji] = val
                amp.t2[bi, ai, ii, ji] = -val
                amp.t2[ai, bi, ji, ii] = -val
                amp.t2[bi, ai, ji, ii] = val
        return amp


def _occ_virt(op: NormalOrderedOperator, reference: Determinant):
    occ = tuple(reference.occupied_spinorbitals())
    virt = tuple(p for p in range(op.n_spinorbitals) if p not in set(occ))
    return occ, virt


def _fock_and_blocks(op: NormalOrderedOperator, reference: Determinant):
    hn = normal_order(op, reference)
    f = hn.one_body
    v = op.two_body
    occ, virt = _occ_virt(op, reference)
    o = np.asarray(occ, dtype=int)
    a = np.asarray(virt, dtype=int)
    blocks = {}
    for name in ["oovv", "ooov", "oooo", "ovvv", "vvvv", "ovvo", "oovo", "ovov",
                 "vvvo", "ovoo"]:
        idx = [o if c == "o" else a for c in name]
        blocks[name] = v[np.ix_(*idx)]
    return hn, f, occ, virt, blocks


def _denominators(f, occ, virt, tol=1e-10):
    """Orbital-energy denominators with Sz-forbidden slots masked to inf.

    Spin-flip amplitudes have identically vanishing residuals for
    Sz-conserving operators; an infinite denominator pins them to zero
    instead of tripping a spurious 0/0.
    """
    eps = np.diag(f)
    e_occ = eps[list(occ)]
    e_virt = eps[list(virt)]
    s_occ = np.asarray(occ) % 2
    s_virt = np.asarray(virt) % 2
    d1 = e_occ[None, :] - e_virt[:, None]  # (a, i)
    ok1 = s_virt[:, None] == s_occ[None, :]
    d2 = (
        e_occ[None, None, :, None]
        + e_occ[None, None, None, :]
        - e_virt[:, None, None, None]
        - e_virt[None, :, None, None]
    )
    ok2 = (s_virt[:, None, None, None] + s_virt[None, :, None, None]) == (
        s_occ[None, None, :, None] + s_occ[None, None, None, :]
    )
    if np.any(np.abs(d1[ok1]) < tol):
        bad = np.where(ok1 & (np.abs(d1) < tol))
        a, i = bad[0][0], bad[1][0]
        raise DegeneracyError(
            f"vanishing denominator for single ({virt[a]} <- {occ[i]})",
            orbitals=(virt[a], occ[i]),
        )
    if np.any(np.abs(d2[ok2]) < tol):
        bad = np.where(ok2 & (np.abs(d2) < tol))
        a, b, i, j = (bad[k][0] for k in range(4))
        raise DegeneracyError(
            "vanishing denominator for double "
            f"({virt[a]},{virt[b]} <- {occ[i]},{occ[j]})",
            orbitals=(virt[a], virt[b], occ[i], occ[j]),
        )
    d1 = np.where(ok1, d1, np.inf)
    d2 = np.where(ok2, d2, np.inf)
    return d1, d2


def mp2_amplitudes(op: NormalOrderedOperator, reference: Determinant):
    """Canonical MP2: t2 = <ab||ij>/D, t1 = 0; returns (amplitudes, E_corr)."""
    hn, f, occ, virt, blocks = _fock_and_blocks(op, reference)
    d1, d2 = _denominators(f, occ, virt)
    vvoo = np.einsum("ijab->abij", blocks["oovv"])
    t2 = vvoo / d2
    amp = ClusterAmplitudes(op.n_spinorbitals, occ, virt,
                            np.zeros((len(virt), len(occ))), t2)
    energy = 0.25 * float(np.einsum("abij,abij->", vvoo, t2))
    return amp, energy


@dataclass
class CcsdConfig:
    max_iterations: int = 200
    residual_tol: float = 1e-9
    diis_depth: int = 8
    damping: float = 1.0  # 1.0 = undamped; <1 mixes in the previous iterate


@dataclass
class CcsdResult:
    amplitudes: ClusterAmplitudes
    correlation_energy: float
    reference_energy: float
    iterations: int
    residual_norms: list = field(default_factory=list)

    @property
    def total_energy(self) -> float:
        return self.reference_energy + self.correlation_energy


def _ccsd_energy(f_ov, voovv, T1, T2):
    e = float(np.einsum("ia,ia->", f_ov, T1))
    e += 0.25 * float(np.einsum("ijab,ijab->", voovv, T2))
    e += 0.5 * float(np.einsum("ijab,ia,jb->", voovv, T1, T1))
    return e


def ccsd_solve(
    op: NormalOrderedOperator,
    reference: Determinant,
    config: CcsdConfig | None = None,
) -> CcsdResult:
    """Projected CCSD equations, DIIS-accelerated from the MP2 guess."""
    config = config or CcsdConfig()
    hn, f, occ, virt, V = _fock_and_blocks(op, reference)
    no, nv = len(occ), len(virt)
    o = np.asarray(occ, dtype=int)
    a_ = np.asarray(virt, dtype=int)
    f_oo = f[np.ix_(o, o)]
    f_vv = f[np.ix_(a_, a_)]
    f_ov = f[np.ix_(o, a_)]
    d1, d2 = _denominators(f, occ, virt)
    D1 = d1.T  # (i, a)
    D2 = np.einsum("abij->ijab", d2)
    # finite copies for residual evaluation (amplitudes on masked slots
    # stay exactly zero, so the product contributes nothing)
    D1m = np.where(np.isinf(D1), 0.0, D1)
    D2m = np.where(np.isinf(D2), 0.0, D2)

    # work in (i, a) orientation internally
    T1 = np.zeros((no, nv))
    T2 = V["oovv"] / D2

    f_oo_off = f_oo - np.diag(np.diag(f_oo))
    f_vv_off = f_vv - np.diag(np.diag(f_vv))

    diis_t, diis_e = [], []
    residuals = []
    e_ref = hn.scalar
    for it in range(1, config.max_iterations + 1):
        tau_t = T2 + 0.5 * (
            np.einsum("ia,jb->ijab", T1, T1) - np.einsum("ib,ja->ijab", T1, T1)
        )
        tau = T2 + (
            np.einsum("ia,jb->ijab", T1, T1) - np.einsum("ib,ja->ijab", T1, T1)
        )

        Fae = f_vv_off - 0.5 * np.einsum("me,ma->ae", f_ov, T1)
        Fae += np.einsum("mf,mafe->ae", T1, V["ovvv"])
        Fae -= 0.5 * np.einsum("mnaf,mnef->ae", tau_t, V["oovv"])

        Fmi = f_oo_off + 0.5 * np.einsum("ie,me->mi", T1, f_ov)
        Fmi += np.einsum("ne,mnie->mi", T1, V["ooov"])
        Fmi += 0.5 * np.einsum("inef,mnef->mi", tau_t, V["oovv"])

        Fme = f_ov + np.einsum("nf,mnef->me", T1, V["oovv"])

        Wmnij = V["oooo"].copy()
        x = np.einsum("je,mnie->mnij", T1, V["ooov"])
        Wmnij += x - x.transpose(0, 1, 3, 2)
        Wmnij += 0.25 * np.einsum("ijef,mnef->mnij", tau, V["oovv"])

        Wabef = V["vvvv"].copy()
        x = np.einsum("mb,amef->abef", T1, -np.einsum("maef->amef", V["ovvv"]))
        # <am||ef> = -<ma||ef>
        Wabef -= x - x.transpose(1, 0, 2, 3)
        Wabef += 0.25 * np.einsum("mnab,mnef->abef", tau, V["oovv"])

        Wmbej = V["ovvo"].copy()
        Wmbej += np.einsum("jf,mbef->mbej", T1, V["ovvv"])
        Wmbej -= np.einsum("nb,mnej->mbej", T1, V["oovo"])
        Wmbej -= np.einsum(
            "jnfb,mnef->mbej", 0.5 * T2 + np.einsum("jf,nb->jnfb", T1, T1), V["oovv"]
        )

        rhs1 = f_ov.copy()
        rhs1 += np.einsum("ie,ae->ia", T1, Fae)
        rhs1 -= np.einsum("ma,mi->ia", T1, Fmi)
        rhs1 += np.einsum("imae,me->ia", T2, Fme)
        rhs1 -= np.einsum("nf,naif->ia", T1, V["ovov"])
        rhs1 -= 0.5 * np.einsum("imef,maef->ia", T2, V["ovvv"])
        rhs1 -= 0.5 * np.einsum("mnae,nmei->ia", T2, V["oovo"])

        rhs2 = V["oovv"].copy()
        x = np.einsum(
            "ijae,be->ijab", T2, Fae - 0.5 * np.einsum("mb,me->be", T1, Fme)
        )
        rhs2 += x - x.transpose(0, 1, 3, 2)
        x = np.einsum(
            "imab,mj->ijab", T2, Fmi + 0.5 * np.einsum("je,me->mj", T1, Fme)
        )
        rhs2 -= x - x.transpose(1, 0, 2, 3)
        rhs2 += 0.5 * np.einsum("mnab,mnij->ijab", tau, Wmnij)
        rhs2 += 0.5 * np.einsum("ijef,abef->ijab", tau, Wabef)
        x = np.einsum("imae,mbej->ijab", T2, Wmbej)
        x -= np.einsum("ie,ma,mbej->ijab", T1, T1, V["ovvo"])
        x = x - x.transpose(1, 0, 2, 3)
        rhs2 += x - x.transpose(0, 1, 3, 2)
        x = np.einsum("ie,abej->ijab", T1, V["vvvo"])
        rhs2 += x - x.transpose(1, 0, 2, 3)
        x = np.einsum("ma,mbij->ijab", T1, V["ovoo"])
        rhs2 -= x - x.transpose(0, 1, 3, 2)

        R1 = rhs1 - D1m * T1
        R2 = rhs2 - D2m * T2
        rmax = max(np.max(np.abs(R1), initial=0.0), np.max(np.abs(R2), initial=0.0))
        residuals.append(float(rmax))
        if rmax < config.residual_tol:
            t1 = np.ascontiguousarray(T1.T)
            t2 = np.ascontiguousarray(np.einsum("ijab->abij", T2))
            amp = ClusterAmplitudes(op.n_spinorbitals, occ, virt, t1, t2)
            energy = _ccsd_energy(f_ov, V["oovv"], T1, T2)
            return CcsdResult(amp, energy, e_ref, it, residuals)

        T1_new = T1 + config.damping * (R1 / D1)
        T2_new = T2 + config.damping * (R2 / D2)

        diis_t.append(np.concatenate([T1_new.ravel(), T2_new.ravel()]))
        diis_e.append(np.concatenate([(R1 / D1).ravel(), (R2 / D2).ravel()]))
        if len(diis_t) > config.diis_depth:
            diis_t.pop(0)
            diis_e.pop(0)
        if len(diis_t) >= 2:
            m = len(diis_t)
            B = -np.ones((m + 1, m + 1))
            B[m, m] = 0.0
            for p in range(m):
                for q in range(m):
                    B[p, q] = float(diis_e[p] @ diis_e[q])
            rhs = np.zeros(m + 1)
            rhs[m] = -1.0
            try:
                w = np.linalg.solve(B, rhs)[:m]
                combo = sum(wi * ti for wi, ti in zip(w, diis_t))
                T1 = combo[: no * nv].reshape(no, nv)
                T2 = combo[no * nv :].reshape(no, no, nv, nv)
            except np.linalg.LinAlgError:
                T1, T2 = T1_new, T2_new
        else:
            T1, T2 = T1_new, T2_new

    raise ConvergenceError(
        f"CCSD failed to reach {config.residual_tol} in "
        f"{config.max_iterations} iterations (last residual {residuals[-1]:.3e})",
        residuals=residuals,
    )


def partition_amplitudes(t: ClusterAmplitudes, spec: ActiveSpaceSpec):
    """Split into (t_int, t_ext): internal amplitudes carry active indices
    only, external ones at least one inactive index; t_int + t_ext = t."""
    active = set(spec.active_spinorbitals())
    occ_act = np.array([p in active for p in t.occupied])
    virt_act = np.array([p in active for p in t.virtuals])
    mask1 = virt_act[:, None] & occ_act[None, :]
    mask2 = (
        virt_act[:, None, None, None]
        & virt_act[None, :, None, None]
        & occ_act[None, None, :, None]
        & occ_act[None, None, None, :]
    )
    t_int = ClusterAmplitudes(
        t.n_spinorbitals, t.occupied, t.virtuals,
        np.where(mask1, t.t1, 0.0), np.where(mask2, t.t2, 0.0),
    )
    t_ext = ClusterAmplitudes(
        t.n_spinorbitals, t.occupied, t.virtuals,
        np.where(mask1, 0.0, t.t1), np.where(mask2, 0.0, t.t2),
    )
    return t_int, t_ext
