#!/usr/bin/env python3
"""One-time generator for the FCIDUMP test fixtures.

Computes STO-3G integrals (McMurchie-Davidson scheme, s/p shells), runs a
closed-shell RHF, transforms to the MO basis, and writes Molpro-convention
FCIDUMP files for the fixture molecules.  Only developers regenerating
fixtures run this; the package itself never generates integrals.

Usage:  python3 scripts/make_fixtures.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np
from scipy.special import hyp1f1

ANGSTROM_TO_BOHR = 1.0 / 0.529177210903

# STO-3G exponents/contractions (standard published values).
# Each shell: (l, [exponents], [coefficients]); SP shells share exponents.
STO3G = {
    "H": [
        (0, [3.42525091, 0.62391373, 0.16885540], [0.15432897, 0.53532814, 0.44463454]),
    ],
    "Li": [
        (0, [16.1195750, 2.9362007, 0.7946505], [0.15432897, 0.53532814, 0.44463454]),
        (0, [0.6362897, 0.1478601, 0.0480887], [-0.09996723, 0.39951283, 0.70011547]),
        (1, [0.6362897, 0.1478601, 0.0480887], [0.15591627, 0.60768372, 0.39195739]),
    ],
    "N": [
        (0, [99.1061690, 18.0523120, 4.8856602], [0.15432897, 0.53532814, 0.44463454]),
        (0, [3.7804559, 0.8784966, 0.2857144], [-0.09996723, 0.39951283, 0.70011547]),
        (1, [3.7804559, 0.8784966, 0.2857144], [0.15591627, 0.60768372, 0.39195739]),
    ],
    "O": [
        (0, [130.7093200, 23.8088610, 6.4436083], [0.15432897, 0.53532814, 0.44463454]),
        (0, [5.0331513, 1.1695961, 0.3803890], [-0.09996723, 0.39951283, 0.70011547]),
        (1, [5.0331513, 1.1695961, 0.3803890], [0.15591627, 0.60768372, 0.39195739]),
    ],
}

CHARGES = {"H": 1, "Li": 3, "N": 7, "O": 8}


def gaussian_norm(alpha, lmn):
    """Normalization of a primitive cartesian Gaussian."""
    l, m, n = lmn
    from math import factorial

    def df(k):  # (2k-1)!!
        return factorial(2 * k) // (2**k * factorial(k)) if k >= 0 else 1

    pre = (2 * alpha / np.pi) ** 0.75
    num = (4 * alpha) ** ((l + m + n) / 2)
    den = np.sqrt(df(l) * df(m) * df(n))
    return pre * num / den


class BasisFunction:
    """Contracted cartesian Gaussian."""

    def __init__(self, center, lmn, exps, coefs):
        self.center = np.asarray(center, dtype=float)
        self.lmn = lmn
        self.exps = np.asarray(exps, dtype=float)
        norms = np.array([gaussian_norm(a, lmn) for a in exps])
        self.coefs = np.asarray(coefs, dtype=float) * norms
        # normalize the contraction
        s = 0.0
        for ci, ai in zip(self.coefs, self.exps):
            for cj, aj in zip(self.coefs, self.exps):
                s += ci * cj * _prim_overlap(ai, self.lmn, self.center, aj, self.lmn, self.center)
        self.coefs /= np.sqrt(s)


def build_basis(atoms):
    basis = []
    for symbol, center in atoms:
        for l, exps, coefs in STO3G[symbol]:
            if l == 0:
                basis.append(BasisFunction(center, (0, 0, 0), exps, coefs))
            else:
                for lmn in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
                    basis.append(BasisFunction(center, lmn, exps, coefs))
    return basis


def hermite_E(i, j, t, Qx, a, b):
    """Hermite expansion coefficients E_t^{ij} (McMurchie-Davidson)."""
    p = a + b
    q = a * b / p
    if t < 0 or t > i + j:
        return 0.0
    if i == j == t == 0:
        return np.exp(-q * Qx * Qx)
    if j == 0:
        return (
            hermite_E(i - 1, j, t - 1, Qx, a, b) / (2 * p)
            - q * Qx / a * hermite_E(i - 1, j, t, Qx, a, b)
            + (t + 1) * hermite_E(i - 1, j, t + 1, Qx, a, b)
        )
    return (
        hermite_E(i, j - 1, t - 1, Qx, a, b) / (2 * p)
        + q * Qx / b * hermite_E(i, j - 1, t, Qx, a, b)
        + (t + 1) * hermite_E(i, j - 1, t + 1, Qx, a, b)
    )


def _prim_overlap(a, lmn1, A, b, lmn2, B):
    s = 1.0
    for x in range(3):
        s *= hermite_E(lmn1[x], lmn2[x], 0, A[x] - B[x], a, b)
    return s * (np.pi / (a + b)) ** 1.5


def overlap(bf1, bf2):
    s = 0.0
    for ci, ai in zip(bf1.coefs, bf1.exps):
        for cj, aj in zip(bf2.coefs, bf2.exps):
            s += ci * cj * _prim_overlap(ai, bf1.lmn, bf1.center, aj, bf2.lmn, bf2.center)
    return s


def _prim_kinetic(a, lmn1, A, b, lmn2, B):
    l2, m2, n2 = lmn2
    term0 = b * (2 * (l2 + m2 + n2) + 3) * _prim_overlap(a, lmn1, A, b, lmn2, B)
    term1 = (
        -2
        * b**2
        * (
            _prim_overlap(a, lmn1, A, b, (l2 + 2, m2, n2), B)
            + _prim_overlap(a, lmn1, A, b, (l2, m2 + 2, n2), B)
            + _prim_overlap(a, lmn1, A, b, (l2, m2, n2 + 2), B)
        )
    )
    term2 = -0.5 * (
        l2 * (l2 - 1) * _prim_overlap(a, lmn1, A, b, (l2 - 2, m2, n2), B)
        + m2 * (m2 - 1) * _prim_overlap(a, lmn1, A, b, (l2, m2 - 2, n2), B)
        + n2 * (n2 - 1) * _prim_overlap(a, lmn1, A, b, (l2, m2, n2 - 2), B)
    )
    return term0 + term1 + term2


def kinetic(bf1, bf2):
    s = 0.0
    for ci, ai in zip(bf1.coefs, bf1.exps):
        for cj, aj in zip(bf2.coefs, bf2.exps):
            s += ci * cj * _prim_kinetic(ai, bf1.lmn, bf1.center, aj, bf2.lmn, bf2.center)
    return s


def boys(m, x):
    return hyp1f1(m + 0.5, m + 1.5, -x) / (2.0 * m + 1.0)


def hermite_R(t, u, v, n, p, PC):
    """Hermite Coulomb integrals R^n_{tuv}."""
    if t < 0 or u < 0 or v < 0:
        return 0.0
    if t == u == v == 0:
        return (-2.0 * p) ** n * boys(n, p * float(PC @ PC))
    if t > 0:
        return (t - 1) * hermite_R(t - 2, u, v, n + 1, p, PC) + PC[0] * hermite_R(
            t - 1, u, v, n + 1, p, PC
        )
    if u > 0:
        return (u - 1) * hermite_R(t, u - 2, v, n + 1, p, PC) + PC[1] * hermite_R(
            t, u - 1, v, n + 1, p, PC
        )
    return (v - 1) * hermite_R(t, u, v - 2, n + 1, p, PC) + PC[2] * hermite_R(
        t, u, v - 1, n + 1, p, PC
    )


def _prim_nuclear(a, lmn1, A, b, lmn2, B, C):
    p = a + b
    P = (a * A + b * B) / p
    val = 0.0
    for t in range(lmn1[0] + lmn2[0] + 1):
        Ex = hermite_E(lmn1[0], lmn2[0], t, A[0] - B[0], a, b)
        for u in range(lmn1[1] + lmn2[1] + 1):
            Ey = hermite_E(lmn1[1], lmn2[1], u, A[1] - B[1], a, b)
            for v in range(lmn1[2] + lmn2[2] + 1):
                Ez = hermite_E(lmn1[2], lmn2[2], v, A[2] - B[2], a, b)
                val += Ex * Ey * Ez * hermite_R(t, u, v, 0, p, P - C)
    return 2.0 * np.pi / p * val


def nuclear(bf1, bf2, atoms):
    s = 0.0
    for symbol, center in atoms:
        Z = CHARGES[symbol]
        for ci, ai in zip(bf1.coefs, bf1.exps):
            for cj, aj in zip(bf2.coefs, bf2.exps):
                s -= Z * ci * cj * _prim_nuclear(
                    ai, bf1.lmn, bf1.center, aj, bf2.lmn, bf2.center, np.asarray(center)
                )
    return s


def _prim_eri(a, lmn1, A, b, lmn2, B, c, lmn3, C, d, lmn4, D):
    p = a + b
    q = c + d
    alpha = p * q / (p + q)
    P = (a * A + b * B) / p
    Q = (c * C + d * D) / q
    val = 0.0
    l1, m1, n1 = lmn1
    l2, m2, n2 = lmn2
    l3, m3, n3 = lmn3
    l4, m4, n4 = lmn4
    for t in range(l1 + l2 + 1):
        Ex1 = hermite_E(l1, l2, t, A[0] - B[0], a, b)
        for u in range(m1 + m2 + 1):
            Ey1 = hermite_E(m1, m2, u, A[1] - B[1], a, b)
            for v in range(n1 + n2 + 1):
                Ez1 = hermite_E(n1, n2, v, A[2] - B[2], a, b)
                E1 = Ex1 * Ey1 * Ez1
                if E1 == 0.0:
                    continue
                for tau in range(l3 + l4 + 1):
                    Ex2 = hermite_E(l3, l4, tau, C[0] - D[0], c, d)
                    for nu in range(m3 + m4 + 1):
                        Ey2 = hermite_E(m3, m4, nu, C[1] - D[1], c, d)
                        for phi in range(n3 + n4 + 1):
                            Ez2 = hermite_E(n3, n4, phi, C[2] - D[2], c, d)
                            E2 = Ex2 * Ey2 * Ez2
                            if E2 == 0.0:
                                continue
                            val += (
                                E1
                                * E2
                                * (-1.0) ** (tau + nu + phi)
                                * hermite_R(t + tau, u + nu, v + phi, 0, alpha, P - Q)
                            )
    return val * 2.0 * np.pi**2.5 / (p * q * np.sqrt(p + q))


def eri_tensor(basis):
    nb = len(basis)
    g = np.zeros((nb, nb, nb, nb))
    pair_list = [(i, j) for i in range(nb) for j in range(i + 1)]
    for pi, (i, j) in enumerate(pair_list):
        for k, l in pair_list[: pi + 1]:
            val = 0.0
            b1, b2, b3, b4 = basis[i], basis[j], basis[k], basis[l]
            for c1, a1 in zip(b1.coefs, b1.exps):
                for c2, a2 in zip(b2.coefs, b2.exps):
                    for c3, a3 in zip(b3.coefs, b3.exps):
                        for c4, a4 in zip(b4.coefs, b4.exps):
                            val += c1 * c2 * c3 * c4 * _prim_eri(
                                a1, b1.lmn, b1.center,
                                a2, b2.lmn, b2.center,
                                a3, b3.lmn, b3.center,
                                a4, b4.lmn, b4.center,
                            )
            for a, b in ((i, j), (j, i)):
                for c, d in ((k, l), (l, k)):
                    g[a, b, c, d] = val
                    g[c, d, a, b] = val
    return g


def nuclear_repulsion(atoms):
    e = 0.0
    for i, (si, ci) in enumerate(atoms):
        for j, (sj, cj) in enumerate(atoms[:i]):
            r = np.linalg.norm(np.asarray(ci) - np.asarray(cj))
            e += CHARGES[si] * CHARGES[sj] / r
    return e


def rhf(S, Hcore, g, n_occ, max_iter=200, tol=1e-12, level_shift=0.0):
    """Closed-shell SCF with DIIS; returns (E_elec, C, eps)."""
    es, U = np.linalg.eigh(S)
    X = U @ np.diag(es**-0.5) @ U.T
    F = Hcore.copy()
    D = np.zeros_like(S)
    energy = 0.0
    diis_F, diis_err = [], []
    for it in range(max_iter):
        Fp = X.T @ F @ X
        eps, Cp = np.linalg.eigh(Fp)
        C = X @ Cp
        Cocc = C[:, :n_occ]
        D = 2.0 * Cocc @ Cocc.T
        J = np.einsum("pqrs,rs->pq", g, D)
        K = np.einsum("prqs,rs->pq", g, D)
        F_new = Hcore + J - 0.5 * K
        err = F_new @ D @ S - S @ D @ F_new
        diis_F.append(F_new.copy())
        diis_err.append(err.copy())
        if len(diis_F) > 8:
            diis_F.pop(0)
            diis_err.pop(0)
        new_energy = 0.5 * np.einsum("pq,pq->", D, Hcore + F_new)
        if it > 1 and abs(new_energy - energy) < tol and np.max(np.abs(err)) < 1e-9:
            energy = new_energy
            F = F_new
            break
        energy = new_energy
        if len(diis_F) >= 2:
            m = len(diis_F)
            B = -np.ones((m + 1, m + 1))
            B[m, m] = 0.0
            for a in range(m):
                for b in range(m):
                    B[a, b] = np.sum(diis_err[a] * diis_err[b])
            rhs = np.zeros(m + 1)
            rhs[m] = -1.0
            try:
                w = np.linalg.solve(B, rhs)[:m]
                F = sum(wi * Fi for wi, Fi in zip(w, diis_F))
            except np.linalg.LinAlgError:
                F = F_new
        else:
            F = F_new
    # final canonical orbitals from the converged Fock matrix
    Fp = X.T @ F @ X
    eps, Cp = np.linalg.eigh(Fp)
    C = X @ Cp
    return energy, C, eps


def mo_integrals(Hcore, g, C):
    h_mo = C.T @ Hcore @ C
    g_mo = np.einsum("pqrs,pi,qj,rk,sl->ijkl", g, C, C, C, C, optimize=True)
    return h_mo, g_mo


def make_molecule(atoms_angstrom):
    atoms = [
        (sym, np.asarray(xyz, dtype=float) * ANGSTROM_TO_BOHR)
        for sym, xyz in atoms_angstrom
    ]
    basis = build_basis(atoms)
    nb = len(basis)
    S = np.array([[overlap(a, b) for b in basis] for a in basis])
    T = np.array([[kinetic(a, b) for b in basis] for a in basis])
    V = np.array([[nuclear(a, b, atoms) for b in basis] for a in basis])
    g = eri_tensor(basis)
    Hcore = T + V
    enuc = nuclear_repulsion(atoms)
    nelec = sum(CHARGES[s] for s, _ in atoms)
    n_occ = nelec // 2
    e_elec, C, eps = rhf(S, Hcore, g, n_occ)
    e_hf = e_elec + enuc
    h_mo, g_mo = mo_integrals(Hcore, g, C)
    return {
        "nb": nb,
        "nelec": nelec,
        "e_hf": e_hf,
        "enuc": enuc,
        "h_mo": h_mo,
        "g_mo": g_mo,
        "eps": eps,
    }


def write(mol, path, label):
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from ducctk.fcidump import FcidumpData, write_fcidump

    data = FcidumpData(
        norb=mol["nb"],
        nelec=mol["nelec"],
        ms2=0,
        orbsym=tuple([1] * mol["nb"]),
        core_energy=mol["enuc"],
        one_electron=mol["h_mo"],
        two_electron=mol["g_mo"],
    )
    write_fcidump(data, path)
    print(f"{label}: E_HF = {mol['e_hf']:.10f} -> {path}")


def main():
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    )
    outdir.mkdir(parents=True, exist_ok=True)

    h2 = make_molecule([("H", (0, 0, 0)), ("H", (0, 0, 0.7414))])
    print(f"H2 check: E_HF = {h2['e_hf']:.9f} (literature -1.116759307)")

    n2_eq = make_molecule([("N", (0, 0, 0)), ("N", (0, 0, 1.0))])
    write(n2_eq, outdir / "n2_sto3g_r1.0.fcidump", "N2 r=1.0 A")

    n2_st = make_molecule([("N", (0, 0, 0)), ("N", (0, 0, 2.5))])
    write(n2_st, outdir / "n2_sto3g_r2.5.fcidump", "N2 r=2.5 A")

    lih = make_molecule([("Li", (0, 0, 0)), ("H", (0, 0, 1.6))])
    write(lih, outdir / "lih_sto3g_r1.6.fcidump", "LiH r=1.6 A")


if __name__ == "__main__":
    main()
