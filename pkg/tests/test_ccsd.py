"""MP2/CCSD tests: perturbation-theory oracle, 2-electron exactness,
partition properties, and the N2 fixture."""

import numpy as np
import pytest

from ducctk import oracles
from ducctk.ccsd import (
    CcsdConfig,
    ClusterAmplitudes,
    ccsd_solve,
    mp2_amplitudes,
    partition_amplitudes,
)
from ducctk.determinants import Determinant, DeterminantSpace
from ducctk.errors import DegeneracyError
from ducctk.fcidump import ActiveSpaceSpec, parse_fcidump, spatial_to_spinorbital
from ducctk.ci import ground_state
from ducctk.operators import (
    BARE_VACUUM,
    NormalOrderedOperator,
    antisymmetrize_two_body,
    generator_from_cluster,
    normal_order,
)

from conftest import FIXTURES


def canonical_toy(rng, n_spatial, n_alpha, n_beta, v_scale=0.15):
    """Random spin-restricted instance whose Fock matrix is diagonal for
    the aufbau reference (so MP2's canonical assumptions hold)."""
    K = n_spatial
    n = 2 * K
    eps = np.sort(rng.normal(size=K)) * 1.0 + np.arange(K) * 2.0
    raw = rng.normal(scale=v_scale, size=(K, K, K, K))
    g = sum(
        raw.transpose(perm)
        for perm in [(0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2),
                     (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0)]
    ) / 8.0
    coulomb = np.einsum("prqs->pqrs", g)
    exchange = np.einsum("psqr->pqrs", g)
    v = np.zeros((n, n, n, n))
    for s1 in (0, 1):
        for s2 in (0, 1):
            v[s1::2, s2::2, s1::2, s2::2] += coulomb
            v[s1::2, s2::2, s2::2, s1::2] -= exchange
    ref = Determinant.aufbau(K, n_alpha, n_beta)
    gamma = ref.occupation_vector(n)
    h_spin = np.zeros((n, n))
    h_spin[0::2, 0::2] = np.diag(eps)
    h_spin[1::2, 1::2] = np.diag(eps)
    # subtract the two-electron Fock correction so the Fock matrix equals
    # diag(eps) exactly (canonical orbitals by construction)
    h_spin = h_spin - np.einsum("piqi,i->pq", v, gamma)
    op = NormalOrderedOperator(n, BARE_VACUUM, 0.0, h_spin, v)
    fock = normal_order(op, ref).one_body
    off = fock - np.diag(np.diag(fock))
    assert np.max(np.abs(off)) < 1e-12
    return op, ref


class TestMp2:
    def test_zero_two_body(self, rng):
        op, ref = canonical_toy(rng, 3, 2, 2, v_scale=0.0)
        amp, e = mp2_amplitudes(op, ref)
        assert e == 0.0
        assert amp.max_abs() == 0.0

    def test_antisymmetry(self, rng):
        op, ref = canonical_toy(rng, 3, 2, 1)
        amp, _ = mp2_amplitudes(op, ref)
        assert np.allclose(amp.t2, -amp.t2.transpose(1, 0, 2, 3))
        assert np.allclose(amp.t2, -amp.t2.transpose(0, 1, 3, 2))

    def test_matches_rayleigh_schroedinger_oracle(self, rng):
        # E2 = sum_n |<n|H|ref>|^2 / (F_ref - F_n) from dense matrices
        op, ref = canonical_toy(rng, 2, 1, 1)
        _, e_mp2 = mp2_amplitudes(op, ref)
        space = DeterminantSpace(2, 1, 1)
        M = oracles.to_fock_matrix(op, space)
        fock = normal_order(op, ref).one_body
        f_op = NormalOrderedOperator(
            4, BARE_VACUUM, 0.0, fock, np.zeros((4, 4, 4, 4))
        )
        Fdiag = np.diag(oracles.to_fock_matrix(f_op, space))
        i0 = space.index(ref)
        e2 = 0.0
        for m in range(len(space)):
            if m == i0:
                continue
            e2 += M[m, i0] ** 2 / (Fdiag[i0] - Fdiag[m])
        assert e_mp2 == pytest.approx(e2, abs=1e-10)

    def test_degenerate_denominator_raises(self, rng):
        n = 4
        h = np.diag([1.0, 1.0, 1.0, 1.0])  # occupied and virtual degenerate
        op = NormalOrderedOperator(n, BARE_VACUUM, 0.0, h, np.zeros((n,) * 4))
        with pytest.raises(DegeneracyError) as err:
            mp2_amplitudes(op, Determinant(1, 1))
        assert err.value.orbitals


class TestCcsd:
    def test_zero_two_body(self, rng):
        op, ref = canonical_toy(rng, 3, 2, 2, v_scale=0.0)
        result = ccsd_solve(op, ref)
        assert result.correlation_energy == pytest.approx(0.0, abs=1e-12)
        assert result.amplitudes.max_abs() < 1e-12

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_two_electron_exactness(self, seed):
        rng = np.random.default_rng(seed)
        op, ref = canonical_toy(rng, 3, 1, 1, v_scale=0.2)
        result = ccsd_solve(op, ref)
        space = DeterminantSpace(3, 1, 1)
        e_fci, _ = ground_state(op, space)
        assert result.total_energy == pytest.approx(e_fci, abs=1e-9)

    def test_energy_expression_matches_projection(self, rng):
        # <Phi| e^-T H e^T |Phi> from the dense oracle equals the CCSD energy
        op, ref = canonical_toy(rng, 3, 1, 1, v_scale=0.2)
        result = ccsd_solve(op, ref)
        space = DeterminantSpace(3, 1, 1)
        M = oracles.to_fock_matrix(op, space)
        amp = result.amplitudes
        sigma = generator_from_cluster(amp)
        # T (not sigma): build the pure excitation matrix T = T1 + T2
        n = op.n_spinorbitals
        occ = np.asarray(amp.occupied)
        virt = np.asarray(amp.virtuals)
        hT = np.zeros((n, n))
        hT[np.ix_(virt, occ)] = amp.t1
        vT = np.zeros((n, n, n, n))
        vT[np.ix_(virt, virt, occ, occ)] = amp.t2
        Top = NormalOrderedOperator(n, BARE_VACUUM, 0.0, hT, vT)
        MT = oracles.to_fock_matrix(Top, space)
        import scipy.linalg

        eT = scipy.linalg.expm(MT)
        eTm = scipy.linalg.expm(-MT)
        i0 = space.index(ref)
        e_proj = (eTm @ M @ eT)[i0, i0]
        assert e_proj == pytest.approx(result.total_energy, abs=1e-9)

    def test_n2_fixture_between_mp2_and_fci(self):
        data = parse_fcidump(FIXTURES / "n2_sto3g_r1.0.fcidump")
        op = spatial_to_spinorbital(data)
        ref = Determinant.aufbau(data.norb, data.n_alpha, data.n_beta)
        amp_mp2, e_mp2 = mp2_amplitudes(op, ref)
        result = ccsd_solve(op, ref)
        space = DeterminantSpace(data.norb, data.n_alpha, data.n_beta)
        e_fci, _ = ground_state(op, space)
        e_corr_fci = e_fci - result.reference_energy
        assert abs(result.correlation_energy - e_corr_fci) < abs(e_mp2 - e_corr_fci)
        assert result.total_energy > e_fci  # CCSD is not variational but
        # here it underbinds relative to FCI at equilibrium


class TestPartition:
    def test_all_active_gives_zero_external(self, rng):
        op, ref = canonical_toy(rng, 3, 2, 1)
        amp, _ = mp2_amplitudes(op, ref)
        spec = ActiveSpaceSpec(0, (0, 1, 2), 3)
        t_int, t_ext = partition_amplitudes(amp, spec)
        assert t_ext.max_abs() == 0.0
        assert np.allclose(t_int.t2, amp.t2)

    def test_no_active_virtuals(self, rng):
        op, ref = canonical_toy(rng, 4, 2, 2)
        result = ccsd_solve(op, ref)
        spec = ActiveSpaceSpec(0, (0, 1), 4)  # occupied spatials only
        t_int, t_ext = partition_amplitudes(result.amplitudes, spec)
        assert t_int.max_abs() == 0.0  # every t2/t1 carries a virtual label
        assert np.allclose(t_ext.t2, result.amplitudes.t2)

    def test_sum_reconstructs(self, rng):
        op, ref = canonical_toy(rng, 4, 2, 2)
        amp, _ = mp2_amplitudes(op, ref)
        for active in [(0, 1, 2), (1, 2), (0, 3)]:
            nel = 2 * sum(1 for p in active if p < 2)
            spec = ActiveSpaceSpec(0, active, nel)
            t_int, t_ext = partition_amplitudes(amp, spec)
            total = t_int + t_ext
            assert np.array_equal(total.t1, amp.t1)
            assert np.array_equal(total.t2, amp.t2)

    def test_save_load_round_trip(self, rng, tmp_path):
        op, ref = canonical_toy(rng, 3, 2, 1)
        result = ccsd_solve(op, ref)
        path = tmp_path / "amps.txt"
        result.amplitudes.save_text(path)
        back = ClusterAmplitudes.load_text(
            path,
            result.amplitudes.n_spinorbitals,
            result.amplitudes.occupied,
            result.amplitudes.virtuals,
        )
        assert np.allclose(back.t1, result.amplitudes.t1, atol=1e-15)
        assert np.allclose(back.t2, result.amplitudes.t2, atol=1e-15)
