"""Downfolding tests: matrix oracles for the effective-Hamiltonian build
and the active projection, plus the end-to-end pipeline on fixtures."""

import numpy as np
import pytest

from ducctk import oracles
from ducctk.ccsd import ClusterAmplitudes
from ducctk.ci import ground_state
from ducctk.determinants import Determinant, DeterminantSpace
from ducctk.downfolding import (
    DownfoldConfig,
    active_reference,
    build_ducc_hamiltonian,
    downfold,
    project_active,
)
from ducctk.errors import InvalidGeneratorError
from ducctk.fcidump import ActiveSpaceSpec, parse_fcidump, spatial_to_spinorbital
from ducctk.operators import (
    BARE_VACUUM,
    FermiVacuum,
    NormalOrderedOperator,
    fluctuation_part,
    fock_part,
    generator_from_cluster,
    normal_order,
    to_bare_vacuum,
)

from conftest import FIXTURES, random_hermitian_operator


def random_external_sigma(rng, n, reference, active_spin, scale=0.1):
    """Anti-Hermitian generator with CCSD-external ph structure."""
    occ = tuple(reference.occupied_spinorbitals())
    virt = tuple(p for p in range(n) if p not in set(occ))
    amp = ClusterAmplitudes.zeros(n, occ, virt)
    amp.t1 += rng.normal(scale=scale, size=amp.t1.shape)
    raw = rng.normal(scale=scale, size=amp.t2.shape)
    amp.t2 += (
        raw
        - raw.transpose(1, 0, 2, 3)
        - raw.transpose(0, 1, 3, 2)
        + raw.transpose(1, 0, 3, 2)
    )
    act = set(active_spin)
    oa = np.array([p in act for p in occ])
    va = np.array([p in act for p in virt])
    amp.t1[np.ix_(va, oa)] = 0.0
    amp.t2[np.ix_(va, va, oa, oa)] = 0.0
    return generator_from_cluster(amp)


def assert_operator_close(a, b, tol=1e-10):
    assert abs(a.scalar - b.scalar) < tol
    assert np.max(np.abs(a.one_body - b.one_body)) < tol
    assert np.max(np.abs(a.two_body - b.two_body)) < tol


class TestBuildDucc:
    def test_zero_sigma_returns_bare_hamiltonian(self, rng):
        n = 6
        h = random_hermitian_operator(n, rng)
        ref = Determinant.aufbau(3, 1, 1)
        occ = tuple(ref.occupied_spinorbitals())
        virt = tuple(p for p in range(n) if p not in set(occ))
        sigma = generator_from_cluster(ClusterAmplitudes.zeros(n, occ, virt))
        a = build_ducc_hamiltonian(h, sigma, ref)
        assert_operator_close(a, h, tol=1e-12)

    def test_output_hermitian(self, rng):
        n = 6
        h = random_hermitian_operator(n, rng)
        ref = Determinant.aufbau(3, 2, 1)
        sigma = random_external_sigma(rng, n, ref, active_spin=(0, 1, 2, 3))
        a = build_ducc_hamiltonian(h, sigma, ref)
        assert a.hermiticity_violation() < 1e-12

    def test_all_active_sigma_rejected(self, rng):
        n = 6
        h = random_hermitian_operator(n, rng)
        ref = Determinant.aufbau(3, 1, 1)
        occ = tuple(ref.occupied_spinorbitals())
        virt = tuple(p for p in range(n) if p not in set(occ))
        amp = ClusterAmplitudes.zeros(n, occ, virt)
        amp.t1 += 0.1
        sigma = generator_from_cluster(amp)
        spec = ActiveSpaceSpec(0, (0, 1, 2), 2)  # everything active
        with pytest.raises(InvalidGeneratorError):
            build_ducc_hamiltonian(h, sigma, ref, active_spec=spec)

    def _matrix_route(self, h, sigma, ref):
        """Independent assembly: Fock-space matrices, commutators, rank-2
        extraction after each commutator, all relative to the Fermi vacuum."""
        n = h.n_spinorbitals
        hf = normal_order(h, ref)
        vac_op = hf  # vacuum tag carrier
        M_hn = oracles.full_fock_matrix(fluctuation_part(hf))
        M_fn = oracles.full_fock_matrix(fock_part(hf))
        M_sigma = oracles.full_fock_matrix(
            NormalOrderedOperator(n, BARE_VACUUM, 0.0, sigma.one_body, sigma.two_body)
        )
        c1 = oracles.extract_rank2_operator(
            M_hn @ M_sigma - M_sigma @ M_hn, vac_op
        )
        inner = oracles.extract_rank2_operator(
            M_fn @ M_sigma - M_sigma @ M_fn, vac_op
        )
        M_inner = oracles.full_fock_matrix(inner)
        c2 = oracles.extract_rank2_operator(
            M_inner @ M_sigma - M_sigma @ M_inner, vac_op
        )
        a_fermi = hf + c1 + 0.5 * c2
        return to_bare_vacuum(a_fermi).symmetrized()

    @pytest.mark.parametrize("seed", [11, 12, 13])
    def test_matches_matrix_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        h = random_hermitian_operator(n, rng, scale=0.5)
        ref = Determinant.aufbau(3, 1, 1)
        sigma = random_external_sigma(rng, n, ref, active_spin=(0, 1, 2, 3), scale=0.2)
        got = build_ducc_hamiltonian(h, sigma, ref)
        expected = self._matrix_route(h, sigma, ref)
        assert_operator_close(got, expected, tol=1e-10)


class TestProjectActive:
    def test_all_orbitals_active_is_identity(self, rng):
        n = 8
        op = random_hermitian_operator(n, rng)
        ref = Determinant.aufbau(4, 2, 2)
        spec = ActiveSpaceSpec(0, (0, 1, 2, 3), 4)
        got = project_active(op, spec, ref)
        assert_operator_close(got, op, tol=1e-12)

    def test_core_folding_scalar(self, rng):
        n = 8
        h = rng.normal(size=(n, n))
        h = 0.5 * (h + h.T)
        op = NormalOrderedOperator(n, BARE_VACUUM, 0.0, h, np.zeros((n,) * 4))
        ref = Determinant.aufbau(4, 2, 2)
        spec = ActiveSpaceSpec(1, (1, 2, 3), 2)
        got = project_active(op, spec, ref)
        # frozen spatial 0, doubly occupied: scalar gains h[0a,0a] + h[0b,0b]
        assert got.scalar == pytest.approx(h[0, 0] + h[1, 1], abs=1e-12)

    @pytest.mark.parametrize("active", [(1, 2), (0, 1, 2), (1, 3)])
    def test_spectrum_matches_projected_matrix(self, rng, active):
        K, na, nb = 4, 2, 2
        n = 2 * K
        op = random_hermitian_operator(n, rng)
        ref = Determinant.aufbau(K, na, nb)
        core_spatial = [
            p
            for p in range(K)
            if p not in active and ((ref.alpha >> p) & 1 or (ref.beta >> p) & 1)
        ]
        n_act_el = na + nb - 2 * len(core_spatial)
        if n_act_el <= 0 or n_act_el > 2 * len(active):
            pytest.skip("inconsistent toy spec")
        spec = ActiveSpaceSpec(0, tuple(active), n_act_el)
        act_op = project_active(op, spec, ref)
        act_ref = active_reference(spec, ref)
        act_space = DeterminantSpace(len(active), act_ref.n_alpha, act_ref.n_beta)
        got = np.linalg.eigvalsh(oracles.to_fock_matrix(act_op, act_space))

        # embed the active determinants into the full space with the core
        # occupied, then take the corresponding block of the full matrix
        full_space = DeterminantSpace(K, na, nb)
        M = oracles.to_fock_matrix(op, full_space)
        core_a = core_b = 0
        for p in core_spatial:
            core_a |= (ref.alpha >> p & 1) << p
            core_b |= (ref.beta >> p & 1) << p
        sorted_active = sorted(active)

        def embed(det):
            alpha, beta = core_a, core_b
            for new, p in enumerate(sorted_active):
                if (det.alpha >> new) & 1:
                    alpha |= 1 << p
                if (det.beta >> new) & 1:
                    beta |= 1 << p
            return Determinant(alpha, beta)

        idx = [full_space.index(embed(d)) for d in act_space.determinants()]
        block = M[np.ix_(idx, idx)]
        expected = np.linalg.eigvalsh(block)
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_ground_energy_matches_projected_matrix(self, rng):
        K = 3
        op = random_hermitian_operator(2 * K, rng)
        ref = Determinant.aufbau(K, 1, 1)
        spec = ActiveSpaceSpec(0, (0, 1), 2)
        act_op = project_active(op, spec, ref)
        act_space = DeterminantSpace(2, 1, 1)
        e, _ = ground_state(act_op, act_space)
        full_space = DeterminantSpace(K, 1, 1)
        M = oracles.to_fock_matrix(op, full_space)
        idx = [
            full_space.index(d)
            for d in full_space.determinants()
            if (d.alpha | d.beta) & 0b100 == 0
        ]
        expected = np.linalg.eigvalsh(M[np.ix_(idx, idx)])[0]
        assert e == pytest.approx(expected, abs=1e-10)


class TestDownfoldPipeline:
    def test_all_orbitals_active_reproduces_full_fci(self):
        data = parse_fcidump(FIXTURES / "lih_sto3g_r1.6.fcidump")
        op = spatial_to_spinorbital(data)
        full_space = DeterminantSpace(data.norb, data.n_alpha, data.n_beta)
        e_full, _ = ground_state(op, full_space)
        spec = ActiveSpaceSpec.from_counts(data.nelec, data.norb)
        result = downfold(data, spec)
        e_act, _ = ground_state(
            result.active_operator,
            DeterminantSpace(data.norb, data.n_alpha, data.n_beta),
        )
        assert e_act == pytest.approx(e_full, abs=1e-10)
        assert result.metadata["external_t2_norm"] == 0.0

    def test_ducc_beats_bare_active_on_lih(self):
        # 6-orbital fixture, 4 active orbitals
        data = parse_fcidump(FIXTURES / "lih_sto3g_r1.6.fcidump")
        op = spatial_to_spinorbital(data)
        full_space = DeterminantSpace(data.norb, data.n_alpha, data.n_beta)
        e_full, _ = ground_state(op, full_space)

        spec = ActiveSpaceSpec.from_counts(data.nelec, 4)
        ref = Determinant.aufbau(data.norb, data.n_alpha, data.n_beta)
        act_space = DeterminantSpace(4, 2, 2)
        bare = project_active(op, spec, ref)
        e_bare, _ = ground_state(bare, act_space)

        result = downfold(data, spec)
        e_ducc, _ = ground_state(result.active_operator, act_space)
        assert abs(e_ducc - e_full) < abs(e_bare - e_full)
        assert result.metadata["presymmetrization_asymmetry"] < 1e-8

    def test_frozen_core_modes_agree_roughly(self):
        data = parse_fcidump(FIXTURES / "lih_sto3g_r1.6.fcidump")
        spec = ActiveSpaceSpec(1, (1, 2, 3), 2)
        act_space = DeterminantSpace(3, 1, 1)
        e = {}
        for mode in ("before-ccsd", "after-ccsd"):
            result = downfold(data, spec, DownfoldConfig(freeze=mode))
            e[mode], _ = ground_state(result.active_operator, act_space)
        # the two folding orders differ only through correlation of the
        # frozen core; a loose band is expected
        assert abs(e["before-ccsd"] - e["after-ccsd"]) < 5e-3

    def test_zero_frozen_core_no_op(self):
        data = parse_fcidump(FIXTURES / "lih_sto3g_r1.6.fcidump")
        spec4 = ActiveSpaceSpec.from_counts(data.nelec, 4)
        r1 = downfold(data, spec4)
        r2 = downfold(data, spec4, DownfoldConfig(freeze="after-ccsd"))
        assert_operator_close(r1.active_operator, r2.active_operator, tol=1e-12)
