"""CI engine tests against the dense Fock-space oracle."""

import numpy as np
import pytest

from ducctk import oracles
from ducctk.ci import (
    CIVector,
    CompiledOperator,
    GroundStateConfig,
    apply_operator,
    delta_norm,
    expectation_value,
    ground_state,
    overlap,
)
from ducctk.determinants import Determinant, DeterminantSpace
from ducctk.errors import ContractError, DegenerateVectorError
from ducctk.operators import BARE_VACUUM, NormalOrderedOperator, normal_order

from conftest import random_hermitian_operator


class TestDeterminantSpace:
    def test_size_and_lookup(self):
        space = DeterminantSpace(5, 3, 2)
        from math import comb

        assert len(space) == comb(5, 3) * comb(5, 2)
        for i in [0, 7, len(space) - 1]:
            assert space.index(space.determinant(i)) == i

    def test_occupation_string_round_trip(self):
        det = Determinant(alpha=0b101, beta=0b011)
        s = det.to_occupation_string(3)
        assert s == "110110"[::1] or len(s) == 6
        assert Determinant.from_occupation_string(s) == det


class TestApplyOperator:
    def test_scalar_identity(self, rng):
        space = DeterminantSpace(3, 2, 1)
        op = NormalOrderedOperator(
            6, BARE_VACUUM, 1.75, np.zeros((6, 6)), np.zeros((6, 6, 6, 6))
        )
        v = CIVector(space, rng.normal(size=len(space)))
        w = apply_operator(op, v)
        assert np.allclose(w.data, 1.75 * v.data)

    @pytest.mark.parametrize("na,nb", [(1, 1), (2, 1), (2, 2), (3, 2)])
    def test_matches_dense_oracle(self, rng, na, nb):
        space = DeterminantSpace(3, na, nb)
        op = random_hermitian_operator(6, rng)
        M = oracles.to_fock_matrix(op, space)
        x = rng.normal(size=len(space))
        got = apply_operator(op, CIVector(space, x)).data
        assert np.max(np.abs(got - M @ x)) < 1e-12

    def test_matches_dense_oracle_4_orbitals(self, rng):
        space = DeterminantSpace(4, 2, 2)
        op = random_hermitian_operator(8, rng)
        M = oracles.to_fock_matrix(op, space)
        x = rng.normal(size=len(space))
        got = apply_operator(op, CIVector(space, x)).data
        assert np.max(np.abs(got - M @ x)) < 1e-12

    def test_diagonal_matches_dense(self, rng):
        space = DeterminantSpace(3, 2, 2)
        op = random_hermitian_operator(6, rng)
        comp = CompiledOperator(op, space)
        M = oracles.to_fock_matrix(op, space)
        assert np.allclose(comp.diagonal(), np.diag(M), atol=1e-12)

    def test_rayleigh_quotient_equals_normal_order_scalar(self, rng):
        space = DeterminantSpace(4, 2, 2)
        op = random_hermitian_operator(8, rng)
        ref = Determinant.aufbau(4, 2, 2)
        v = CIVector.from_determinant(space, ref)
        assert expectation_value(op, v) == pytest.approx(
            normal_order(op, ref).scalar, abs=1e-11
        )


class TestTransitionDensities:
    def test_against_dense_strings(self, rng):
        space = DeterminantSpace(3, 2, 1)
        op = random_hermitian_operator(6, rng)
        comp = CompiledOperator(op, space)
        l = rng.normal(size=len(space))
        r = rng.normal(size=len(space))
        G1a, G1b, G2aa, G2bb, G2ab = comp.transition_densities(l, r)
        K = 3
        # dense one-body alpha check: E^a_PQ as an interleaved-tensor operator
        for P in range(K):
            for Q in range(K):
                h = np.zeros((6, 6))
                h[2 * P, 2 * Q] = 1.0
                M = oracles.to_fock_matrix(
                    NormalOrderedOperator(6, BARE_VACUUM, 0.0, h, np.zeros((6,) * 4)),
                    space,
                )
                assert G1a[P, Q] == pytest.approx(l @ M @ r, abs=1e-12)
                h = np.zeros((6, 6))
                h[2 * P + 1, 2 * Q + 1] = 1.0
                M = oracles.to_fock_matrix(
                    NormalOrderedOperator(6, BARE_VACUUM, 0.0, h, np.zeros((6,) * 4)),
                    space,
                )
                assert G1b[P, Q] == pytest.approx(l @ M @ r, abs=1e-12)
        # G2ab[P,R,Q,S] = <l| E^a_PR E^b_QS |r>
        for P in range(K):
            for R in range(K):
                for Q in range(K):
                    for S in range(K):
                        ha = np.zeros((6, 6))
                        ha[2 * P, 2 * R] = 1.0
                        hb = np.zeros((6, 6))
                        hb[2 * Q + 1, 2 * S + 1] = 1.0
                        Ma = oracles.to_fock_matrix(
                            NormalOrderedOperator(6, BARE_VACUUM, 0, ha, np.zeros((6,) * 4)),
                            space,
                        )
                        Mb = oracles.to_fock_matrix(
                            NormalOrderedOperator(6, BARE_VACUUM, 0, hb, np.zeros((6,) * 4)),
                            space,
                        )
                        assert G2ab[P, R, Q, S] == pytest.approx(
                            l @ Ma @ Mb @ r, abs=1e-12
                        )


class TestGroundState:
    def test_diagonal_operator(self):
        space = DeterminantSpace(3, 1, 1)
        n = 6
        h = np.zeros((n, n))
        h[0, 0], h[2, 2], h[4, 4] = 1.0, 2.0, 3.0  # alpha spatial energies
        h[1, 1], h[3, 3], h[5, 5] = 1.0, 2.0, 3.0
        op = NormalOrderedOperator(n, BARE_VACUUM, 0.0, h, np.zeros((n,) * 4))
        e, v = ground_state(op, space)
        assert e == pytest.approx(2.0)  # one alpha + one beta in spatial 0
        assert v.data[space.index(Determinant(1, 1))] == pytest.approx(1.0)

    def test_davidson_agrees_with_dense(self, rng):
        space = DeterminantSpace(4, 2, 2)
        op = random_hermitian_operator(8, rng)
        e_dense, v_dense = ground_state(op, space)
        cfg = GroundStateConfig(dense_cap=1)  # force Davidson
        e_dav, v_dav = ground_state(op, space, cfg)
        assert e_dav == pytest.approx(e_dense, abs=1e-9)
        assert overlap(v_dense, v_dav) == pytest.approx(1.0, abs=1e-8)

    def test_variational_bound(self, rng):
        space = DeterminantSpace(3, 2, 1)
        op = random_hermitian_operator(6, rng)
        e0, _ = ground_state(op, space)
        for _ in range(10):
            v = CIVector(space, rng.normal(size=len(space)))
            assert expectation_value(op, v) >= e0 - 1e-9

    def test_non_hermitian_rejected(self, rng):
        space = DeterminantSpace(3, 2, 1)
        op = random_hermitian_operator(6, rng)
        h = op.one_body.copy()
        h[0, 1] += 1e-3
        with pytest.raises(ContractError):
            ground_state(op.replace(one_body=h), space)


class TestDiagnostics:
    def test_self_overlap(self, rng):
        space = DeterminantSpace(3, 2, 1)
        v = CIVector(space, rng.normal(size=len(space))).normalized()
        assert overlap(v, v) == pytest.approx(1.0, abs=1e-12)
        assert delta_norm(v, v) == pytest.approx(0.0, abs=1e-8)

    def test_orthogonal_determinants(self):
        space = DeterminantSpace(3, 2, 1)
        a = CIVector.from_determinant(space, space.determinant(0))
        b = CIVector.from_determinant(space, space.determinant(1))
        assert overlap(a, b) == 0.0
        assert delta_norm(a, b) == pytest.approx(np.sqrt(2.0))

    def test_delta_norm_identity(self, rng):
        space = DeterminantSpace(3, 2, 2)
        a = CIVector(space, rng.normal(size=len(space))).normalized()
        b = CIVector(space, rng.normal(size=len(space))).normalized()
        assert delta_norm(a, b) ** 2 == pytest.approx(2 - 2 * overlap(a, b), abs=1e-12)
        # brute-force phase minimization
        brute = min(
            np.linalg.norm(a.data - ph * b.data) for ph in (1.0, -1.0)
        )
        assert delta_norm(a, b) == pytest.approx(brute, abs=1e-12)

    def test_zero_norm_rejected(self):
        space = DeterminantSpace(3, 2, 1)
        z = CIVector.zero(space)
        v = CIVector.from_determinant(space, space.determinant(0))
        with pytest.raises(DegenerateVectorError):
            overlap(z, v)

    def test_paper_consistency_pairs(self):
        # delta = sqrt(2 - 2*ov) against the tabulated diagnostics
        for ov, delta in [(0.99998511, 0.00545666), (0.99999898, 0.00142449)]:
            got = np.sqrt(2 - 2 * ov)
            assert abs(got - delta) / delta < 5e-3
