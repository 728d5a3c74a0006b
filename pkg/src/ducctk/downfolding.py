"""Downfolded effective Hamiltonians in active spaces.

The effective operator is A = H + [H_N, sigma] + 1/2 [[F_N, sigma], sigma]
with each commutator truncated at normal-ordered rank 2, sigma built from
the external T1/T2 amplitudes of a CCSD solution, and the result projected
onto the active space with inactive-occupied orbitals folded into the
scalar and one-body parts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ccsd import CcsdConfig, CcsdResult, ClusterAmplitudes, ccsd_solve, partition_amplitudes
from .determinants import Determinant, occupied_list
from .errors import InvalidGeneratorError, InvalidReferenceError
from .fcidump import ActiveSpaceSpec, FcidumpData, spatial_to_spinorbital
from .operators import (
    BARE_VACUUM,
    AntiHermitianGenerator,
    BareVacuum,
    FermiVacuum,
    NormalOrderedOperator,
    commutator_truncated,
    fluctuation_part,
    fock_part,
    generator_from_cluster,
    normal_order,
    to_bare_vacuum,
)

logger = logging.getLogger(__name__)


def _external_violation(sigma: AntiHermitianGenerator, active_spinorbitals) -> float:
    """Largest amplitude whose indices are all active (must be zero)."""
    act = np.zeros(sigma.n_spinorbitals, dtype=bool)
    act[list(active_spinorbitals)] = True
    m1 = act[:, None] & act[None, :]
    m2 = (
        act[:, None, None, None]
        & act[None, :, None, None]
        & act[None, None, :, None]
        & act[None, None, None, :]
    )
    return max(
        np.max(np.abs(sigma.one_body[m1]), initial=0.0),
        np.max(np.abs(sigma.two_body[m2]), initial=0.0),
    )


def build_ducc_hamiltonian(
    h: NormalOrderedOperator,
    sigma_ext: AntiHermitianGenerator,
    reference: Determinant,
    active_spec: ActiveSpaceSpec | None = None,
    truncation_vacuum: str = "fermi",
    diagnostics: dict | None = None,
) -> NormalOrderedOperator:
    """Second-order, two-body-truncated similarity transform of h.

    Returns the bare-vacuum operator over the full spin-orbital set,
    symmetrized to enforce Hermiticity; the pre-symmetrization deviation is
    logged (and stored in `diagnostics` when a dict is passed).
    """
    sigma_ext.validate()
    if active_spec is not None:
        worst = _external_violation(sigma_ext, active_spec.active_spinorbitals())
        if worst > 1e-12:
            raise InvalidGeneratorError(
                f"sigma_ext carries all-active amplitudes (max {worst:.3e})"
            )
    h_fermi = normal_order(h, reference)
    hn = fluctuation_part(h_fermi)
    fn = fock_part(h_fermi)
    if truncation_vacuum == "fermi":
        sigma = AntiHermitianGenerator(
            sigma_ext.n_spinorbitals, h_fermi.vacuum,
            sigma_ext.one_body, sigma_ext.two_body,
        )
        c1 = commutator_truncated(hn, sigma, 2)
        inner = commutator_truncated(fn, sigma, 2)
        c2 = commutator_truncated(inner, sigma, 2)
        a_fermi = h_fermi + c1 + 0.5 * c2
        a = to_bare_vacuum(a_fermi)
    elif truncation_vacuum == "bare":
        sigma = AntiHermitianGenerator(
            sigma_ext.n_spinorbitals, BARE_VACUUM,
            sigma_ext.one_body, sigma_ext.two_body,
        )
        hn_b = to_bare_vacuum(hn)
        fn_b = to_bare_vacuum(fn)
        c1 = commutator_truncated(hn_b, sigma, 2)
        inner = commutator_truncated(fn_b, sigma, 2)
        c2 = commutator_truncated(inner, sigma, 2)
        a = h + c1 + 0.5 * c2
    else:
        raise ValueError(f"unknown truncation vacuum {truncation_vacuum!r}")
    asym = a.hermiticity_violation()
    logger.info("downfolded operator pre-symmetrization asymmetry %.3e", asym)
    if diagnostics is not None:
        diagnostics["presymmetrization_asymmetry"] = float(asym)
    return a.symmetrized()


def project_active(
    a: NormalOrderedOperator,
    spec: ActiveSpaceSpec,
    reference: Determinant,
) -> NormalOrderedOperator:
    """Restrict to active spin orbitals, folding inactive-occupied orbitals
    into the scalar/one-body parts and dropping inactive virtuals.

    Matches (P + Q_int) M (P + Q_int) on the active determinant space with
    the frozen core fully occupied.
    """
    if not isinstance(a.vacuum, BareVacuum):
        a = to_bare_vacuum(a)
    n = a.n_spinorbitals
    n_spatial = n // 2
    active_spatial = sorted(spec.active_orbitals)
    if active_spatial and (max(active_spatial) >= n_spatial or min(active_spatial) < 0):
        raise InvalidReferenceError(
            f"active orbitals {active_spatial} outside 0..{n_spatial - 1}"
        )
    active_spin = list(spec.active_spinorbitals())
    occ_spin = set(reference.occupied_spinorbitals())
    core_spin = sorted(occ_spin - set(active_spin))
    gamma_core = np.zeros(n)
    gamma_core[core_spin] = 1.0

    scalar = (
        a.scalar
        + float(np.einsum("ii,i->", a.one_body, gamma_core))
        + 0.5 * float(np.einsum("ijij,i,j->", a.two_body, gamma_core, gamma_core))
    )
    h_eff = a.one_body + np.einsum("piqi,i->pq", a.two_body, gamma_core)
    idx = np.asarray(active_spin, dtype=int)
    h_act = h_eff[np.ix_(idx, idx)]
    v_act = a.two_body[np.ix_(idx, idx, idx, idx)]
    return NormalOrderedOperator(len(idx), BARE_VACUUM, scalar, h_act, v_act)


def active_reference(spec: ActiveSpaceSpec, reference: Determinant) -> Determinant:
    """Reference determinant re-expressed over the active orbitals."""
    alpha = beta = 0
    for new, p in enumerate(sorted(spec.active_orbitals)):
        if (reference.alpha >> p) & 1:
            alpha |= 1 << new
        if (reference.beta >> p) & 1:
            beta |= 1 << new
    return Determinant(alpha, beta)


def _remap_spec(spec: ActiveSpaceSpec, kept_spatial) -> ActiveSpaceSpec:
    """Re-express an active-orbital list after dropping frozen orbitals."""
    pos = {p: i for i, p in enumerate(sorted(kept_spatial))}
    return ActiveSpaceSpec(
        0, tuple(pos[p] for p in spec.active_orbitals), spec.n_active_electrons
    )


@dataclass
class DownfoldConfig:
    ccsd: CcsdConfig = field(default_factory=CcsdConfig)
    truncation_vacuum: str = "fermi"
    freeze: str = "before-ccsd"  # or "after-ccsd"
    amplitude_file: str | None = None  # externally supplied T1/T2 (text)


@dataclass
class DownfoldResult:
    active_operator: NormalOrderedOperator
    active_spec: ActiveSpaceSpec
    reference: Determinant  # reference over active orbitals
    ccsd: CcsdResult | None
    metadata: dict


def downfold(
    data: FcidumpData,
    spec: ActiveSpaceSpec,
    config: DownfoldConfig | None = None,
) -> DownfoldResult:
    """FCIDUMP -> HF reference -> CCSD -> sigma_ext -> effective operator ->
    active projection."""
    config = config or DownfoldConfig()
    h_full = spatial_to_spinorbital(data)
    ref_full = Determinant.aufbau(data.norb, data.n_alpha, data.n_beta)

    nf = spec.n_frozen_core
    if nf > 0 and config.freeze == "before-ccsd":
        kept = [p for p in range(data.norb) if p >= nf]
        freeze_spec = ActiveSpaceSpec(nf, tuple(kept), data.nelec - 2 * nf)
        h_work = project_active(h_full, freeze_spec, ref_full)
        ref_work = active_reference(freeze_spec, ref_full)
        work_spec = _remap_spec(spec, kept)
    else:
        h_work = h_full
        ref_work = ref_full
        # frozen cores are inactive ("after-ccsd" folding handles them in
        # the projection step)
        work_spec = ActiveSpaceSpec(0, spec.active_orbitals, spec.n_active_electrons)

    if config.amplitude_file:
        occ = tuple(ref_work.occupied_spinorbitals())
        virt = tuple(
            p for p in range(h_work.n_spinorbitals) if p not in set(occ)
        )
        amp = ClusterAmplitudes.load_text(
            config.amplitude_file, h_work.n_spinorbitals, occ, virt
        )
        ccsd_result = None
    else:
        ccsd_result = ccsd_solve(h_work, ref_work, config.ccsd)
        amp = ccsd_result.amplitudes

    _, t_ext = partition_amplitudes(amp, work_spec)
    sigma_ext = generator_from_cluster(t_ext)
    diagnostics: dict = {}
    a = build_ducc_hamiltonian(
        h_work,
        sigma_ext,
        ref_work,
        active_spec=work_spec,
        truncation_vacuum=config.truncation_vacuum,
        diagnostics=diagnostics,
    )
    a_act = project_active(a, work_spec, ref_work)
    ref_act = active_reference(work_spec, ref_work)
    metadata = {
        "active_orbitals": list(spec.active_orbitals),
        "n_frozen_core": spec.n_frozen_core,
        "n_active_electrons": spec.n_active_electrons,
        "freeze": config.freeze,
        "truncation_vacuum": config.truncation_vacuum,
        "presymmetrization_asymmetry": diagnostics.get(
            "presymmetrization_asymmetry", 0.0
        ),
        "external_t1_norm": float(np.linalg.norm(t_ext.t1)),
        "external_t2_norm": float(np.linalg.norm(t_ext.t2)),
    }
    if ccsd_result is not None:
        metadata["ccsd_iterations"] = ccsd_result.iterations
        metadata["ccsd_correlation_energy"] = ccsd_result.correlation_energy
        metadata["reference_energy"] = ccsd_result.reference_energy
    return DownfoldResult(a_act, spec, ref_act, ccsd_result, metadata)
