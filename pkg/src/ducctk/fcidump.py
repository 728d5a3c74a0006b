"""FCIDUMP ingestion/export, spin-orbital mapping, reference-vector files.

FCIDUMP follows the Molpro convention: a namelist header
(&FCI NORB=..., NELEC=..., MS2=..., ORBSYM=..., &END), then lines
"value i j k l" with 1-based indices; k = l = 0 marks one-electron
integrals h(i, j), i = j = k = l = 0 the core energy, and full index rows
the chemist-notation integrals (ij|kl).  Unlisted permutations are filled
by 8-fold symmetry; missing entries are zero.  Orbital symmetry labels are
parsed and stored but ignored in all computations (C1 treatment).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ci import CIVector
from .determinants import Determinant, DeterminantSpace
from .errors import (
    DegenerateVectorError,
    FcidumpParseError,
    NotSpatiallyRepresentableError,
    ReferenceVectorFormatError,
)
from .operators import BARE_VACUUM, BareVacuum, NormalOrderedOperator


@dataclass
class FcidumpData:
    norb: int
    nelec: int
    ms2: int
    orbsym: tuple
    core_energy: float
    one_electron: np.ndarray  # h(p, q), spatial, chemist indexing
    two_electron: np.ndarray  # (pq|rs), spatial, chemist indexing

    @property
    def n_alpha(self) -> int:
        return (self.nelec + self.ms2) // 2

    @property
    def n_beta(self) -> int:
        return (self.nelec - self.ms2) // 2

    def validate(self, tol: float = 1e-12) -> None:
        if self.nelec > 2 * self.norb:
            raise FcidumpParseError(
                f"{self.nelec} electrons exceed 2*norb = {2 * self.norb}"
            )
        h, g = self.one_electron, self.two_electron
        assert np.max(np.abs(h - h.T), initial=0.0) < tol
        for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)]:
            assert np.max(np.abs(g - g.transpose(perm)), initial=0.0) < tol


@dataclass(frozen=True)
class ActiveSpaceSpec:
    """Frozen-core count plus an explicit active spatial-orbital list."""

    n_frozen_core: int
    active_orbitals: tuple
    n_active_electrons: int

    def __post_init__(self):
        frozen = set(range(self.n_frozen_core))
        if frozen & set(self.active_orbitals):
            raise ValueError("active orbitals overlap the frozen core")
        if len(set(self.active_orbitals)) != len(self.active_orbitals):
            raise ValueError("duplicate active orbitals")

    @classmethod
    def from_counts(
        cls, nelec: int, n_active_orbitals: int, n_frozen_core: int = 0
    ) -> "ActiveSpaceSpec":
        """Default selection: occupied orbitals above the frozen core plus
        the next virtuals, up to the requested count."""
        active = tuple(range(n_frozen_core, n_frozen_core + n_active_orbitals))
        return cls(n_frozen_core, active, nelec - 2 * n_frozen_core)

    def active_spinorbitals(self) -> tuple:
        out = []
        for p in self.active_orbitals:
            out.extend((2 * p, 2 * p + 1))
        return tuple(sorted(out))


_HEADER_KV = re.compile(r"([A-Za-z0-9_]+)\s*=\s*([^=]*?)(?=(?:,?\s*[A-Za-z0-9_]+\s*=)|$)")


def parse_fcidump(source) -> FcidumpData:
    """Parse an FCIDUMP from a path, string, or open text stream."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    lines = text.splitlines()

    header_tokens = []
    body_start = None
    for ln, line in enumerate(lines):
        stripped = line.strip()
        if body_start is None:
            header_tokens.append(stripped)
            upper = stripped.upper().replace(" ", "")
            if upper.endswith("&END") or upper.endswith("/") or upper == "&END":
                body_start = ln + 1
    if body_start is None:
        raise FcidumpParseError("missing &END/'/' terminator in namelist header")

    header = " ".join(header_tokens)
    header = re.sub(r"^\s*&FCI", "", header, flags=re.IGNORECASE)
    header = re.sub(r"&END.*$", "", header, flags=re.IGNORECASE)
    header = header.rstrip("/ ").strip()
    fields = {}
    for key, raw in _HEADER_KV.findall(header):
        fields[key.upper()] = raw.strip().rstrip(",").strip()
    try:
        norb = int(fields["NORB"])
        nelec = int(fields["NELEC"])
    except KeyError as exc:
        raise FcidumpParseError(f"header missing {exc}") from None
    ms2 = int(fields.get("MS2", "0") or 0)
    orbsym_raw = fields.get("ORBSYM", "")
    orbsym = tuple(
        int(tok) for tok in re.split(r"[,\s]+", orbsym_raw) if tok.strip()
    ) or tuple([1] * norb)

    h = np.zeros((norb, norb))
    g = np.zeros((norb, norb, norb, norb))
    core = 0.0
    for ln in range(body_start, len(lines)):
        tokens = lines[ln].split()
        if not tokens:
            continue
        if len(tokens) != 5:
            raise FcidumpParseError(
                f"expected 'value i j k l', got {lines[ln]!r}", line_number=ln + 1
            )
        try:
            val = float(tokens[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(t) for t in tokens[1:])
        except ValueError:
            raise FcidumpParseError(
                f"unparseable row {lines[ln]!r}", line_number=ln + 1
            ) from None
        for idx in (i, j, k, l):
            if idx < 0 or idx > norb:
                raise FcidumpParseError(
                    f"orbital index {idx} out of range 1..{norb}", line_number=ln + 1
                )
        if i == 0 and j == 0 and k == 0 and l == 0:
            core = val
        elif k == 0 and l == 0:
            if j == 0:
                continue  # orbital-energy record; not used
            h[i - 1, j - 1] = val
            h[j - 1, i - 1] = val
        elif l == 0:
            raise FcidumpParseError(
                f"three-index row not recognized: {lines[ln]!r}", line_number=ln + 1
            )
        else:
            p, q, r, s = i - 1, j - 1, k - 1, l - 1
            for a, b, c, d in (
                (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
            ):
                g[a, b, c, d] = val
    data = FcidumpData(norb, nelec, ms2, orbsym, core, h, g)
    data.validate()
    return data


def spatial_to_spinorbital(data: FcidumpData) -> NormalOrderedOperator:
    """Bare-vacuum spin-orbital operator with antisymmetrized two-body
    amplitudes <pq||rs> = (pr|qs) - (ps|qr) carrying spin deltas."""
    K = data.norb
    n = 2 * K
    h = np.zeros((n, n))
    h[0::2, 0::2] = data.one_electron
    h[1::2, 1::2] = data.one_electron
    g = data.two_electron
    coulomb = np.einsum("prqs->pqrs", g)
    exchange = np.einsum("psqr->pqrs", g)
    v = np.zeros((n, n, n, n))
    for s1 in (0, 1):
        for s2 in (0, 1):
            v[s1::2, s2::2, s1::2, s2::2] += coulomb
            v[s1::2, s2::2, s2::2, s1::2] -= exchange
    return NormalOrderedOperator(n, BARE_VACUUM, data.core_energy, h, v)


def operator_to_fcidump_data(
    op: NormalOrderedOperator, nelec: int, ms2: int = 0, tol: float = 1e-10
) -> FcidumpData:
    """Reduce a spin-symmetric bare-vacuum operator to spatial integrals.

    Raises NotSpatiallyRepresentableError (with the largest violation) when
    the operator has no spatial form to the given tolerance.
    """
    if not isinstance(op.vacuum, BareVacuum):
        raise NotSpatiallyRepresentableError("export requires a bare-vacuum operator")
    n = op.n_spinorbitals
    K = n // 2
    h_spin = op.one_body
    v = op.two_body
    haa = h_spin[0::2, 0::2]
    hbb = h_spin[1::2, 1::2]
    hab = h_spin[0::2, 1::2]
    # chemist (pq|rs) = <p_a r_b | q_a s_b> from the exchange-free ab block
    g = np.einsum("prqs->pqrs", v[0::2, 1::2, 0::2, 1::2])
    violations = [
        np.max(np.abs(haa - hbb), initial=0.0),
        np.max(np.abs(hab), initial=0.0),
        np.max(np.abs(h_spin[1::2, 0::2]), initial=0.0),
    ]
    coulomb = np.einsum("prqs->pqrs", g)
    exchange = np.einsum("psqr->pqrs", g)
    violations.append(
        np.max(np.abs(v[0::2, 0::2, 0::2, 0::2] - (coulomb - exchange)), initial=0.0)
    )
    violations.append(
        np.max(np.abs(v[1::2, 1::2, 1::2, 1::2] - (coulomb - exchange)), initial=0.0)
    )
    violations.append(
        np.max(np.abs(v[1::2, 0::2, 1::2, 0::2] - coulomb.transpose(1, 0, 3, 2)), initial=0.0)
    )
    # Sz-breaking blocks must vanish
    violations.append(np.max(np.abs(v[0::2, 0::2, 0::2, 1::2]), initial=0.0))
    violations.append(np.max(np.abs(v[0::2, 0::2, 1::2, 1::2]), initial=0.0))
    for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)]:
        violations.append(np.max(np.abs(g - g.transpose(perm)), initial=0.0))
    worst = max(violations)
    if worst > tol:
        raise NotSpatiallyRepresentableError(
            f"operator is not spatially representable: max violation {worst:.3e}"
        )
    gsym = g.copy()
    for perm in [(1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2), (2, 3, 0, 1),
                 (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0)]:
        gsym += g.transpose(perm)
    gsym /= 8.0
    hsym = 0.5 * (haa + haa.T)
    return FcidumpData(
        K, nelec, ms2, tuple([1] * K), float(op.scalar), hsym, gsym
    )


def write_fcidump(
    op_or_data, path, nelec: int | None = None, ms2: int = 0, tol: float = 1e-10
) -> None:
    """Deterministic ASCII FCIDUMP: canonical unique-index order, 17
    significant digits, zero-valued entries skipped."""
    if isinstance(op_or_data, NormalOrderedOperator):
        if nelec is None:
            raise ValueError("nelec required when writing an operator")
        data = operator_to_fcidump_data(op_or_data, nelec, ms2, tol)
    else:
        data = op_or_data
    K = data.norb
    lines = [f"&FCI NORB={K},NELEC={data.nelec},MS2={data.ms2},"]
    lines.append(" ORBSYM=" + ",".join(str(s) for s in data.orbsym) + ",")
    lines.append(" ISYM=1,")
    lines.append("&END")

    def fmt(val, i, j, k, l):
        return f"{val: .16E} {i:4d} {j:4d} {k:4d} {l:4d}"

    g = data.two_electron
    for p in range(K):
        for q in range(p + 1):
            for r in range(p + 1):
                smax = q if r == p else r
                for s in range(smax + 1):
                    val = g[p, q, r, s]
                    if val != 0.0:
                        lines.append(fmt(val, p + 1, q + 1, r + 1, s + 1))
    h = data.one_electron
    for p in range(K):
        for q in range(p + 1):
            if h[p, q] != 0.0:
                lines.append(fmt(h[p, q], p + 1, q + 1, 0, 0))
    lines.append(fmt(data.core_energy, 0, 0, 0, 0))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# reference-vector files: header "n_spinorbitals n_electrons", then one
# "bitstring coefficient" pair per line; bitstrings run over interleaved
# spin orbitals (alpha0 beta0 alpha1 ...), coefficients refer to the
# canonical determinant phase convention (see ducctk.determinants).
# ---------------------------------------------------------------------------


def save_reference_vector(v: CIVector, path, threshold: float = 0.0) -> None:
    space = v.space
    lines = [f"{space.n_spinorbitals} {space.n_alpha + space.n_beta}"]
    for i, c in enumerate(v.data):
        if abs(c) > threshold:
            det = space.determinant(i)
            lines.append(f"{det.to_occupation_string(space.n_spatial)} {float(c)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_reference_vector(path, space: DeterminantSpace) -> CIVector:
    """Load and normalize; determinants absent from the file are zero."""
    lines = [
        ln.strip()
        for ln in Path(path).read_text().splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines:
        raise ReferenceVectorFormatError("empty reference-vector file")
    head = lines[0].split()
    if len(head) != 2:
        raise ReferenceVectorFormatError(
            f"header must be 'n_spinorbitals n_electrons', got {lines[0]!r}"
        )
    n_spin, n_elec = int(head[0]), int(head[1])
    if n_spin != space.n_spinorbitals:
        raise ReferenceVectorFormatError(
            f"file has {n_spin} spin orbitals, space has {space.n_spinorbitals}"
        )
    if n_elec != space.n_alpha + space.n_beta:
        raise ReferenceVectorFormatError(
            f"file has {n_elec} electrons, space has {space.n_alpha + space.n_beta}"
        )
    data = np.zeros(len(space))
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ReferenceVectorFormatError(f"bad row {ln!r}")
        bits, coeff = parts
        if len(bits) != space.n_spinorbitals:
            raise ReferenceVectorFormatError(
                f"occupation string length {len(bits)} != {space.n_spinorbitals}"
            )
        det = Determinant.from_occupation_string(bits)
        if det.n_electrons != n_elec:
            raise ReferenceVectorFormatError(
                f"occupation {bits} holds {det.n_electrons} electrons, header says {n_elec}"
            )
        if det.n_alpha != space.n_alpha or det.n_beta != space.n_beta:
            raise ReferenceVectorFormatError(
                f"occupation {bits} has spin sector ({det.n_alpha},{det.n_beta}), "
                f"space is ({space.n_alpha},{space.n_beta})"
            )
        data[space.index(det)] = float(coeff)
    vec = CIVector(space, data)
    if vec.norm() < 1e-8:
        raise DegenerateVectorError("reference vector norm below 1e-8")
    return vec.normalized()
