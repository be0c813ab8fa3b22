"""Fingerprints, the discrete chemical space, and Tanimoto similarity.

Compounds are fixed-length binary feature vectors.  A chemical space is a
set of distinct compounds together with cached pairwise Tanimoto
similarity (S) and distance (T = 1 - S) matrices.  The square root of the
Tanimoto distance is a Euclidean metric: the doubly-centred Gram matrix
(1/2) H S H is positive semi-definite of rank m - 1, which is what
licenses the standard isotropic kernels built on sqrt(T) in
:mod:`chemgp.kernel`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DuplicateCompoundError,
    InvalidFingerprintError,
    NumericalDegeneracyError,
)

# Relative eigenvalue tolerance for the positive-definiteness check of S.
PSD_RTOL = 1e-8


@dataclass(frozen=True)
class Fingerprint:
    """Binary feature vector stored as a packed integer.

    Feature i (0-based) is bit i of ``packed``.  Packed storage makes the
    Tanimoto min/max sums popcounts of AND/OR words, which dominates
    pairwise space construction.
    """

    packed: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise InvalidFingerprintError("fingerprint length must be >= 1")
        if not 0 <= self.packed < (1 << self.length):
            raise InvalidFingerprintError(
                f"packed value {self.packed} out of range for length {self.length}"
            )

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "Fingerprint":
        seq = list(bits)
        packed = 0
        for i, b in enumerate(seq):
            if b not in (0, 1):
                raise InvalidFingerprintError(f"bit {i} is {b!r}, expected 0 or 1")
            packed |= b << i
        return cls(packed, len(seq))

    @classmethod
    def from_string(cls, s: str) -> "Fingerprint":
        if not s or any(c not in "01" for c in s):
            raise InvalidFingerprintError(f"bit string must be nonempty 0/1, got {s!r}")
        return cls.from_bits(int(c) for c in s)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.packed >> i) & 1 for i in range(self.length))

    @property
    def is_zero(self) -> bool:
        return self.packed == 0

    def popcount(self) -> int:
        return self.packed.bit_count()

    def to_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def to_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __str__(self) -> str:
        return self.to_string()


def _require_comparable(a: Fingerprint, b: Fingerprint) -> None:
    if a.length != b.length:
        raise InvalidFingerprintError(
            f"fingerprint lengths differ: {a.length} vs {b.length}"
        )
    if a.is_zero or b.is_zero:
        raise InvalidFingerprintError("all-zero fingerprint has no Tanimoto similarity")


def tanimoto_similarity(a: Fingerprint, b: Fingerprint) -> float:
    """Shared features over total features: popcount(a & b) / popcount(a | b)."""
    _require_comparable(a, b)
    inter = (a.packed & b.packed).bit_count()
    union = (a.packed | b.packed).bit_count()
    return inter / union


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    """1 - tanimoto_similarity; a metric on the space of nonzero fingerprints."""
    return 1.0 - tanimoto_similarity(a, b)


@dataclass(frozen=True)
class ChemicalSpace:
    """The m distinct compounds plus cached pairwise similarity/distance.

    Immutable after construction (matrix buffers are marked read-only);
    safe for concurrent reads.
    """

    compounds: tuple[Fingerprint, ...]
    ids: tuple[str, ...]
    similarity: np.ndarray
    distance: np.ndarray
    _index: dict[int, int] = field(repr=False, compare=False, default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.compounds)

    @property
    def kappa(self) -> int:
        return self.compounds[0].length

    def index_of(self, fp: Fingerprint) -> int | None:
        """Position of ``fp`` among the compounds, or None if absent."""
        return self._index.get(fp.packed)

    def distances_to(self, candidate: Fingerprint) -> np.ndarray:
        """Tanimoto distances from every compound to ``candidate`` (m-vector)."""
        if candidate.length != self.kappa:
            raise InvalidFingerprintError(
                f"candidate length {candidate.length} != space length {self.kappa}"
            )
        if candidate.is_zero:
            raise InvalidFingerprintError("all-zero candidate")
        cp = candidate.packed
        out = np.empty(self.m)
        for r, fp in enumerate(self.compounds):
            out[r] = 1.0 - (fp.packed & cp).bit_count() / (fp.packed | cp).bit_count()
        return out


def build_space(
    compounds: Sequence[Fingerprint], ids: Sequence[str] | None = None
) -> ChemicalSpace:
    """Validate compounds, cache S and T, and check S is positive definite.

    Raises:
        InvalidFingerprintError: empty input, mixed lengths, or an all-zero
            compound (lengths are fixed per space, never padded).
        DuplicateCompoundError: two identical fingerprints (K would be
            singular).
        NumericalDegeneracyError: S fails the eigenvalue check
            (min eigenvalue <= -PSD_RTOL * max eigenvalue).
    """
    if len(compounds) == 0:
        raise InvalidFingerprintError("a chemical space needs at least one compound")
    kappa = compounds[0].length
    seen: dict[int, int] = {}
    if ids is None:
        ids = tuple(f"c{r + 1}" for r in range(len(compounds)))
    else:
        ids = tuple(str(i) for i in ids)
        if len(ids) != len(compounds):
            raise DataError(f"{len(ids)} ids for {len(compounds)} compounds")
        if len(set(ids)) != len(ids):
            raise DataError("compound ids must be unique")
    for r, fp in enumerate(compounds):
        if fp.length != kappa:
            raise InvalidFingerprintError(
                f"compound {ids[r]} has length {fp.length}, space has {kappa}"
            )
        if fp.is_zero:
            raise InvalidFingerprintError(f"compound {ids[r]} is all-zero")
        if fp.packed in seen:
            raise DuplicateCompoundError(
                f"compound {ids[r]} duplicates {ids[seen[fp.packed]]}"
            )
        seen[fp.packed] = r

    m = len(compounds)
    S = np.eye(m)
    packs = [fp.packed for fp in compounds]
    for r in range(m):
        pr = packs[r]
        for s in range(r + 1, m):
            ps = packs[s]
            S[r, s] = S[s, r] = (pr & ps).bit_count() / (pr | ps).bit_count()
    eigs = np.linalg.eigvalsh(S)
    if eigs[0] <= -PSD_RTOL * eigs[-1]:
        raise NumericalDegeneracyError(
            f"similarity matrix is numerically indefinite (min eig {eigs[0]:.3e})"
        )
    T = 1.0 - S
    np.fill_diagonal(T, 0.0)
    S.flags.writeable = False
    T.flags.writeable = False
    return ChemicalSpace(tuple(compounds), ids, S, T, dict(seen))


def embeddability_gram(space: ChemicalSpace) -> np.ndarray:
    """Doubly-centred Gram matrix B = (1/2) H S H, H = I - J/m.

    B is positive semi-definite with rank m - 1, so the compounds embed
    isometrically (under the sqrt-Tanimoto metric) in R^(m-1).
    """
    m = space.m
    H = np.eye(m) - np.full((m, m), 1.0 / m)
    return 0.5 * (H @ space.similarity @ H)


def sqrt_distance_gram_rank(space: ChemicalSpace, rtol: float = 1e-10) -> int:
    """Rank of the embeddability Gram matrix by relative eigenvalue cutoff."""
    eigs = np.linalg.eigvalsh(embeddability_gram(space))
    scale = max(eigs[-1], 1.0)
    return int(np.sum(eigs > rtol * scale))


_COUNTEREXAMPLE_BITS = ("011", "101", "110", "111")


def counterexample_space() -> ChemicalSpace:
    """The fixed four-compound demonstration space."""
    return build_space([Fingerprint.from_string(s) for s in _COUNTEREXAMPLE_BITS])


def naive_gaussian_counterexample() -> tuple[np.ndarray, float]:
    """Why a Gaussian kernel on raw T is invalid: exp(-T^2) is indefinite.

    Builds R[r,s] = exp(-T[r,s]^2) on the four-compound space and returns
    (R, min eigenvalue).  The minimum eigenvalue is about -0.036, so R is
    not a valid correlation matrix, while the sqrt(T)-based kernels on the
    same space are.
    """
    space = counterexample_space()
    R = np.exp(-space.distance**2)
    eigs = np.linalg.eigvalsh(R)
    return R, float(eigs[0])


def read_fingerprint_csv(path) -> tuple[list[str], list[Fingerprint]]:
    """Read a fingerprint CSV: header ``id,bits``; comment lines (#) skipped.

    Raises DataError naming the offending line number on parse problems.
    """
    ids: list[str] = []
    fps: list[Fingerprint] = []
    with open(path, newline="") as fh:
        rows = [
            (lineno, row)
            for lineno, row in enumerate(csv.reader(fh), start=1)
            if row and not row[0].lstrip().startswith("#")
        ]
    if not rows:
        raise DataError(f"{path}: no rows")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if header[:2] != ["id", "bits"]:
        raise DataError(f"{path}:{header_line}: expected header 'id,bits', got {header}")
    for lineno, row in rows[1:]:
        if len(row) < 2:
            raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        ident, bits = row[0].strip(), row[1].strip()
        try:
            fp = Fingerprint.from_string(bits)
        except InvalidFingerprintError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        ids.append(ident)
        fps.append(fp)
    return ids, fps


def write_fingerprint_csv(path, ids: Sequence[str], fps: Sequence[Fingerprint],
                          comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "bits"])
        for ident, fp in zip(ids, fps):
            writer.writerow([ident, fp.to_string()])
