"""Verification trial construction and scoring.

Each identity contributes genuine (same-identity) and impostor
(cross-identity) image pairs.  With the default policy an identity with
four images yields all 6 unordered genuine pairs and 50 impostor pairs.
Scores are cosine similarities in [-1, 1]; a pair is accepted when the
score is strictly greater than the decision threshold.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from faceaudit.cohort import Cohort
from faceaudit.errors import DataError, TrialError

_POSITIVE_MODES = ("all_pairs_capped", "sample")


@dataclass(frozen=True)
class TrialPair:
    probe_image_id: str
    reference_image_id: str
    probe_identity: str
    reference_identity: str

    def __post_init__(self):
        if self.is_genuine and self.probe_image_id == self.reference_image_id:
            raise TrialError(
                f"genuine pair cannot reuse image {self.probe_image_id!r} on both sides"
            )

    @property
    def is_genuine(self) -> bool:
        return self.probe_identity == self.reference_identity


@dataclass(frozen=True)
class TrialPolicy:
    """How many pairs to draw per identity and how to draw them.

    ``positives_per_identity=None`` keeps every genuine pair.  With
    ``positive_mode="all_pairs_capped"`` genuine pairs are enumerated
    exhaustively and subsampled only when they exceed the cap;
    ``"sample"`` draws the cap directly with replacement disabled.
    """

    positives_per_identity: int | None = 6
    negatives_per_identity: int = 50
    positive_mode: str = "all_pairs_capped"

    def __post_init__(self):
        if self.positive_mode not in _POSITIVE_MODES:
            raise TrialError(
                f"positive_mode must be one of {_POSITIVE_MODES}, got {self.positive_mode!r}"
            )
        if self.positives_per_identity is not None and self.positives_per_identity < 1:
            raise TrialError("positives_per_identity must be positive or None")
        if self.negatives_per_identity < 0:
            raise TrialError("negatives_per_identity must be >= 0")
        if self.positive_mode == "sample" and self.positives_per_identity is None:
            raise TrialError("positive_mode='sample' requires an explicit positive count")


@dataclass(frozen=True)
class TrialSet:
    pairs: tuple[TrialPair, ...]
    rng_seed: int
    policy: TrialPolicy
    skipped_identities: tuple[str, ...] = field(default=())

    @property
    def n_genuine(self) -> int:
        return sum(1 for p in self.pairs if p.is_genuine)

    @property
    def n_impostor(self) -> int:
        return len(self.pairs) - self.n_genuine

    def by_identity(self) -> dict[str, list[TrialPair]]:
        """Pairs grouped by probe identity, insertion order preserved."""
        out: dict[str, list[TrialPair]] = {}
        for pair in self.pairs:
            out.setdefault(pair.probe_identity, []).append(pair)
        return out


def _genuine_pairs(identity: str, image_ids, policy: TrialPolicy, rng) -> list[TrialPair]:
    ids = list(image_ids)
    all_pairs = [
        TrialPair(ids[i], ids[j], identity, identity)
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
    ]
    cap = policy.positives_per_identity
    if policy.positive_mode == "sample":
        k = min(cap, len(all_pairs))
        chosen = rng.choice(len(all_pairs), size=k, replace=False)
        return [all_pairs[i] for i in sorted(chosen)]
    if cap is None or len(all_pairs) <= cap:
        return all_pairs
    chosen = rng.choice(len(all_pairs), size=cap, replace=False)
    return [all_pairs[i] for i in sorted(chosen)]


def _impostor_pairs(
    identity: str,
    image_ids,
    other_images: list[tuple[str, str]],
    policy: TrialPolicy,
    rng,
) -> list[TrialPair]:
    """Draw distinct cross-identity pairs by rejection sampling.

    Each draw picks one of this identity's images uniformly and one
    image of any other identity uniformly; duplicates of an already
    drawn (probe, reference) pair are rejected and redrawn.
    """
    need = policy.negatives_per_identity
    if need == 0:
        return []
    n_own = len(image_ids)
    n_other = len(other_images)
    if n_own * n_other < need:
        raise TrialError(
            f"identity {identity!r}: only {n_own * n_other} distinct impostor pairs "
            f"available, policy requires {need}"
        )
    own = list(image_ids)
    seen: set[tuple[str, str]] = set()
    pairs: list[TrialPair] = []
    while len(pairs) < need:
        probe = own[rng.integers(n_own)]
        ref_image, ref_identity = other_images[rng.integers(n_other)]
        key = (probe, ref_image)
        if key in seen:
            continue
        seen.add(key)
        pairs.append(TrialPair(probe, ref_image, identity, ref_identity))
    return pairs


def generate_trials(cohort: Cohort, policy: TrialPolicy, seed: int) -> TrialSet:
    """Build the full trial list, iterating identities in sorted order.

    Identities with fewer than two images cannot form genuine pairs and
    are skipped with a warning.  The same (cohort, policy, seed) triple
    always yields the same pair list.
    """
    eligible = {k: v for k, v in cohort.identities.items() if len(v) >= 2}
    skipped = tuple(sorted(set(cohort.identities) - set(eligible)))
    for identity in skipped:
        warnings.warn(f"identity {identity!r} has fewer than two images; skipped", stacklevel=2)
    if len(eligible) < 2:
        raise DataError("need at least two identities with two or more images each")

    all_images = [
        (image_id, identity)
        for identity in sorted(cohort.identities)
        for image_id in cohort.identities[identity]
    ]
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs: list[TrialPair] = []
    for identity in sorted(eligible):
        image_ids = eligible[identity]
        pairs.extend(_genuine_pairs(identity, image_ids, policy, rng))
        others = [(img, ident) for img, ident in all_images if ident != identity]
        pairs.extend(_impostor_pairs(identity, image_ids, others, policy, rng))
    return TrialSet(pairs=tuple(pairs), rng_seed=seed, policy=policy, skipped_identities=skipped)


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DataError("cannot score a zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def score_trials(cohort: Cohort, trials: TrialSet, chunk_size: int = 4096) -> np.ndarray:
    """Cosine similarity per pair, float64, aligned with ``trials.pairs``.

    Scoring is chunked for memory; each score depends only on its own
    two vectors, so the chunk size never changes the result.
    """
    pairs = trials.pairs
    scores = np.empty(len(pairs), dtype=np.float64)
    for start in range(0, len(pairs), chunk_size):
        block = pairs[start : start + chunk_size]
        probes = np.stack([cohort.vector(p.probe_image_id) for p in block]).astype(np.float64)
        refs = np.stack([cohort.vector(p.reference_image_id) for p in block]).astype(np.float64)
        pn = np.linalg.norm(probes, axis=1)
        rn = np.linalg.norm(refs, axis=1)
        for offset in (np.flatnonzero(pn == 0.0), np.flatnonzero(rn == 0.0)):
            if offset.size:
                bad = block[int(offset[0])]
                which = bad.probe_image_id if pn[offset[0]] == 0 else bad.reference_image_id
                raise DataError(f"cannot score zero-norm embedding {which!r}")
        scores[start : start + len(block)] = np.clip(
            np.einsum("ij,ij->i", probes, refs) / (pn * rn), -1.0, 1.0
        )
    return scores


def decide(score: float, tau: float) -> bool:
    """Accept the pair as a match when the score strictly exceeds tau."""
    return score > tau


_CSV_HEADER = ["probe_image_id", "reference_image_id", "label", "score"]


def write_trials_csv(
    path: str | Path, trials: TrialSet, scores: np.ndarray | None = None
) -> None:
    """Export pairs as delimited text; the score cell is empty when unscored."""
    if scores is not None and len(scores) != len(trials.pairs):
        raise DataError(f"{len(scores)} scores for {len(trials.pairs)} pairs")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_HEADER)
        for i, pair in enumerate(trials.pairs):
            writer.writerow(
                [
                    pair.probe_image_id,
                    pair.reference_image_id,
                    "genuine" if pair.is_genuine else "impostor",
                    "" if scores is None else repr(float(scores[i])),
                ]
            )


def _identities_from_labels(rows: list[tuple[str, str, str]]) -> dict[str, str]:
    """Recover an image-to-identity map from genuine-pair connectivity.

    Genuine pairs link images of one identity; connected components of
    that graph are identities.  Images appearing only in impostor pairs
    form singleton components.  Components are labelled by their
    lexicographically smallest member, which keeps the map deterministic.
    """
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for probe, reference, label in rows:
        for image in (probe, reference):
            parent.setdefault(image, image)
        if label == "genuine":
            ra, rb = find(probe), find(reference)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    return {image: find(image) for image in parent}


def read_trials_csv(
    path: str | Path, identity_of: dict[str, str] | None = None
) -> tuple[list[TrialPair], np.ndarray]:
    """Read pairs back; returns (pairs, scores), unscored cells as NaN.

    The file format carries no identity column.  When ``identity_of``
    is given it supplies the labels (and the stated genuine/impostor
    labels are checked against it); otherwise identities are
    reconstructed from genuine-pair connectivity, which reproduces the
    original grouping up to renaming.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty trial file") from None
        if header != _CSV_HEADER:
            raise DataError(f"{path}: unrecognised trial file header {header!r}")
        rows: list[tuple[str, str, str]] = []
        scores: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 cells, got {len(row)}")
            if row[2] not in ("genuine", "impostor"):
                raise DataError(f"{path}:{lineno}: bad label {row[2]!r}")
            rows.append((row[0], row[1], row[2]))
            try:
                scores.append(float(row[3]) if row[3].strip() else float("nan"))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad score {row[3]!r}") from None
    mapping = identity_of if identity_of is not None else _identities_from_labels(rows)
    pairs = []
    for i, (probe, reference, label) in enumerate(rows, start=2):
        try:
            probe_ident = mapping[probe]
            ref_ident = mapping[reference]
        except KeyError as exc:
            raise DataError(f"{path}: unknown image_id {exc} in row {i}") from None
        if identity_of is not None:
            stated = label == "genuine"
            if stated != (probe_ident == ref_ident):
                raise DataError(f"{path}: row {i} label contradicts the identity map")
        pairs.append(TrialPair(probe, reference, probe_ident, ref_ident))
    return pairs, np.asarray(scores, dtype=np.float64)
