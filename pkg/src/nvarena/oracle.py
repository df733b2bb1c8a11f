"""Oracle inference over an executed SRM: which outputs count as correct.

Two voting strategies (plus verbatim prompt assertions):

* test-based voting: per test, the output vector with the strict maximum
  multiplicity across versions wins; ties abstain (UNDECIDED).
* cluster-based voting: versions are grouped by their full signature (all
  output vectors over all tests, sentinels included); the unique largest
  cluster defines the expected outputs and its members are certified.

Abstention is deliberate: a silently arbitrary oracle is worse than an
honest UNDECIDED, and a winning behavior made of sentinels ("everything
crashes") is flagged degenerate instead of certifying the crash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import kernels
from .errors import EmptyMatrixError, MissingAssertionError
from .matrix import StimulusResponseMatrix, output_vector
from .values import SENTINEL_BY_TOKEN, canonical_encode

STRATEGIES = ("test_based", "cluster_based", "prompt_assertions")

DEGENERATE_WARNING = "degenerate: winning behavior contains sentinel outputs"


@dataclass(frozen=True)
class PerTestVerdict:
    expected: tuple | None  # canonical texts (None entry = row not asserted); None = UNDECIDED
    support: int

    @property
    def decided(self) -> bool:
        return self.expected is not None


@dataclass(frozen=True)
class Cluster:
    signature_hash: str
    members: tuple

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class OracleVerdict:
    strategy: str
    per_test: tuple
    correct_versions: frozenset
    clusters: tuple = ()
    warnings: tuple = ()
    float_tolerance: float = 0.0  # absolute; 0 = exact canonical equality

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.float_tolerance < 0:
            raise ValueError("float_tolerance must be >= 0")
        object.__setattr__(self, "per_test", tuple(self.per_test))
        object.__setattr__(self, "correct_versions", frozenset(self.correct_versions))
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def is_decided(self, test_index: int) -> bool:
        return self.per_test[test_index].decided

    @property
    def fully_decided(self) -> bool:
        return all(p.decided for p in self.per_test)

    def _text_matches(self, expected: str, got: str) -> bool:
        if expected == got:
            return True
        if self.float_tolerance > 0:
            try:
                return abs(float(expected) - float(got)) <= self.float_tolerance
            except ValueError:
                return False
        return False

    def matches(self, test_index: int, vector) -> bool:
        """Does an observed output vector satisfy this verdict for the test?

        Positions holding None in the expected vector are unasserted and
        ignored; an UNDECIDED test matches nothing. Comparison is exact
        canonical equality unless a positive float_tolerance was configured.
        """
        entry = self.per_test[test_index]
        if entry.expected is None:
            return False
        if len(entry.expected) != len(vector):
            return False
        return all(e is None or self._text_matches(e, got) for e, got in zip(entry.expected, vector))

    def to_json(self) -> dict:
        doc = {
            "strategy": self.strategy,
            "per_test": [
                {"expected": list(p.expected) if p.expected is not None else None, "support": p.support}
                for p in self.per_test
            ],
            "correct": sorted(self.correct_versions),
            "clusters": [{"signature": c.signature_hash, "members": list(c.members)} for c in self.clusters],
        }
        if self.warnings:
            doc["warnings"] = list(self.warnings)
        if self.float_tolerance:
            doc["float_tolerance"] = self.float_tolerance
        return doc


def _vectors(srm: StimulusResponseMatrix):
    n_tests, n_versions = srm.shape
    return [[tuple(output_vector(srm, t, v)) for v in range(n_versions)] for t in range(n_tests)]


def _has_sentinel(texts) -> bool:
    return any(t in SENTINEL_BY_TOKEN for t in texts if t is not None)


def _require_executed(srm: StimulusResponseMatrix):
    n_tests, n_versions = srm.shape
    if n_tests == 0 or n_versions == 0:
        raise EmptyMatrixError("voting needs at least one test and one version")


def vote_test_based(srm: StimulusResponseMatrix, allow_degenerate: bool = False) -> OracleVerdict:
    """Most common output vector per test; strict majority or UNDECIDED."""
    _require_executed(srm)
    vectors = _vectors(srm)
    grid, table = kernels.intern_grid(vectors)
    by_id = {i: key for key, i in table.items()}
    winners, support = kernels.vote_rows(grid)

    per_test = []
    degenerate = False
    for t in range(len(vectors)):
        if winners[t] < 0:
            per_test.append(PerTestVerdict(None, int(support[t])))
        else:
            expected = by_id[int(winners[t])]
            degenerate = degenerate or _has_sentinel(expected)
            per_test.append(PerTestVerdict(expected, int(support[t])))

    correct = frozenset()
    warnings = ()
    if degenerate:
        warnings = (DEGENERATE_WARNING,)
    all_decided = all(p.decided for p in per_test)
    if all_decided and (allow_degenerate or not degenerate):
        n_versions = srm.shape[1]
        correct = frozenset(
            srm.stimulus.versions[v].version_id
            for v in range(n_versions)
            if all(vectors[t][v] == per_test[t].expected for t in range(len(vectors)))
        )
    return OracleVerdict("test_based", per_test, correct, warnings=warnings)


def _cluster_signature_hash(column) -> str:
    h = hashlib.sha256()
    for vector in column:
        for text in vector:
            h.update(text.encode("utf-8"))
            h.update(b"\x1f")
        h.update(b"\x1e")
    return h.hexdigest()[:16]


def vote_cluster_based(srm: StimulusResponseMatrix, allow_degenerate: bool = False) -> OracleVerdict:
    """Cluster versions by full signature; the unique largest cluster wins."""
    _require_executed(srm)
    vectors = _vectors(srm)
    n_tests, n_versions = srm.shape

    columns = {}
    for v in range(n_versions):
        key = tuple(vectors[t][v] for t in range(n_tests))
        columns.setdefault(key, []).append(v)

    ordered = sorted(columns.items(), key=lambda kv: (-len(kv[1]), kv[1][0]))
    clusters = tuple(
        Cluster(_cluster_signature_hash(key), tuple(srm.stimulus.versions[v].version_id for v in members))
        for key, members in ordered
    )

    top_key, top_members = ordered[0]
    tie = len(ordered) > 1 and len(ordered[1][1]) == len(top_members)
    if tie:
        per_test = tuple(PerTestVerdict(None, len(top_members)) for _ in range(n_tests))
        return OracleVerdict("cluster_based", per_test, frozenset(), clusters)

    per_test = tuple(PerTestVerdict(top_key[t], len(top_members)) for t in range(n_tests))
    degenerate = any(_has_sentinel(vec) for vec in top_key)
    warnings = (DEGENERATE_WARNING,) if degenerate else ()
    if degenerate and not allow_degenerate:
        correct = frozenset()
    else:
        correct = frozenset(srm.stimulus.versions[v].version_id for v in top_members)
    return OracleVerdict("cluster_based", per_test, correct, clusters, warnings)


def oracle_from_prompt(tests, float_tolerance: float = 0.0) -> OracleVerdict:
    """Verdict taken verbatim from the sheets' own expected assertions."""
    per_test = []
    for sheet in tests:
        asserted = sheet.expected_map()
        if not asserted:
            raise MissingAssertionError(f"sheet {sheet.sheet_id} has no expected assertions")
        expected = tuple(
            canonical_encode(asserted[row.row_index]) if row.row_index in asserted else None
            for row in sheet.rows
        )
        per_test.append(PerTestVerdict(expected, 0))
    return OracleVerdict("prompt_assertions", tuple(per_test), frozenset(),
                         float_tolerance=float_tolerance)


def verdict_from_json(doc: dict) -> OracleVerdict:
    per_test = tuple(
        PerTestVerdict(tuple(p["expected"]) if p["expected"] is not None else None, p["support"])
        for p in doc["per_test"]
    )
    clusters = tuple(Cluster(c["signature"], tuple(c["members"])) for c in doc.get("clusters", []))
    return OracleVerdict(
        doc["strategy"], per_test, frozenset(doc.get("correct", [])), clusters,
        tuple(doc.get("warnings", [])), doc.get("float_tolerance", 0.0),
    )
