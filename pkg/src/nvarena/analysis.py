"""Comparative analysis over an executed SRM.

Versions play the role mutants play in mutation testing: a test "kills" a
version when its output vector differs from the reference (an oracle
verdict or a designated base version). On top of the kill matrix sit the
kill scores, greedy test-set minimization, differential discrepancy
reports, and the weighted version ranking used by code recommendation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    InvalidWeightsError,
    NoSurvivorsError,
    UndecidedOracleError,
    UnknownVersionError,
)
from .matrix import StimulusResponseMatrix, output_vector
from .oracle import OracleVerdict, oracle_from_prompt


@dataclass(frozen=True)
class KillMatrix:
    reference: str  # "oracle" or "base:<version_id>"
    test_ids: tuple
    version_ids: tuple
    kills: tuple  # bool grid [test][version]
    equivalent_versions: frozenset
    base_version_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kills", tuple(tuple(bool(x) for x in row) for row in self.kills))
        object.__setattr__(self, "test_ids", tuple(self.test_ids))
        object.__setattr__(self, "version_ids", tuple(self.version_ids))
        object.__setattr__(self, "equivalent_versions", frozenset(self.equivalent_versions))

    def killed_by(self, test_indices) -> frozenset:
        """Version ids killed by at least one of the given tests."""
        killed = set()
        for t in test_indices:
            for v, hit in enumerate(self.kills[t]):
                if hit:
                    killed.add(self.version_ids[v])
        return frozenset(killed)

    def to_json(self) -> dict:
        return {
            "reference": self.reference,
            "tests": list(self.test_ids),
            "versions": list(self.version_ids),
            "kills": [[1 if x else 0 for x in row] for row in self.kills],
            "equivalent": sorted(self.equivalent_versions),
        }


def kill_matrix(srm: StimulusResponseMatrix, reference) -> KillMatrix:
    """Kill grid against an oracle verdict or a base version id."""
    sm = srm.stimulus
    n_tests, n_versions = srm.shape
    test_ids = tuple(s.sheet_id for s in sm.tests)
    version_ids = tuple(v.version_id for v in sm.versions)

    if isinstance(reference, OracleVerdict):
        if not reference.fully_decided:
            raise UndecidedOracleError("kill matrix needs an oracle decided on every test")
        partial = any(None in p.expected for p in reference.per_test)
        if partial:
            kills = [
                [not reference.matches(t, output_vector(srm, t, v)) for v in range(n_versions)]
                for t in range(n_tests)
            ]
        else:
            vectors = [[tuple(output_vector(srm, t, v)) for v in range(n_versions)] for t in range(n_tests)]
            keys = [row + [tuple(reference.per_test[t].expected)] for t, row in enumerate(vectors)]
            grid, _ = kernels.intern_grid(keys)
            kills = kernels.kill_grid(grid[:, :-1], grid[:, -1]).tolist()
        base_id = None
        ref_label = "oracle"
    else:
        try:
            base_idx = sm.version_index(reference)
        except KeyError:
            raise UnknownVersionError(f"base version {reference!r} not in matrix") from None
        vectors = [[tuple(output_vector(srm, t, v)) for v in range(n_versions)] for t in range(n_tests)]
        grid, _ = kernels.intern_grid(vectors)
        kills = kernels.kill_grid(grid, grid[:, base_idx]).tolist()
        base_id = reference
        ref_label = f"base:{reference}"

    kills_arr = np.asarray(kills, dtype=bool)
    equivalent = frozenset(
        version_ids[v] for v in range(n_versions) if not kills_arr[:, v].any()
    )
    return KillMatrix(ref_label, test_ids, version_ids, kills, equivalent, base_id)


@dataclass(frozen=True)
class KillScore:
    raw: float | None
    adjusted: float | None
    killed: frozenset
    killable: frozenset

    def to_json(self) -> dict:
        return {
            "raw": self.raw,
            "adjusted": self.adjusted,
            "killed": sorted(self.killed),
            "killable": sorted(self.killable),
        }


def kill_score(km: KillMatrix, tests_subset=None) -> KillScore:
    """Fraction of versions killed by the subset (raw) and with equivalent
    versions removed from the denominator (adjusted; null if none remain)."""
    if tests_subset is None:
        indices = range(len(km.test_ids))
    else:
        by_id = {tid: i for i, tid in enumerate(km.test_ids)}
        indices = [by_id[t] if t in by_id else _bad_test(t) for t in tests_subset]
    killed = km.killed_by(indices)
    candidates = frozenset(v for v in km.version_ids if v != km.base_version_id)
    raw = len(killed) / len(candidates) if candidates else None
    adjustable = candidates - km.equivalent_versions
    adjusted = len(killed) / len(adjustable) if adjustable else None
    return KillScore(raw, adjusted, killed, candidates)


def _bad_test(test_id):
    raise UnknownVersionError(f"test {test_id!r} not in kill matrix")


def minimize_tests(km: KillMatrix):
    """Greedy set cover, then a redundancy sweep; returns test ids in pick order.

    The returned subset kills exactly the versions the full test set kills,
    and dropping any member would shrink that set.
    """
    grid = np.asarray(km.kills, dtype=bool)
    if grid.size == 0 or not grid.any():
        return []
    chosen = kernels.greedy_cover(grid)
    full_cover = km.killed_by(range(len(km.test_ids)))
    # a later, larger pick can subsume an earlier one; sweep in reverse pick order
    for t in reversed(list(chosen)):
        without = [x for x in chosen if x != t]
        if km.killed_by(without) == full_cover:
            chosen = without
    assert km.killed_by(chosen) == full_cover
    return [km.test_ids[t] for t in chosen]


# --- differential report -----------------------------------------------------


@dataclass(frozen=True)
class Discrepancy:
    test_id: str
    version_id: str
    base_vector: tuple
    version_vector: tuple


@dataclass(frozen=True)
class DiffReport:
    base_version_id: str
    entries: tuple
    per_version_counts: dict

    def to_json(self) -> dict:
        return {
            "base": self.base_version_id,
            "discrepancies": [
                {
                    "test": e.test_id,
                    "version": e.version_id,
                    "base_outputs": list(e.base_vector),
                    "version_outputs": list(e.version_vector),
                }
                for e in self.entries
            ],
            "per_version": dict(sorted(self.per_version_counts.items())),
        }

    def render_text(self) -> str:
        if not self.entries:
            return f"no discrepancies against base {self.base_version_id}\n"
        width = max(len(e.test_id) for e in self.entries)
        lines = [f"discrepancies against base {self.base_version_id}:"]
        for e in self.entries:
            lines.append(
                f"  {e.test_id:<{width}}  {e.version_id}: {list(e.version_vector)}"
                f"  (base: {list(e.base_vector)})"
            )
        lines.append("per version: " + ", ".join(f"{v}={c}" for v, c in sorted(self.per_version_counts.items())))
        return "\n".join(lines) + "\n"


def diff_report(srm: StimulusResponseMatrix, base_version_id: str) -> DiffReport:
    """All (test, version) pairs whose outputs differ from the base version."""
    sm = srm.stimulus
    try:
        base_idx = sm.version_index(base_version_id)
    except KeyError:
        raise UnknownVersionError(f"base version {base_version_id!r} not in matrix") from None

    entries = []
    counts = {v.version_id: 0 for v in sm.versions if v.version_id != base_version_id}
    for t, sheet in enumerate(sm.tests):
        base_vec = tuple(output_vector(srm, t, base_idx))
        for v, version in enumerate(sm.versions):
            if v == base_idx:
                continue
            vec = tuple(output_vector(srm, t, v))
            if vec != base_vec:
                entries.append(Discrepancy(sheet.sheet_id, version.version_id, base_vec, vec))
                counts[version.version_id] += 1
    return DiffReport(base_version_id, tuple(entries), counts)


# --- ranking ---------------------------------------------------------------------


@dataclass(frozen=True)
class RankingWeights:
    w_prompt_pass: float = 0.55
    w_oracle_agree: float = 0.25
    w_speed: float = 0.10
    w_static: float = 0.10

    def __post_init__(self):
        weights = (self.w_prompt_pass, self.w_oracle_agree, self.w_speed, self.w_static)
        if any(w < 0 for w in weights):
            raise InvalidWeightsError("weights must be non-negative")
        if not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
            raise InvalidWeightsError(f"weights must sum to 1, got {sum(weights)}")


@dataclass(frozen=True)
class RankedVersion:
    version_id: str
    score: float
    components: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"version": self.version_id, "score": self.score, "components": dict(self.components)}


def rank_versions(srm: StimulusResponseMatrix, prompt_tests, verdict, weights=None):
    """Rank versions that pass every prompt assertion (hard filter).

    Survivors are scored on oracle agreement, relative speed and relative
    source size; speed/static use min-over-survivors ratios so the score is
    scale-free. Raises NoSurvivorsError when nothing passes the prompt
    tests: an honest "no recommendation".
    """
    weights = weights or RankingWeights()
    sm = srm.stimulus
    n_tests, n_versions = srm.shape

    by_sheet_id = {s.sheet_id: i for i, s in enumerate(sm.tests)}
    prompt_indices = []
    prompt_sheets = []
    for test in prompt_tests:
        sheet_id = test if isinstance(test, str) else test.sheet_id
        if sheet_id not in by_sheet_id:
            raise UnknownVersionError(f"prompt test {sheet_id!r} not in matrix")
        prompt_indices.append(by_sheet_id[sheet_id])
        prompt_sheets.append(sm.tests[by_sheet_id[sheet_id]])

    prompt_oracle = oracle_from_prompt(prompt_sheets) if prompt_sheets else None

    survivors = []
    for v in range(n_versions):
        passes = all(
            srm.cells[t][v].status == "ok"
            and prompt_oracle.matches(k, output_vector(srm, t, v))
            for k, t in enumerate(prompt_indices)
        ) if prompt_oracle else True
        if passes:
            survivors.append(v)
    if not survivors:
        raise NoSurvivorsError("no version passed the prompt tests")

    total_wall = {v: sum(srm.cells[t][v].wall_us for t in range(n_tests)) for v in survivors}
    src_bytes = {v: sm.versions[v].static_metrics.get("source_bytes", len(sm.versions[v].source.encode())) for v in survivors}
    min_wall = min(total_wall.values())
    min_bytes = min(src_bytes.values())

    decided = [t for t in range(n_tests)] if verdict is None else [
        t for t in range(n_tests) if verdict.is_decided(t)
    ]

    ranked = []
    for v in survivors:
        if verdict is None or not decided:
            agree = 0.0
        else:
            matched = sum(1 for t in decided if verdict.matches(t, output_vector(srm, t, v)))
            agree = matched / len(decided)
        speed = 1.0 if total_wall[v] == 0 else min_wall / total_wall[v]
        static = 1.0 if src_bytes[v] == 0 else min_bytes / src_bytes[v]
        score = (
            weights.w_prompt_pass * 1.0
            + weights.w_oracle_agree * agree
            + weights.w_speed * speed
            + weights.w_static * static
        )
        ranked.append(
            RankedVersion(
                sm.versions[v].version_id,
                score,
                {"prompt_pass": 1.0, "oracle_agree": agree, "speed": speed, "static": static},
            )
        )
    ranked.sort(key=lambda r: (-r.score, r.version_id))
    return ranked
