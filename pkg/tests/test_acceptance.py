"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines. The worker-conformance criterion is exercised only when the separate
worker package has been built (it is skipped, not failed, otherwise).
"""

import json
import random
import shutil
import subprocess
import time
from pathlib import Path

import pytest

from bruteforce import (
    brute_clusters,
    brute_kill_grid_vs_base,
    cells_from_srm_file,
    exhaustive_min_cover,
    harmonic,
    killed_by_tests,
)
from conftest import (
    FIG_GRID,
    GCD_CORRECT_ITER,
    GCD_CORRECT_REC,
    GCD_SIG,
    int_sheet,
    make_srm,
)
from nvarena import analysis, oracle
from nvarena.arena import ArenaConfig, execute
from nvarena.cli import EXIT_OK, main
from nvarena.matrix import (
    ModuleVersion,
    Observation,
    StimulusResponseMatrix,
    build_sm,
    export_csv,
    load_srm,
    output_vector,
    save_srm,
)
from nvarena.values import Sentinel

WORKER_TS = Path(__file__).resolve().parent.parent / "worker-ts" / "dist" / "worker.js"


def _ok(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_end_to_end_gcd_recommendation(tmp_path, capsys):
    started = time.monotonic()
    prompt = tmp_path / "prompt.py"
    prompt.write_text(
        'def gcd(a: int, b: int) -> int:\n'
        '  """ Return a greatest common divisor of two integers a and b\n'
        '  >>> gcd(3, 7)\n  1\n  >>> gcd(10, 15)\n  5"""\n'
    )
    out = tmp_path / "gcd.srm.jsonl"
    code = main([
        "recommend", "--prompt", str(prompt), "-n", "6", "--tests", "2",
        "--seed", "42", "--out", str(out), "--json",
    ])
    elapsed = time.monotonic() - started
    doc = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK

    srm = load_srm(out)
    assert srm.shape == (4, 6)  # 2 prompt + 2 generated tests x 6 versions
    top = srm.stimulus.version_index(doc["recommended"]["version"])
    assert output_vector(srm, 0, top) == ["1"]   # gcd(3, 7) = 1, exactly
    assert output_vector(srm, 1, top) == ["5"]   # gcd(10, 15) = 5, exactly
    assert elapsed < 30.0
    _ok(f"end-to-end recommendation ({elapsed:.2f}s)")


def test_oracle_structure_reproduction():
    srm = make_srm(FIG_GRID)

    tb = oracle.vote_test_based(srm)
    assert tb.fully_decided
    assert tb.correct_versions == frozenset()  # inconclusive: certifies no version

    cb = oracle.vote_cluster_based(srm)
    assert cb.correct_versions == {"V4", "V5"}
    assert cb.clusters[0].members == ("V4", "V5")
    assert len(cb.clusters[0].members) == 2

    # zero-tolerance check against brute-force clustering
    grid = [[output_vector(srm, t, v) for v in range(5)] for t in range(4)]
    brute = brute_clusters(grid)
    assert [tuple(f"V{v + 1}" for v in g) for g in brute] == [c.members for c in cb.clusters]
    assert len(brute[0]) == 2 and len(brute[1]) < 2
    _ok("oracle structure reproduction (test-based empty, cluster-based pair)")


def _fixture_srms(tmp_path, gcd_fixture_srm):
    rng = random.Random(2024)
    fixtures = {
        "gcd": gcd_fixture_srm,
        "fig": make_srm(FIG_GRID),
        "sentinels": make_srm(
            [[1, 1, 0], [2, 0, 2]],
            statuses=[["ok", "ok", "timeout"], ["ok", "crash", "ok"]],
        ),
        "random8x8": make_srm([[rng.randint(0, 3) for _ in range(8)] for _ in range(8)]),
    }
    paths = {}
    for name, srm in fixtures.items():
        path = tmp_path / f"{name}.srm.jsonl"
        save_srm(srm, path)
        paths[name] = (srm, path)
    return paths


def test_kill_matrix_equals_brute_force(tmp_path, gcd_fixture_srm):
    checked = 0
    for name, (srm, path) in _fixture_srms(tmp_path, gcd_fixture_srm).items():
        header, raw_grid = cells_from_srm_file(path)
        n_versions = len(header["versions"])
        for base_idx in range(n_versions):
            base_id = header["versions"][base_idx]["id"]
            km = analysis.kill_matrix(srm, base_id)
            brute = brute_kill_grid_vs_base(raw_grid, base_idx)
            assert [list(r) for r in km.kills] == brute, (name, base_id)
            checked += 1
    assert checked >= 22
    _ok(f"kill matrix equals brute force on every fixture ({checked} references)")


def test_minimization_soundness():
    rng = random.Random(777)
    sound = 0
    bound_checked = 0
    for case in range(100):
        n_tests, n_versions = rng.randint(1, 10), rng.randint(1, 10)
        kills = [[rng.random() < 0.3 for _ in range(n_versions)] for _ in range(n_tests)]
        km = analysis.KillMatrix(
            "oracle",
            tuple(f"t{i}" for i in range(n_tests)),
            tuple(f"V{i}" for i in range(n_versions)),
            kills,
            frozenset(),
        )
        chosen = [int(t[1:]) for t in analysis.minimize_tests(km)]
        full = killed_by_tests(kills, range(n_tests))
        assert killed_by_tests(kills, chosen) == full
        sound += 1
        if n_tests <= 8:
            optimum = exhaustive_min_cover(kills)
            if optimum:
                assert len(chosen) <= harmonic(len(full)) * len(optimum) + 1e-9
                bound_checked += 1
    assert sound == 100
    _ok(f"minimization soundness 100/100 (greedy bound checked on {bound_checked} instances)")


def test_arena_determinism_and_shape():
    crash = "def gcd(a: int, b: int) -> int:\n    raise SystemExit(9)\n"
    returns_a = "def gcd(a: int, b: int) -> int:\n    return a\n"
    sources = [GCD_CORRECT_ITER, GCD_CORRECT_REC, crash, returns_a]
    tests = [int_sheet("t1", 3, 7), int_sheet("t2", 10, 15), int_sheet("t3", 18, 12)]
    sm = build_sm("gcd", GCD_SIG, tests, [ModuleVersion("", "python", s, "gcd") for s in sources])

    def signature_grid(srm):
        return [
            [(c.status, tuple(str(x) for x in c.row_outputs)) for c in row]
            for row in srm.cells
        ]

    grids = []
    for pool in (1, 4, 8):
        srm = execute(sm, ArenaConfig(pool_size=pool, wall_ms=500))
        assert sum(len(row) for row in srm.cells) == len(tests) * len(sources)
        grids.append(signature_grid(srm))
    assert grids[0] == grids[1] == grids[2]

    # the crash-on-purpose candidate affects only its own column
    grid = grids[0]
    for t in range(len(tests)):
        assert grid[t][2][0] == "crash"
        for v in (0, 1, 3):
            assert grid[t][v][0] == "ok"
    _ok("arena determinism across pool sizes; crash isolated to its column")


def test_srm_persistence_and_csv(tmp_path, gcd_fixture_srm):
    first = tmp_path / "first.srm.jsonl"
    second = tmp_path / "second.srm.jsonl"
    save_srm(gcd_fixture_srm, first)
    loaded = load_srm(first)
    save_srm(loaded, second)
    assert first.read_bytes() == second.read_bytes()
    assert loaded == gcd_fixture_srm

    csv_text = export_csv(loaded)
    n_cells = loaded.shape[0] * loaded.shape[1]
    assert len(csv_text.strip().splitlines()) == 1 + n_cells
    _ok("SRM persistence byte-identical; CSV rows equal cells")


def test_ranking_invariants(gcd_fixture_srm):
    srm = gcd_fixture_srm
    prompt = [s for s in srm.stimulus.tests if s.expected]
    verdict = oracle.vote_cluster_based(srm)
    ranking = analysis.rank_versions(srm, prompt, verdict)

    # hard filter: every excluded version fails a prompt assertion, every
    # included one satisfies them all
    included = {r.version_id for r in ranking}
    prompt_oracle = oracle.oracle_from_prompt(prompt)
    for v, version in enumerate(srm.stimulus.versions):
        passes = all(
            prompt_oracle.matches(k, output_vector(srm, k, v)) for k in range(len(prompt))
        )
        assert (version.version_id in included) == passes

    scaled = StimulusResponseMatrix(
        srm.stimulus,
        tuple(
            tuple(
                Observation(c.status, c.row_outputs, c.wall_us * 7,
                            tuple(w * 7 for w in c.per_row_wall_us), c.extra)
                for c in row
            )
            for row in srm.cells
        ),
    )
    assert [r.version_id for r in analysis.rank_versions(scaled, prompt, verdict)] == \
        [r.version_id for r in ranking]
    _ok("ranking invariants (hard filter sound, wall-scale invariant)")


@pytest.mark.skipif(
    not WORKER_TS.exists() or shutil.which("node") is None,
    reason="secondary worker not built (run npm install && npm run build in worker-ts/)",
)
def test_secondary_worker_conformance():
    from nvarena.workerproto import conformance_check

    report = conformance_check(f"node {WORKER_TS}", "python")
    detail = "; ".join(f"{c.case_id}: {c.detail}" for c in report.cases if not c.passed)
    assert report.ok, detail
    assert report.total == 12
    _ok("secondary worker passes 12/12 conformance cases")
