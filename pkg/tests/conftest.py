import sys

import pytest

sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))

from nvarena.arena import ArenaConfig, execute
from nvarena.matrix import ModuleVersion, Observation, StimulusResponseMatrix, build_sm
from nvarena.sheets import Invocation, MethodSignature, SequenceSheet, sheets_from_prompt

GCD_PROMPT = '''def gcd(a: int, b: int) -> int:
  """ Return a greatest common divisor
  of two integers a and b
  >>> gcd(3, 7)
  1
  >>> gcd(10, 15)
  5"""
  (body to be generated)
'''

GCD_CORRECT_ITER = (
    "def gcd(a: int, b: int) -> int:\n"
    "    while b != 0:\n"
    "        a, b = b, a % b\n"
    "    return abs(a)\n"
)

GCD_CORRECT_REC = (
    "def gcd(a: int, b: int) -> int:\n"
    "    if b == 0:\n"
    "        return abs(a)\n"
    "    return gcd(b, a % b)\n"
)

# the four seeded bug kinds used by the analysis fixtures
GCD_BUG_RETURNS_A = "def gcd(a: int, b: int) -> int:\n    return a\n"

GCD_BUG_MOD_SWAPPED = (
    "def gcd(a: int, b: int) -> int:\n"
    "    while b != 0:\n"
    "        a, b = b, b % a\n"
    "    return a\n"
)

GCD_BUG_OFF_BY_ONE = (
    "def gcd(a: int, b: int) -> int:\n"
    "    g = 1\n"
    "    for d in range(2, min(a, b)):\n"
    "        if a % d == 0 and b % d == 0:\n"
    "            g = d\n"
    "    return g\n"
)

GCD_BUG_NO_ABS = (
    "def gcd(a: int, b: int) -> int:\n"
    "    while b != 0:\n"
    "        a, b = b, a % b\n"
    "    return a\n"
)

GCD_SIG = MethodSignature("gcd", ("int", "int"), "int")


def int_sheet(sheet_id, a, b, expected=None, signature=GCD_SIG):
    rows = [Invocation(1, signature.name, [a, b])]
    asserts = [(1, expected)] if expected is not None else []
    return SequenceSheet(sheet_id, signature, rows, asserts)


def make_srm(outputs_grid, signature=GCD_SIG, problem="gcd", statuses=None):
    """Synthetic executed SRM: one-row tests, given per-cell outputs.

    outputs_grid[t][v] is the single row output (a plain value) unless
    statuses marks the cell failed, in which case it is ignored.
    """
    from nvarena.values import SENTINEL_FOR_STATUS

    n_tests = len(outputs_grid)
    n_versions = len(outputs_grid[0])
    tests = [int_sheet(f"t{t + 1}", t + 1, t + 2) for t in range(n_tests)]
    versions = [
        ModuleVersion(f"V{v + 1}", "python", f"# candidate {v + 1}\n", signature.name, "provider")
        for v in range(n_versions)
    ]
    sm = build_sm(problem, signature, tests, versions)
    cells = []
    for t in range(n_tests):
        row = []
        for v in range(n_versions):
            status = statuses[t][v] if statuses else "ok"
            if status == "ok":
                row.append(Observation("ok", (outputs_grid[t][v],), 1000 + t + v, (1000,)))
            else:
                row.append(Observation(status, (SENTINEL_FOR_STATUS[status],), 1000, (0,)))
        cells.append(tuple(row))
    return StimulusResponseMatrix(sm, tuple(cells))


@pytest.fixture(scope="session")
def gcd_prompt_sheets():
    return sheets_from_prompt(GCD_PROMPT)


@pytest.fixture(scope="session")
def gcd_fixture_srm():
    """6 versions (2 correct, 4 seeded bugs) x 4 tests, really executed.

    gen1 (6,6) distinguishes the boundary-slip bug, gen2 (3,-7) the sign
    and order bugs; the recursive correct variant stays equivalent to the
    iterative one over these tests.
    """
    signature, prompt_sheets = sheets_from_prompt(GCD_PROMPT)
    tests = list(prompt_sheets) + [int_sheet("gen1", 6, 6), int_sheet("gen2", 3, -7)]
    sources = [
        GCD_CORRECT_ITER,
        GCD_CORRECT_REC,
        GCD_BUG_RETURNS_A,
        GCD_BUG_MOD_SWAPPED,
        GCD_BUG_OFF_BY_ONE,
        GCD_BUG_NO_ABS,
    ]
    versions = [ModuleVersion("", "python", src, "gcd", "provider") for src in sources]
    sm = build_sm("gcd", signature, tests, versions)
    return execute(sm, ArenaConfig(pool_size=4, wall_ms=500))


# Shaped like the published oracle example: per-test majorities exist but no
# version matches all of them, while V4/V5 form the unique largest cluster.
FIG_GRID = [
    [1, 1, 0, 1, 1],
    [8, 8, 8, 2, 2],
    [3, 5, 5, 5, 5],
    [7, 9, 7, 7, 7],
]


@pytest.fixture()
def fig_oracle_srm():
    return make_srm(FIG_GRID)
