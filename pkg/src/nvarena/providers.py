"""Sources of N module versions and generated tests.

Two providers: a deterministic mock (variant templates plus seeded mutation
operators, standing in for model non-determinism) and a client for a
chat-completion-style HTTP endpoint. Network tests replay recorded
transcripts; generation always completes before execution begins, so the
arena never waits on a provider.
"""

from __future__ import annotations

import json
import os
import random
import re
from dataclasses import dataclass, field

import requests

from .errors import (
    EmptyGenerationError,
    ProviderUnavailableError,
    QuotaError,
    SheetSyntaxError,
    UnsupportedTypeError,
)
from .sheets import Invocation, SequenceSheet, parse_sheet, render_sheet, sheets_from_prompt

ENV_URL = "NV_PROVIDER_URL"
ENV_TOKEN = "NV_PROVIDER_TOKEN"
ENV_MODEL = "NV_PROVIDER_MODEL"


@dataclass(frozen=True)
class GenerationRequest:
    prompt_text: str
    kind: str  # versions | tests
    n: int
    seed: int = 0
    temperature: float = 0.8
    max_tokens: int = 512

    def __post_init__(self):
        if self.kind not in ("versions", "tests"):
            raise ValueError(f"unknown generation kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ProviderResult:
    items: tuple
    provider_id: str
    raw_metadata: dict = field(default_factory=dict)


def normalize_ws(text: str) -> str:
    lines = [ln.rstrip() for ln in text.replace("\r\n", "\n").split("\n")]
    while lines and not lines[0]:
        lines.pop(0)
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def dedup_normalize(sources):
    """Collapse whitespace-normalized duplicates, keeping first occurrences."""
    seen = set()
    out = []
    for src in sources:
        key = normalize_ws(src)
        if key not in seen:
            seen.add(key)
            out.append(src)
    return out


def generate(req: GenerationRequest, provider) -> ProviderResult:
    """Run one generation request: provider output, deduplicated and validated.

    Test items that do not parse as sheets are dropped with a per-item
    diagnostic in raw_metadata instead of failing the batch.
    """
    result = provider.generate(req)
    items = dedup_normalize(list(result.items))[: req.n]
    diagnostics = list(result.raw_metadata.get("diagnostics", []))
    if req.kind == "tests":
        kept = []
        for i, text in enumerate(items):
            try:
                parse_sheet(text)
                kept.append(text)
            except (SheetSyntaxError, UnsupportedTypeError) as exc:
                diagnostics.append(f"item {i}: {exc}")
        items = kept
    if not items:
        raise EmptyGenerationError(
            f"provider {result.provider_id} produced no usable {req.kind}"
            + (f" ({'; '.join(diagnostics)})" if diagnostics else "")
        )
    meta = dict(result.raw_metadata)
    if diagnostics:
        meta["diagnostics"] = diagnostics
    return ProviderResult(tuple(items), result.provider_id, meta)


# --- mock provider ---------------------------------------------------------------

_GCD_CORRECT = [
    "def gcd(a: int, b: int) -> int:\n    while b != 0:\n        a, b = b, a % b\n    return abs(a)\n",
    "def gcd(a: int, b: int) -> int:\n    if b == 0:\n        return abs(a)\n    return gcd(b, a % b)\n",
]

# deliberately wrong in distinguishable ways (wrong value, wrong order
# handling, boundary slip, sign slip, divergence on zero)
_GCD_BUGS = [
    "def gcd(a: int, b: int) -> int:\n    return a\n",
    "def gcd(a: int, b: int) -> int:\n    while b != 0:\n        a, b = b, b % a\n    return a\n",
    "def gcd(a: int, b: int) -> int:\n    g = 1\n    for d in range(2, min(a, b)):\n        if a % d == 0 and b % d == 0:\n            g = d\n    return g\n",
    "def gcd(a: int, b: int) -> int:\n    while b != 0:\n        a, b = b, a % b\n    return a\n",
    "def gcd(a: int, b: int) -> int:\n    while a != b:\n        if a > b:\n            a = a - b\n        else:\n            b = b - a\n    return a\n",
    "def gcd(a: int, b: int) -> int:\n    return b\n",
    "def gcd(a: int, b: int) -> int:\n    return min(a, b)\n",
]

_ADD_CORRECT = [
    "def add(a: int, b: int) -> int:\n    return a + b\n",
    "def add(a: int, b: int) -> int:\n    total = a\n    total += b\n    return total\n",
]

_ADD_BUGS = [
    "def add(a: int, b: int) -> int:\n    return a - b\n",
    "def add(a: int, b: int) -> int:\n    return a + b + 1\n",
    "def add(a: int, b: int) -> int:\n    return abs(a + b)\n",
]

_TEMPLATES = {"gcd": (_GCD_CORRECT, _GCD_BUGS), "add": (_ADD_CORRECT, _ADD_BUGS)}

# (pattern, replacement, label) applied to the first correct variant
_MUTATIONS = [
    ("a % b", "a // b", "operator swap"),
    ("b != 0", "b > 1", "boundary shift"),
    ("while b != 0", "while b == 0", "branch negation"),
    ("a + b", "a * b", "operator swap"),
]


class MockProvider:
    """Deterministic provider: same (prompt, kind, n, seed) -> same bytes.

    The two reference-correct variants always lead the version stream; the
    buggy tail is a seeded shuffle, with seeded mutation operators extending
    it when n exceeds the template pool.
    """

    provider_id = "mock"

    def generate(self, req: GenerationRequest) -> ProviderResult:
        signature, prompt_sheets = sheets_from_prompt(req.prompt_text)
        if req.kind == "versions":
            items = self._versions(signature.name, req)
        else:
            items = self._tests(signature, prompt_sheets, req)
        return ProviderResult(tuple(items), self.provider_id, {"seed": req.seed})

    def _versions(self, name: str, req: GenerationRequest):
        if name not in _TEMPLATES:
            raise EmptyGenerationError(f"mock provider has no variant templates for {name!r}")
        correct, bugs = _TEMPLATES[name]
        rng = random.Random(f"{req.seed}:versions")
        tail = list(bugs)
        rng.shuffle(tail)
        pool = list(correct) + tail
        for pattern, replacement, label in _MUTATIONS:
            if pattern in correct[0]:
                mutated = correct[0].replace(pattern, replacement) + f"# variant: {label}\n"
                pool.append(mutated)
        return pool[: req.n]

    def _tests(self, signature, prompt_sheets, req: GenerationRequest):
        rng = random.Random(f"{req.seed}:tests")
        taken = set()
        for sheet in prompt_sheets:
            for row in sheet.rows:
                taken.add(tuple(repr(x) for x in row.inputs))
        sheets = []
        attempts = 0
        while len(sheets) < req.n and attempts < req.n * 20:
            attempts += 1
            inputs = [self._sample(tag, rng) for tag in signature.param_types]
            key = tuple(repr(x) for x in inputs)
            if key in taken:
                continue
            taken.add(key)
            sheet = SequenceSheet(
                sheet_id=f"gen{len(sheets) + 1}",
                signature=signature,
                rows=[Invocation(1, signature.name, inputs)],
            )
            sheets.append(render_sheet(sheet))
        return sheets

    @staticmethod
    def _sample(tag: str, rng: random.Random):
        if tag == "int":
            return rng.choice([rng.randint(1, 30), rng.randint(1, 30), rng.randint(2, 6) ** 2,
                               rng.choice([6, 7, 12, 12, 18, 21, 25])])
        if tag == "float":
            return round(rng.uniform(-10, 10), 3)
        if tag == "string":
            return "s" + str(rng.randint(0, 99))
        if tag == "bool":
            return rng.random() < 0.5
        if tag == "list":
            return [rng.randint(0, 9) for _ in range(rng.randint(0, 4))]
        if tag == "map":
            return {f"k{i}": rng.randint(0, 9) for i in range(rng.randint(0, 3))}
        return None


# --- HTTP provider ----------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\s*\n(.*?)```", re.DOTALL)

DEFAULT_TEST_PROMPT = (
    "Produce additional tests for the function below as sequence sheets, one per\n"
    "reply, using the line format: 'sheet <id> <signature>' then '1,<name>,<inputs...>'.\n"
)


def extract_code(content: str) -> str:
    """Strip a markdown fence when present, else return the trimmed content."""
    m = _FENCE_RE.search(content)
    return (m.group(1) if m else content).strip() + "\n"


class ReplayTransport:
    """Serves recorded {request, response} JSONL pairs in order."""

    def __init__(self, path):
        self.path = path
        try:
            with open(path, "r", encoding="utf-8") as fh:
                self.records = [json.loads(ln) for ln in fh if ln.strip()]
        except OSError as exc:
            raise ProviderUnavailableError(f"transcript {path} not readable: {exc}") from exc
        self.cursor = 0

    def __call__(self, payload: dict) -> dict:
        if self.cursor >= len(self.records):
            raise ProviderUnavailableError(f"transcript {self.path} exhausted")
        record = self.records[self.cursor]
        self.cursor += 1
        recorded = record["request"]
        for key in ("model", "n"):
            if key in recorded and recorded[key] != payload.get(key):
                raise ProviderUnavailableError(
                    f"transcript {self.path} mismatch on {key!r}: {recorded[key]!r} != {payload.get(key)!r}"
                )
        return record["response"]


class RecordingTransport:
    """Wraps a live transport and appends pairs to a transcript file."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = path

    def __call__(self, payload: dict) -> dict:
        response = self.inner(payload)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"request": payload, "response": response}, ensure_ascii=False) + "\n")
        return response


class HttpProvider:
    """Client for a chat-completion-style JSON endpoint."""

    provider_id = "http"

    def __init__(self, url=None, token=None, model=None, transport=None, timeout_s=60,
                 test_prompt_template=DEFAULT_TEST_PROMPT):
        self.url = url or os.environ.get(ENV_URL)
        self.token = token if token is not None else os.environ.get(ENV_TOKEN)
        self.model = model or os.environ.get(ENV_MODEL, "")
        self.timeout_s = timeout_s
        self.test_prompt_template = test_prompt_template
        self.transport = transport or self._live
        if transport is None and not self.url:
            raise ProviderUnavailableError(f"no provider URL ({ENV_URL} unset)")

    def _live(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(self.url, json=payload, headers=headers, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ProviderUnavailableError(f"provider request failed: {exc}") from exc
        if resp.status_code == 429:
            raise QuotaError("provider returned 429 (quota)")
        if resp.status_code != 200:
            raise ProviderUnavailableError(f"provider returned HTTP {resp.status_code}")
        return resp.json()

    def generate(self, req: GenerationRequest) -> ProviderResult:
        content = req.prompt_text
        if req.kind == "tests":
            content = self.test_prompt_template + "\n" + req.prompt_text
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "n": req.n,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        response = self.transport(payload)
        try:
            contents = [c["message"]["content"] for c in response["choices"]]
        except (KeyError, TypeError) as exc:
            raise ProviderUnavailableError(f"malformed provider response: {exc!r}") from exc
        items = [extract_code(c) for c in contents]
        return ProviderResult(tuple(items), self.provider_id, {"model": self.model})
