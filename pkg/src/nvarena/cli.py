"""nvarena command line: one subcommand per development-time service.

Every command accepts --seed, --config and --json. With --json exactly one
JSON document goes to stdout and all human text to stderr. Commands resume
from persisted SRM files, so generation, execution and analysis can run as
separate invocations. Exit codes: 0 ok, 1 usage, 2 parse/input, 3 no
version passed the prompt tests, 4 provider failure, 5 arena/worker
failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys

from . import analysis, arena, matrix, oracle, pipeline, providers, workerproto
from .errors import (
    AbortedError,
    DataflowError,
    DoctestParseError,
    DslSyntaxError,
    DuplicateIdError,
    EmptyGenerationError,
    EmptyMatrixError,
    InvalidWeightsError,
    MissingAssertionError,
    NoSurvivorsError,
    NvArenaError,
    PipelineStepError,
    PromptParseError,
    ProtocolError,
    ProviderUnavailableError,
    QuotaError,
    RefError,
    SheetSyntaxError,
    SignatureMismatchError,
    SpawnError,
    SrmFormatError,
    UndecidedOracleError,
    UnknownVersionError,
    UnsupportedTypeError,
    UsageError,
    WorkerUnavailableError,
)
from .matrix import ModuleVersion, build_sm, export_csv, load_srm, save_srm
from .sheets import sheets_from_prompt

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NO_SURVIVORS = 3
EXIT_PROVIDER = 4
EXIT_ARENA = 5
EXIT_INTERNAL = 70

_EXIT_BY_ERROR = (
    (UsageError, EXIT_USAGE),
    (NoSurvivorsError, EXIT_NO_SURVIVORS),
    ((ProviderUnavailableError, QuotaError, EmptyGenerationError), EXIT_PROVIDER),
    ((WorkerUnavailableError, SpawnError, AbortedError, ProtocolError), EXIT_ARENA),
    (
        (
            SheetSyntaxError, RefError, UnsupportedTypeError, PromptParseError,
            DoctestParseError, SrmFormatError, DslSyntaxError, DataflowError,
            DuplicateIdError, SignatureMismatchError, UnknownVersionError,
            EmptyMatrixError, MissingAssertionError, UndecidedOracleError,
            InvalidWeightsError,
        ),
        EXIT_PARSE,
    ),
)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineStepError):
        return exit_code_for(exc.cause)
    for types, code in _EXIT_BY_ERROR:
        if isinstance(exc, types):
            return code
    if isinstance(exc, NvArenaError):
        return EXIT_PARSE
    return EXIT_INTERNAL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class Output:
    """stdout/stderr discipline: one JSON document on stdout under --json."""

    def __init__(self, as_json: bool):
        self.as_json = as_json

    def info(self, text: str):
        print(text, file=sys.stderr if self.as_json else sys.stdout)

    def emit(self, doc, human: str | None = None):
        if self.as_json:
            print(json.dumps(doc, ensure_ascii=False, indent=2))
        elif human is not None:
            print(human, end="" if human.endswith("\n") else "\n")
        else:
            print(json.dumps(doc, ensure_ascii=False, indent=2))

    def fail(self, exc: BaseException):
        code = exit_code_for(exc)
        if self.as_json:
            print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc), "exit": code}}))
        print(f"error: {exc}", file=sys.stderr)
        return code


# --- config -------------------------------------------------------------------------


def load_config(path: str | None) -> dict:
    """Flatten an ini-style config into {"section.key": value} strings."""
    parser = configparser.ConfigParser()
    if path:
        read = parser.read(path)
        if not read:
            raise UsageError(f"config file {path} not readable")
    else:
        parser.read("./nvarena.conf")
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[f"{section}.{key}"] = value
    return flat


def _cfg(flat: dict, key: str, default, cast=str):
    if key not in flat:
        return default
    raw = flat[key]
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def arena_config(flat: dict, args, virtual_default=False) -> arena.ArenaConfig:
    worker_command = {"python": arena.STUB_COMMAND}
    for key, value in flat.items():
        if key.startswith("arena.worker."):
            worker_command[key[len("arena.worker."):]] = value
    return arena.ArenaConfig(
        pool_size=_cfg(flat, "arena.pool_size", 4, int),
        wall_ms=_cfg(flat, "arena.wall_ms", 2000, int),
        mem_mb=_cfg(flat, "arena.mem_mb", 256, int),
        worker_command=worker_command,
        retry_on_crash=_cfg(flat, "arena.retry_on_crash", 1, int),
        virtual_time=_cfg(flat, "arena.virtual_time", virtual_default, bool),
    )


def ranking_weights(flat: dict) -> analysis.RankingWeights:
    return analysis.RankingWeights(
        w_prompt_pass=_cfg(flat, "ranking.w_prompt_pass", 0.55, float),
        w_oracle_agree=_cfg(flat, "ranking.w_oracle_agree", 0.25, float),
        w_speed=_cfg(flat, "ranking.w_speed", 0.10, float),
        w_static=_cfg(flat, "ranking.w_static", 0.10, float),
    )


def make_provider(name: str, flat: dict):
    if name == "mock":
        return providers.MockProvider()
    if name == "http":
        transcript = flat.get("provider.transcript")
        transport = providers.ReplayTransport(transcript) if transcript else None
        return providers.HttpProvider(
            url=flat.get("provider.url"),
            token=flat.get("provider.token"),
            model=flat.get("provider.model"),
            transport=transport,
        )
    raise UsageError(f"unknown provider {name!r} (mock or http)")


def _verdict_for(srm, strategy: str, allow_degenerate: bool, prompt_tests=None):
    if strategy in ("test", "test_based"):
        return oracle.vote_test_based(srm, allow_degenerate=allow_degenerate)
    if strategy in ("cluster", "cluster_based"):
        return oracle.vote_cluster_based(srm, allow_degenerate=allow_degenerate)
    if strategy in ("prompt", "prompt_assertions"):
        tests = prompt_tests if prompt_tests is not None else [
            s for s in srm.stimulus.tests if s.expected
        ]
        return oracle.oracle_from_prompt(tests)
    raise UsageError(f"unknown oracle strategy {strategy!r}")


# --- subcommands --------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def cmd_recommend(args, flat, out: Output) -> int:
    if args.n < 1:
        raise UsageError("-n must be >= 1")
    if args.tests < 0:
        raise UsageError("--tests must be >= 0")
    prompt = _read(args.prompt)
    signature, prompt_sheets = sheets_from_prompt(prompt)
    provider = make_provider(args.provider, flat)

    versions_result = providers.generate(
        providers.GenerationRequest(prompt, "versions", args.n, args.seed), provider
    )
    versions = [ModuleVersion("", "python", src, signature.name, "provider")
                for src in versions_result.items]
    tests = list(prompt_sheets)
    if args.tests > 0:
        tests_result = providers.generate(
            providers.GenerationRequest(prompt, "tests", args.tests, args.seed), provider
        )
        from .sheets import parse_sheet

        tests.extend(parse_sheet(t) for t in tests_result.items)

    sm = build_sm(signature.name, signature, tests, versions)
    cfg = arena_config(flat, args)
    srm = arena.execute(sm, cfg)
    if args.out:
        save_srm(srm, args.out)
        out.info(f"SRM written to {args.out}")

    verdict = _verdict_for(srm, args.strategy, args.allow_degenerate_oracle, prompt_sheets)
    ranking = analysis.rank_versions(srm, prompt_sheets, verdict, ranking_weights(flat))

    doc = {
        "problem": signature.name,
        "recommended": ranking[0].to_json(),
        "ranking": [r.to_json() for r in ranking],
        "oracle": verdict.to_json(),
        "srm": args.out,
    }
    human = ["recommended: " + ranking[0].version_id]
    for r in ranking:
        c = r.components
        human.append(
            f"  {r.version_id}: score={r.score:.4f} agree={c['oracle_agree']:.2f} "
            f"speed={c['speed']:.2f} static={c['static']:.2f}"
        )
    out.emit(doc, "\n".join(human) + "\n")
    return EXIT_OK


def cmd_difftest(args, flat, out: Output) -> int:
    if bool(args.srm) == bool(args.prompt):
        raise UsageError("difftest needs exactly one of --srm or --prompt")
    if not args.base and not args.base_id:
        raise UsageError("difftest needs --base FILE or --base-id ID")

    if args.srm:
        srm = load_srm(args.srm)
        if args.base:
            srm = _merge_base(srm, _read(args.base), flat, args)
            base_id = "base"
        else:
            base_id = args.base_id
    else:
        prompt = _read(args.prompt)
        signature, prompt_sheets = sheets_from_prompt(prompt)
        provider = make_provider(args.provider, flat)
        versions_result = providers.generate(
            providers.GenerationRequest(prompt, "versions", args.n, args.seed), provider
        )
        versions = [ModuleVersion("", "python", src, signature.name, "provider")
                    for src in versions_result.items]
        if args.base:
            versions.append(ModuleVersion("base", "python", _read(args.base), signature.name, "manual"))
            base_id = "base"
        else:
            base_id = args.base_id
        sm = build_sm(signature.name, signature, prompt_sheets, versions)
        srm = arena.execute(sm, arena_config(flat, args))

    report = analysis.diff_report(srm, base_id)
    out.emit(report.to_json(), report.render_text())
    return EXIT_OK


def _merge_base(srm, base_source: str, flat, args):
    """Execute the base module on the SRM's tests and add it as a column."""
    sm = srm.stimulus
    base = ModuleVersion("base", "python", base_source, sm.signature.name, "manual")
    base_sm = build_sm(sm.problem_id, sm.signature, sm.tests, [base])
    base_srm = arena.execute(base_sm, arena_config(flat, args))
    merged_sm = build_sm(sm.problem_id, sm.signature, sm.tests, list(sm.versions) + [base])
    cells = tuple(
        tuple(srm.cells[t]) + (base_srm.cells[t][0],) for t in range(len(sm.tests))
    )
    return matrix.StimulusResponseMatrix(merged_sm, cells)


def _km_for(args, flat, srm):
    if args.base_id:
        return analysis.kill_matrix(srm, args.base_id)
    verdict = _verdict_for(srm, args.strategy, args.allow_degenerate_oracle)
    return analysis.kill_matrix(srm, verdict)


def cmd_testquality(args, flat, out: Output) -> int:
    srm = load_srm(args.srm)
    km = _km_for(args, flat, srm)
    score = analysis.kill_score(km)
    doc = {"kill_matrix": km.to_json(), "score": score.to_json()}
    raw = "null" if score.raw is None else f"{score.raw:.4f}"
    adj = "null" if score.adjusted is None else f"{score.adjusted:.4f}"
    human = (
        f"kill score (raw): {raw}\nkill score (adjusted): {adj}\n"
        f"killed: {sorted(score.killed)}\nequivalent: {sorted(km.equivalent_versions)}\n"
    )
    out.emit(doc, human)
    return EXIT_OK


def cmd_minimize(args, flat, out: Output) -> int:
    srm = load_srm(args.srm)
    km = _km_for(args, flat, srm)
    minimized = analysis.minimize_tests(km)
    out.emit({"tests": minimized}, "minimized tests: " + (", ".join(minimized) if minimized else "(none)") + "\n")
    return EXIT_OK


def cmd_oracle(args, flat, out: Output) -> int:
    srm = load_srm(args.srm)
    verdict = _verdict_for(srm, args.strategy, args.allow_degenerate_oracle)
    out.emit(verdict.to_json())
    return EXIT_OK


def cmd_run(args, flat, out: Output) -> int:
    script = pipeline.parse_pipeline(_read(args.script))
    prompt_path = args.prompt or flat.get("run.prompt")
    if not prompt_path:
        raise UsageError("run needs --prompt (or run.prompt in config)")
    context = pipeline.PipelineContext(
        prompt_text=_read(prompt_path),
        provider=make_provider(args.provider, flat),
        seed=args.seed,
        arena_config=arena_config(flat, args, virtual_default=True),
        weights=ranking_weights(flat),
    )
    artifacts = pipeline.run_pipeline(script, context)
    doc = {
        "steps": len(script.steps),
        "artifacts": sorted(k for k in artifacts if k != "emitted"),
        "emitted": artifacts.get("emitted", {}),
    }
    out.emit(doc, "artifacts: " + ", ".join(doc["artifacts"]) + "\n")
    return EXIT_OK


def cmd_export(args, flat, out: Output) -> int:
    srm = load_srm(args.srm)
    verdict = None
    if args.strategy:
        verdict = _verdict_for(srm, args.strategy, args.allow_degenerate_oracle)
    csv_text = export_csv(srm, verdict)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        out.emit({"rows": csv_text.count("\n") - 1, "path": args.csv},
                 f"wrote {csv_text.count(chr(10)) - 1} rows to {args.csv}\n")
    else:
        out.emit({"csv": csv_text}, csv_text)
    return EXIT_OK


def cmd_conformance(args, flat, out: Output) -> int:
    report = workerproto.conformance_check(args.worker, args.language)
    out.emit(report.to_json(), report.render_text() + "\n")
    return EXIT_OK if report.ok else EXIT_ARENA


# --- argument wiring ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="nvarena", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None)
        p.add_argument("--json", action="store_true")
        p.add_argument("--allow-degenerate-oracle", action="store_true")

    p = sub.add_parser("recommend", help="rank generated versions against prompt tests")
    p.add_argument("--prompt", required=True)
    p.add_argument("-n", type=int, default=6, help="versions to generate")
    p.add_argument("--tests", type=int, default=2, help="extra tests to generate")
    p.add_argument("--provider", default="mock")
    p.add_argument("--strategy", default="cluster")
    p.add_argument("--out", default=None, help="write the executed SRM here")
    common(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("difftest", help="report discrepancies against a base version")
    p.add_argument("--base", default=None, help="base module source file")
    p.add_argument("--base-id", default=None, help="version id of an existing column")
    p.add_argument("--srm", default=None)
    p.add_argument("--prompt", default=None)
    p.add_argument("-n", type=int, default=6)
    p.add_argument("--provider", default="mock")
    common(p)
    p.set_defaults(func=cmd_difftest)

    for name, func in (("testquality", cmd_testquality), ("minimize", cmd_minimize)):
        p = sub.add_parser(name)
        p.add_argument("--srm", required=True)
        p.add_argument("--strategy", default="cluster")
        p.add_argument("--base-id", default=None)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="infer an oracle verdict from an SRM")
    p.add_argument("--srm", required=True)
    p.add_argument("--strategy", default="cluster")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("run", help="run a .dgai pipeline script")
    p.add_argument("script")
    p.add_argument("--prompt", default=None)
    p.add_argument("--provider", default="mock")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export", help="export an SRM as CSV")
    p.add_argument("--srm", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--strategy", default=None)
    common(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("conformance", help="check a worker against the golden transcript")
    p.add_argument("--worker", required=True, help="worker command line (launched with --serve)")
    p.add_argument("--language", default="python")
    common(p)
    p.set_defaults(func=cmd_conformance)

    return parser


def main(argv=None) -> int:
    out = Output(as_json="--json" in (argv if argv is not None else sys.argv[1:]))
    try:
        args = build_parser().parse_args(argv)
        out = Output(as_json=getattr(args, "json", False))
        flat = load_config(args.config)
        return args.func(args, flat, out)
    except NvArenaError as exc:
        return out.fail(exc)
    except OSError as exc:
        return out.fail(UsageError(str(exc)))
    except KeyboardInterrupt:
        return out.fail(AbortedError("interrupted"))


if __name__ == "__main__":
    sys.exit(main())
