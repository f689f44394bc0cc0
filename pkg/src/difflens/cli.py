"""Campaign orchestration: one subcommand per pipeline stage.

Stages write their artifacts under the output directory and later stages
consume them, so a campaign can be restarted at any point:

    validate-inputs -> validation/<api>.json
    synth           -> counterparts/<api>.json
    extract         -> constraints/<api>.json (+ .report.txt)
    fuzz            -> campaign/<api>.ndjson (+ .summary.json)
    report          -> report/report.csv, report.txt, figures/*.png

Exit codes: 0 clean, 1 bugs found, 2 configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import CampaignConfig, ConfigError, load_config
from .extraction import (
    constraints_from_doc,
    constraints_to_doc,
    extract_path_constraints,
    write_extraction_report,
)
from .gateway import Gateway, backend_from_config
from .harness import Harness, load_targets_config
from .ir import FunctionIR, load_corpus
from .reporting import BUG_VERDICTS, build_report
from .synthesis import Counterpart, synthesize
from .validation import ValidationSet, build_validation_set
from . import fuzzing

EXIT_CLEAN = 0
EXIT_BUGS = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


class StageError(RuntimeError):
    """Missing prerequisite artifact or unusable configuration."""


def _rng_for(cfg: CampaignConfig, api: str, stage: str) -> random.Random:
    return random.Random(f"{cfg.seed}:{stage}:{api}")


def _corpus_apis(cfg: CampaignConfig) -> dict[str, FunctionIR]:
    corpus = load_corpus(cfg.corpus_dir)
    apis = {name: ir for name, ir in corpus.items() if not name.endswith(".counterpart")}
    if cfg.apis:
        missing = [a for a in cfg.apis if a not in apis]
        if missing:
            raise StageError(f"APIs not in corpus {cfg.corpus_dir}: {', '.join(missing)}")
        apis = {a: apis[a] for a in cfg.apis}
    return apis


def _gateway(cfg: CampaignConfig) -> Gateway:
    return Gateway(backend_from_config(cfg.backend, cfg.fixtures_dir))


def _harness(cfg: CampaignConfig) -> Harness:
    targets = load_targets_config(cfg.targets_file) if cfg.targets_file else {}
    return Harness(targets)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise StageError(f"missing artifact {path} — run `{hint}` first")
    return path


def _fan_out(cfg: CampaignConfig, items, fn):
    if cfg.jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_validate_inputs(cfg: CampaignConfig) -> int:
    apis = _corpus_apis(cfg)
    out = Path(cfg.out_dir) / "validation"
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(cfg)
    with _harness(cfg) as harness:
        def run(item):
            name, ir = item
            vs = build_validation_set(ir.signature, gateway, harness,
                                      cfg.api_target, cfg.library)
            if vs is None:
                print(f"validate-inputs: {name}: no valid inputs, API skipped")
                return 0
            vs.save(out / f"{name}.json")
            print(f"validate-inputs: {name}: {len(vs.inputs)} inputs")
            return len(vs.inputs)

        _fan_out(cfg, sorted(apis.items()), run)
    return EXIT_CLEAN


def stage_synth(cfg: CampaignConfig) -> int:
    apis = _corpus_apis(cfg)
    validation_dir = Path(cfg.out_dir) / "validation"
    out = Path(cfg.out_dir) / "counterparts"
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(cfg)
    with _harness(cfg) as harness:
        def run(item):
            name, ir = item
            vs_path = validation_dir / f"{name}.json"
            if not vs_path.exists():
                raise StageError(
                    f"missing artifact {vs_path} — run `difflens validate-inputs` first")
            vs = ValidationSet.load(vs_path)
            counterpart, transcript = synthesize(
                ir.signature, vs, gateway, harness, _rng_for(cfg, name, "synth"),
                cfg.api_target, cfg.counterpart_target, cfg.counterpart_library,
                eps=cfg.epsilon)
            counterpart.save(out / f"{name}.json", transcript)
            print(f"synth: {name}: {counterpart.status} "
                  f"(round {counterpart.round}, iteration {counterpart.iteration})")

        _fan_out(cfg, sorted(apis.items()), run)
    return EXIT_CLEAN


def stage_extract(cfg: CampaignConfig) -> int:
    corpus = load_corpus(cfg.corpus_dir)
    apis = _corpus_apis(cfg)
    out = Path(cfg.out_dir) / "constraints"
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(cfg) if cfg.infer else None

    def run(item):
        name, ir = item
        pool = extract_path_constraints(ir, gateway, origin="api")
        counterpart_ir = corpus.get(f"{name}.counterpart")
        if counterpart_ir is not None:
            extra = extract_path_constraints(counterpart_ir, gateway, origin="counterpart")
            known = {pc.canonical_hash for pc in pool}
            pool.extend(pc for pc in extra if pc.canonical_hash not in known)
        (out / f"{name}.json").write_text(
            json.dumps(constraints_to_doc(name, pool), sort_keys=True, indent=1))
        write_extraction_report(name, pool, out / f"{name}.report.txt")
        mean = (sum(len(pc.constraints) for pc in pool) / len(pool)) if pool else 0.0
        print(f"extract: {name}: {len(pool)} unique path constraints, "
              f"{mean:.2f} constraints/path")

    _fan_out(cfg, sorted(apis.items()), run)
    return EXIT_CLEAN


def stage_fuzz(cfg: CampaignConfig) -> int:
    apis = _corpus_apis(cfg)
    base = Path(cfg.out_dir)
    out = base / "campaign"
    out.mkdir(parents=True, exist_ok=True)
    per_api_budget = max(1, cfg.iterations // max(1, len(apis)))
    bug_found = False
    with _harness(cfg) as harness:
        def run(item):
            name, ir = item
            constraints_path = _require(base / "constraints" / f"{name}.json",
                                        "difflens extract")
            counterpart_path = _require(base / "counterparts" / f"{name}.json",
                                        "difflens synth")
            validation_path = _require(base / "validation" / f"{name}.json",
                                       "difflens validate-inputs")
            pool = constraints_from_doc(json.loads(constraints_path.read_text()))
            counterpart = Counterpart.load(counterpart_path)
            if not counterpart.valid:
                print(f"fuzz: {name}: no valid counterpart, skipped")
                return None
            vs = ValidationSet.load(validation_path)
            result = fuzzing.run_campaign(
                ir.signature, pool, counterpart.program, vs, harness,
                _rng_for(cfg, name, "fuzz"), per_api_budget,
                api_target=cfg.api_target,
                counterpart_target=cfg.counterpart_target,
                eps=cfg.epsilon,
                transcript_path=out / f"{name}.ndjson",
                extra_patterns=cfg.error_patterns,
                deadline=cfg.budget_seconds,
            )
            (out / f"{name}.summary.json").write_text(
                json.dumps(result.summary_doc(), sort_keys=True, indent=1))
            flags = {k: v for k, v in result.verdict_counts.items() if k in BUG_VERDICTS}
            print(f"fuzz: {name}: {len(result.records)} iterations, bugs: {flags or 'none'}")
            return result

        results = _fan_out(cfg, sorted(apis.items()), run)
    for result in results:
        if result and any(result.verdict_counts.get(v) for v in BUG_VERDICTS):
            bug_found = True
    return EXIT_BUGS if bug_found else EXIT_CLEAN


def stage_report(cfg: CampaignConfig) -> int:
    campaign_dir = Path(cfg.out_dir) / "campaign"
    _require(campaign_dir, "difflens fuzz")
    bugs = build_report(Path(cfg.out_dir))
    report = Path(cfg.out_dir) / "report" / "report.txt"
    print(report.read_text())
    return EXIT_BUGS if bugs else EXIT_CLEAN


STAGES = {
    "validate-inputs": stage_validate_inputs,
    "synth": stage_synth,
    "extract": stage_extract,
    "fuzz": stage_fuzz,
    "report": stage_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difflens",
        description="differential-testing campaigns for numerical APIs",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--budget-iterations", type=int, default=None)
        p.add_argument("--budget-seconds", type=float, default=None)
        p.add_argument("--apis", type=str, default=None,
                       help="comma-separated API subset")
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--corpus", type=Path, default=None)
        p.add_argument("--fixtures", type=Path, default=None)
        p.add_argument("--backend", choices=["recorded", "mock", "live", "failing"],
                       default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--no-infer", action="store_true",
                       help="disable constraint inference during extraction")
    return parser


def _apply_overrides(cfg: CampaignConfig, args: argparse.Namespace):
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget_iterations is not None:
        cfg.iterations = args.budget_iterations
    if args.budget_seconds is not None:
        cfg.budget_seconds = args.budget_seconds
    if args.apis:
        cfg.apis = [a.strip() for a in args.apis.split(",") if a.strip()]
    if args.out is not None:
        cfg.out_dir = args.out
    if args.corpus is not None:
        cfg.corpus_dir = args.corpus
    if args.fixtures is not None:
        cfg.fixtures_dir = args.fixtures
    if args.backend is not None:
        cfg.backend = args.backend
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.no_infer:
        cfg.infer = False


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        cfg.validate()
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return STAGES[args.stage](cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        import traceback

        traceback.print_exc()
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
