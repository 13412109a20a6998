"""Command-line front end: one subcommand per pipeline stage, files in between.

Exit codes: 0 success, 2 usage or input error, 3 plan-generation pipeline
error, 4 simulation aborted (the partial trace is still written).
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .adapters import (
    FixtureBundle,
    load_fixture_bundle,
    live_config_from_env,
    remote_chat_adapter,
    remote_transit_adapter,
)
from .core import dump_plan, load_pois, parse_plan, validate_plan
from .errors import PipelineError, SimulationAborted, TravelsimError
from .maop import (
    MAX_ASPECTS,
    AspectGuidance,
    CallLog,
    ChatTranscript,
    assemble_context,
    decompose,
    plan_long_horizon,
    plan_maop,
    plan_naive_wide,
    route,
)
from .metrics import ChatEvaluator, FixtureEvaluator, PerWeights, score_plan
from .policies import ChatTravelerPolicy, EchoPolicy, HttpPolicy, ScriptedPolicy
from .report import provenance, report_csv, summary_line, write_json, write_report
from .sandbox import Providers, SimulationConfig, Trace, run_simulation
from .spatial import summarize

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE, EXIT_ABORT = 0, 2, 3, 4
METHODS = ("maop", "naive_wide", "long_horizon")
DEFAULT_REQUEST = "Plan a {days}-day trip in {city} for this traveler."

log = logging.getLogger("travelsim")


class UsageError(Exception):
    pass


@dataclass
class Env:
    bundle: FixtureBundle
    live: bool
    live_config: dict | None = None

    def chat_client(self):
        if self.live:
            return remote_chat_adapter(self.live_config["chat"])
        return self.bundle.chat_client()

    def providers(self) -> Providers:
        providers = self.bundle.providers()
        if self.live:
            providers.transit = remote_transit_adapter(self.live_config["transit"], self.bundle.pois)
        return providers


def _environment(args) -> Env:
    if args.live:
        return Env(load_fixture_bundle(args.data), True, live_config_from_env())
    return Env(load_fixture_bundle(args.fixture), False)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _config(args) -> dict:
    skip = {"func", "out"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}


# --- preprocess ------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    inputs = {}
    if args.pois:
        try:
            pois = load_pois(args.pois)
        except FileNotFoundError:
            raise UsageError(f"file not found: {args.pois}") from None
        except (json.JSONDecodeError, ValueError) as exc:
            raise UsageError(f"{args.pois}: {exc}") from None
        if not args.hotel:
            raise UsageError("--hotel is required with --pois")
        hotel, days = args.hotel, args.days or 3
        inputs["pois"] = args.pois
    else:
        env = _environment(args)
        pois = env.bundle.pois
        hotel = args.hotel or env.bundle.manifest.get("hotel")
        days = args.days or int(env.bundle.manifest.get("days", 3))
        inputs["pois"] = env.bundle.file("pois.json")
    if hotel not in pois:
        raise UsageError(f"unknown hotel {hotel!r}")
    summary = summarize(pois, hotel, args.k or days, args.seed)
    out = _out_dir(args)
    write_json(out / "clusters.json", dict(summary.to_dict(), provenance=provenance("preprocess", _config(args), args.seed, inputs)))
    if summary.note:
        print(f"note: {summary.note}", file=sys.stderr)
    print(f"{summary.k} clusters written to {out / 'clusters.json'}")
    return EXIT_OK


# --- plan ------------------------------------------------------------------------------------


def _load_aspects(args, env: Env) -> list[AspectGuidance]:
    if args.aspects:
        doc = _read_json(args.aspects)
    else:
        doc = env.bundle.extras.get("aspects.json", {"aspects": []})
    items = doc.get("aspects", []) if isinstance(doc, dict) else doc
    try:
        return [AspectGuidance.from_dict(a) for a in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad aspects file: {exc}") from None


def cmd_plan(args) -> int:
    env = _environment(args)
    bundle = env.bundle
    profile = bundle.profile(args.profile)
    hotel = args.hotel or bundle.manifest.get("hotel")
    if hotel not in bundle.pois:
        raise UsageError(f"unknown hotel {hotel!r}")
    days = args.days or int(bundle.manifest.get("days", 3))
    request = args.request or DEFAULT_REQUEST.format(days=days, city=bundle.city)
    aspects = _load_aspects(args, env) if args.method != "maop" else []
    if args.method == "naive_wide" and not aspects:
        raise UsageError("naive_wide needs at least one aspect (--aspects FILE)")

    summary = summarize(bundle.pois, hotel, days, args.seed)
    context = assemble_context(profile, bundle.pois[hotel], bundle.posts, summary.routes, summary.bearings, bundle.pois)
    client = env.chat_client()
    audit = CallLog()
    transcript = ChatTranscript()
    blueprint = None
    out = _out_dir(args)
    try:
        if args.method == "maop":
            raw = decompose(context, request, args.samples, client, seed=args.seed, max_in_flight=args.jobs, audit=audit)
            blueprint = route(raw, args.max_aspects, client, request=request, audit=audit)
            plan, transcript = plan_maop(blueprint, context, client, request=request, pois=bundle.pois, audit=audit)
        elif args.method == "naive_wide":
            plan = plan_naive_wide(
                context, aspects, client, request=request, pois=bundle.pois, max_in_flight=args.jobs, audit=audit, transcript=transcript
            )
        else:
            guidance = args.guidance if args.guidance is not None else "\n".join(f"- {a.aspect}: {a.guidance}" for a in aspects)
            plan = plan_long_horizon(context, guidance, client, request=request, pois=bundle.pois, audit=audit, transcript=transcript)
    except PipelineError as exc:
        dialogue = exc.transcript if isinstance(exc.transcript, ChatTranscript) else transcript
        write_json(out / "transcript.json", {"method": args.method, "error": str(exc), "dialogue": dialogue.to_dict(), "calls": list(audit)})
        print(f"error: {exc} (transcript in {out / 'transcript.json'})", file=sys.stderr)
        return EXIT_PIPELINE

    (out / "plan.json").write_text(dump_plan(plan), encoding="utf-8")
    write_json(
        out / "transcript.json",
        {
            "method": args.method,
            "context": context.render(),
            "dialogue": transcript.to_dict(),
            "calls": list(audit),
            "provenance": provenance("plan", _config(args), args.seed, {"pois": bundle.file("pois.json")}),
        },
    )
    if blueprint is not None:
        write_json(out / "blueprint.json", blueprint.to_dict())
    report = validate_plan(plan, pois=bundle.pois)
    status = "pass" if report.all_passed else "fail: " + "; ".join(report.failures)
    print(f"plan written to {out / 'plan.json'} ({len(plan.entries)} entries; structural checks {status})")
    return EXIT_OK


# --- simulate ----------------------------------------------------------------------------------


def _load_plan(path, bundle: FixtureBundle):
    if path is None:
        if "plan.json" not in bundle.extras:
            raise UsageError("no --plan given and the bundle has no plan.json")
        return parse_plan(bundle.extras["plan.json"], bundle.pois), bundle.file("plan.json")
    return parse_plan(_read_json(path), bundle.pois), Path(path)


def _make_policy(args, env: Env, profile, providers):
    if args.policy == "remote":
        if args.policy_url:
            return HttpPolicy(args.policy_url, profile, timeout=args.timeout)
        if not env.live:
            raise UsageError("--policy remote needs --policy-url or --live")
        return ChatTravelerPolicy(env.chat_client(), profile, seed=args.seed)
    if args.decisions:
        return ScriptedPolicy(_read_json(args.decisions).get("decisions", []))
    return EchoPolicy(providers, profile.stamina_rule)


def _simulate_one(args, env: Env, plan_path, profile_id, out: Path) -> tuple[int, str]:
    plan, _ = _load_plan(plan_path, env.bundle)
    profile = env.bundle.profile(profile_id)
    providers = env.providers()
    policy = _make_policy(args, env, profile, providers)
    config = SimulationConfig(seed=args.seed, max_steps_per_day=args.max_steps, decision_timeout_s=args.timeout or None)
    out.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_simulation(plan, profile, policy, providers, config)
        code, note = EXIT_OK, ""
    except SimulationAborted as exc:
        trace, code, note = exc.trace, EXIT_ABORT, f" (aborted: {exc.reason})"
    (out / "trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
    return code, f"trace written to {out / 'trace.jsonl'}{note}"


def cmd_simulate(args) -> int:
    env = _environment(args)
    plans = args.plan or [None]
    profiles = args.profile or [None]
    pairs = list(itertools.product(plans, profiles))
    out = _out_dir(args)

    def target(pair):
        plan_path, profile_id = pair
        if len(pairs) == 1:
            return out
        stem = Path(plan_path).stem if plan_path else "plan"
        return out / f"{stem}__{profile_id or 'default'}"

    def run(pair):
        return _simulate_one(args, env, pair[0], pair[1], target(pair))

    if args.jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(p) for p in pairs]
    for code, message in results:
        print(message, file=sys.stderr if code else sys.stdout)
    return max(code for code, _ in results)


# --- score ------------------------------------------------------------------------------------------


def _evaluator(args, env: Env):
    if args.evaluator:
        return FixtureEvaluator.from_dict(_read_json(args.evaluator)), Path(args.evaluator)
    if env.live:
        return ChatEvaluator(env.chat_client(), env.bundle.pois, seed=args.seed), None
    doc = env.bundle.extras.get("evaluator.json", {})
    return FixtureEvaluator.from_dict(doc), env.bundle.file("evaluator.json") if doc else None


def cmd_score(args) -> int:
    env = _environment(args)
    bundle = env.bundle
    plans = args.plan or [None]
    traces = args.trace
    if len(plans) != len(traces):
        raise UsageError("give one --plan per --trace")
    weights = PerWeights.from_file(args.weights) if args.weights else None
    if args.posts:
        posts, posts_path = _read_json(args.posts), Path(args.posts)
    else:
        posts, posts_path = bundle.posts, bundle.file("posts.json") if bundle.posts else None
    out = _out_dir(args)

    def run(i):
        plan, plan_path = _load_plan(plans[i], bundle)
        try:
            trace = Trace.from_jsonl(Path(traces[i]).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"file not found: {traces[i]}") from None
        evaluator, evaluator_path = _evaluator(args, env)
        profile = bundle.profile(trace.header.get("profile") or None)
        card = score_plan(plan, trace, posts, evaluator, profile, bundle.pois, weights)
        inputs = {"plan": plan_path, "trace": traces[i]}
        if posts_path:
            inputs["posts"] = posts_path
        if evaluator_path:
            inputs["evaluator"] = evaluator_path
        if args.weights:
            inputs["weights"] = args.weights
        prov = provenance("score", _config(args), args.seed, inputs)
        run_name = Path(traces[i]).parent.name or f"run{i}"
        target = out if len(traces) == 1 else out / f"{i:03d}_{run_name}"
        write_report(target, card, plan, trace, prov, bundle.pois, run=run_name)
        return run_name, card

    if args.jobs > 1 and len(traces) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run, range(len(traces))))
    else:
        rows = [run(i) for i in range(len(traces))]
    if len(rows) > 1:
        (out / "report.csv").write_text(report_csv(rows), encoding="utf-8")
    for name, card in rows:
        print(f"{name}: {summary_line(card)}")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _source_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--fixture", default="beijing-mini", metavar="DIR", help="fixture bundle directory or shipped bundle name (default: beijing-mini)")
    src.add_argument("--live", action="store_true", help="use the remote chat and map services configured by TRAVELSIM_* variables")
    p.add_argument("--data", default="beijing-mini", metavar="DIR", help="bundle supplying POIs, posts and profiles in --live mode")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current directory)")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="travelsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="cluster POIs and compute routes and bearings")
    _source_args(p)
    p.add_argument("--pois", metavar="FILE", help="POI JSON file (instead of the bundle's)")
    p.add_argument("--hotel", metavar="ID")
    p.add_argument("--days", type=int)
    p.add_argument("--k", type=int, help="number of clusters (default: number of days)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("plan", help="generate a plan with a chat model")
    _source_args(p)
    p.add_argument("--method", choices=METHODS, default="maop")
    p.add_argument("--profile", metavar="ID")
    p.add_argument("--hotel", metavar="ID")
    p.add_argument("--days", type=int)
    p.add_argument("--request", help="planning request text")
    p.add_argument("--samples", type=int, default=2, help="strategist samples (maop)")
    p.add_argument("--max-aspects", type=int, default=MAX_ASPECTS)
    p.add_argument("--aspects", metavar="FILE", help="aspect list for naive_wide / long_horizon")
    p.add_argument("--guidance", help="guidance text for long_horizon (default: the aspect list)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run a traveler through a plan")
    _source_args(p)
    p.add_argument("--plan", action="append", metavar="FILE", help="plan file; repeatable (default: the bundle's plan)")
    p.add_argument("--profile", action="append", metavar="ID", help="traveler profile id; repeatable")
    p.add_argument("--policy", choices=("scripted", "remote"), default="scripted")
    p.add_argument("--decisions", metavar="FILE", help="recorded decisions for the scripted policy (default: follow the plan)")
    p.add_argument("--policy-url", metavar="URL", help="HTTP endpoint of a remote traveler policy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-steps", type=int, default=64, help="decision cap per day")
    p.add_argument("--timeout", type=float, default=120.0, help="seconds per decision (0 disables)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="score a plan and its trace")
    _source_args(p)
    p.add_argument("--plan", action="append", metavar="FILE", help="plan file; repeatable, paired with --trace")
    p.add_argument("--trace", action="append", required=True, metavar="FILE")
    p.add_argument("--posts", metavar="FILE", help="blog posts keyed by POI id")
    p.add_argument("--evaluator", metavar="FILE", help="fixture evaluator scores")
    p.add_argument("--weights", metavar="FILE", help="aggregation weights override")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (TravelsimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
