"""Rewrite the golden files under tests/golden from the shipped beijing-mini bundle.

Only run this after a deliberate behaviour change; the tests check the golden
values against independent oracles, so review the diff before committing.
"""
from __future__ import annotations

import json
from pathlib import Path

from travelsim.adapters import load_fixture_bundle
from travelsim.core import parse_plan
from travelsim.metrics import FixtureEvaluator, score_plan
from travelsim.policies import ScriptedPolicy
from travelsim.sandbox import SimulationConfig, run_simulation, stamina_sequence

GOLDEN = Path(__file__).resolve().parents[1] / "tests/golden"
SEED = 0


def main():
    bundle = load_fixture_bundle("beijing-mini")
    plan = parse_plan(bundle.extras["plan.json"], bundle.pois)
    profile = bundle.profile()
    policy = ScriptedPolicy(bundle.extras["decisions.json"]["decisions"])
    trace = run_simulation(plan, profile, policy, bundle.providers(), SimulationConfig(seed=SEED))
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "beijing_trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
    with open(GOLDEN / "beijing_stamina.json", "w", encoding="utf-8") as fh:
        json.dump({"seed": SEED, "stamina": stamina_sequence(trace)}, fh, indent=1)
        fh.write("\n")
    card = score_plan(plan, trace, bundle.posts, FixtureEvaluator.from_dict(bundle.extras["evaluator.json"]), profile, bundle.pois)
    with open(GOLDEN / "beijing_scorecard.json", "w", encoding="utf-8") as fh:
        json.dump(card.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
