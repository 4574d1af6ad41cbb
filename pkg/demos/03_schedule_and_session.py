"""
Study schedule and session state machine
========================================

The built-in seven-day study interleaves three recording strategies with
daily questionnaires, and a state machine walks each scenario through
preparation, fitting, recording, and upload.
"""

import collections

from mindkit import session as ss

study = ss.default_study()

print("weekly trial totals")
for strategy in (ss.STRATEGY_RESTING, ss.STRATEGY_MEMORIES, ss.STRATEGY_IMAGERY):
    spec = study.strategy(strategy)
    print(f"  {strategy:18s} {spec.total_trials():3d} trials "
          f"({spec.trial_duration_s:.0f} s each)")

print("\ntrials per day and strategy (seed 0)")
table = collections.defaultdict(dict)
for day in range(1, 8):
    for sc in ss.plan_schedule(study, day, seed=0):
        if sc.kind == ss.SCENARIO_RECORDING:
            n = sum(len(b.trials) for b in sc.blocks)
            table[sc.strategy][day] = table[sc.strategy].get(day, 0) + n
for strategy, per_day in table.items():
    row = "".join(f"{per_day.get(d, 0):5d}" for d in range(1, 8))
    print(f"  {strategy:18s}{row}")

print("\nday 1 scenario list with duration estimates")
for sc in ss.plan_schedule(study, 1, seed=0):
    print(f"  {sc.scenario_id:28s} ~{ss.estimate_duration(sc)} min")

# Drive one scenario through the engine. Events either follow a defined
# edge, raise BlockedError (defined but refused), or raise
# InvalidTransitionError (undefined for the current phase).
E = ss.EventKind
engine = ss.SessionEngine(study, day=1, seed=0)
print(f"\nphase: {engine.phase.value}")

# day 1 opens with the intake and daily questionnaires; answer those first
while engine.next_pending_scenario().kind == ss.SCENARIO_QUESTIONNAIRE:
    engine.handle(ss.Event(E.START_SESSION))
    engine.handle(ss.Event(E.STEP_DONE))
    print(f"questionnaire done, phase back to {engine.phase.value}")

engine.handle(ss.Event(E.START_SESSION))
engine.handle(ss.Event(E.STEP_DONE))
engine.handle(ss.Event(E.DEVICE_FOUND))

try:
    engine.handle(ss.Event(E.BATTERY_READ, level=0.05))
except ss.BlockedError as exc:
    print(f"battery at 5%: {exc}")

engine.handle(ss.Event(E.BATTERY_READ, level=0.9))
engine.handle(ss.Event(E.STEP_DONE))
engine.handle(ss.Event(E.NOISE_CHECK_DONE))
engine.handle(ss.Event(E.QUALITY_MET))
print(f"phase after fitting: {engine.phase.value}")

block = engine.current_block()
print(f"recording block {block.block_id}: "
      f"{[trial.task for trial in block.trials]}")

# Backgrounding the app mid-trial discards the partial block entirely.
engine.handle(ss.Event(E.TRIAL_ELAPSED))
engine.handle(ss.Event(E.APP_BACKGROUNDED))
print(f"after abort: phase {engine.phase.value}, "
      f"discarded blocks {engine.discarded_blocks}, "
      f"persisted blocks {len(engine.recorded_blocks)}")
engine.handle(ss.Event(E.STEP_DONE))
print(f"back home; scenario still pending: "
      f"{engine.next_pending_scenario() is not None}")
