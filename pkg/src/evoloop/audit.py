"""Post-hoc consistency audit over a finished (or interrupted) run.

Six checks, each independent and reported separately:

  protected_conservation   no principle, failure memory, or success memory
                           is ever deleted or pruned, and their committed
                           counts never decrease
  selection_gap            every observed task type is re-selected within
                           the worst-case waiting bound, re-evaluated each
                           iteration with the running failure maximum;
                           rolled-back iterations do not advance the clock
                           because their selections were undone with the
                           rest of the mutable state
  mastery_ratchet          committed per-skill mastery trajectories obey
                           the rise/decay law and the decayed-peak bound
  tier_separation          guidance-roster agents make zero inference
                           calls; only rostered agents appear at all
  log_replay               the event log replays cleanly and every stored
                           boundary snapshot matches the replayed bytes
  bandit_consistency       replayed bandit slots equal an independent
                           recount of draw and update events

The audit reads the run directory only; it never mutates it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .backends import EXECUTION_AGENTS, GUIDANCE_AGENTS
from .curriculum import (
    RatchetParams,
    SelectorParams,
    check_ratchet_trace,
    coverage_gap_bound,
)
from .engine import EngineConfig, call_audit
from .errors import IntegrityError
from .graph import PROTECTED_OUTCOMES, KnowledgeGraph
from .runstore import RunStore

RATCHET_TOLERANCE = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        label = "PASS" if self.passed else "FAIL"
        return f"[{label}] {self.name}: {self.detail}"


@dataclass
class AuditResult:
    checks: list[CheckResult] = field(default_factory=list)
    call_summary: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def audit_run(store: RunStore) -> AuditResult:
    store.require()
    config = EngineConfig.from_dict(store.load_config())
    result = AuditResult()

    try:
        events = list(store.read_events())
        reports = store.read_reports()
    except IntegrityError as exc:
        result.checks.append(CheckResult("log_replay", False, str(exc)))
        return result

    result.checks.append(_check_protected_conservation(events, reports))
    result.checks.append(_check_selection_gap(reports, config))
    result.checks.append(_check_mastery_ratchet(reports, config))
    tier_check, summary = _check_tier_separation(store, reports)
    result.checks.append(tier_check)
    result.call_summary = summary
    result.checks.append(_check_log_replay(store, events, reports, config))
    result.checks.append(_check_bandit_consistency(events, config))
    return result


# ----------------------------------------------------------------------
# individual checks

def _check_protected_conservation(events, reports) -> CheckResult:
    outcome_by_id: dict[int, str] = {}
    for event in events:
        op, payload = event["op"], event["payload"]
        if op == "append_experience":
            outcome_by_id[payload["id"]] = payload["outcome"]
        elif op == "delete_experience":
            outcome = outcome_by_id.get(payload["id"])
            if outcome in PROTECTED_OUTCOMES:
                return CheckResult(
                    "protected_conservation",
                    False,
                    f"protected node {payload['id']} ({outcome}) deleted at seq {event['seq']}",
                )
        elif op == "prune":
            for nid in payload.get("removed_ids", []):
                outcome = outcome_by_id.get(nid)
                if outcome in PROTECTED_OUTCOMES:
                    return CheckResult(
                        "protected_conservation",
                        False,
                        f"protected node {nid} ({outcome}) pruned at seq {event['seq']}",
                    )
    previous: dict[str, int] = {}
    for report in reports:
        counts = report["protected_counts_post"]
        for outcome in PROTECTED_OUTCOMES:
            now, before = counts.get(outcome, 0), previous.get(outcome, 0)
            if now < before:
                return CheckResult(
                    "protected_conservation",
                    False,
                    f"{outcome} count dropped {before} -> {now} at iteration "
                    f"{report['iteration']}",
                )
        previous = counts
    n_protected = sum(1 for o in outcome_by_id.values() if o in PROTECTED_OUTCOMES)
    return CheckResult(
        "protected_conservation",
        True,
        f"{n_protected} protected nodes, none deleted across {len(events)} events",
    )


def _check_selection_gap(reports, config: EngineConfig) -> CheckResult:
    params = SelectorParams(
        recency_weight=config.recency_weight, max_targets=config.max_evolve_targets
    )
    last_selected: dict[int, int] = {}
    first_seen: dict[int, int] = {}
    running_n_max = 0
    worst = 0
    clock = 0
    for report in reports:
        if report["rollback"] != "none":
            # selections and failure counts from this iteration were undone
            continue
        stats = report["task_stats_pre"]
        running_n_max = max([running_n_max] + [s["n_fail"] for s in stats])
        n_types = len(stats)
        bound = coverage_gap_bound(n_types, running_n_max, params)
        for s in stats:
            tid = s["task_type_id"]
            first_seen.setdefault(tid, clock)
            anchor = last_selected.get(tid, first_seen[tid] - 1)
            gap = clock - anchor
            worst = max(worst, gap)
            if gap > bound:
                return CheckResult(
                    "selection_gap",
                    False,
                    f"task type {tid} waited {gap} > bound {bound} at iteration "
                    f"{report['iteration']}",
                )
        for tid in report["selected_task_types"]:
            last_selected[tid] = clock
        clock += 1
    return CheckResult(
        "selection_gap",
        True,
        f"max observed wait {worst} within running bound over {clock} "
        f"committed iterations",
    )


def _check_mastery_ratchet(reports, config: EngineConfig) -> CheckResult:
    params = RatchetParams(
        rise_rate=config.mastery_rise_rate, decay_rate=config.mastery_decay_rate
    )
    traces: dict[str, list[float]] = {}
    for report in reports:
        for sid, mastery in report["masteries_post"].items():
            traces.setdefault(sid, []).append(mastery)
    for sid, trace in sorted(traces.items()):
        violation = check_ratchet_trace(trace, params, tol=RATCHET_TOLERANCE)
        if violation is not None:
            index, reason = violation
            return CheckResult(
                "mastery_ratchet",
                False,
                f"skill {sid} step {index}: {reason}",
            )
    return CheckResult(
        "mastery_ratchet",
        True,
        f"{len(traces)} skill trajectories obey the rise/decay law",
    )


def _check_tier_separation(store: RunStore, reports) -> tuple[CheckResult, dict]:
    eval_records = store.read_evals()
    summary = call_audit(reports, eval_records)
    known = GUIDANCE_AGENTS | EXECUTION_AGENTS
    for report in reports:
        unknown = set(report.get("agent_calls", {})) - known
        if unknown:
            return (
                CheckResult(
                    "tier_separation",
                    False,
                    f"unrostered agents {sorted(unknown)} at iteration {report['iteration']}",
                ),
                summary,
            )
    if summary["infer_guidance_calls"] > 0:
        return (
            CheckResult(
                "tier_separation",
                False,
                f"{summary['infer_guidance_calls']} guidance calls during inference",
            ),
            summary,
        )
    detail = (
        f"guidance calls: train {summary['train_guidance_calls']}/"
        f"{summary['train_total_calls']} "
        f"({summary['train_guidance_fraction']:.2%}), inference 0"
    )
    return CheckResult("tier_separation", True, detail), summary


def _check_log_replay(store: RunStore, events, reports, config: EngineConfig) -> CheckResult:
    def replay_prefix(prefix):
        return KnowledgeGraph.replay(
            prefix,
            principles_per_skill_cap=config.principles_per_skill_cap,
            skill_growth_cap=config.skill_growth_cap,
            snapshot_history_limit=config.snapshot_history_limit,
        )

    try:
        graph = replay_prefix(events)
    except IntegrityError as exc:
        return CheckResult("log_replay", False, str(exc))
    checked = 0
    boundaries = {it for it in store.snapshot_iterations() if it < len(reports)}
    for iteration in sorted(boundaries):
        prefix = [e for e in events if e["iter"] <= iteration]
        stored = store.read_snapshot(iteration)
        try:
            replayed = replay_prefix(prefix).state_dict()
        except IntegrityError as exc:
            return CheckResult(
                "log_replay", False, f"prefix to boundary {iteration}: {exc}"
            )
        if stored != replayed:
            return CheckResult(
                "log_replay",
                False,
                f"boundary snapshot {iteration} diverges from replay",
            )
        checked += 1
    return CheckResult(
        "log_replay",
        True,
        f"{len(events)} events replay cleanly, {checked} boundary snapshots match, "
        f"final hash {graph.graph_hash()[:12]}",
    )


def _check_bandit_consistency(events, config: EngineConfig) -> CheckResult:
    try:
        graph = KnowledgeGraph.replay(
            events,
            principles_per_skill_cap=config.principles_per_skill_cap,
            skill_growth_cap=config.skill_growth_cap,
            snapshot_history_limit=config.snapshot_history_limit,
        )
    except IntegrityError as exc:
        return CheckResult("bandit_consistency", False, f"log does not replay: {exc}")
    # recount draws and updates per context from scratch; honor rollbacks
    draws: dict[str, int] = {}
    totals: dict[str, dict[str, list[int]]] = {}
    snapshots: dict[int, tuple[dict, dict]] = {}
    snapshot_order: list[int] = []
    limit = config.snapshot_history_limit
    try:
        for event in events:
            op, payload = event["op"], event["payload"]
            if op == "bandit_init":
                ctx = payload["context_id"]
                draws[ctx] = 0
                totals[ctx] = {arm: [0, 0] for arm in payload["arm_ids"]}
            elif op == "bandit_draw":
                draws[payload["context_id"]] += 1
            elif op == "bandit_update":
                s_f = totals[payload["context_id"]][payload["arm_id"]]
                s_f[0 if payload["reward"] == 1 else 1] += 1
            elif op == "snapshot":
                sid = payload["snapshot_id"]
                snapshots[sid] = (
                    {c: n for c, n in draws.items()},
                    {c: {a: list(v) for a, v in arms.items()} for c, arms in totals.items()},
                )
                snapshot_order.append(sid)
                if len(snapshot_order) > limit:
                    snapshots.pop(snapshot_order.pop(0), None)
            elif op == "rollback":
                saved_draws, saved_totals = snapshots[payload["snapshot_id"]]
                for ctx in draws:
                    if ctx in saved_draws:
                        draws[ctx] = saved_draws[ctx]
                        totals[ctx] = {a: list(v) for a, v in saved_totals[ctx].items()}
    except KeyError as exc:
        return CheckResult(
            "bandit_consistency", False, f"bandit event references unknown state: {exc}"
        )
    for ctx in sorted(draws):
        slot = graph.bandits.get(ctx)
        if slot is None:
            return CheckResult("bandit_consistency", False, f"context {ctx} missing after replay")
        if slot.draws != draws[ctx]:
            return CheckResult(
                "bandit_consistency",
                False,
                f"{ctx}: draws {slot.draws} != recount {draws[ctx]}",
            )
        for arm, (s, f) in totals[ctx].items():
            if slot.successes[arm] != s or slot.failures[arm] != f:
                return CheckResult(
                    "bandit_consistency",
                    False,
                    f"{ctx}/{arm}: s/f {slot.successes[arm]}/{slot.failures[arm]} "
                    f"!= recount {s}/{f}",
                )
    return CheckResult(
        "bandit_consistency",
        True,
        f"{len(draws)} contexts match an independent event recount",
    )
