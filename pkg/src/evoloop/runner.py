"""Run orchestration: wiring a store, an engine, and an environment.

Crash windows and their recovery, in iteration order:

  1. killed mid-iteration        buffered events were never flushed, the
                                 log ends at the previous boundary
  2. killed after the event      the log holds events for an iteration
     flush, before the report    with no report; loading truncates that
                                 tail before replay
  3. killed after the report,    the boundary snapshot file is rebuilt
     before the snapshot file    from the replayed graph

so resuming always continues from the last committed iteration and the
finished run is byte-identical to an uninterrupted one.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .backends import simulated_backend_set
from .engine import Engine, EngineConfig, IterationReport
from .envs import make_env
from .errors import ValidationError
from .graph import KnowledgeGraph
from .memory import rebuild_index
from .runstore import RunStore


def init_run(
    run_dir: str | Path, config: EngineConfig, env_name: str
) -> RunStore:
    config.validate()
    store = RunStore(run_dir)
    store.initialize(config.to_dict(), {"env": env_name, "format": 1})
    return store


def committed_iterations(store: RunStore) -> int:
    return len(store.read_reports())


def _truncate_uncommitted(store: RunStore, last_committed: int) -> list[dict[str, Any]]:
    """Drop event-log tail past the last committed iteration, if any."""
    events = list(store.read_events())
    keep = [e for e in events if e["iter"] <= last_committed]
    # bootstrap events carry iter -1 and always stay
    if len(keep) != len(events):
        path = store.root / "events.log"
        path.write_text(
            "".join(
                json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
                for e in keep
            )
        )
    return keep


def load_engine(store: RunStore) -> Engine:
    """Rebuild the engine for a run directory by replaying its event log."""
    store.require()
    config = EngineConfig.from_dict(store.load_config())
    meta = store.load_meta()
    env = make_env(meta["env"], seed=config.seed, pool_size=config.pool_size)

    reports = store.read_reports()
    last_committed = len(reports) - 1
    events = _truncate_uncommitted(store, last_committed)
    graph = KnowledgeGraph.replay(
        events,
        principles_per_skill_cap=config.principles_per_skill_cap,
        skill_growth_cap=config.skill_growth_cap,
        snapshot_history_limit=config.snapshot_history_limit,
    )
    backends = simulated_backend_set(env.answer_key(), seed=config.seed)
    index = rebuild_index(
        graph,
        backends.embedder.dimension,
        backends.embedder.embed,
        config.type_strategy_min_similarity,
    )
    engine = Engine(graph, index, backends, config, env)
    if reports:
        last = reports[-1]
        engine.prev_accuracy = last["committed_accuracy"]
        engine.prev_boundary_snapshot = last["boundary_snapshot_id"]
        for report in reports:
            if report["rollback"] == "none":
                engine.selected_ever.update(report["selected_task_types"])
    else:
        snapshot_ids = graph.snapshot_ids()
        engine.prev_boundary_snapshot = snapshot_ids[-1] if snapshot_ids else None
    graph.set_event_sink(store.event_sink)
    # crash window 3: boundary snapshot file missing for the last report
    if reports and not store.snapshot_path(last_committed).is_file():
        store.write_snapshot(last_committed, graph.canonical_bytes())
    return engine


def bootstrap_run(store: RunStore) -> Engine:
    """First load of a fresh run: seed the graph and flush the bootstrap."""
    config = EngineConfig.from_dict(store.load_config())
    meta = store.load_meta()
    env = make_env(meta["env"], seed=config.seed, pool_size=config.pool_size)
    graph = KnowledgeGraph(
        event_sink=store.event_sink,
        principles_per_skill_cap=config.principles_per_skill_cap,
        skill_growth_cap=config.skill_growth_cap,
        snapshot_history_limit=config.snapshot_history_limit,
    )
    backends = simulated_backend_set(env.answer_key(), seed=config.seed)
    index = rebuild_index(
        graph,
        backends.embedder.dimension,
        backends.embedder.embed,
        config.type_strategy_min_similarity,
    )
    engine = Engine(graph, index, backends, config, env)
    engine.bootstrap()
    store.flush_events()
    return engine


def run_training(
    store: RunStore,
    iterations: int | None = None,
    engine: Engine | None = None,
    on_iteration=None,
) -> list[IterationReport]:
    """Run (or continue) training until ``iterations`` are committed."""
    store.require()
    if engine is None:
        if committed_iterations(store) == 0 and store_has_no_events(store):
            engine = bootstrap_run(store)
        else:
            engine = load_engine(store)
    total = iterations if iterations is not None else engine.config.iterations
    start = committed_iterations(store)
    if total < start:
        raise ValidationError(
            f"run already has {start} committed iterations, cannot target {total}"
        )
    reports: list[IterationReport] = []
    for k in range(start, total):
        report = engine.run_iteration(k)
        store.flush_events()
        store.append_report(report.to_dict())
        store.write_snapshot(k, engine.graph.canonical_bytes())
        reports.append(report)
        if on_iteration is not None:
            on_iteration(report)
    return reports


def store_has_no_events(store: RunStore) -> bool:
    for _ in store.read_events():
        return False
    return True


def run_eval(
    store: RunStore,
    pool: str = "held_out",
    retrieval: bool = True,
    tag: str | None = None,
    engine: Engine | None = None,
) -> dict[str, Any]:
    """Frozen evaluation against the committed graph; writes eval-<tag>.json."""
    if engine is None:
        if store_has_no_events(store):
            raise ValidationError("run has no training record yet; run training first")
        engine = load_engine(store)
    record = engine.eval_run(pool_name=pool, retrieval=retrieval)
    if record["graph_hash_before"] != record["graph_hash_after"]:
        raise ValidationError("evaluation mutated the graph")
    record["committed_iterations"] = committed_iterations(store)
    label = tag or f"{pool}-{'ret' if retrieval else 'noret'}-{record['committed_iterations']:05d}"
    store.write_eval(label, record)
    return record


def stats_rows(store: RunStore) -> list[dict[str, Any]]:
    """Per-iteration growth counters for the stats table."""
    rows = []
    for report in store.read_reports():
        protected = report["protected_counts_post"]
        selected = report["coverage"]["selected"]
        observed = report["coverage"]["observed"]
        rows.append(
            {
                "iter": report["iteration"],
                "skills": report["skills_count"],
                "failure_memories": protected.get("failure_memory", 0),
                "success_memories": protected.get("success_memory", 0),
                "coverage": (selected / observed) if observed else 0.0,
            }
        )
    return rows


def load_report_dicts(store: RunStore) -> list[Mapping[str, Any]]:
    return store.read_reports()
