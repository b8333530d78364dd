"""Six-agent evolution loop over the knowledge graph.

One iteration runs five phases against a frozen model tier:

  PLAN      curriculum frontier, refined by one navigator call that may
            only reorder or subset it
  EXPLORE   sequential environments only: one episode, writing observation
            nodes, abstracted patterns, and trailing-action recipes
  EVALUATE  the learner answers the evolution pool with retrieved bundles;
            the critic judges one batch per task type; every graph or
            bandit write this phase produces is queued
  UPDATE    queued writes apply serially in question order, then the
            mastery ratchet runs per attempted skill over whole-pool
            success rates, low-confidence patterns are pruned, and the
            memory index refreshes on its cadence
  EVOLVE    round-robin over observed task types picks at most
            ``max_evolve_targets``; guidance writes failure memories for
            their errors plus one rotation action per selected type,
            cycling principle extraction, prompt refinement, tool
            authoring, skill splitting by iteration index

then the iteration snapshots the graph and the delta guard compares the
measured accuracy with the previous committed accuracy: a drop past
``delta_guard`` rolls mutable slots back to the previous boundary snapshot
(past ``catastrophic_threshold`` it is additionally flagged), while
protected nodes appended during the iteration always survive.

Guidance-tier agents (skill_discovery, navigator, critic, curator) never
run during inference: ``eval_run`` freezes the graph, selects bandit arms
by posterior mean, scores answers against environment gold directly, and
leaves the graph hash unchanged.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Any, Mapping, Sequence

from . import bandits, memory
from .backends import (
    BackendSet,
    GUIDANCE_AGENTS,
    simulated_backend_set,
    stable_hash64,
)
from .curriculum import (
    RatchetParams,
    SelectorParams,
    learnable_frontier,
    mastery_update,
    round_robin_select,
)
from .errors import CapError, ValidationError
from .graph import KnowledgeGraph
from .memory import (
    FailurePayload,
    MemoryIndex,
    SuccessPayload,
    cascade_principles,
    curriculum_override,
    format_bundle,
    harvest_failure,
    harvest_success,
    latest_action_recipe,
    record_action_recipe,
    render_skill_lattice,
)

ROTATION = ("principle_extraction", "prompt_refinement", "tool_authoring", "skill_splitting")

GUIDANCE_NOTE_CAP = 6


def rotation_action(iteration: int) -> str:
    if iteration < 0:
        raise ValidationError("iteration must be >= 0")
    return ROTATION[iteration % len(ROTATION)]


def delta_guard_decision(
    prev_accuracy: float | None,
    new_accuracy: float,
    delta_guard: float,
    catastrophic_threshold: float,
) -> str:
    """Classify an accuracy transition: none, delta, or catastrophic."""
    if prev_accuracy is None:
        return "none"
    drop = prev_accuracy - new_accuracy
    if drop > catastrophic_threshold:
        return "catastrophic"
    if drop > delta_guard:
        return "delta"
    return "none"


@dataclass
class EngineConfig:
    mastery_rise_rate: float = 0.6
    mastery_decay_rate: float = 0.1
    mastery_threshold: float = 0.5
    recency_weight: float = 0.3
    max_evolve_targets: int = 3
    retrieval_top_k: int = 3
    long_context_threshold: int = 500
    type_strategy_min_similarity: float = 0.55
    memory_refresh_gap: int = 5
    principles_per_skill_cap: int = 12
    skill_growth_cap: int = 30
    bandit_warmup_pulls: int = 20
    delta_guard: float = 0.03
    catastrophic_threshold: float = 0.05
    eval_temperature: float = 0.0
    train_temperature: float = 0.3
    pool_size: int = 200
    iterations: int = 20
    seed: int = 42
    trace_char_cap: int = 4000
    prune_confidence_threshold: float = 0.3
    snapshot_history_limit: int = 64
    routing_strategies: tuple[str, ...] = ("direct", "chain", "decompose")
    search_strategies: tuple[str, ...] = ("base", "cascade")
    eval_workers: int = 1
    remeasure_after_update: bool = False
    oracle_retrieval: bool = False

    def validate(self) -> None:
        if not 0.0 < self.mastery_rise_rate < 1.0:
            raise ValidationError("mastery_rise_rate must be in (0, 1)")
        if not 0.0 < self.mastery_decay_rate < 1.0:
            raise ValidationError("mastery_decay_rate must be in (0, 1)")
        if self.mastery_rise_rate <= self.mastery_decay_rate:
            raise ValidationError(
                "mastery_rise_rate must exceed mastery_decay_rate "
                f"(got rise={self.mastery_rise_rate}, decay={self.mastery_decay_rate})"
            )
        if not 0.0 <= self.mastery_threshold <= 1.0:
            raise ValidationError("mastery_threshold must be in [0, 1]")
        if self.recency_weight <= 0:
            raise ValidationError("recency_weight must be positive")
        if self.max_evolve_targets < 1:
            raise ValidationError("max_evolve_targets must be >= 1")
        if self.retrieval_top_k < 1:
            raise ValidationError("retrieval_top_k must be >= 1")
        if self.long_context_threshold < 0:
            raise ValidationError("long_context_threshold must be >= 0")
        if not 0.0 <= self.type_strategy_min_similarity <= 1.0:
            raise ValidationError("type_strategy_min_similarity must be in [0, 1]")
        if self.memory_refresh_gap < 1:
            raise ValidationError("memory_refresh_gap must be >= 1")
        if self.principles_per_skill_cap < 1:
            raise ValidationError("principles_per_skill_cap must be >= 1")
        if self.skill_growth_cap < 1:
            raise ValidationError("skill_growth_cap must be >= 1")
        if self.bandit_warmup_pulls < 0:
            raise ValidationError("bandit_warmup_pulls must be >= 0")
        if self.delta_guard < 0:
            raise ValidationError("delta_guard must be >= 0")
        if self.catastrophic_threshold < self.delta_guard:
            raise ValidationError("catastrophic_threshold must be >= delta_guard")
        if self.eval_temperature < 0 or self.train_temperature < 0:
            raise ValidationError("temperatures must be >= 0")
        if self.pool_size < 1:
            raise ValidationError("pool_size must be >= 1")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.trace_char_cap < 1:
            raise ValidationError("trace_char_cap must be >= 1")
        if not 0.0 <= self.prune_confidence_threshold <= 1.0:
            raise ValidationError("prune_confidence_threshold must be in [0, 1]")
        if self.snapshot_history_limit < 1:
            raise ValidationError("snapshot_history_limit must be >= 1")
        for name in ("routing_strategies", "search_strategies"):
            arms = getattr(self, name)
            if not arms or len(set(arms)) != len(arms):
                raise ValidationError(f"{name} must be non-empty and unique")
        if self.eval_workers < 1:
            raise ValidationError("eval_workers must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["routing_strategies"] = list(self.routing_strategies)
        data["search_strategies"] = list(self.search_strategies)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("routing_strategies", "search_strategies"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        config = cls(**kwargs)
        config.validate()
        return config


@dataclass
class QuestionResult:
    qid: str
    task_type_id: int
    skill_id: int
    reward: int
    predicted: str
    search_arm: str
    routing_arm: str
    bundle_success: int
    bundle_failure: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class IterationReport:
    iteration: int
    accuracy: float
    committed_accuracy: float
    rollback: str
    selected_frontier: list[int]
    selected_task_types: list[int]
    task_stats_pre: list[dict[str, Any]]
    per_question: list[dict[str, Any]]
    per_skill_evidence: dict[str, dict[str, Any]]
    bandit_selections: dict[str, str]
    appended: dict[str, list[int]]
    pruned_ids: list[int]
    cap_errors: list[str]
    tier_calls: dict[str, int]
    agent_calls: dict[str, int]
    masteries_post: dict[str, float]
    protected_counts_post: dict[str, int]
    skills_count: int
    coverage: dict[str, int]
    snapshot_id: int
    boundary_snapshot_id: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "IterationReport":
        return cls(**data)


class Engine:
    """Owns one graph, one memory index, one backend set, one environment."""

    def __init__(
        self,
        graph: KnowledgeGraph,
        index: MemoryIndex,
        backends: BackendSet,
        config: EngineConfig,
        env,
    ):
        config.validate()
        self.graph = graph
        self.index = index
        self.backends = backends
        self.config = config
        self.env = env
        self.prev_accuracy: float | None = None
        self.prev_boundary_snapshot: int | None = None
        self.selected_ever: set[int] = set()
        self._qvec_cache: dict[str, Any] = {}

    # ------------------------------------------------------------------
    # phase 0

    def bootstrap(self) -> None:
        """Seed the empty graph from the environment's declared ontology."""
        if self.graph.skills or self.graph.task_types:
            raise ValidationError("bootstrap requires an empty graph")
        self.graph.current_iter = -1
        self._call_guidance("skill_discovery", "bootstrap", {"kind": "ontology"}, prompt="ontology")
        skill_ids: dict[str, int] = {}
        for name, _prereqs in self.env.SKILLS:
            skill_ids[name] = self.graph.add_skill(name)
        for name, prereqs in self.env.SKILLS:
            for p in prereqs:
                self.graph.add_prerequisite(skill_ids[p], skill_ids[name])
        for tt_name in self.env.TASK_TYPES:
            tt_id = self.graph.add_task_type(tt_name)
            self.graph.set_resolver(tt_id, skill_ids[self.env.RESOLVER[tt_name]])
            self.graph.add_env_node("task_context", {"task_type": tt_name})
            self.graph.bandit_init(
                f"search/{tt_id}",
                list(self.config.search_strategies),
                self.config.bandit_warmup_pulls,
                stable_hash64(self.config.seed, "search", tt_name) % 2**31,
            )
        for name, sid in skill_ids.items():
            self._init_routing_bandit(sid, name)
        self.prev_boundary_snapshot = self.graph.snapshot()

    def _init_routing_bandit(self, skill_id: int, skill_name: str) -> None:
        self.graph.bandit_init(
            f"route/{skill_id}",
            list(self.config.routing_strategies),
            self.config.bandit_warmup_pulls,
            stable_hash64(self.config.seed, "route", skill_name) % 2**31,
        )

    # ------------------------------------------------------------------
    # backend call helpers (every call is tracked with agent and phase)

    def _call_guidance(self, agent: str, phase_tag: str, meta: dict, prompt: str) -> str:
        self.backends.tracker.record("train", agent, self.backends.guidance.role)
        return self.backends.guidance.complete(prompt, meta=meta, temperature=0.0)

    def _call_judge(self, items: list[tuple[str, str]]) -> list[int]:
        self.backends.tracker.record("train", "critic", self.backends.judge.role)
        verdicts = self.backends.judge.complete("judge", meta={"items": items})
        return [1 if ch == "1" else 0 for ch in verdicts]

    def _call_execution(self, agent: str, phase: str, prompt: str, meta: dict, temperature: float) -> str:
        self.backends.tracker.record(phase, agent, self.backends.execution.role)
        return self.backends.execution.complete(prompt, meta=meta, temperature=temperature)

    def _embed(self, text: str):
        cached = self._qvec_cache.get(text)
        if cached is None:
            cached = self.backends.embedder.embed(text)
            self._qvec_cache[text] = cached
        return cached

    # ------------------------------------------------------------------
    # one full iteration

    def run_iteration(self, k: int) -> IterationReport:
        if self.prev_boundary_snapshot is None:
            raise ValidationError("bootstrap must run before iterations")
        self.graph.current_iter = k
        tracker_before = self.backends.tracker.counts()

        frontier = self._plan(k)
        explore_outcome = self._explore(k) if self.env.mode == "sequential" else None
        evaluation = self._evaluate(k, explore_outcome)
        self._update(k, evaluation)
        selected, task_stats_pre, appended, cap_errors = self._evolve(k, evaluation)

        accuracy = evaluation["accuracy"]
        if self.config.remeasure_after_update:
            accuracy = self._remeasure(k)
        snapshot_id = self.graph.snapshot()
        decision = delta_guard_decision(
            self.prev_accuracy,
            accuracy,
            self.config.delta_guard,
            self.config.catastrophic_threshold,
        )
        if decision == "none":
            boundary_id = snapshot_id
            committed = accuracy
        else:
            # restores every mutable slot, selection history included; the
            # audit's waiting clock skips rolled-back iterations for the
            # same reason
            self.graph.rollback_mutable(self.prev_boundary_snapshot)
            boundary_id = self.graph.snapshot()
            committed = self.prev_accuracy if self.prev_accuracy is not None else accuracy
        self.prev_boundary_snapshot = boundary_id
        self.prev_accuracy = committed
        if decision == "none":
            self.selected_ever.update(selected)

        appended_surviving = {
            outcome: [nid for nid in ids if nid in self.graph.experience]
            for outcome, ids in appended.items()
        }
        tier_calls, agent_calls = self._call_deltas(tracker_before)
        report = IterationReport(
            iteration=k,
            accuracy=accuracy,
            committed_accuracy=committed,
            rollback=decision,
            selected_frontier=frontier,
            selected_task_types=list(selected),
            task_stats_pre=task_stats_pre,
            per_question=[r.to_dict() for r in evaluation["results"]],
            per_skill_evidence=evaluation["per_skill_evidence"],
            bandit_selections=dict(
                sorted(
                    {**evaluation["search_arms"], **evaluation["routing_arms"]}.items()
                )
            ),
            appended=appended_surviving,
            pruned_ids=evaluation["pruned_ids"],
            cap_errors=cap_errors,
            tier_calls=tier_calls,
            agent_calls=agent_calls,
            masteries_post={
                str(sid): self.graph.skills[sid].mastery for sid in sorted(self.graph.skills)
            },
            protected_counts_post=self.graph.protected_counts(),
            skills_count=len(self.graph.skills),
            coverage={
                "selected": len(self.selected_ever),
                "observed": len(self.graph.task_types),
            },
            snapshot_id=snapshot_id,
            boundary_snapshot_id=boundary_id,
        )
        return report

    def _call_deltas(self, before: dict) -> tuple[dict[str, int], dict[str, int]]:
        """Model-call deltas for one iteration, by tier and by agent.

        Embedder traffic is deliberately absent: its counts depend on cache
        state, which a resumed run rebuilds differently, and the accounting
        contract excludes it anyway.
        """
        after = self.backends.tracker.counts()
        tier: dict[str, int] = {}
        agents: dict[str, int] = {}
        for key, count in after.items():
            delta = count - before.get(key, 0)
            if delta == 0:
                continue
            _phase, agent, role = key
            tier[role] = tier.get(role, 0) + delta
            agents[agent] = agents.get(agent, 0) + delta
        return dict(sorted(tier.items())), dict(sorted(agents.items()))

    # ------------------------------------------------------------------
    # PLAN

    def _plan(self, k: int) -> list[int]:
        masteries = {sid: s.mastery for sid, s in self.graph.skills.items()}
        prereqs: dict[int, set[int]] = {sid: set() for sid in masteries}
        for a, b in self.graph.prereq_edges():
            prereqs[b].add(a)
        frontier = sorted(
            learnable_frontier(masteries, prereqs, self.config.mastery_threshold)
        )
        reply = self._call_guidance(
            "navigator",
            "plan",
            {
                "kind": "navigator",
                "frontier": frontier,
                "masteries": masteries,
                "iteration": k,
            },
            prompt="refine frontier",
        )
        refined = []
        allowed = set(frontier)
        for token in reply.split(","):
            token = token.strip()
            if not token:
                continue
            try:
                sid = int(token)
            except ValueError:
                continue
            # navigator may only reorder or subset, never add
            if sid in allowed and sid not in refined:
                refined.append(sid)
        return refined if refined else frontier

    # ------------------------------------------------------------------
    # EXPLORE (sequential only)

    def _explore(self, k: int) -> dict[str, Any]:
        env = self.env
        state = env.reset()
        unlock_steps: dict[str, int] = {}
        for _ in range(env.EPISODE_STEPS):
            target = env.intended_action(state)
            if target is None:
                break
            tt = self.graph.task_type_by_name(target)
            skill = self.graph.skill_by_name(env.RESOLVER[target])
            recipe = latest_action_recipe(self.graph, skill.id)
            # the recipe's final action is the one that fired the unlock
            guidance_notes = [f"next-action {recipe[-1]}"] if recipe else []
            qvec = self._embed(f"achieve {target}")
            bundle = self.index.retrieve_bundle(
                qvec,
                tt.id,
                context_length=0,
                k=self.config.retrieval_top_k,
                long_context_threshold=self.config.long_context_threshold,
            )
            prompt = format_bundle(
                bundle,
                f"achieve {target}",
                context=f"unlocked: {', '.join(state.unlocked) or 'none'}",
                guidance=guidance_notes,
            )
            self.backends.tracker.record("train", "explorer", self.backends.execution.role)
            action = self.backends.execution.act(
                prompt,
                meta={"state_id": state.state_id, "intended_action": target},
                actions=env.actions(),
            )
            unlocked = env.step(state, action)
            if unlocked is not None:
                unlock_steps[unlocked] = state.step
                record_action_recipe(
                    self.graph,
                    self.graph.skill_by_name(env.RESOLVER[unlocked]).id,
                    state.actions_taken,
                )
        self.graph.add_env_node(
            "observation",
            {"iteration": k, "actions": list(state.actions_taken), "unlocked": list(state.unlocked)},
        )
        self.graph.append_experience(
            outcome="abstracted_pattern",
            payload={"iteration": k, "actions": list(state.actions_taken)},
            confidence=len(state.unlocked) / len(env.ACHIEVEMENTS),
        )
        return {"state": state, "unlock_steps": unlock_steps}

    # ------------------------------------------------------------------
    # EVALUATE

    def _evaluate(self, k: int, explore_outcome: dict | None) -> dict[str, Any]:
        if self.env.mode == "sequential":
            return self._evaluate_sequential(k, explore_outcome)
        return self._evaluate_static(k)

    def _select_arms(self, pool) -> tuple[dict, dict, dict, list]:
        """Commit one search arm per task type and one routing arm per skill.

        Selections read current bandit state; the draw-counter advances are
        queued so EVALUATE itself stays write-free.
        """
        draw_queue: list[tuple[str, str]] = []
        search_arms: dict[str, str] = {}
        skill_for_tt: dict[int, int] = {}
        tt_ids = sorted({self.graph.task_type_by_name(q.task_type).id for q in pool})
        for tt_id in tt_ids:
            ctx = f"search/{tt_id}"
            arm, thompson = bandits.select_arm(self.graph.bandits[ctx])
            search_arms[ctx] = arm
            if thompson:
                draw_queue.append((ctx, arm))
            resolver = self.graph.task_types[tt_id].resolver_skill_id
            if arm == "cascade":
                resolver = curriculum_override(
                    self.graph, resolver, self.config.mastery_threshold
                )
            skill_for_tt[tt_id] = resolver
        routing_arms: dict[str, str] = {}
        for skill_id in sorted(set(skill_for_tt.values())):
            ctx = f"route/{skill_id}"
            arm, thompson = bandits.select_arm(self.graph.bandits[ctx])
            routing_arms[ctx] = arm
            if thompson:
                draw_queue.append((ctx, arm))
        return search_arms, routing_arms, skill_for_tt, draw_queue

    def _oracle_scorer(self, question_text: str):
        """Rank candidates by their value to the learner, not by embedding.

        The question's own exemplar guarantees a correct answer; any other
        block contributes the same fixed boost.
        """
        if not self.config.oracle_retrieval:
            return None

        def score(entry) -> float:
            return 1.0 if entry.payload.get("question") == question_text else 0.15

        return score

    def _answer_question(self, q, tt_id: int, skill_id: int, search_arm: str) -> tuple[str, str, int, int]:
        skill = self.graph.skills[skill_id]
        qvec = self._embed(q.text)
        bundle = self.index.retrieve_bundle(
            qvec,
            tt_id,
            context_length=len(q.context),
            k=self.config.retrieval_top_k,
            long_context_threshold=self.config.long_context_threshold,
            scorer=self._oracle_scorer(q.text),
        )
        lattice = None
        notes: list[str] = []
        if search_arm == "cascade":
            lattice = render_skill_lattice(self.graph, tt_id) or None
            for pid in cascade_principles(self.graph, skill_id)[:GUIDANCE_NOTE_CAP]:
                notes.append(self.graph.experience[pid].payload.get("text", ""))
            recipe = latest_action_recipe(self.graph, skill_id)
            if recipe:
                notes.append("recipe: " + " -> ".join(recipe))
        prompt = format_bundle(
            bundle,
            skill.prompt_template.replace("{question}", q.text),
            context=q.context,
            lattice=lattice,
            guidance=notes,
        )
        raw = self._call_execution(
            "learner", "train", prompt, {"question_id": q.qid}, self.config.train_temperature
        )
        return raw, extract_answer(raw), len(bundle.success), len(bundle.failure)

    def _pool_size_cap(self, pool):
        return pool[: self.config.pool_size]

    def _evaluate_static(self, k: int) -> dict[str, Any]:
        pool = self._pool_size_cap(self.env.evolution_pool())
        search_arms, routing_arms, skill_for_tt, draw_queue = self._select_arms(pool)

        def solve(q):
            tt_id = self.graph.task_type_by_name(q.task_type).id
            skill_id = skill_for_tt[tt_id]
            search_arm = search_arms[f"search/{tt_id}"]
            raw, predicted, n_s, n_f = self._answer_question(q, tt_id, skill_id, search_arm)
            return q, tt_id, skill_id, search_arm, raw, predicted, n_s, n_f

        if self.config.eval_workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.eval_workers) as pool_exec:
                answered = list(pool_exec.map(solve, pool))
        else:
            answered = [solve(q) for q in pool]

        # one judge batch per task type, verdicts keyed back by question
        by_tt: dict[int, list[int]] = {}
        for idx, (q, tt_id, *_rest) in enumerate(answered):
            by_tt.setdefault(tt_id, []).append(idx)
        rewards: dict[int, int] = {}
        for tt_id in sorted(by_tt):
            items = [
                (answered[idx][5], answered[idx][0].answer) for idx in by_tt[tt_id]
            ]
            verdicts = self._call_judge(items)
            for idx, verdict in zip(by_tt[tt_id], verdicts):
                rewards[idx] = verdict

        results = []
        for idx, (q, tt_id, skill_id, search_arm, raw, predicted, n_s, n_f) in enumerate(answered):
            results.append(
                QuestionResult(
                    qid=q.qid,
                    task_type_id=tt_id,
                    skill_id=skill_id,
                    reward=rewards[idx],
                    predicted=predicted,
                    search_arm=search_arm,
                    routing_arm=routing_arms[f"route/{skill_id}"],
                    bundle_success=n_s,
                    bundle_failure=n_f,
                )
            )
        accuracy = sum(r.reward for r in results) / len(results)
        return {
            "pool": pool,
            "results": results,
            "accuracy": accuracy,
            "search_arms": search_arms,
            "routing_arms": routing_arms,
            "draw_queue": draw_queue,
            "raw_by_qid": {entry[0].qid: entry[4] for entry in answered},
            "per_skill_evidence": {},
            "pruned_ids": [],
        }

    def _evaluate_sequential(self, k: int, explore_outcome: dict) -> dict[str, Any]:
        state = explore_outcome["state"]
        env = self.env
        search_arms: dict[str, str] = {}
        routing_arms: dict[str, str] = {}
        draw_queue: list[tuple[str, str]] = []
        results = []
        for name in env.ACHIEVEMENTS:
            tt = self.graph.task_type_by_name(name)
            ctx = f"search/{tt.id}"
            arm, thompson = bandits.select_arm(self.graph.bandits[ctx])
            search_arms[ctx] = arm
            if thompson:
                draw_queue.append((ctx, arm))
            skill_id = tt.resolver_skill_id
            rctx = f"route/{skill_id}"
            if rctx not in routing_arms:
                rarm, rthompson = bandits.select_arm(self.graph.bandits[rctx])
                routing_arms[rctx] = rarm
                if rthompson:
                    draw_queue.append((rctx, rarm))
            results.append(
                QuestionResult(
                    qid=f"ach-{name}",
                    task_type_id=tt.id,
                    skill_id=skill_id,
                    reward=1 if name in state.unlocked else 0,
                    predicted="unlocked" if name in state.unlocked else "locked",
                    search_arm=arm,
                    routing_arm=routing_arms[rctx],
                    bundle_success=0,
                    bundle_failure=0,
                )
            )
        accuracy = sum(r.reward for r in results) / len(results)
        return {
            "pool": [],
            "results": results,
            "accuracy": accuracy,
            "search_arms": search_arms,
            "routing_arms": routing_arms,
            "draw_queue": draw_queue,
            "per_skill_evidence": {},
            "pruned_ids": [],
        }

    # ------------------------------------------------------------------
    # UPDATE

    def _update(self, k: int, evaluation: dict[str, Any]) -> None:
        # queued bandit draws first, then per-question effects in pool order
        for ctx, arm in evaluation["draw_queue"]:
            self.graph.bandit_record_draw(ctx, arm)
        pool_by_qid = {q.qid: q for q in evaluation["pool"]}
        raw_by_qid = evaluation.get("raw_by_qid", {})
        for result in evaluation["results"]:
            q = pool_by_qid.get(result.qid)
            if result.reward == 1 and q is not None:
                payload = SuccessPayload(
                    question=q.text,
                    reasoning_trace=raw_by_qid.get(result.qid) or self._trace_for(q),
                    answer=q.answer,
                    decomposition=[tuple(step) for step in q.decomposition],
                )
                harvest_success(
                    self.graph,
                    self.index,
                    self.backends.embedder.embed,
                    result.task_type_id,
                    result.skill_id,
                    payload,
                    trace_char_cap=self.config.trace_char_cap,
                )
            elif result.reward == 1:
                # sequential achievements: short synthetic exemplar
                payload = SuccessPayload(
                    question=result.qid.replace("ach-", "achieve "),
                    reasoning_trace="followed the unlocked action chain",
                    answer="unlocked",
                )
                harvest_success(
                    self.graph,
                    self.index,
                    self.backends.embedder.embed,
                    result.task_type_id,
                    result.skill_id,
                    payload,
                    trace_char_cap=self.config.trace_char_cap,
                )
            else:
                self.graph.record_task_failure(result.task_type_id)
            self.graph.bandit_update(
                f"search/{result.task_type_id}", result.search_arm, result.reward
            )
            self.graph.bandit_update(
                f"route/{result.skill_id}", result.routing_arm, result.reward
            )

        # mastery ratchet: whole-pool success rate per attempted skill
        attempts: dict[int, list[int]] = {}
        for result in evaluation["results"]:
            attempts.setdefault(result.skill_id, []).append(result.reward)
        params = RatchetParams(
            rise_rate=self.config.mastery_rise_rate,
            decay_rate=self.config.mastery_decay_rate,
        )
        evidence_out: dict[str, dict[str, Any]] = {}
        for skill_id in sorted(attempts):
            rewards = attempts[skill_id]
            evidence = sum(rewards) / len(rewards)
            before = self.graph.skills[skill_id].mastery
            after = mastery_update(before, evidence, params)
            self.graph.set_mastery(skill_id, after)
            evidence_out[str(skill_id)] = {
                "attempts": len(rewards),
                "correct": sum(rewards),
                "evidence": evidence,
                "mastery_before": before,
                "mastery_after": after,
            }
        evaluation["per_skill_evidence"] = evidence_out

        # strategy slot follows the routing arm the skill just used
        for ctx, arm in sorted(evaluation["routing_arms"].items()):
            skill_id = int(ctx.split("/", 1)[1])
            if self.graph.skills[skill_id].strategy != arm:
                self.graph.set_strategy(skill_id, arm)

        evaluation["pruned_ids"] = self.graph.prune_low_confidence(
            self.config.prune_confidence_threshold
        )
        if k > 0 and k % self.config.memory_refresh_gap == 0:
            self.index.refresh(self.backends.embedder.embed)

    def _trace_for(self, q) -> str:
        lines = [f"Step {i}: {text}" for i, (_s, text) in enumerate(q.decomposition, start=1)]
        lines.append(f"Answer: {q.answer}")
        return "\n".join(lines)

    # ------------------------------------------------------------------
    # EVOLVE

    def _evolve(
        self, k: int, evaluation: dict[str, Any]
    ) -> tuple[list[int], list[dict[str, Any]], dict[str, list[int]], list[str]]:
        task_stats_pre = [
            {
                "task_type_id": tt.id,
                "name": tt.name,
                "n_fail": tt.n_fail,
                "k_last": tt.k_last,
                "observed_iter": tt.observed_iter,
            }
            for tt in (self.graph.task_types[tid] for tid in sorted(self.graph.task_types))
        ]
        selector = SelectorParams(
            recency_weight=self.config.recency_weight,
            max_targets=self.config.max_evolve_targets,
        )
        selected = round_robin_select(
            [(s["task_type_id"], s["n_fail"], s["k_last"]) for s in task_stats_pre],
            k,
            selector,
        )
        errors_by_tt: dict[int, list[QuestionResult]] = {}
        pool_by_qid = {q.qid: q for q in evaluation["pool"]}
        for result in evaluation["results"]:
            if result.reward == 0:
                errors_by_tt.setdefault(result.task_type_id, []).append(result)

        appended: dict[str, list[int]] = {"principle": [], "failure_memory": [], "retrieval_recipe": []}
        cap_errors: list[str] = []
        action = rotation_action(k)
        for tt_id in selected:
            self.graph.mark_selected(tt_id, k)
            tt = self.graph.task_types[tt_id]
            resolver_id = tt.resolver_skill_id
            skill_name = self.graph.skills[resolver_id].name if resolver_id else ""
            errors = errors_by_tt.get(tt_id, [])
            if errors:
                correction = self._call_guidance(
                    "skill_discovery",
                    "evolve",
                    {
                        "kind": "correction",
                        "task_type": tt.name,
                        "wrong_answer": errors[0].predicted,
                        "correct_answer": self._gold_for(errors[0], pool_by_qid),
                    },
                    prompt="write corrections",
                )
                for err in errors:
                    q = pool_by_qid.get(err.qid)
                    payload = FailurePayload(
                        question=q.text if q else err.qid,
                        wrong_answer=err.predicted,
                        corrective_reasoning=correction,
                        correct_answer=self._gold_for(err, pool_by_qid),
                        kind="specific",
                    )
                    nid = harvest_failure(
                        self.graph,
                        self.index,
                        self.backends.embedder.embed,
                        tt_id,
                        resolver_id,
                        payload,
                    )
                    appended["failure_memory"].append(nid)
                strategy_text = self._call_guidance(
                    "skill_discovery",
                    "evolve",
                    {"kind": "type_strategy", "task_type": tt.name, "skill": skill_name},
                    prompt="write type strategy",
                )
                payload = FailurePayload(
                    question=f"{tt.name} questions in general",
                    wrong_answer="recurring errors",
                    corrective_reasoning=strategy_text,
                    correct_answer="follow the pattern strategy",
                    kind="type_strategy",
                )
                nid = harvest_failure(
                    self.graph,
                    self.index,
                    self.backends.embedder.embed,
                    tt_id,
                    resolver_id,
                    payload,
                )
                appended["failure_memory"].append(nid)
            self._apply_rotation(action, tt, resolver_id, skill_name, appended, cap_errors)
        return selected, task_stats_pre, appended, cap_errors

    def _gold_for(self, result: QuestionResult, pool_by_qid: dict) -> str:
        q = pool_by_qid.get(result.qid)
        return q.answer if q is not None else "unlocked"

    def _apply_rotation(
        self,
        action: str,
        tt,
        resolver_id: int | None,
        skill_name: str,
        appended: dict[str, list[int]],
        cap_errors: list[str],
    ) -> None:
        if resolver_id is None:
            return
        if action == "principle_extraction":
            text = self._call_guidance(
                "skill_discovery",
                "evolve",
                {"kind": "principle", "task_type": tt.name, "skill": skill_name},
                prompt="extract principle",
            )
            pid = self.graph.append_experience(
                outcome="principle",
                payload={"text": text},
                task_type_id=tt.id,
                skill_id=resolver_id,
            )
            self.graph.add_principle_ref(resolver_id, pid)
            appended["principle"].append(pid)
        elif action == "prompt_refinement":
            template = self._call_guidance(
                "skill_discovery",
                "evolve",
                {"kind": "prompt_refinement", "task_type": tt.name},
                prompt="refine prompt",
            )
            self.graph.set_prompt_template(resolver_id, template)
        elif action == "tool_authoring":
            tool = self._call_guidance(
                "skill_discovery",
                "evolve",
                {"kind": "tool", "task_type": tt.name},
                prompt="author tool",
            )
            nid = self.graph.append_experience(
                outcome="retrieval_recipe",
                payload={"tool": tool},
                task_type_id=tt.id,
                skill_id=resolver_id,
            )
            appended["retrieval_recipe"].append(nid)
        elif action == "skill_splitting":
            name = self._call_guidance(
                "skill_discovery",
                "evolve",
                {"kind": "skill_split", "task_type": tt.name, "skill": skill_name},
                prompt="split skill",
            )
            try:
                new_id = self.graph.add_skill(name)
            except CapError as exc:
                cap_errors.append(str(exc))
                return
            self.graph.add_prerequisite(resolver_id, new_id)
            self.graph.set_resolver(tt.id, new_id)
            self._init_routing_bandit(new_id, name)
        else:
            raise ValidationError(f"unknown rotation action {action!r}")

    # ------------------------------------------------------------------
    # re-measure mode for the delta guard

    def _remeasure(self, k: int) -> float:
        """Score the pool again, read-only, against the post-UPDATE graph."""
        if self.env.mode == "sequential":
            return self.prev_accuracy if self.prev_accuracy is not None else 0.0
        pool = self._pool_size_cap(self.env.evolution_pool())
        correct = 0
        for q in pool:
            tt = self.graph.task_type_by_name(q.task_type)
            skill_id = tt.resolver_skill_id
            _raw, predicted, _ns, _nf = self._answer_question(q, tt.id, skill_id, "base")
            correct += self._call_judge([(predicted, q.answer)])[0]
        return correct / len(pool)

    # ------------------------------------------------------------------
    # frozen inference

    def eval_run(self, pool_name: str = "held_out", retrieval: bool = True) -> dict[str, Any]:
        """Frozen evaluation; zero guidance calls, zero graph writes."""
        hash_before = self.graph.graph_hash()
        was_frozen = self.graph.frozen
        self.graph.freeze()
        tracker_before = self.backends.tracker.counts()
        try:
            if self.env.mode == "sequential":
                accuracy, n = self._eval_sequential_frozen()
            else:
                accuracy, n = self._eval_static_frozen(pool_name, retrieval)
        finally:
            if not was_frozen:
                self.graph.unfreeze()
        hash_after = self.graph.graph_hash()
        after = self.backends.tracker.counts()
        calls: dict[str, int] = {}
        for key, count in after.items():
            delta = count - tracker_before.get(key, 0)
            if delta:
                calls["/".join(key)] = delta
        return {
            "pool": pool_name,
            "frozen": True,
            "retrieval_enabled": retrieval,
            "accuracy": accuracy,
            "questions": n,
            "calls": dict(sorted(calls.items())),
            "graph_hash_before": hash_before,
            "graph_hash_after": hash_after,
        }

    def _eval_static_frozen(self, pool_name: str, retrieval: bool) -> tuple[float, int]:
        pool = (
            self.env.heldout_pool() if pool_name == "held_out" else self.env.evolution_pool()
        )
        correct = 0
        for q in pool:
            tt = self.graph.task_type_by_name(q.task_type)
            search_arm = bandits.exploit_arm(self.graph.bandits[f"search/{tt.id}"])
            skill_id = tt.resolver_skill_id
            if search_arm == "cascade":
                skill_id = curriculum_override(
                    self.graph, skill_id, self.config.mastery_threshold
                )
            skill = self.graph.skills[skill_id]
            lattice = None
            notes: list[str] = []
            if retrieval:
                qvec = self._embed(q.text)
                bundle = self.index.retrieve_bundle(
                    qvec,
                    tt.id,
                    context_length=len(q.context),
                    k=self.config.retrieval_top_k,
                    long_context_threshold=self.config.long_context_threshold,
                    scorer=self._oracle_scorer(q.text),
                )
                if search_arm == "cascade":
                    lattice = render_skill_lattice(self.graph, tt.id) or None
                    for pid in cascade_principles(self.graph, skill_id)[:GUIDANCE_NOTE_CAP]:
                        notes.append(self.graph.experience[pid].payload.get("text", ""))
            else:
                bundle = memory.MemoryBundle(allocation=(0, 0))
            prompt = format_bundle(
                bundle,
                skill.prompt_template.replace("{question}", q.text),
                context=q.context,
                lattice=lattice,
                guidance=notes,
            )
            raw = self._call_execution(
                "learner", "infer", prompt, {"question_id": q.qid}, self.config.eval_temperature
            )
            if extract_answer(raw).strip() == q.answer.strip():
                correct += 1
        return correct / len(pool), len(pool)

    def _eval_sequential_frozen(self) -> tuple[float, int]:
        env = self.env
        state = env.reset()
        for _ in range(env.EPISODE_STEPS):
            target = env.intended_action(state)
            if target is None:
                break
            skill = self.graph.skill_by_name(env.RESOLVER[target])
            recipe = latest_action_recipe(self.graph, skill.id)
            notes = [f"next-action {recipe[-1]}"] if recipe else []
            prompt = format_bundle(
                memory.MemoryBundle(allocation=(0, 0)),
                f"achieve {target}",
                context=f"unlocked: {', '.join(state.unlocked) or 'none'}",
                guidance=notes,
            )
            self.backends.tracker.record("infer", "explorer", self.backends.execution.role)
            action = self.backends.execution.act(
                prompt,
                meta={"state_id": state.state_id, "intended_action": target},
                actions=env.actions(),
            )
            env.step(state, action)
        return len(state.unlocked) / len(env.ACHIEVEMENTS), len(env.ACHIEVEMENTS)


def extract_answer(raw: str) -> str:
    """Last Answer: line of a completion; the whole text when absent."""
    answer = raw.strip()
    for line in raw.splitlines():
        line = line.strip()
        if line.startswith("Answer:"):
            answer = line.removeprefix("Answer:").strip()
    return answer


def call_audit(
    reports: Sequence[Mapping[str, Any]],
    eval_records: Sequence[Mapping[str, Any]] = (),
) -> dict[str, Any]:
    """Guidance-call accounting over a run record.

    Guidance fraction counts calls made by the guidance roster agents over
    all non-embedder calls; retries are already folded into the counts.
    """
    train_guidance = 0
    train_total = 0
    for report in reports:
        for agent, count in report.get("agent_calls", {}).items():
            if agent in GUIDANCE_AGENTS:
                train_guidance += count
        for role, count in report.get("tier_calls", {}).items():
            if role != "embedder":
                train_total += count
    infer_guidance = 0
    infer_total = 0
    for record in eval_records:
        for key, count in record.get("calls", {}).items():
            phase, agent, role = key.split("/")
            if role == "embedder":
                continue
            if phase == "infer":
                infer_total += count
                if agent in GUIDANCE_AGENTS:
                    infer_guidance += count
    return {
        "train_guidance_calls": train_guidance,
        "train_total_calls": train_total,
        "train_guidance_fraction": (train_guidance / train_total) if train_total else 0.0,
        "infer_guidance_calls": infer_guidance,
        "infer_total_calls": infer_total,
        "infer_guidance_fraction": (infer_guidance / infer_total) if infer_total else 0.0,
    }


def build_simulated_engine(
    config: EngineConfig, env, event_sink=None
) -> Engine:
    """Wire a fresh graph, index, and simulated backends for one run."""
    graph = KnowledgeGraph(
        event_sink=event_sink,
        principles_per_skill_cap=config.principles_per_skill_cap,
        skill_growth_cap=config.skill_growth_cap,
        snapshot_history_limit=config.snapshot_history_limit,
    )
    backend_set = simulated_backend_set(env.answer_key(), seed=config.seed)
    index = MemoryIndex(
        graph,
        backend_set.embedder.dimension,
        type_strategy_min_similarity=config.type_strategy_min_similarity,
    )
    return Engine(graph, index, backend_set, config, env)


def config_to_json(config: EngineConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n"
