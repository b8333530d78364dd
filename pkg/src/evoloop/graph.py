"""Event-sourced knowledge graph with four co-evolving subgraphs.

The graph is the single mutable aggregate of the engine. It holds:

  * capability nodes (skills with mastery, prompt template, strategy,
    principle references, prerequisite DAG),
  * task-type nodes (cumulative failure count, last-selected iteration,
    resolver skill edge),
  * experience nodes (five outcome classes; principle, failure_memory and
    success_memory are protected: append-only and immutable),
  * environment nodes (thin payload store).

Every mutation goes through ``_commit`` which appends one record
``{seq, iter, op, payload}`` to the event log and then applies the state
transition. Replaying a log into an empty graph reproduces the final state
bit-exactly: ids are allocated by the writer and embedded in payloads, the
apply step is a pure function of (state, payload), and records carry no
timestamps.

Snapshots capture only the mutable slots (masteries, prompt templates,
strategies, task counters, bandit states). Rolling back restores those slots
and nothing else, so protected nodes appended after a snapshot always
survive a rollback. At most ``snapshot_limit`` snapshots are retained,
oldest dropped first.

Writes are serialized behind a single lock; readers copy under the same
lock so they never observe a torn record.
"""

from __future__ import annotations

import copy
import hashlib
import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .errors import (
    CapError,
    CycleError,
    FrozenGraphError,
    IntegrityError,
    NotFoundError,
    ProtectedNodeError,
    ValidationError,
)

PROTECTED_OUTCOMES = frozenset({"principle", "failure_memory", "success_memory"})
EXPERIENCE_OUTCOMES = PROTECTED_OUTCOMES | {"abstracted_pattern", "retrieval_recipe"}
FAILURE_KINDS = frozenset({"specific", "type_strategy"})
ENV_CLASSES = frozenset({"entity", "relation", "observation", "task_context"})

DEFAULT_PROMPT_TEMPLATE = "{question}"
DEFAULT_STRATEGY = "direct"


@dataclass
class SkillNode:
    id: int
    name: str
    mastery: float = 0.0
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    strategy: str = DEFAULT_STRATEGY
    principle_ids: list[int] = field(default_factory=list)


@dataclass
class TaskTypeNode:
    id: int
    name: str
    n_fail: int = 0
    k_last: int = -1
    resolver_skill_id: int | None = None
    observed_iter: int = 0


@dataclass
class ExperienceNode:
    id: int
    outcome: str
    task_type_id: int | None = None
    skill_id: int | None = None
    kind: str | None = None
    confidence: float = 1.0
    payload: dict[str, Any] = field(default_factory=dict)
    created_iter: int = 0

    @property
    def protected(self) -> bool:
        return self.outcome in PROTECTED_OUTCOMES


@dataclass
class EnvNode:
    id: int
    node_class: str
    payload: dict[str, Any] = field(default_factory=dict)


@dataclass
class BanditSlot:
    """Serialized Thompson bandit state, stored as a graph mutable slot."""

    context_id: str
    arm_ids: list[str]
    successes: dict[str, int]
    failures: dict[str, int]
    warmup_pulls: int
    rng_seed: int
    draws: int = 0

    def pulls(self, arm_id: str) -> int:
        return self.successes[arm_id] + self.failures[arm_id]

    def to_dict(self) -> dict[str, Any]:
        return {
            "context_id": self.context_id,
            "arm_ids": list(self.arm_ids),
            "successes": dict(self.successes),
            "failures": dict(self.failures),
            "warmup_pulls": self.warmup_pulls,
            "rng_seed": self.rng_seed,
            "draws": self.draws,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BanditSlot":
        return cls(
            context_id=data["context_id"],
            arm_ids=list(data["arm_ids"]),
            successes=dict(data["successes"]),
            failures=dict(data["failures"]),
            warmup_pulls=data["warmup_pulls"],
            rng_seed=data["rng_seed"],
            draws=data["draws"],
        )


EventSink = Callable[[dict[str, Any]], None]


class KnowledgeGraph:
    def __init__(
        self,
        event_sink: EventSink | None = None,
        principles_per_skill_cap: int = 12,
        skill_growth_cap: int = 30,
        snapshot_history_limit: int = 64,
    ):
        self._lock = threading.RLock()
        self._sink = event_sink
        self.principles_per_skill_cap = principles_per_skill_cap
        self.skill_growth_cap = skill_growth_cap
        self.snapshot_history_limit = snapshot_history_limit

        self._next_id = 1
        self._seq = 0
        self._frozen = False
        self.current_iter = -1

        self.skills: dict[int, SkillNode] = {}
        self.task_types: dict[int, TaskTypeNode] = {}
        self.experience: dict[int, ExperienceNode] = {}
        self.env_nodes: dict[int, EnvNode] = {}
        # prerequisite edge (a, b): a must be mastered before b
        self._prereq_edges: set[tuple[int, int]] = set()
        self.bandits: dict[str, BanditSlot] = {}
        self._snapshots: dict[int, dict[str, Any]] = {}

    # ------------------------------------------------------------------
    # event plumbing

    def set_event_sink(self, sink: EventSink | None) -> None:
        self._sink = sink

    @property
    def last_seq(self) -> int:
        return self._seq

    def freeze(self) -> None:
        self._frozen = True

    def unfreeze(self) -> None:
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _commit(self, op: str, payload: dict[str, Any]) -> None:
        if self._frozen:
            raise FrozenGraphError(f"graph is frozen, refused op {op!r}")
        self._seq += 1
        record = {"seq": self._seq, "iter": self.current_iter, "op": op, "payload": payload}
        self._apply(op, payload)
        if self._sink is not None:
            self._sink(record)

    def _claim_id(self, node_id: int) -> None:
        # ids come from the payload so replay reproduces them exactly
        if node_id >= self._next_id:
            self._next_id = node_id + 1

    def allocate_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    # ------------------------------------------------------------------
    # capability subgraph

    def add_skill(
        self,
        name: str,
        mastery: float = 0.0,
        prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
        strategy: str = DEFAULT_STRATEGY,
    ) -> int:
        with self._lock:
            if not name:
                raise ValidationError("skill name must be non-empty")
            _check_unit_interval("mastery", mastery)
            if len(self.skills) >= self.skill_growth_cap:
                raise CapError(
                    f"skill cap reached ({self.skill_growth_cap}), refused {name!r}"
                )
            nid = self.allocate_id()
            self._commit(
                "add_skill",
                {
                    "id": nid,
                    "name": name,
                    "mastery": mastery,
                    "prompt_template": prompt_template,
                    "strategy": strategy,
                },
            )
            return nid

    def set_mastery(self, skill_id: int, value: float) -> None:
        with self._lock:
            self._require_skill(skill_id)
            _check_unit_interval("mastery", value)
            self._commit("set_mastery", {"skill_id": skill_id, "value": value})

    def set_prompt_template(self, skill_id: int, template: str) -> None:
        with self._lock:
            self._require_skill(skill_id)
            if "{question}" not in template:
                raise ValidationError("prompt template must contain {question}")
            self._commit("set_prompt_template", {"skill_id": skill_id, "value": template})

    def set_strategy(self, skill_id: int, strategy: str) -> None:
        with self._lock:
            self._require_skill(skill_id)
            self._commit("set_strategy", {"skill_id": skill_id, "value": strategy})

    def add_principle_ref(self, skill_id: int, principle_id: int) -> None:
        """Reference a principle from a skill; oldest ref is dropped at the cap."""
        with self._lock:
            self._require_skill(skill_id)
            node = self.experience.get(principle_id)
            if node is None or node.outcome != "principle":
                raise ValidationError(f"node {principle_id} is not a principle")
            self._commit(
                "add_principle_ref", {"skill_id": skill_id, "principle_id": principle_id}
            )

    def add_prerequisite(self, prereq_skill_id: int, skill_id: int) -> None:
        with self._lock:
            self._require_skill(prereq_skill_id)
            self._require_skill(skill_id)
            if prereq_skill_id == skill_id:
                raise CycleError("skill cannot be its own prerequisite")
            if (prereq_skill_id, skill_id) in self._prereq_edges:
                return
            if self._reaches(skill_id, prereq_skill_id):
                raise CycleError(
                    f"edge {prereq_skill_id}->{skill_id} would close a prerequisite cycle"
                )
            self._commit(
                "add_prerequisite", {"from_id": prereq_skill_id, "to_id": skill_id}
            )

    def _reaches(self, start: int, target: int) -> bool:
        stack = [start]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur == target:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(b for (a, b) in self._prereq_edges if a == cur)
        return False

    def prerequisites_of(self, skill_id: int) -> set[int]:
        with self._lock:
            self._require_skill(skill_id)
            return {a for (a, b) in self._prereq_edges if b == skill_id}

    def prereq_edges(self) -> set[tuple[int, int]]:
        with self._lock:
            return set(self._prereq_edges)

    # ------------------------------------------------------------------
    # task subgraph

    def add_task_type(self, name: str) -> int:
        with self._lock:
            if not name:
                raise ValidationError("task type name must be non-empty")
            nid = self.allocate_id()
            self._commit(
                "add_task_type",
                {"id": nid, "name": name, "observed_iter": max(self.current_iter, 0)},
            )
            return nid

    def set_resolver(self, task_type_id: int, skill_id: int) -> None:
        with self._lock:
            self._require_task_type(task_type_id)
            self._require_skill(skill_id)
            self._commit(
                "set_resolver", {"task_type_id": task_type_id, "skill_id": skill_id}
            )

    def record_task_failure(self, task_type_id: int) -> None:
        with self._lock:
            self._require_task_type(task_type_id)
            self._commit("task_failure", {"task_type_id": task_type_id})

    def mark_selected(self, task_type_id: int, k: int) -> None:
        with self._lock:
            tt = self._require_task_type(task_type_id)
            if k < tt.k_last:
                raise ValidationError(
                    f"selection iteration {k} precedes k_last={tt.k_last}"
                )
            self._commit("mark_selected", {"task_type_id": task_type_id, "k": k})

    # ------------------------------------------------------------------
    # experience subgraph

    def append_experience(
        self,
        outcome: str,
        payload: dict[str, Any],
        task_type_id: int | None = None,
        skill_id: int | None = None,
        kind: str | None = None,
        confidence: float = 1.0,
    ) -> int:
        with self._lock:
            if outcome not in EXPERIENCE_OUTCOMES:
                raise ValidationError(f"unknown outcome class {outcome!r}")
            if outcome == "failure_memory":
                if kind not in FAILURE_KINDS:
                    raise ValidationError(
                        f"failure_memory requires kind in {sorted(FAILURE_KINDS)}"
                    )
            elif kind is not None:
                raise ValidationError(f"kind is only valid for failure_memory, got {outcome!r}")
            _check_unit_interval("confidence", confidence)
            if task_type_id is not None:
                self._require_task_type(task_type_id)
            if skill_id is not None:
                self._require_skill(skill_id)
            nid = self.allocate_id()
            self._commit(
                "append_experience",
                {
                    "id": nid,
                    "outcome": outcome,
                    "task_type_id": task_type_id,
                    "skill_id": skill_id,
                    "kind": kind,
                    "confidence": confidence,
                    "payload": copy.deepcopy(payload),
                    "created_iter": self.current_iter,
                },
            )
            return nid

    def prune_low_confidence(self, threshold: float) -> list[int]:
        """Drop abstracted_pattern nodes below the confidence threshold.

        Protected nodes and retrieval recipes are never eligible, whatever
        their confidence.
        """
        with self._lock:
            _check_unit_interval("threshold", threshold)
            removed = sorted(
                nid
                for nid, node in self.experience.items()
                if node.outcome == "abstracted_pattern" and node.confidence < threshold
            )
            self._commit("prune", {"threshold": threshold, "removed_ids": removed})
            return removed

    def delete_experience(self, node_id: int) -> None:
        """Hard delete; exists to make the protection rule explicit."""
        with self._lock:
            node = self.experience.get(node_id)
            if node is None:
                raise NotFoundError(f"experience node {node_id} not found")
            if node.protected:
                raise ProtectedNodeError(
                    f"node {node_id} has protected outcome {node.outcome!r}"
                )
            self._commit("prune", {"threshold": None, "removed_ids": [node_id]})

    def protected_counts(self) -> dict[str, int]:
        with self._lock:
            counts = {outcome: 0 for outcome in sorted(PROTECTED_OUTCOMES)}
            for node in self.experience.values():
                if node.outcome in counts:
                    counts[node.outcome] += 1
            return counts

    # ------------------------------------------------------------------
    # environment subgraph

    def add_env_node(self, node_class: str, payload: dict[str, Any]) -> int:
        with self._lock:
            if node_class not in ENV_CLASSES:
                raise ValidationError(f"unknown env node class {node_class!r}")
            nid = self.allocate_id()
            self._commit(
                "add_env_node",
                {"id": nid, "node_class": node_class, "payload": copy.deepcopy(payload)},
            )
            return nid

    # ------------------------------------------------------------------
    # bandit slots

    def bandit_init(
        self, context_id: str, arm_ids: Iterable[str], warmup_pulls: int, rng_seed: int
    ) -> None:
        with self._lock:
            arms = list(arm_ids)
            if not arms:
                raise ValidationError("bandit needs at least one arm")
            if len(set(arms)) != len(arms):
                raise ValidationError("duplicate arm ids")
            if context_id in self.bandits:
                raise ValidationError(f"bandit context {context_id!r} already exists")
            self._commit(
                "bandit_init",
                {
                    "context_id": context_id,
                    "arm_ids": arms,
                    "warmup_pulls": warmup_pulls,
                    "rng_seed": rng_seed,
                },
            )

    def bandit_state(self, context_id: str) -> BanditSlot:
        with self._lock:
            slot = self.bandits.get(context_id)
            if slot is None:
                raise NotFoundError(f"bandit context {context_id!r} not found")
            return BanditSlot.from_dict(slot.to_dict())

    def bandit_record_draw(self, context_id: str, arm_id: str) -> None:
        with self._lock:
            slot = self.bandits.get(context_id)
            if slot is None:
                raise NotFoundError(f"bandit context {context_id!r} not found")
            if arm_id not in slot.arm_ids:
                raise ValidationError(f"unknown arm {arm_id!r}")
            self._commit("bandit_draw", {"context_id": context_id, "arm_id": arm_id})

    def bandit_update(self, context_id: str, arm_id: str, reward: int) -> None:
        with self._lock:
            slot = self.bandits.get(context_id)
            if slot is None:
                raise NotFoundError(f"bandit context {context_id!r} not found")
            if arm_id not in slot.arm_ids:
                raise ValidationError(f"unknown arm {arm_id!r}")
            if reward not in (0, 1):
                raise ValidationError(f"reward must be 0 or 1, got {reward!r}")
            self._commit(
                "bandit_update",
                {"context_id": context_id, "arm_id": arm_id, "reward": reward},
            )

    # ------------------------------------------------------------------
    # snapshots

    def snapshot(self) -> int:
        with self._lock:
            sid = self.allocate_id()
            self._commit("snapshot", {"snapshot_id": sid})
            return sid

    def rollback_mutable(self, snapshot_id: int) -> None:
        with self._lock:
            if snapshot_id not in self._snapshots:
                raise NotFoundError(f"snapshot {snapshot_id} not found")
            self._commit("rollback", {"snapshot_id": snapshot_id})

    def snapshot_record(self, snapshot_id: int) -> dict[str, Any]:
        with self._lock:
            rec = self._snapshots.get(snapshot_id)
            if rec is None:
                raise NotFoundError(f"snapshot {snapshot_id} not found")
            return copy.deepcopy(rec)

    def snapshot_ids(self) -> list[int]:
        with self._lock:
            return sorted(self._snapshots)

    def _capture_mutable_state(self) -> dict[str, Any]:
        return {
            "skills": {
                str(sid): {
                    "mastery": s.mastery,
                    "prompt_template": s.prompt_template,
                    "strategy": s.strategy,
                }
                for sid, s in self.skills.items()
            },
            "task_types": {
                str(tid): {"n_fail": t.n_fail, "k_last": t.k_last}
                for tid, t in self.task_types.items()
            },
            "bandits": {cid: slot.to_dict() for cid, slot in self.bandits.items()},
        }

    # ------------------------------------------------------------------
    # apply: the only place state changes

    def _apply(self, op: str, payload: dict[str, Any]) -> None:
        if op == "add_skill":
            self._claim_id(payload["id"])
            self.skills[payload["id"]] = SkillNode(
                id=payload["id"],
                name=payload["name"],
                mastery=payload["mastery"],
                prompt_template=payload["prompt_template"],
                strategy=payload["strategy"],
            )
        elif op == "set_mastery":
            self.skills[payload["skill_id"]].mastery = payload["value"]
        elif op == "set_prompt_template":
            self.skills[payload["skill_id"]].prompt_template = payload["value"]
        elif op == "set_strategy":
            self.skills[payload["skill_id"]].strategy = payload["value"]
        elif op == "add_principle_ref":
            skill = self.skills[payload["skill_id"]]
            if payload["principle_id"] in skill.principle_ids:
                return
            skill.principle_ids.append(payload["principle_id"])
            while len(skill.principle_ids) > self.principles_per_skill_cap:
                skill.principle_ids.pop(0)
        elif op == "add_prerequisite":
            self._prereq_edges.add((payload["from_id"], payload["to_id"]))
        elif op == "add_task_type":
            self._claim_id(payload["id"])
            self.task_types[payload["id"]] = TaskTypeNode(
                id=payload["id"],
                name=payload["name"],
                observed_iter=payload.get("observed_iter", 0),
            )
        elif op == "set_resolver":
            self.task_types[payload["task_type_id"]].resolver_skill_id = payload["skill_id"]
        elif op == "task_failure":
            self.task_types[payload["task_type_id"]].n_fail += 1
        elif op == "mark_selected":
            self.task_types[payload["task_type_id"]].k_last = payload["k"]
        elif op == "append_experience":
            self._claim_id(payload["id"])
            self.experience[payload["id"]] = ExperienceNode(
                id=payload["id"],
                outcome=payload["outcome"],
                task_type_id=payload["task_type_id"],
                skill_id=payload["skill_id"],
                kind=payload["kind"],
                confidence=payload["confidence"],
                payload=copy.deepcopy(payload["payload"]),
                created_iter=payload["created_iter"],
            )
        elif op == "prune":
            # removed ids applied verbatim; the writer already validated them
            for nid in payload["removed_ids"]:
                self.experience.pop(nid, None)
        elif op == "add_env_node":
            self._claim_id(payload["id"])
            self.env_nodes[payload["id"]] = EnvNode(
                id=payload["id"],
                node_class=payload["node_class"],
                payload=copy.deepcopy(payload["payload"]),
            )
        elif op == "bandit_init":
            arms = payload["arm_ids"]
            self.bandits[payload["context_id"]] = BanditSlot(
                context_id=payload["context_id"],
                arm_ids=list(arms),
                successes={a: 0 for a in arms},
                failures={a: 0 for a in arms},
                warmup_pulls=payload["warmup_pulls"],
                rng_seed=payload["rng_seed"],
            )
        elif op == "bandit_draw":
            self.bandits[payload["context_id"]].draws += 1
        elif op == "bandit_update":
            slot = self.bandits[payload["context_id"]]
            if payload["reward"] == 1:
                slot.successes[payload["arm_id"]] += 1
            else:
                slot.failures[payload["arm_id"]] += 1
        elif op == "snapshot":
            sid = payload["snapshot_id"]
            self._claim_id(sid)
            self._snapshots[sid] = {
                "snapshot_id": sid,
                "iter": self.current_iter,
                "mutable_state": self._capture_mutable_state(),
                "protected_watermark": self._counts_unlocked(),
            }
            while len(self._snapshots) > self.snapshot_history_limit:
                del self._snapshots[min(self._snapshots)]
        elif op == "rollback":
            state = self._snapshots[payload["snapshot_id"]]["mutable_state"]
            for sid_str, slots in state["skills"].items():
                skill = self.skills.get(int(sid_str))
                if skill is not None:
                    skill.mastery = slots["mastery"]
                    skill.prompt_template = slots["prompt_template"]
                    skill.strategy = slots["strategy"]
            for tid_str, slots in state["task_types"].items():
                tt = self.task_types.get(int(tid_str))
                if tt is not None:
                    tt.n_fail = slots["n_fail"]
                    tt.k_last = slots["k_last"]
            for cid, slot_data in state["bandits"].items():
                if cid in self.bandits:
                    self.bandits[cid] = BanditSlot.from_dict(slot_data)
        else:
            raise IntegrityError(f"unknown op {op!r}")

    def _counts_unlocked(self) -> dict[str, int]:
        counts = {outcome: 0 for outcome in sorted(PROTECTED_OUTCOMES)}
        for node in self.experience.values():
            if node.outcome in counts:
                counts[node.outcome] += 1
        return counts

    # ------------------------------------------------------------------
    # lookups

    def _require_skill(self, skill_id: int) -> SkillNode:
        node = self.skills.get(skill_id)
        if node is None:
            raise NotFoundError(f"skill {skill_id} not found")
        return node

    def _require_task_type(self, task_type_id: int) -> TaskTypeNode:
        node = self.task_types.get(task_type_id)
        if node is None:
            raise NotFoundError(f"task type {task_type_id} not found")
        return node

    def skill(self, skill_id: int) -> SkillNode:
        with self._lock:
            return self._require_skill(skill_id)

    def task_type(self, task_type_id: int) -> TaskTypeNode:
        with self._lock:
            return self._require_task_type(task_type_id)

    def experience_node(self, node_id: int) -> ExperienceNode:
        with self._lock:
            node = self.experience.get(node_id)
            if node is None:
                raise NotFoundError(f"experience node {node_id} not found")
            return node

    def skill_by_name(self, name: str) -> SkillNode:
        with self._lock:
            for node in self.skills.values():
                if node.name == name:
                    return node
            raise NotFoundError(f"skill named {name!r} not found")

    def task_type_by_name(self, name: str) -> TaskTypeNode:
        with self._lock:
            for node in self.task_types.values():
                if node.name == name:
                    return node
            raise NotFoundError(f"task type named {name!r} not found")

    # ------------------------------------------------------------------
    # serialization

    def state_dict(self) -> dict[str, Any]:
        with self._lock:
            return {
                "next_id": self._next_id,
                "last_seq": self._seq,
                "skills": {
                    str(s.id): {
                        "id": s.id,
                        "name": s.name,
                        "mastery": s.mastery,
                        "prompt_template": s.prompt_template,
                        "strategy": s.strategy,
                        "principle_ids": list(s.principle_ids),
                    }
                    for s in self.skills.values()
                },
                "task_types": {
                    str(t.id): {
                        "id": t.id,
                        "name": t.name,
                        "n_fail": t.n_fail,
                        "k_last": t.k_last,
                        "resolver_skill_id": t.resolver_skill_id,
                        "observed_iter": t.observed_iter,
                    }
                    for t in self.task_types.values()
                },
                "experience": {
                    str(e.id): {
                        "id": e.id,
                        "outcome": e.outcome,
                        "task_type_id": e.task_type_id,
                        "skill_id": e.skill_id,
                        "kind": e.kind,
                        "confidence": e.confidence,
                        "payload": copy.deepcopy(e.payload),
                        "created_iter": e.created_iter,
                    }
                    for e in self.experience.values()
                },
                "env_nodes": {
                    str(n.id): {
                        "id": n.id,
                        "node_class": n.node_class,
                        "payload": copy.deepcopy(n.payload),
                    }
                    for n in self.env_nodes.values()
                },
                "prereq_edges": sorted([list(e) for e in self._prereq_edges]),
                "bandits": {cid: slot.to_dict() for cid, slot in self.bandits.items()},
                "snapshots": {
                    str(sid): copy.deepcopy(rec) for sid, rec in self._snapshots.items()
                },
            }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.state_dict(), sort_keys=True, separators=(",", ":")).encode()

    def graph_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    # ------------------------------------------------------------------
    # replay

    @classmethod
    def replay(
        cls,
        records: Iterable[dict[str, Any]],
        principles_per_skill_cap: int = 12,
        skill_growth_cap: int = 30,
        snapshot_history_limit: int = 64,
    ) -> "KnowledgeGraph":
        """Rebuild a graph from an event log.

        Records must arrive in strictly increasing seq order starting at 1.
        The apply step runs verbatim (no write-side validation) so the
        rebuilt state matches the writer's state bit-exactly.
        """
        graph = cls(
            event_sink=None,
            principles_per_skill_cap=principles_per_skill_cap,
            skill_growth_cap=skill_growth_cap,
            snapshot_history_limit=snapshot_history_limit,
        )
        expected_seq = 1
        for record in records:
            try:
                seq, it, op, payload = (
                    record["seq"],
                    record["iter"],
                    record["op"],
                    record["payload"],
                )
            except (KeyError, TypeError) as exc:
                raise IntegrityError(f"malformed event record at seq {expected_seq}") from exc
            if seq != expected_seq:
                raise IntegrityError(f"event seq gap: expected {expected_seq}, got {seq}")
            graph.current_iter = it
            try:
                graph._apply(op, payload)
            except IntegrityError:
                raise
            except Exception as exc:
                raise IntegrityError(f"replay failed at seq {seq} ({op})") from exc
            graph._seq = seq
            expected_seq += 1
        return graph


def _check_unit_interval(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ValidationError(f"{name} must be a number, got {type(value).__name__}")
    if not 0.0 <= float(value) <= 1.0:
        raise ValidationError(f"{name} must be in [0, 1], got {value}")
