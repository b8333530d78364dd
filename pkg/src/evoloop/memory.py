"""Dual exemplar memory: embedding stores, bundles, and cascade context.

Success memories and failure memories live in separate stores. Retrieval
filters both stores to the query's task type, ranks by cosine similarity
over L2-normalized vectors (exact scan, no approximate index), and fills a
success block and a failure block. The slot split depends on how much
context the question already carries: short contexts get two success slots
and one failure slot, long contexts (at or past ``long_context_threshold``
characters) flip to one success and two failures. Underfilled slots are
backfilled from the other store. Failure memories of kind ``type_strategy``
are admitted only at or above a similarity floor, because a generic
strategy pasted onto a dissimilar question misleads more than it helps.
Ranking ties break on node id ascending, so retrieval is deterministic.

``format_bundle`` renders the byte-stable prompt contract:

    [SUCCESS i]   blocks with Q: / Reasoning: / A: lines
    [CORRECTION j] blocks with conditions: / correction: lines
    [SKILL LATTICE] optional block
    [QUESTION]    Context: line when present, Note: guidance lines
                  when present, then the Q: line

Blocks are joined by one blank line. An empty bundle with no lattice and no
guidance degrades to the bare [QUESTION] block.

The cascade helpers assemble graph-derived context: principle closures in
prerequisite-first topological order, trailing-action recipes, a rendered
skill lattice, and the curriculum override that redirects an already
mastered skill to the weakest frontier skill.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .curriculum import learnable_frontier
from .errors import NotFoundError, ValidationError
from .graph import KnowledgeGraph

LATTICE_DEPTH_CAP = 8


@dataclass
class SuccessPayload:
    question: str
    reasoning_trace: str
    answer: str
    decomposition: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "reasoning_trace": self.reasoning_trace,
            "answer": self.answer,
            "decomposition": [list(step) for step in self.decomposition],
        }


@dataclass
class FailurePayload:
    question: str
    wrong_answer: str
    corrective_reasoning: str
    correct_answer: str
    kind: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "wrong_answer": self.wrong_answer,
            "corrective_reasoning": self.corrective_reasoning,
            "correct_answer": self.correct_answer,
            "kind": self.kind,
        }


@dataclass
class BundleEntry:
    node_id: int
    similarity: float
    outcome: str
    kind: str | None
    task_type_id: int | None
    skill_id: int | None
    payload: dict[str, Any]
    task_type_name: str = ""
    skill_name: str = ""


@dataclass
class MemoryBundle:
    success: list[BundleEntry] = field(default_factory=list)
    failure: list[BundleEntry] = field(default_factory=list)
    allocation: tuple[int, int] = (0, 0)

    def __len__(self) -> int:
        return len(self.success) + len(self.failure)


@dataclass
class RetrievalErrorReport:
    """Total-variation gap between retrieved and oracle-optimal top-K sets."""

    max: float
    mean: float
    per_query: list[float]


def allocation_for(context_length: int, k: int, long_context_threshold: int = 500) -> tuple[int, int]:
    """Pre-backfill slot targets (n_success, n_failure); at k=3 this is
    (2, 1) for short contexts and (1, 2) for long ones."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if context_length < 0:
        raise ValidationError(f"context_length must be >= 0, got {context_length}")
    if context_length < long_context_threshold:
        n_success = math.ceil(2 * k / 3)
    else:
        n_success = k // 3
    return n_success, k - n_success


def normalize(vector: np.ndarray) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"vector must be 1-d, got shape {arr.shape}")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValidationError("vector must have finite nonzero norm")
    return arr / norm


@dataclass
class _Entry:
    node_id: int
    task_type_id: int | None
    vector: np.ndarray
    outcome: str
    kind: str | None
    skill_id: int | None
    payload: dict[str, Any]


class MemoryIndex:
    """Exact-scan dual store over the graph's protected exemplar nodes."""

    def __init__(
        self,
        graph: KnowledgeGraph,
        dimension: int,
        type_strategy_min_similarity: float = 0.55,
    ):
        if dimension < 1:
            raise ValidationError("dimension must be >= 1")
        self.graph = graph
        self.dimension = dimension
        self.type_strategy_min_similarity = type_strategy_min_similarity
        self._success: list[_Entry] = []
        self._failure: list[_Entry] = []
        self._indexed: set[int] = set()

    def __len__(self) -> int:
        return len(self._success) + len(self._failure)

    @property
    def success_count(self) -> int:
        return len(self._success)

    @property
    def failure_count(self) -> int:
        return len(self._failure)

    def index_memory(self, node_id: int, task_type_id: int | None, vector: np.ndarray) -> None:
        """Add one protected exemplar to its store by outcome.

        Only success and failure memories are exemplar-retrievable;
        principles reach prompts through skill references, patterns and
        recipes through the cascade helpers.
        """
        node = self.graph.experience_node(node_id)
        if node.outcome not in ("success_memory", "failure_memory"):
            raise ValidationError(
                f"outcome {node.outcome!r} is not exemplar-retrievable"
            )
        arr = np.asarray(vector, dtype=np.float64)
        if arr.shape != (self.dimension,):
            raise ValidationError(
                f"vector dimension {arr.shape} does not match index dimension {self.dimension}"
            )
        if node_id in self._indexed:
            raise ValidationError(f"node {node_id} is already indexed")
        entry = _Entry(
            node_id=node_id,
            task_type_id=task_type_id,
            vector=normalize(arr),
            outcome=node.outcome,
            kind=node.kind,
            skill_id=node.skill_id,
            payload=node.payload,
        )
        if node.outcome == "success_memory":
            self._success.append(entry)
        else:
            self._failure.append(entry)
        self._indexed.add(node_id)

    def refresh(self, embed: Callable[[str], np.ndarray]) -> int:
        """Re-embed every stored exemplar against the current embedder.

        With a fixed embedder this recomputes identical vectors; it exists
        so a swapped embedder propagates on the refresh cadence.
        """
        count = 0
        for entry in self._success + self._failure:
            text = entry.payload.get("question", "")
            entry.vector = normalize(np.asarray(embed(text), dtype=np.float64))
            count += 1
        return count

    def _candidates(
        self,
        store: list[_Entry],
        query: np.ndarray,
        task_type_id: int | None,
        floor: bool,
        scorer: Callable[[_Entry], float] | None = None,
    ) -> list[tuple[float, _Entry]]:
        """Eligible entries ranked for one query.

        Eligibility (task filter, type_strategy floor) always uses the
        embedding similarity; ``scorer`` only swaps the ranking key, which
        is how an external accuracy oracle retrieves over the same
        candidate set.
        """
        out = []
        for entry in store:
            if entry.task_type_id != task_type_id:
                continue
            sim = float(entry.vector @ query)
            if (
                floor
                and entry.kind == "type_strategy"
                and sim < self.type_strategy_min_similarity
            ):
                continue
            out.append((scorer(entry) if scorer else sim, entry))
        out.sort(key=lambda pair: (-pair[0], pair[1].node_id))
        return out

    def retrieve_bundle(
        self,
        query_vector: np.ndarray,
        task_type_id: int | None,
        context_length: int,
        k: int = 3,
        long_context_threshold: int = 500,
        scorer: Callable[[_Entry], float] | None = None,
    ) -> MemoryBundle:
        query = normalize(query_vector)
        if query.shape != (self.dimension,):
            raise ValidationError(
                f"query dimension {query.shape} does not match index dimension {self.dimension}"
            )
        n_success, n_failure = allocation_for(context_length, k, long_context_threshold)
        succ = self._candidates(self._success, query, task_type_id, floor=False, scorer=scorer)
        fail = self._candidates(self._failure, query, task_type_id, floor=True, scorer=scorer)
        take_s = succ[:n_success]
        take_f = fail[:n_failure]
        # leftover budget backfills from the other store
        spare = k - len(take_s) - len(take_f)
        if spare > 0:
            if len(take_s) < n_success:
                take_f = fail[: n_failure + spare]
            elif len(take_f) < n_failure:
                take_s = succ[: n_success + spare]
        return MemoryBundle(
            success=[self._entry_to_bundle(sim, e) for sim, e in take_s],
            failure=[self._entry_to_bundle(sim, e) for sim, e in take_f],
            allocation=(n_success, n_failure),
        )

    def _entry_to_bundle(self, similarity: float, entry: _Entry) -> BundleEntry:
        tt_name = ""
        skill_name = ""
        if entry.task_type_id is not None and entry.task_type_id in self.graph.task_types:
            tt_name = self.graph.task_types[entry.task_type_id].name
        if entry.skill_id is not None and entry.skill_id in self.graph.skills:
            skill_name = self.graph.skills[entry.skill_id].name
        return BundleEntry(
            node_id=entry.node_id,
            similarity=similarity,
            outcome=entry.outcome,
            kind=entry.kind,
            task_type_id=entry.task_type_id,
            skill_id=entry.skill_id,
            payload=entry.payload,
            task_type_name=tt_name,
            skill_name=skill_name,
        )

    # ------------------------------------------------------------------
    # retrieval error measurement

    def measure_retrieval_error(
        self,
        queries: Sequence[tuple[np.ndarray, int | None]],
        k: int,
        oracle: Callable[[tuple[np.ndarray, int | None], BundleEntry], float],
    ) -> RetrievalErrorReport:
        """Compare cosine top-K with brute-force oracle-optimal top-K.

        Both sides see the same candidate set (task filter plus the
        type_strategy floor); the oracle ranks by its utility, ties by node
        id. The per-query distance is the total variation between uniform
        selections over the two sets: 1 - |intersection| / K for equal-size
        sets, and 1.0 when the sets are disjoint.
        """
        if k < 1:
            raise ValidationError("k must be >= 1")
        distances = []
        for query in queries:
            qvec, task_type_id = query
            qn = normalize(qvec)
            succ = self._candidates(self._success, qn, task_type_id, floor=False)
            fail = self._candidates(self._failure, qn, task_type_id, floor=True)
            pool = succ + fail
            pool.sort(key=lambda pair: (-pair[0], pair[1].node_id))
            retrieved = [e.node_id for _, e in pool[:k]]
            entries = [self._entry_to_bundle(sim, e) for sim, e in pool]
            scored = sorted(
                entries, key=lambda be: (-oracle(query, be), be.node_id)
            )
            optimal = [be.node_id for be in scored[:k]]
            distances.append(_uniform_tv(retrieved, optimal))
        if not distances:
            return RetrievalErrorReport(max=0.0, mean=0.0, per_query=[])
        return RetrievalErrorReport(
            max=max(distances),
            mean=sum(distances) / len(distances),
            per_query=distances,
        )


def _uniform_tv(set_a: Sequence[int], set_b: Sequence[int]) -> float:
    a, b = set(set_a), set(set_b)
    if not a and not b:
        return 0.0
    if not a or not b:
        return 1.0
    # TV(U_A, U_B) = 1 - sum over the overlap of min(1/|A|, 1/|B|)
    overlap = len(a & b)
    return 1.0 - overlap * min(1.0 / len(a), 1.0 / len(b))


# ----------------------------------------------------------------------
# harvest

def harvest_success(
    graph: KnowledgeGraph,
    index: MemoryIndex,
    embed: Callable[[str], np.ndarray],
    task_type_id: int,
    skill_id: int | None,
    payload: SuccessPayload,
    trace_char_cap: int = 4000,
) -> int:
    """Append a success memory to the graph and index it for retrieval."""
    trimmed = SuccessPayload(
        question=payload.question,
        reasoning_trace=payload.reasoning_trace[:trace_char_cap],
        answer=payload.answer,
        decomposition=payload.decomposition,
    )
    node_id = graph.append_experience(
        outcome="success_memory",
        payload=trimmed.to_dict(),
        task_type_id=task_type_id,
        skill_id=skill_id,
    )
    index.index_memory(node_id, task_type_id, embed(trimmed.question))
    return node_id


def harvest_failure(
    graph: KnowledgeGraph,
    index: MemoryIndex,
    embed: Callable[[str], np.ndarray],
    task_type_id: int,
    skill_id: int | None,
    payload: FailurePayload,
) -> int:
    node_id = graph.append_experience(
        outcome="failure_memory",
        payload=payload.to_dict(),
        task_type_id=task_type_id,
        skill_id=skill_id,
        kind=payload.kind,
    )
    index.index_memory(node_id, task_type_id, embed(payload.question))
    return node_id


def rebuild_index(
    graph: KnowledgeGraph,
    dimension: int,
    embed: Callable[[str], np.ndarray],
    type_strategy_min_similarity: float = 0.55,
) -> MemoryIndex:
    """Derive the index from graph contents (used after event-log replay)."""
    index = MemoryIndex(graph, dimension, type_strategy_min_similarity)
    for node_id in sorted(graph.experience):
        node = graph.experience[node_id]
        if node.outcome in ("success_memory", "failure_memory"):
            index.index_memory(
                node_id, node.task_type_id, embed(node.payload.get("question", ""))
            )
    return index


# ----------------------------------------------------------------------
# bundle formatting

def format_bundle(
    bundle: MemoryBundle,
    question: str,
    context: str = "",
    lattice: str | None = None,
    guidance: Iterable[str] = (),
) -> str:
    """Render the prompt contract; identical inputs yield identical bytes."""
    blocks: list[str] = []
    for i, entry in enumerate(bundle.success, start=1):
        p = entry.payload
        blocks.append(
            f"[SUCCESS {i}]\n"
            f"Q: {p.get('question', '')}\n"
            f"Reasoning: {p.get('reasoning_trace', '')}\n"
            f"A: {p.get('answer', '')}"
        )
    for j, entry in enumerate(bundle.failure, start=1):
        p = entry.payload
        conditions = (
            f"q={p.get('question', '')}; "
            f"task_type={entry.task_type_name or entry.task_type_id}; "
            f"skill={entry.skill_name or entry.skill_id}; "
            f"kind={entry.kind}"
        )
        blocks.append(
            f"[CORRECTION {j}]\n"
            f"conditions: {conditions}\n"
            f"correction: {p.get('corrective_reasoning', '')}"
        )
    if lattice:
        blocks.append(f"[SKILL LATTICE]\n{lattice}")
    question_lines = ["[QUESTION]"]
    if context:
        question_lines.append(f"Context: {context}")
    for note in guidance:
        question_lines.append(f"Note: {note}")
    question_lines.append(f"Q: {question}")
    blocks.append("\n".join(question_lines))
    return "\n\n".join(blocks)


# ----------------------------------------------------------------------
# cascade context assembly

def _topo_order_into(graph: KnowledgeGraph, skill_id: int) -> list[int]:
    """Transitive prerequisite closure of a skill, prerequisites first.

    Deterministic: Kahn's algorithm popping the smallest ready id.
    """
    if skill_id not in graph.skills:
        raise NotFoundError(f"skill {skill_id} not found")
    edges = graph.prereq_edges()
    closure = {skill_id}
    frontier = [skill_id]
    while frontier:
        cur = frontier.pop()
        for a, b in edges:
            if b == cur and a not in closure:
                closure.add(a)
                frontier.append(a)
    indegree = {sid: 0 for sid in closure}
    for a, b in edges:
        if a in closure and b in closure:
            indegree[b] += 1
    order = []
    ready = sorted(sid for sid, d in indegree.items() if d == 0)
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        changed = False
        for a, b in sorted(edges):
            if a == cur and b in indegree:
                indegree[b] -= 1
                if indegree[b] == 0:
                    ready.append(b)
                    changed = True
        if changed:
            ready.sort()
    return order


def cascade_principles(graph: KnowledgeGraph, skill_id: int) -> list[int]:
    """Principle ids of the skill and all transitive prerequisites.

    Prerequisite skills' principles come first; duplicates are kept once at
    their first position.
    """
    order = _topo_order_into(graph, skill_id)
    seen: set[int] = set()
    out: list[int] = []
    for sid in order:
        for pid in graph.skills[sid].principle_ids:
            if pid not in seen and pid in graph.experience:
                seen.add(pid)
                out.append(pid)
    return out


def record_action_recipe(
    graph: KnowledgeGraph,
    skill_id: int,
    trailing_actions: Sequence[str],
    window: int = 3,
) -> int:
    """Store the last ``window`` actions before a success as a recipe node."""
    if not trailing_actions:
        raise ValidationError("trailing_actions must be non-empty")
    actions = list(trailing_actions)[-window:]
    return graph.append_experience(
        outcome="retrieval_recipe",
        payload={"actions": actions, "window": window},
        skill_id=skill_id,
    )


def latest_action_recipe(graph: KnowledgeGraph, skill_id: int) -> list[str]:
    """Most recent recipe recorded for a skill; empty when none exists."""
    best: list[str] = []
    best_id = -1
    for node in graph.experience.values():
        if (
            node.outcome == "retrieval_recipe"
            and node.skill_id == skill_id
            and node.id > best_id
            and node.payload.get("actions")
        ):
            best = list(node.payload["actions"])
            best_id = node.id
    return best


def render_skill_lattice(graph: KnowledgeGraph, task_type_id: int) -> str:
    """Resolver skill plus its prerequisite DAG as an indented listing.

    One line per skill in topological order, prerequisites first, indented
    by dependency depth (capped at LATTICE_DEPTH_CAP levels). Degrades to an
    empty string when the task type has no resolver.
    """
    tt = graph.task_type(task_type_id)
    if tt.resolver_skill_id is None or tt.resolver_skill_id not in graph.skills:
        return ""
    order = _topo_order_into(graph, tt.resolver_skill_id)
    edges = graph.prereq_edges()
    in_closure = set(order)
    depth: dict[int, int] = {}
    for sid in order:
        deps = [a for (a, b) in edges if b == sid and a in in_closure]
        depth[sid] = 0 if not deps else min(max(depth[a] + 1 for a in deps), LATTICE_DEPTH_CAP)
    lines = []
    for sid in order:
        skill = graph.skills[sid]
        lines.append(f"{'  ' * depth[sid]}- {skill.name} (mastery {skill.mastery:.2f})")
    return "\n".join(lines)


def curriculum_override(
    graph: KnowledgeGraph, requested_skill_id: int, threshold: float
) -> int:
    """Redirect an already mastered skill to the weakest frontier skill.

    Returns the requested skill when it is still below threshold or when
    the frontier is empty. Ties on mastery break by skill id.
    """
    requested = graph.skill(requested_skill_id)
    if requested.mastery < threshold:
        return requested_skill_id
    masteries = {sid: s.mastery for sid, s in graph.skills.items()}
    prereqs: dict[int, set[int]] = {sid: set() for sid in masteries}
    for a, b in graph.prereq_edges():
        prereqs[b].add(a)
    frontier = learnable_frontier(masteries, prereqs, threshold)
    if not frontier:
        return requested_skill_id
    return min(frontier, key=lambda sid: (masteries[sid], sid))
