"""Model backends behind one call interface, plus call accounting.

Every backend exposes ``complete(prompt, meta, temperature) -> str``. The
engine tags each call with the agent making it and the phase it runs in;
the tracker counts every attempt (retries included) so audits can separate
guidance-tier from execution-tier traffic. Embedder calls are tracked but
excluded from audit fractions.

The simulated backends make the whole engine deterministic without any
model server:

  * execution: answers correctly when a fixed per-question uniform draw
    lands under ``base(q) + 0.15 * min(exemplar_blocks, 3)`` clamped to
    0.98. Both the draw and the base difficulty derive from the backend
    seed and the question id alone, so the learner is a pure function of
    (question, rendered prompt): more exemplars never flip a correct
    answer to wrong, which is what the retrieval-error bound needs.
  * guidance: template-fills corrections, principles, refined prompts and
    tool notes from structured metadata.
  * judge: exact string match per item.
  * embedder: seeded hash projection of token bags into a fixed dimension.

The HTTP backend speaks a minimal chat wire protocol: POST
``{"model", "messages", "temperature", "max_tokens"}`` and read
``{"text": ...}`` back. It retries twice with backoff and counts every
attempt.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
import requests

from .errors import ValidationError

GUIDANCE_AGENTS = frozenset({"skill_discovery", "navigator", "critic", "curator"})
EXECUTION_AGENTS = frozenset({"explorer", "learner"})

EMBED_DIMENSION = 64


def stable_hash64(*parts: Any) -> int:
    """Platform-stable 64-bit hash of the stringified parts."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def unit_draw(*parts: Any) -> float:
    """Deterministic uniform in [0, 1) keyed by the parts."""
    return stable_hash64(*parts) / 2.0**64


class CallTracker:
    """Thread-safe per-(phase, agent, role) call counter."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, str, str], int] = {}

    def record(self, phase: str, agent: str, role: str, attempts: int = 1) -> None:
        with self._lock:
            key = (phase, agent, role)
            self._counts[key] = self._counts.get(key, 0) + attempts

    def counts(self) -> dict[tuple[str, str, str], int]:
        with self._lock:
            return dict(self._counts)

    def snapshot_totals(self) -> dict[str, int]:
        """Flattened {"phase/agent/role": count} view for serialization."""
        with self._lock:
            return {"/".join(key): n for key, n in sorted(self._counts.items())}

    def total(self, phase: str | None = None, exclude_roles: tuple[str, ...] = ()) -> int:
        with self._lock:
            return sum(
                n
                for (ph, _agent, role), n in self._counts.items()
                if (phase is None or ph == phase) and role not in exclude_roles
            )

    def agent_total(self, agents: frozenset[str], phase: str | None = None) -> int:
        with self._lock:
            return sum(
                n
                for (ph, agent, role), n in self._counts.items()
                if agent in agents and role != "embedder" and (phase is None or ph == phase)
            )


@dataclass
class BackendSet:
    guidance: "Backend"
    execution: "Backend"
    judge: "Backend"
    embedder: "HashEmbedder"
    tracker: CallTracker = field(default_factory=CallTracker)


class Backend:
    role = "unset"

    def complete(self, prompt: str, meta: Mapping[str, Any] | None = None, temperature: float = 0.0) -> str:
        raise NotImplementedError


class SimulatedExecutionBackend(Backend):
    """Frozen learner simulation; see the module docstring for the law."""

    role = "execution"

    def __init__(self, answer_key: Mapping[str, Mapping[str, Any]], seed: int):
        self.answer_key = dict(answer_key)
        self.seed = seed

    def exemplar_blocks(self, prompt: str) -> int:
        return prompt.count("[SUCCESS ") + prompt.count("[CORRECTION ")

    def base_difficulty(self, question_id: str) -> float:
        # latent per-question solvability in [0.35, 0.75)
        return 0.35 + 0.40 * unit_draw(self.seed, "base", question_id)

    def success_probability(self, question_id: str, prompt: str) -> float:
        """Chance this learner answers correctly given the rendered prompt.

        A prompt that carries the question's own solved exemplar, or a
        correction written for this exact question (it states the right
        answer), is always answered correctly. Otherwise each retrieved
        block adds a fixed boost on top of the question's latent
        difficulty, saturating at three blocks.
        """
        entry = self.answer_key.get(question_id, {})
        own_question = entry.get("question", "")
        if own_question:
            if f"Q: {own_question}\nReasoning:" in prompt:
                return 1.0
            if f"conditions: q={own_question};" in prompt:
                return 1.0
        boost = 0.15 * min(self.exemplar_blocks(prompt), 3)
        return min(max(self.base_difficulty(question_id) + boost, 0.0), 0.98)

    def complete(self, prompt: str, meta: Mapping[str, Any] | None = None, temperature: float = 0.0) -> str:
        if not meta or "question_id" not in meta:
            raise ValidationError("simulated execution backend needs meta['question_id']")
        qid = meta["question_id"]
        entry = self.answer_key.get(qid)
        if entry is None:
            raise ValidationError(f"unknown question id {qid!r}")
        threshold = self.success_probability(qid, prompt)
        correct = unit_draw(self.seed, "roll", qid) < threshold
        steps = entry.get("decomposition", [])
        trace_lines = [f"Step {i}: {text}" for i, (_skill, text) in enumerate(steps, start=1)]
        if correct:
            trace_lines.append(f"Answer: {entry['answer']}")
        else:
            trace_lines.append(f"Answer: {self._wrong_answer(entry['answer'], qid)}")
        return "\n".join(trace_lines)

    def _wrong_answer(self, gold: str, qid: str) -> str:
        try:
            return str(int(gold) + 1 + stable_hash64(self.seed, "off", qid) % 7)
        except ValueError:
            return f"not-{gold}"

    def act(self, prompt: str, meta: Mapping[str, Any], actions: list[str]) -> str:
        """Pick one action for a sequential episode step.

        Follows the first recipe Note: line naming a legal action when one
        is present; otherwise draws from the legal set, biased toward the
        intended action when the state id is easy for this seed.
        """
        if not actions:
            raise ValidationError("no actions to choose from")
        for line in prompt.splitlines():
            if line.startswith("Note: next-action "):
                hinted = line.removeprefix("Note: next-action ").strip()
                if hinted in actions:
                    return hinted
        state_id = meta.get("state_id", "start")
        intended = meta.get("intended_action")
        roll = unit_draw(self.seed, "act", state_id)
        if intended in actions and roll < 0.45:
            return intended
        pick = stable_hash64(self.seed, "pick", state_id, len(actions)) % len(actions)
        return actions[pick]


class SimulatedGuidanceBackend(Backend):
    """Deterministic template filler for the guidance-tier agents."""

    role = "guidance"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def complete(self, prompt: str, meta: Mapping[str, Any] | None = None, temperature: float = 0.0) -> str:
        meta = meta or {}
        kind = meta.get("kind", "")
        if kind == "correction":
            return (
                f"When solving {meta['task_type']} questions, avoid "
                f"{meta['wrong_answer']!r}; recompute carefully and verify the "
                f"result equals {meta['correct_answer']!r} before answering."
            )
        if kind == "type_strategy":
            return (
                f"[Question pattern: {meta['task_type']}] Restate the given "
                f"quantities first, apply the {meta['skill']} procedure step "
                f"by step, and check the final value against the question."
            )
        if kind == "principle":
            return (
                f"For {meta['task_type']} tasks, decompose via {meta['skill']} "
                f"and confirm each intermediate quantity before combining."
            )
        if kind == "prompt_refinement":
            return (
                "Work {task_type} step by step, naming each intermediate "
                "value, then answer: {question}"
            ).replace("{task_type}", meta["task_type"])
        if kind == "tool":
            return (
                f"lookup-{meta['task_type']}: scan retrieved exemplars for "
                f"matching quantities before computing from scratch."
            )
        if kind == "skill_split":
            return f"{meta['skill']}__{meta['task_type']}"
        if kind == "navigator":
            # reorder-only refinement: weakest mastery first, ids break ties
            frontier = list(meta.get("frontier", []))
            masteries = meta.get("masteries", {})
            return ",".join(
                str(sid) for sid in sorted(frontier, key=lambda s: (masteries.get(s, 0.0), s))
            )
        if kind == "ontology":
            return "ack"
        raise ValidationError(f"unknown guidance request kind {kind!r}")


class SimulatedJudgeBackend(Backend):
    """Exact-match verdicts over a batch of (predicted, gold) items."""

    role = "judge"

    def complete(self, prompt: str, meta: Mapping[str, Any] | None = None, temperature: float = 0.0) -> str:
        if not meta or "items" not in meta:
            raise ValidationError("judge backend needs meta['items']")
        verdicts = [
            "1" if str(pred).strip() == str(gold).strip() else "0"
            for pred, gold in meta["items"]
        ]
        return "".join(verdicts)


class HashEmbedder:
    """Seeded deterministic hash projection; cosine-friendly token bags."""

    role = "embedder"

    def __init__(self, dimension: int = EMBED_DIMENSION, seed: int = 0):
        if dimension < 1:
            raise ValidationError("dimension must be >= 1")
        self.dimension = dimension
        self.seed = seed
        self.calls = 0
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            rng = np.random.default_rng(stable_hash64(self.seed, "tok", token) % 2**63)
            cached = rng.standard_normal(self.dimension)
            self._token_cache[token] = cached
        return cached

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        tokens = [t for t in text.lower().split() if t] or ["<empty>"]
        acc = np.zeros(self.dimension)
        for tok in tokens:
            acc += self._token_vector(tok)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            acc[0] = 1.0
            norm = 1.0
        return acc / norm


class HttpBackend(Backend):
    """Chat-completion wire client with bounded retries.

    Every attempt counts as a call; the caller's tracker receives the
    attempt count through ``last_attempts`` after each ``complete``.
    """

    def __init__(
        self,
        url: str,
        model: str,
        role: str,
        token: str | None = None,
        max_tokens: int = 1024,
        attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.role = role
        self.token = token
        self.max_tokens = max_tokens
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.last_attempts = 0

    def complete(self, prompt: str, meta: Mapping[str, Any] | None = None, temperature: float = 0.0) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": self.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        self.last_attempts = 0
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            self.last_attempts += 1
            try:
                response = self.session.post(
                    self.url, json=body, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                return response.json()["text"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.attempts - 1:
                    time.sleep(self.backoff * 2**attempt)
        raise ValidationError(f"backend call failed after {self.attempts} attempts: {last_error}")


def simulated_backend_set(
    answer_key: Mapping[str, Mapping[str, Any]], seed: int
) -> BackendSet:
    return BackendSet(
        guidance=SimulatedGuidanceBackend(seed=seed),
        execution=SimulatedExecutionBackend(answer_key, seed=seed),
        judge=SimulatedJudgeBackend(),
        embedder=HashEmbedder(dimension=EMBED_DIMENSION, seed=seed),
    )


EmbedFn = Callable[[str], np.ndarray]
