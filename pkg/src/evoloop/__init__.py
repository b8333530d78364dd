"""Self-evolving task engine over a frozen model backbone.

A co-evolutionary knowledge graph (skills, task types, experience,
environment), dual success/failure retrieval, a failure-weighted
curriculum with a mastery ratchet, and Thompson-sampling strategy
selection, driven by a six-agent loop where every model weight stays
frozen and all improvement lives in the graph.
"""

from .audit import AuditResult, CheckResult, audit_run
from .backends import (
    BackendSet,
    CallTracker,
    EXECUTION_AGENTS,
    GUIDANCE_AGENTS,
    HashEmbedder,
    HttpBackend,
    SimulatedExecutionBackend,
    SimulatedGuidanceBackend,
    SimulatedJudgeBackend,
    simulated_backend_set,
    stable_hash64,
    unit_draw,
)
from .bandits import ThompsonBandit, exploit_arm, new_slot, posterior_mean, select_arm, update_arm
from .curriculum import (
    RatchetParams,
    SelectorParams,
    TaskStat,
    check_ratchet_trace,
    coverage_gap_bound,
    learnable_frontier,
    mastery_update,
    round_robin_select,
    selection_score,
)
from .engine import (
    Engine,
    EngineConfig,
    IterationReport,
    call_audit,
    delta_guard_decision,
    extract_answer,
    rotation_action,
)
from .envs import ENVS, Question, SequentialChainEnv, StaticQAEnv, make_env
from .errors import (
    CapError,
    CycleError,
    EvoloopError,
    FrozenGraphError,
    IntegrityError,
    NotFoundError,
    ProtectedNodeError,
    ValidationError,
)
from .graph import (
    BanditSlot,
    EnvNode,
    ExperienceNode,
    KnowledgeGraph,
    SkillNode,
    TaskTypeNode,
)
from .memory import (
    FailurePayload,
    MemoryBundle,
    MemoryIndex,
    RetrievalErrorReport,
    SuccessPayload,
    allocation_for,
    cascade_principles,
    curriculum_override,
    format_bundle,
    harvest_failure,
    harvest_success,
    latest_action_recipe,
    rebuild_index,
    record_action_recipe,
    render_skill_lattice,
)
from .runner import (
    committed_iterations,
    init_run,
    load_engine,
    run_eval,
    run_training,
    stats_rows,
)
from .runstore import RunStore

__version__ = "0.1.0"

__all__ = [
    "AuditResult",
    "BackendSet",
    "BanditSlot",
    "CallTracker",
    "CapError",
    "CheckResult",
    "CycleError",
    "ENVS",
    "EXECUTION_AGENTS",
    "Engine",
    "EngineConfig",
    "EnvNode",
    "EvoloopError",
    "ExperienceNode",
    "FailurePayload",
    "FrozenGraphError",
    "GUIDANCE_AGENTS",
    "HashEmbedder",
    "HttpBackend",
    "IntegrityError",
    "IterationReport",
    "KnowledgeGraph",
    "MemoryBundle",
    "MemoryIndex",
    "NotFoundError",
    "ProtectedNodeError",
    "Question",
    "RatchetParams",
    "RetrievalErrorReport",
    "RunStore",
    "SelectorParams",
    "SequentialChainEnv",
    "SimulatedExecutionBackend",
    "SimulatedGuidanceBackend",
    "SimulatedJudgeBackend",
    "SkillNode",
    "StaticQAEnv",
    "SuccessPayload",
    "TaskStat",
    "TaskTypeNode",
    "ThompsonBandit",
    "ValidationError",
    "allocation_for",
    "audit_run",
    "call_audit",
    "cascade_principles",
    "check_ratchet_trace",
    "committed_iterations",
    "coverage_gap_bound",
    "curriculum_override",
    "delta_guard_decision",
    "exploit_arm",
    "extract_answer",
    "format_bundle",
    "harvest_failure",
    "harvest_success",
    "init_run",
    "latest_action_recipe",
    "learnable_frontier",
    "load_engine",
    "make_env",
    "mastery_update",
    "new_slot",
    "posterior_mean",
    "rebuild_index",
    "record_action_recipe",
    "render_skill_lattice",
    "rotation_action",
    "round_robin_select",
    "run_eval",
    "run_training",
    "select_arm",
    "selection_score",
    "simulated_backend_set",
    "stable_hash64",
    "stats_rows",
    "unit_draw",
    "update_arm",
]
