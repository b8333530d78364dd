"""Run directories end to end: CLI verbs, resume, crash recovery, audit."""

import json

import pytest

from evoloop import RunStore, ValidationError, audit_run, load_engine, run_eval
from evoloop.cli import STATS_HEADER, main


def read_bytes(run_dir, name):
    return (run_dir / name).read_bytes()


def init_and_run(run_dir, iterations=4, pool=24, extra=()):
    assert main(["init", str(run_dir), "--env", "static_qa", "--pool", str(pool),
                 "--iterations", str(iterations), *extra]) == 0
    assert main(["run", str(run_dir)]) == 0
    return RunStore(run_dir)


# ----------------------------------------------------------------------
# verbs and exit codes


def test_init_writes_config_with_default_seed(tmp_path):
    run_dir = tmp_path / "r"
    assert main(["init", str(run_dir), "--env", "static_qa"]) == 0
    config = json.loads((run_dir / "config.json").read_text())
    assert config["seed"] == 42
    meta = json.loads((run_dir / "meta.json").read_text())
    assert meta["env"] == "static_qa"


def test_init_refuses_existing_run(tmp_path, capsys):
    run_dir = tmp_path / "r"
    assert main(["init", str(run_dir), "--env", "static_qa"]) == 0
    assert main(["init", str(run_dir), "--env", "static_qa"]) == 1
    assert "already initialized" in capsys.readouterr().err


def test_init_rejects_decay_at_or_above_rise(tmp_path):
    bad = tmp_path / "over.json"
    bad.write_text(json.dumps({"mastery_decay_rate": 0.7}))
    code = main(["init", str(tmp_path / "r"), "--env", "static_qa", "--config", str(bad)])
    assert code == 1


def test_usage_errors_exit_one(tmp_path):
    assert main(["init", str(tmp_path / "r")]) == 1  # missing --env
    assert main(["frobnicate", "x"]) == 1


def test_run_then_eval_then_audit_then_stats(tmp_path, capsys):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=4)
    assert len(store.read_reports()) == 4

    assert main(["eval", str(run_dir)]) == 0
    assert main(["eval", str(run_dir), "--pool", "evolution", "--no-retrieval",
                 "--tag", "trainpool"]) == 0
    assert (run_dir / "eval-trainpool.json").is_file()

    capsys.readouterr()
    assert main(["audit", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 6
    assert "audit passed" in out

    capsys.readouterr()
    assert main(["stats", str(run_dir)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == STATS_HEADER
    assert len(lines) == 5
    first = lines[1].split("\t")
    assert first[0] == "0" and first[1] == "8"


def test_stats_on_fresh_run_prints_header_only(tmp_path, capsys):
    run_dir = tmp_path / "r"
    assert main(["init", str(run_dir), "--env", "static_qa"]) == 0
    capsys.readouterr()
    assert main(["stats", str(run_dir)]) == 0
    assert capsys.readouterr().out.strip() == STATS_HEADER


def test_run_refuses_restart_without_resume(tmp_path, capsys):
    run_dir = tmp_path / "r"
    init_and_run(run_dir, iterations=2)
    assert main(["run", str(run_dir)]) == 1
    assert "--resume" in capsys.readouterr().err
    assert main(["run", str(run_dir), "--resume"]) == 0


def test_run_cannot_target_fewer_than_committed(tmp_path):
    run_dir = tmp_path / "r"
    init_and_run(run_dir, iterations=3)
    assert main(["run", str(run_dir), "--resume", "--iterations", "1"]) == 1


def test_eval_requires_training_record(tmp_path, capsys):
    run_dir = tmp_path / "r"
    assert main(["init", str(run_dir), "--env", "static_qa"]) == 0
    assert main(["eval", str(run_dir)]) == 1
    assert "run training first" in capsys.readouterr().err


def test_verbs_require_run_directory(tmp_path):
    missing = str(tmp_path / "nope")
    for verb in ("run", "eval", "audit", "stats"):
        assert main([verb, missing]) == 1


# ----------------------------------------------------------------------
# resume equivalence and crash recovery


def test_resume_reproduces_uninterrupted_run_bitwise(tmp_path):
    full_dir = tmp_path / "full"
    split_dir = tmp_path / "split"
    init_and_run(full_dir, iterations=6, pool=24)

    assert main(["init", str(split_dir), "--env", "static_qa", "--pool", "24",
                 "--iterations", "6"]) == 0
    assert main(["run", str(split_dir), "--iterations", "3"]) == 0
    assert main(["run", str(split_dir), "--resume"]) == 0

    for name in ("events.log", "reports.jsonl"):
        assert read_bytes(full_dir, name) == read_bytes(split_dir, name)
    full_snaps = sorted(p.name for p in full_dir.glob("snap-*.json"))
    assert full_snaps == sorted(p.name for p in split_dir.glob("snap-*.json"))
    for name in full_snaps:
        assert read_bytes(full_dir, name) == read_bytes(split_dir, name)


def test_uncommitted_event_tail_is_truncated_on_load(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=3)
    original = read_bytes(run_dir, "events.log")
    events = list(store.read_events())
    fake = {
        "seq": events[-1]["seq"] + 1,
        "iter": 3,
        "op": "add_skill",
        "payload": {"id": 99999, "name": "ghost", "mastery": 0.0,
                    "prompt_template": "{question}", "strategy": "direct"},
    }
    with open(run_dir / "events.log", "a") as fh:
        fh.write(json.dumps(fake, sort_keys=True, separators=(",", ":")) + "\n")
    assert read_bytes(run_dir, "events.log") != original

    engine = load_engine(RunStore(run_dir))
    assert read_bytes(run_dir, "events.log") == original
    assert "ghost" not in {s.name for s in engine.graph.skills.values()}


def test_missing_boundary_snapshot_is_rebuilt(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=3)
    snap_path = store.snapshot_path(2)
    original = snap_path.read_bytes()
    snap_path.unlink()
    load_engine(RunStore(run_dir))
    assert snap_path.read_bytes() == original


def test_resume_after_eval_records_exist(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=2)
    run_eval(store, pool="held_out")
    assert main(["run", str(run_dir), "--resume", "--iterations", "4"]) == 0
    assert len(RunStore(run_dir).read_reports()) == 4


# ----------------------------------------------------------------------
# fault injection: every audit check can actually fail


def append_event(run_dir, event):
    with open(run_dir / "events.log", "a") as fh:
        fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")


def test_injected_protected_deletion_fails_audit(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=3)
    events = list(store.read_events())
    protected_id = next(
        e["payload"]["id"]
        for e in events
        if e["op"] == "append_experience"
        and e["payload"]["outcome"] == "success_memory"
    )
    # iter beyond the last boundary so only the conservation check trips
    append_event(run_dir, {
        "seq": events[-1]["seq"] + 1,
        "iter": 99,
        "op": "prune",
        "payload": {"threshold": None, "removed_ids": [protected_id]},
    })
    result = audit_run(RunStore(run_dir))
    by_name = {c.name: c for c in result.checks}
    assert not by_name["protected_conservation"].passed
    assert str(protected_id) in by_name["protected_conservation"].detail
    assert by_name["mastery_ratchet"].passed
    assert main(["audit", str(run_dir)]) == 2


def test_edited_mastery_jump_fails_audit(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=3)
    reports = store.read_reports()
    last = reports[-1]
    sid = next(
        sid for sid, m in last["masteries_post"].items() if m > 0.2
    )
    last["masteries_post"][sid] = last["masteries_post"][sid] * 0.5
    (run_dir / "reports.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in reports)
    )
    result = audit_run(RunStore(run_dir))
    by_name = {c.name: c for c in result.checks}
    assert not by_name["mastery_ratchet"].passed
    assert f"skill {sid}" in by_name["mastery_ratchet"].detail
    assert main(["audit", str(run_dir)]) == 2


def test_inference_guidance_calls_fail_audit(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=2)
    store.write_eval("tainted", {
        "pool": "held_out",
        "calls": {"infer/navigator/guidance": 3, "infer/learner/execution": 10},
    })
    result = audit_run(RunStore(run_dir))
    by_name = {c.name: c for c in result.checks}
    assert not by_name["tier_separation"].passed
    assert "3 guidance calls during inference" in by_name["tier_separation"].detail
    assert main(["audit", str(run_dir)]) == 2


def test_corrupt_event_line_is_an_integrity_failure(tmp_path, capsys):
    run_dir = tmp_path / "r"
    init_and_run(run_dir, iterations=2)
    with open(run_dir / "events.log", "a") as fh:
        fh.write("{not json\n")
    lineno = sum(1 for _ in open(run_dir / "events.log"))

    result = audit_run(RunStore(run_dir))
    assert not result.passed
    assert f"corrupt event at events.log:{lineno}" in result.checks[0].detail
    assert main(["audit", str(run_dir)]) == 2

    # the engine loader refuses the directory outright
    with pytest.raises(Exception) as excinfo:
        load_engine(RunStore(run_dir))
    assert "corrupt event" in str(excinfo.value)


def test_tampered_boundary_snapshot_fails_replay_check(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=3)
    snap_path = store.snapshot_path(1)
    state = json.loads(snap_path.read_text())
    state["next_id"] = state["next_id"] + 1
    snap_path.write_text(json.dumps(state, sort_keys=True, separators=(",", ":")))
    result = audit_run(RunStore(run_dir))
    by_name = {c.name: c for c in result.checks}
    assert not by_name["log_replay"].passed
    assert "snapshot 1" in by_name["log_replay"].detail


def test_bandit_event_on_unknown_context_fails_cleanly(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=2)
    events = list(store.read_events())
    append_event(run_dir, {
        "seq": events[-1]["seq"] + 1,
        "iter": 99,
        "op": "bandit_draw",
        "payload": {"context_id": "rogue/1", "arm_id": "base"},
    })
    # the audit reports failures instead of crashing on the bad log
    result = audit_run(RunStore(run_dir))
    by_name = {c.name: c for c in result.checks}
    assert not by_name["bandit_consistency"].passed
    assert not by_name["log_replay"].passed
    assert main(["audit", str(run_dir)]) == 2


# ----------------------------------------------------------------------
# direct runner API


def test_run_eval_guards_against_mutation(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=2)
    record = run_eval(store, pool="held_out", retrieval=True, tag="t1")
    assert record["committed_iterations"] == 2
    stored = json.loads((run_dir / "eval-t1.json").read_text())
    assert stored["accuracy"] == record["accuracy"]


def test_init_run_rejects_bad_config_object(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text("[1, 2]")
    assert main(["init", str(tmp_path / "r"), "--env", "static_qa",
                 "--config", str(bad)]) == 1


def test_eval_tag_is_sanitized(tmp_path):
    run_dir = tmp_path / "r"
    store = init_and_run(run_dir, iterations=2)
    run_eval(store, tag="weird/tag name")
    assert (run_dir / "eval-weird-tag-name.json").is_file()
