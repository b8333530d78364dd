"""On-disk layout for a single run directory.

    RUN_DIR/
      config.json        engine configuration, written once by init
      meta.json          environment name and bookkeeping
      events.log         one JSON graph event per line, append-only
      reports.jsonl      one iteration report per line
      snap-00007.json    canonical graph state at an iteration boundary
      eval-<tag>.json    frozen evaluation records

Events buffer in memory during an iteration and flush at the boundary, so
a killed process never leaves a partial iteration tail in events.log.
Replay of config + events reproduces the graph bit-exactly; resume counts
committed reports and continues from there.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterator, Mapping

from .errors import IntegrityError, ValidationError

CONFIG_NAME = "config.json"
META_NAME = "meta.json"
EVENTS_NAME = "events.log"
REPORTS_NAME = "reports.jsonl"


class RunStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._pending_events: list[dict[str, Any]] = []

    # ------------------------------------------------------------------
    # creation and loading

    def initialize(self, config: Mapping[str, Any], meta: Mapping[str, Any]) -> None:
        if self.exists():
            raise ValidationError(f"run directory already initialized: {self.root}")
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_json(self.root / CONFIG_NAME, config)
        self._write_json(self.root / META_NAME, meta)
        (self.root / EVENTS_NAME).touch()
        (self.root / REPORTS_NAME).touch()

    def exists(self) -> bool:
        return (self.root / CONFIG_NAME).is_file()

    def require(self) -> None:
        if not self.exists():
            raise ValidationError(f"not a run directory (missing {CONFIG_NAME}): {self.root}")

    def load_config(self) -> dict[str, Any]:
        self.require()
        return json.loads((self.root / CONFIG_NAME).read_text())

    def load_meta(self) -> dict[str, Any]:
        self.require()
        return json.loads((self.root / META_NAME).read_text())

    # ------------------------------------------------------------------
    # event log

    def event_sink(self, event: dict[str, Any]) -> None:
        self._pending_events.append(event)

    def flush_events(self) -> int:
        """Append buffered events and fsync; returns the number written."""
        if not self._pending_events:
            return 0
        lines = "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
            for e in self._pending_events
        )
        path = self.root / EVENTS_NAME
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(lines)
            fh.flush()
            os.fsync(fh.fileno())
        n = len(self._pending_events)
        self._pending_events.clear()
        return n

    def discard_pending(self) -> None:
        self._pending_events.clear()

    def read_events(self) -> Iterator[dict[str, Any]]:
        path = self.root / EVENTS_NAME
        if not path.is_file():
            return
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IntegrityError(
                        f"corrupt event at {EVENTS_NAME}:{lineno}: {exc}"
                    ) from exc

    # ------------------------------------------------------------------
    # iteration reports

    def append_report(self, report: Mapping[str, Any]) -> None:
        with open(self.root / REPORTS_NAME, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(report, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_reports(self) -> list[dict[str, Any]]:
        path = self.root / REPORTS_NAME
        if not path.is_file():
            return []
        reports = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    reports.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise IntegrityError(
                        f"corrupt report at {REPORTS_NAME}:{lineno}: {exc}"
                    ) from exc
        return reports

    # ------------------------------------------------------------------
    # boundary snapshots and eval records

    def snapshot_path(self, iteration: int) -> Path:
        return self.root / f"snap-{iteration:05d}.json"

    def write_snapshot(self, iteration: int, state_bytes: bytes) -> None:
        self.snapshot_path(iteration).write_bytes(state_bytes)

    def read_snapshot(self, iteration: int) -> dict[str, Any]:
        path = self.snapshot_path(iteration)
        if not path.is_file():
            raise ValidationError(f"missing snapshot {path.name}")
        return json.loads(path.read_text())

    def snapshot_iterations(self) -> list[int]:
        return sorted(
            int(p.stem.split("-", 1)[1]) for p in self.root.glob("snap-*.json")
        )

    def write_eval(self, tag: str, record: Mapping[str, Any]) -> Path:
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "-" for ch in tag)
        path = self.root / f"eval-{safe}.json"
        self._write_json(path, record)
        return path

    def read_evals(self) -> list[dict[str, Any]]:
        records = []
        for path in sorted(self.root.glob("eval-*.json")):
            records.append(json.loads(path.read_text()))
        return records

    @staticmethod
    def _write_json(path: Path, data: Mapping[str, Any]) -> None:
        path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
