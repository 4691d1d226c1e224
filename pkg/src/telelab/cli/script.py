"""Scripted command sequences: timed publishes and predicate waits.

Scripts are the reproducible stand-in for arbitrary student code: enough to
drive, position the arm, work the gripper, and gate on telemetry.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from telelab.bus.client import BusClient

OPS = ("==", "!=", ">", ">=", "<", "<=", "near")


class ScriptError(Exception):
    exit_code = 1


class ScriptTimeout(ScriptError):
    exit_code = 3


@dataclass(frozen=True)
class ScriptStep:
    at_ms: int
    publish: dict | None = None
    wait_for: dict | None = None


def _resolve(payload: dict, path: str):
    cur = payload
    for part in path.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


def compile_predicate(where: dict):
    path = where["path"]
    op = where["op"]
    if op not in OPS:
        raise ScriptError(f"unknown predicate op {op!r}")
    value = where["value"]
    tol = float(where.get("tol", 1e-6))

    def pred(payload: dict) -> bool:
        got = _resolve(payload, path)
        if op == "==":
            return got == value
        if op == "!=":
            return got != value
        if op == ">":
            return got > value
        if op == ">=":
            return got >= value
        if op == "<":
            return got < value
        if op == "<=":
            return got <= value
        # near: scalar or elementwise on equal-length lists
        if isinstance(value, list):
            return (isinstance(got, list) and len(got) == len(value)
                    and all(abs(a - b) <= tol for a, b in zip(got, value)))
        return abs(got - value) <= tol

    return pred


def load_script(path: str | Path) -> list[ScriptStep]:
    doc = json.loads(Path(path).read_text())
    steps_doc = doc.get("steps")
    if not isinstance(steps_doc, list):
        raise ScriptError("script must have a 'steps' list")
    steps: list[ScriptStep] = []
    last_at = -1
    for i, sd in enumerate(steps_doc):
        at_ms = sd.get("at_ms")
        if not isinstance(at_ms, int) or at_ms < last_at:
            raise ScriptError(f"step {i}: at_ms must be a non-decreasing integer")
        last_at = at_ms
        publish = sd.get("publish")
        wait_for = sd.get("wait_for")
        if (publish is None) == (wait_for is None):
            raise ScriptError(f"step {i}: exactly one of publish/wait_for required")
        for action in (publish, wait_for):
            if action and action.get("topic", "").startswith("/"):
                raise ScriptError(f"step {i}: topics are namespace-relative")
        if wait_for is not None:
            compile_predicate(wait_for["where"])  # fail fast on bad predicates
        steps.append(ScriptStep(at_ms=at_ms, publish=publish, wait_for=wait_for))
    return steps


def run_script(client: BusClient, steps: list[ScriptStep],
               log=lambda msg: None) -> None:
    """Execute steps against a live session; raises ScriptTimeout on a failed wait."""
    for topic in {s.wait_for["topic"] for s in steps if s.wait_for}:
        client.subscribe(topic)
    t0 = time.monotonic()
    for i, s in enumerate(steps):
        target = t0 + s.at_ms / 1000.0
        now = time.monotonic()
        if target > now:
            time.sleep(target - now)
        if s.publish is not None:
            client.publish(s.publish["topic"], s.publish["msg_type"], s.publish["payload"])
            log(f"[{i}] publish {s.publish['topic']}")
        else:
            w = s.wait_for
            timeout_s = w.get("timeout_ms", 10000) / 1000.0
            log(f"[{i}] wait_for {w['topic']} {w['where']}")
            env = client.wait_for(w["topic"] if w["topic"].startswith("/")
                                  else client.topic(w["topic"]),
                                  compile_predicate(w["where"]), timeout_s)
            if env is None:
                raise ScriptTimeout(
                    f"step {i}: no frame on {w['topic']} matched {w['where']} "
                    f"within {timeout_s:.1f}s")
