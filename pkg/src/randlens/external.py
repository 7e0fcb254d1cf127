"""Adapter that runs a user command once per run.

Protocol (UTF-8, one JSON document per line):

* stdin receives ``{"experiment_id", "assignment": {factor: index},
  "seeds": {"factors": {factor: seed}, "master": seed}, "config": {...}}``;
* the command prints ``{"metric": <float>}`` as its last non-empty stdout
  line and exits 0.

Any other outcome, such as a timeout or unparsable output, is an
AdapterError, which the executor records as a failed run.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from typing import Any, Mapping, Sequence

from .errors import AdapterError, ConfigError
from .executor import ExperimentAdapter, SeedBundle
from .factor_space import Assignment

DEFAULT_TIMEOUT_S = 300.0


class ExternalCommandAdapter(ExperimentAdapter):
    thread_safe = True  # one subprocess per call

    def __init__(
        self,
        command: str | Sequence[str],
        *,
        experiment_id: str = "external",
        timeout: float = DEFAULT_TIMEOUT_S,
        config: Mapping[str, Any] | None = None,
        metric_name: str = "metric",
    ):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not argv:
            raise ConfigError("external adapter needs a command")
        if timeout <= 0:
            raise ConfigError("external adapter timeout must be positive")
        self.argv = argv
        self.experiment_id = experiment_id
        self.timeout = timeout
        self.metric_name = metric_name
        self._config = dict(config or {})

    @property
    def config(self) -> Mapping[str, Any]:
        return {"command": self.argv, "timeout": self.timeout, **self._config}

    def request(self, assignment: Assignment, seeds: SeedBundle) -> str:
        doc = {
            "experiment_id": self.experiment_id,
            "assignment": assignment.as_dict(),
            "seeds": seeds.to_json(),
            "config": self._config,
        }
        return json.dumps(doc, sort_keys=True) + "\n"

    def evaluate(self, assignment: Assignment, seeds: SeedBundle) -> float:
        try:
            proc = subprocess.run(
                self.argv,
                input=self.request(assignment, seeds),
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"command timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise AdapterError(f"cannot run {self.argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            raise AdapterError(f"command exited with status {proc.returncode}: {tail[0]}")
        lines = [line for line in proc.stdout.splitlines() if line.strip()]
        if not lines:
            raise AdapterError("command printed no result")
        try:
            doc = json.loads(lines[-1])
            return float(doc["metric"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise AdapterError(f"invalid result line {lines[-1][:200]!r}") from exc
