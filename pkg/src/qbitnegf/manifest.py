"""Run manifests and manifest-stamped CSV output.

Every CSV starts with one comment line carrying the manifest hash, so a file
can always be traced back to the exact configuration that produced it::

    # qbitnegf 0.1.0 manifest=3f9c... created=2026-01-01T00:00:00+00:00

The hash covers the resolved configuration, the subcommand arguments and the
code version, never the timestamp, so reruns produce identical hashes.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def format_value(v) -> str:
    """Shortest round-trip text for floats; NaN written as ``nan``."""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float) or hasattr(v, "dtype"):
        x = float(v)
        return "nan" if math.isnan(x) else repr(x)
    return str(v)


@dataclass
class RunManifest:
    config: dict
    command: str
    arguments: dict = field(default_factory=dict)
    version: str = __version__
    created: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    )
    stages: dict = field(default_factory=dict)  # stage -> wall seconds
    warnings: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    @property
    def digest(self) -> str:
        payload = json.dumps(
            {"config": self.config, "command": self.command, "arguments": self.arguments, "version": self.version},
            sort_keys=True,
            default=str,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"# qbitnegf {self.version} manifest={self.digest} created={self.created}"

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0

    def warn(self, messages):
        for m in [messages] if isinstance(messages, str) else messages:
            if m not in self.warnings:
                self.warnings.append(m)

    def write_csv(self, path, columns, rows) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.header() + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([format_value(v) for v in row])
        self.outputs.append(str(path))
        return path

    def write_self(self, path) -> Path:
        """Manifest itself as a long-form CSV (section, key, value)."""
        rows = [("run", "command", self.command), ("run", "version", self.version), ("run", "created", self.created)]
        rows += [("argument", k, json.dumps(v, default=str)) for k, v in sorted(self.arguments.items())]
        for sec, vals in self.config.items():
            rows += [(sec, k, v) for k, v in vals.items()]
        rows += [("stage_seconds", k, v) for k, v in self.stages.items()]
        rows += [("warning", str(i), w) for i, w in enumerate(self.warnings)]
        rows += [("output", str(i), o) for i, o in enumerate(self.outputs)]
        return self.write_csv(path, ("section", "key", "value"), rows)


def read_csv(path):
    """(manifest header line, column names, list of string rows)."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().rstrip("\n")
        r = csv.reader(fh)
        cols = next(r)
        return head, cols, list(r)
