"""Output writers confined to one output directory, plus the run manifest."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError

MANIFEST = "manifest.json"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


class OutputDir:
    """Collects every file written by one run; refuses paths outside ``root``."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name) -> Path:
        p = (self.root / name).resolve()
        if p != self.root and self.root not in p.parents:
            raise ValidationError(f"output {name!r} escapes the output directory", "output")
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(os.path.relpath(p, self.root))
        return p

    def json(self, name, obj, digest=None):
        body = dict(obj) if isinstance(obj, dict) else {"result": obj}
        body["manifest"] = MANIFEST
        if digest is not None:
            body["config_digest"] = digest
        self.path(name).write_text(dumps(body), encoding="utf-8")

    def jsonl(self, name, rows):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"manifest": MANIFEST}) + "\n")
            for row in rows:
                fh.write(json.dumps(_plain(row), sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# manifest: {MANIFEST}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_plain(x) for x in r])

    def edges(self, name, edges):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(f"# manifest: {MANIFEST}\n")
            for a, b in edges:
                fh.write(f"{_fmt_vertex(a)} {_fmt_vertex(b)}\n")

    def binary(self, name, data: bytes):
        self.path(name).write_bytes(data)

    def manifest(self, *, digest, seed, command, params, samples=None, started=None):
        now = time.time()
        body = {
            "config_digest": digest,
            "seed": seed,
            "version": __version__,
            "command": command,
            "parameters": params,
            "outputs": sorted(set(self.files)),
            "samples": samples,
            "started_unix": started,
            "finished_unix": now,
            "wall_clock_s": None if started is None else now - started,
            "python": platform.python_version(),
        }
        (self.root / MANIFEST).write_text(dumps(body), encoding="utf-8")
        return body


def _fmt_vertex(v):
    if isinstance(v, (tuple, list)):
        return ",".join(str(int(c)) for c in v)
    return str(v)
