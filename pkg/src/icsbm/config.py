"""Run configuration: a YAML key/value tree with dotted-path overrides.

Grammar (all sections optional, defaults in ``DEFAULTS``)::

    seed: <int, 64-bit>
    workers: <int>
    output_dir: <path>
    law:
      offspring: binary | poisson1 | [[m, p_m], ...]
      m_max: <int>                       # truncation for poisson1
      step: simple | spread_out(L) | [[[x_1, .., x_d], D(x)], ...]
      d: <int>                           # dimension for simple / spread_out
    rpoint:  {times: [n_1, ..], kvecs: [[k_11, ..], ..]}
    mm:      {order: l, times: [..], kvecs: [[..], ..], tol: <float|null>}
    scaling: {times: [..], kvecs: [[..], ..], m_list: [..]}
    brw:     {depth: <int>, samples: <int>, population_cap: <int>}
    iibrw:   {horizon: <int>, samples: <int>, cylinder: <path|null>, n: <int>}
    op:      {d, L, p, kind, table, lam, eps, p_c, n, samples, m, k, radii, times, kvecs}
    usf:     {d, N, times, kvecs, samples, profile_to}
    invade:  {d, budget, p_c, samples, times, kvecs, profile_to}

Overrides use ``--set section.key=value`` with the value parsed as YAML.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re

import yaml

from .branching import OffspringLaw, StepLaw
from .errors import ValidationError

DEFAULTS = {
    "seed": 20240601,
    "workers": 1,
    "output_dir": "out",
    "law": {"offspring": "binary", "m_max": 30, "step": "simple", "d": 1},
    "rpoint": {"times": [5], "kvecs": [[0.0]]},
    "mm": {"order": 2, "times": [1.0, 1.0], "kvecs": [[0.0], [0.0]], "tol": None},
    "scaling": {"times": [1.0], "kvecs": [[0.0]], "m_list": [50, 100, 200]},
    "brw": {"depth": 20, "samples": 1000, "population_cap": 10**7},
    "iibrw": {"horizon": 10, "samples": 1000, "cylinder": None, "n": 10000},
    "op": {"d": 5, "L": 3, "p": 1.0, "kind": "spread_out", "table": None, "lam": None, "eps": None,
           "p_c": None, "n": 30, "samples": 10000, "m": 2, "k": 6, "radii": [2, 4, 8, 16],
           "times": [10], "kvecs": [[0.0, 0.0, 0.0, 0.0, 0.0]]},
    "usf": {"d": 5, "N": 8, "times": [2], "kvecs": [[0.0, 0.0, 0.0, 0.0, 0.0]], "samples": 10, "profile_to": 2},
    "invade": {"d": 2, "budget": 100000, "p_c": None, "samples": 1, "times": [5], "kvecs": [[0.0, 0.0]],
               "profile_to": 20},
}

_REQUIRED_TOP = ("seed",)


def _merge(base, extra, path=""):
    for k, v in extra.items():
        key = f"{path}.{k}" if path else k
        if k not in base:
            raise ValidationError("unknown key", key)
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, key)
        else:
            base[k] = v
    return base


def _line_map(text):
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    out = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for knode, vnode in node.value:
                key = f"{path}.{knode.value}" if path else str(knode.value)
                out[key] = knode.start_mark.line + 1
                walk(vnode, key)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, "")
    return out


class Config(dict):
    """Validated configuration tree; ``lines`` maps dotted keys to source lines."""

    lines: dict = {}

    def digest(self) -> str:
        return config_digest(self)

    def echo(self) -> str:
        return yaml.safe_dump(json.loads(json.dumps(self)), sort_keys=True)

    def get_path(self, dotted):
        node = self
        for part in dotted.split("."):
            node = node[part]
        return node


def config_digest(cfg) -> str:
    """sha256 of canonical JSON (sorted keys): stable under key reordering."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_override(text):
    if "=" not in text:
        raise ValidationError(f"override {text!r} must look like key.path=value", "--set")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse value {raw!r}: {exc}", key) from None
    return key.strip(), value


def apply_override(tree, key, value):
    parts = key.split(".")
    node = tree
    for i, part in enumerate(parts[:-1]):
        if part not in node or not isinstance(node[part], dict):
            raise ValidationError("unknown key", ".".join(parts[: i + 1]))
        node = node[part]
    if parts[-1] not in node:
        raise ValidationError("unknown key", key)
    node[parts[-1]] = value


def load_config(path=None, overrides=(), text=None, require=_REQUIRED_TOP, check_law=True) -> Config:
    """Parse, merge over defaults, apply overrides, validate.

    ``check_law=False`` leaves the law tables unvalidated (``verify`` reports
    them as named checks instead).
    """
    lines = {}
    user = {}
    if path is not None or text is not None:
        if text is None:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" (line {mark.line + 1})" if mark else ""
            raise ValidationError(f"YAML syntax error{where}: {exc}", "config") from None
        if not isinstance(user, dict):
            raise ValidationError("top level must be a mapping", "config")
        lines = _line_map(text)
        for key in require:
            if key not in user:
                raise ValidationError("missing required field", key)
    try:
        tree = _merge(copy.deepcopy(DEFAULTS), user)
    except ValidationError as exc:
        raise _with_line(exc, lines) from None
    for ov in overrides:
        apply_override(tree, *parse_override(ov))
    cfg = Config(tree)
    cfg.lines = lines
    try:
        validate(cfg, check_law)
    except ValidationError as exc:
        raise _with_line(exc, lines) from None
    return cfg


def _with_line(exc, lines):
    field = (exc.field or "").split(" (", 1)[0]
    line = lines.get(field)
    if line is None and field:
        line = lines.get(field.rsplit(".", 1)[0])
    if line is None:
        return exc
    out = ValidationError(f"{exc.args[0]} (line {line})")
    out.field = exc.field
    return out


def validate(cfg, check_law=True):
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ValidationError("seed must be an integer", "seed")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ValidationError("workers must be a positive integer", "workers")
    if check_law:
        build_law(cfg)
        build_step(cfg)


_SPREAD = re.compile(r"^spread_out\((\d+)\)$")


def build_law(cfg) -> OffspringLaw:
    spec = cfg["law"]["offspring"]
    try:
        if spec == "binary":
            return OffspringLaw.binary()
        if spec == "poisson1":
            return OffspringLaw.poisson1(int(cfg["law"]["m_max"]))
        if isinstance(spec, list):
            return OffspringLaw.from_pairs(spec)
    except ValidationError as exc:
        raise ValidationError(exc.args[0].split(": ", 1)[-1], f"law.offspring ({exc.field})") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed offspring table: {exc}", "law.offspring") from None
    raise ValidationError(f"unknown offspring law {spec!r}", "law.offspring")


def build_step(cfg, d=None) -> StepLaw:
    spec = cfg["law"]["step"]
    d = int(cfg["law"]["d"] if d is None else d)
    try:
        if spec == "simple":
            return StepLaw.simple(d)
        if isinstance(spec, str) and _SPREAD.match(spec):
            return StepLaw.spread_out(d, int(_SPREAD.match(spec).group(1)))
        if isinstance(spec, list):
            return StepLaw.from_pairs(spec)
    except ValidationError as exc:
        raise ValidationError(exc.args[0].split(": ", 1)[-1], "law.step") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed step table: {exc}", "law.step") from None
    raise ValidationError(f"unknown step law {spec!r}", "law.step")
