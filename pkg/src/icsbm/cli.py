"""Batch command-line entry point.

Usage: ``icsbm [--config FILE] [--set key.path=value ...] [--seed S] [--out DIR]
[--workers W] <command> <action> [flags]``.  Action flags are shorthands for
``--set`` on the matching config key, so the manifest and config digest always
describe the full run.

Exit codes: 0 success, 2 invalid input or config, 3 runtime failure
(resource caps, quadrature, guards), 4 a statistical test failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from .branching import enumerate_embedded_trees, sample_embedded_tree, survival_probability
from .config import build_law, build_step, load_config
from .errors import (EnumerationBoundError, GuardError, QuadratureError, ResourceLimitError, ValidationError,
                     ZeroEffectiveSampleError)
from .iibrw import CylinderEvent, finite_n_Q, iibrw_probability, sample_iibrw, sample_iibrw_spatial
from .io import OutputDir
from .lattice import WiredBox, invade, invasion_rpoint, shortest_path_distances, usf_rpoint, wilson_wired
from .moments import ScalingConstants, rho_fourier, scaling_gap, tau_fourier
from .oriented import (OPConfig, default_cylinder_statistics, disjoint_survival, encode_bond_record, estimate_pc,
                       estimate_rpoint_op, estimate_theta, iic_ball_mass, iic_compare, iic_estimate, sample_cluster,
                       susceptibility)
from .rng import stream
from .sbm import icsbm_moment, sbm_moment

log = logging.getLogger("icsbm")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_STATISTICAL = 0, 2, 3, 4

RUNTIME_ERRORS = (ResourceLimitError, EnumerationBoundError, QuadratureError, GuardError, ZeroEffectiveSampleError)


class StatisticalFailure(Exception):
    pass


# action -> {flag: (dotted config key, type)}
FLAGS = {
    ("brw", "sample"): {"depth": ("brw.depth", int), "samples": ("brw.samples", int)},
    ("brw", "survival"): {"depth": ("brw.depth", int)},
    ("brw", "enumerate"): {"depth": ("brw.depth", int)},
    ("iibrw", "exact"): {"cylinder": ("iibrw.cylinder", str), "n": ("iibrw.n", int)},
    ("iibrw", "sample"): {"horizon": ("iibrw.horizon", int), "samples": ("iibrw.samples", int)},
    ("rpoint", "tau"): {"times": ("rpoint.times", "yaml"), "kvecs": ("rpoint.kvecs", "yaml")},
    ("rpoint", "rho"): {"times": ("rpoint.times", "yaml"), "kvecs": ("rpoint.kvecs", "yaml")},
    ("mm", "sbm"): {"order": ("mm.order", int), "times": ("mm.times", "yaml"), "kvecs": ("mm.kvecs", "yaml"),
                    "tol": ("mm.tol", float)},
    ("mm", "icsbm"): {"order": ("mm.order", int), "times": ("mm.times", "yaml"), "kvecs": ("mm.kvecs", "yaml"),
                      "tol": ("mm.tol", float)},
    ("scaling", "gap"): {"times": ("scaling.times", "yaml"), "kvecs": ("scaling.kvecs", "yaml"),
                         "m-list": ("scaling.m_list", "yaml")},
    ("op", "theta"): {"n": ("op.n", int), "samples": ("op.samples", int), "p": ("op.p", float)},
    ("op", "iic"): {"n": ("op.n", int), "samples": ("op.samples", int), "p": ("op.p", float)},
    ("op", "rpoint"): {"times": ("op.times", "yaml"), "kvecs": ("op.kvecs", "yaml"), "samples": ("op.samples", int),
                       "p": ("op.p", float)},
    ("op", "mass"): {"radii": ("op.radii", "yaml"), "n": ("op.n", int), "samples": ("op.samples", int),
                     "p": ("op.p", float)},
    ("op", "disjoint"): {"m": ("op.m", int), "k": ("op.k", int), "n": ("op.n", int), "samples": ("op.samples", int),
                         "p": ("op.p", float)},
    ("op", "chi"): {"samples": ("op.samples", int), "p": ("op.p", float)},
    ("op", "pc"): {"n": ("op.n", int), "samples": ("op.samples", int)},
    ("op", "sample"): {"n": ("op.n", int), "p": ("op.p", float)},
    ("usf", "sample"): {"d": ("usf.d", int), "N": ("usf.N", int)},
    ("usf", "rpoint"): {"d": ("usf.d", int), "N": ("usf.N", int), "times": ("usf.times", "yaml"),
                        "kvecs": ("usf.kvecs", "yaml"), "samples": ("usf.samples", int)},
    ("invade", "run"): {"budget": ("invade.budget", int), "p-c": ("invade.p_c", float)},
    ("invade", "weights"): {"budget": ("invade.budget", int), "p-c": ("invade.p_c", float)},
    ("invade", "rpoint"): {"budget": ("invade.budget", int), "times": ("invade.times", "yaml"),
                           "kvecs": ("invade.kvecs", "yaml"), "samples": ("invade.samples", int),
                           "p-c": ("invade.p_c", float)},
}
EXTRA = {
    ("iibrw", "sample"): [("--spatial", {"action": "store_true", "help": "emit site populations instead of trees"})],
    ("op", "iic"): [("--mode", {"choices": ["size-biased", "conditioned", "both"], "default": "both"})],
}


def _add_globals(p, suppress):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p.add_argument("--config", help="YAML config file", **kw)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", dest="overrides",
                   help="override a dotted config key (repeatable)", **kw)
    p.add_argument("--seed", type=int, help="master seed", **kw)
    p.add_argument("--out", help="output directory", **kw)
    p.add_argument("--workers", type=int, help="worker processes", **kw)
    p.add_argument("-v", "--verbose", action="store_true", **kw)


def build_parser():
    p = argparse.ArgumentParser(prog="icsbm", description="Critical branching, IIC and moment-measure toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    _add_globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    commands = {}
    for (cmd, action) in FLAGS:
        commands.setdefault(cmd, []).append(action)
    commands["verify"] = []
    for cmd in ["brw", "iibrw", "rpoint", "mm", "scaling", "op", "usf", "invade", "verify"]:
        cp = sub.add_parser(cmd)
        if cmd == "verify":
            _add_globals(cp, suppress=True)
            cp.add_argument("suite", choices=["exact", "statistical-fast", "statistical-full"])
            cp.add_argument("--only", type=int, action="append", help="run only these criterion ids")
            continue
        asub = cp.add_subparsers(dest="action", required=True)
        for action in commands[cmd]:
            ap = asub.add_parser(action)
            _add_globals(ap, suppress=True)
            for flag, (key, typ) in FLAGS[(cmd, action)].items():
                ap.add_argument(f"--{flag}", dest=f"flag_{flag.replace('-', '_')}",
                                type=str if typ == "yaml" else typ, help=f"sets {key}")
            for name, kw in EXTRA.get((cmd, action), []):
                ap.add_argument(name, **kw)
    return p


def _overrides(args):
    ov = list(getattr(args, "overrides", None) or [])
    if getattr(args, "seed", None) is not None:
        ov.append(f"seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        ov.append(f"workers={args.workers}")
    if getattr(args, "out", None) is not None:
        ov.append(f"output_dir={json.dumps(args.out)}")
    for flag, (key, typ) in FLAGS.get((args.command, getattr(args, "action", None)), {}).items():
        v = getattr(args, f"flag_{flag.replace('-', '_')}", None)
        if v is not None:
            ov.append(f"{key}={v if typ == 'yaml' else json.dumps(v)}")
    return ov


def _op_config(cfg):
    o = cfg["op"]
    return OPConfig(d=int(o["d"]), L=int(o["L"]), p=float(o["p"]), kind=o["kind"], table=o["table"], lam=o["lam"],
                    eps=o["eps"], p_c=o["p_c"])


def _kv(x):
    return [list(np.atleast_1d(np.asarray(k, float))) for k in x]


# ---------------------------------------------------------------------------
# Handlers: each writes its outputs and returns (summary, sample count)
# ---------------------------------------------------------------------------


def h_brw(args, cfg, out):
    law, step = build_law(cfg), build_step(cfg)
    b = cfg["brw"]
    depth = int(b["depth"])
    if args.action == "sample":
        rows = []
        for i in range(int(b["samples"])):
            et = sample_embedded_tree(law, step, depth, stream(cfg["seed"], "cli.brw", i), b["population_cap"])
            rows.append({"i": i, "generation_sizes": et.tree.generation_sizes(depth), "tree": et.to_json()})
        out.jsonl("brw_samples.jsonl", rows)
        return {"samples": len(rows)}, len(rows)
    if args.action == "survival":
        c = survival_probability(law, depth)
        out.csv("survival.csv", ["n", "theta_n", "n_theta_n"],
                [(n, float(c[n]), float(n * c[n])) for n in range(depth + 1)])
        res = {"n": depth, "theta_n": float(c[depth]), "n_theta_n": float(depth * c[depth]),
               "limit": 2 / law.sigma_p_sq}
        out.json("survival.json", res, cfg.digest())
        return res, None
    trees = enumerate_embedded_trees(law, step, depth)
    out.jsonl("enumeration.jsonl", ({"probability": p, "tree": et.to_json()} for et, p in trees))
    res = {"depth": depth, "count": len(trees), "total_probability": float(sum(p for _, p in trees))}
    out.json("enumeration.json", res, cfg.digest())
    return res, None


def h_iibrw(args, cfg, out):
    law, step = build_law(cfg), build_step(cfg)
    c = cfg["iibrw"]
    if args.action == "exact":
        if not c["cylinder"]:
            raise ValidationError("missing required field", "iibrw.cylinder")
        try:
            with open(c["cylinder"], encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read cylinder: {exc}", "iibrw.cylinder") from None
        C = CylinderEvent.from_json(obj)
        C.prefix.validate_steps(step)
        n = int(c["n"])
        res = {"m": C.m, "N_m": C.N_m, "P_inf": iibrw_probability(law, step, C), "n": n,
               "Q_n": finite_n_Q(law, step, C, n)}
        out.json("iibrw_exact.json", res, cfg.digest())
        return res, None
    H, S = int(c["horizon"]), int(c["samples"])
    rows = []
    for i in range(S):
        rng = stream(cfg["seed"], "cli.iibrw", i)
        if args.spatial:
            pops = sample_iibrw_spatial(law, step, H, rng)
            rows.append({"i": i, "populations": [[[list(x), n] for x, n in sorted(g.items())] for g in pops]})
        else:
            et = sample_iibrw(law, step, H, rng)
            rows.append({"i": i, "generation_sizes": et.tree.generation_sizes(H), "tree": et.to_json()})
    out.jsonl("iibrw_samples.jsonl", rows)
    return {"samples": S, "horizon": H}, S


def h_rpoint(args, cfg, out):
    law, step = build_law(cfg), build_step(cfg)
    q = cfg["rpoint"]
    fn = tau_fourier if args.action == "tau" else rho_fourier
    v = fn(law, step, q["times"], q["kvecs"])
    res = dict(v.to_json(), times=q["times"], kvecs=_kv(q["kvecs"]), r=len(q["times"]) + 1)
    out.json(f"rpoint_{args.action}.json", res, cfg.digest())
    return res, None


def h_mm(args, cfg, out):
    q = cfg["mm"]
    fn = sbm_moment if args.action == "sbm" else icsbm_moment
    v = fn(int(q["order"]), q["times"], q["kvecs"], q["tol"])
    res = dict(v.to_json(), order=q["order"], times=q["times"], kvecs=_kv(q["kvecs"]))
    out.json(f"mm_{args.action}.json", res, cfg.digest())
    return res, None


def h_scaling(args, cfg, out):
    law, step = build_law(cfg), build_step(cfg)
    q = cfg["scaling"]
    consts = ScalingConstants.brw(law)
    lim = icsbm_moment(len(q["times"]), q["times"], q["kvecs"])
    cache = {}
    rows = [(int(m), scaling_gap(law, step, consts, q["times"], q["kvecs"], int(m), cache=cache, limit=lim))
            for m in q["m_list"]]
    out.csv("scaling_gap.csv", ["m", "gap"], rows)
    res = {"limit": lim.to_json(), "gaps": {m: g for m, g in rows}}
    out.json("scaling_gap.json", res, cfg.digest())
    return res, None


def h_op(args, cfg, out):
    o = cfg["op"]
    opc = _op_config(cfg)
    seed, W = cfg["seed"], cfg["workers"]
    n, S = int(o["n"]), int(o["samples"])
    a = args.action
    if a == "theta":
        c = estimate_theta(opc, n, S, seed, W)
        out.csv("op_theta.csv", ["k", "theta", "se", "k_theta"], [list(r.values()) for r in c.to_rows()])
        res = {"n": n, "samples": S, "plateau_drift": c.plateau_drift(n // 3, n), "n_theta_n": float(c.scaled[n])}
        out.json("op_theta.json", res, cfg.digest())
        return res, S
    if a == "iic":
        stats = default_cylinder_statistics()
        if args.mode == "both":
            res = {"comparisons": [c.to_json() for c in iic_compare(opc, stats, n, S, seed, W)]}
        else:
            res = {"mode": args.mode, "estimates": {k: iic_estimate(opc, f, n, args.mode, S, seed, W).to_json()
                                                    for k, f in stats.items()}}
        res["n"] = n
        out.json("op_iic.json", res, cfg.digest())
        return res, S
    if a == "rpoint":
        r = estimate_rpoint_op(opc, o["times"], o["kvecs"], S, seed, workers=W)
        res = dict(r.to_json(), times=o["times"], kvecs=_kv(o["kvecs"]))
        out.json("op_rpoint.json", res, cfg.digest())
        return res, S
    if a == "mass":
        r = iic_ball_mass(opc, o["radii"], n, S, seed, W)
        out.csv("op_mass.csv", ["R", "mass", "se"], [(R, e.value, e.se) for R, e in zip(r.radii, r.estimates)])
        res = r.to_json()
        out.json("op_mass.json", res, cfg.digest())
        return res, S
    if a == "disjoint":
        e = disjoint_survival(opc, int(o["m"]), int(o["k"]), n, S, seed)
        res = dict(e.to_json(), m=o["m"], k=o["k"], n=n)
        out.json("op_disjoint.json", res, cfg.digest())
        return res, S
    if a == "chi":
        e = susceptibility(opc, S, seed)
        res = e.to_json()
        out.json("op_chi.json", res, cfg.digest())
        return res, S
    if a == "pc":
        p, hist = estimate_pc(opc, n, S, seed, workers=W)
        res = {"p_hat": p, "history": [{"p": q, "drift": d} for q, d in hist], "n": n}
        out.json("op_pc.json", res, cfg.digest())
        return res, S * len(hist)
    c = sample_cluster(opc, n, seed, record_bonds=True)
    out.binary("op_cluster.opbr", encode_bond_record(c))
    res = {"n": n, "generation_sizes": [int(g.shape[0]) for g in c.generations], "bond_record": "op_cluster.opbr"}
    out.json("op_cluster.json", res, cfg.digest())
    return res, 1


def h_usf(args, cfg, out):
    u = cfg["usf"]
    d, N = int(u["d"]), int(u["N"])
    if args.action == "sample":
        box = WiredBox.centered(d, N)
        f = wilson_wired(box, stream(cfg["seed"], "cli.usf"))
        edges = []
        for v in range(box.n_vertices):
            p = f.parent(v)
            edges.append((tuple(box.coords(v)), "w" if p == box.root else tuple(box.coords(p))))
        out.edges("usf_forest.edges", edges)
        shells = f.component_shells(int(u["profile_to"]))
        res = {"d": d, "N": N, "vertices": box.n_vertices, "shell_profile": [len(s) for s in shells]}
        out.json("usf_sample.json", res, cfg.digest())
        return res, 1
    r = usf_rpoint(d, N, u["times"], u["kvecs"], int(u["samples"]), cfg["seed"], u["profile_to"])
    res = r.to_json()
    out.json("usf_rpoint.json", res, cfg.digest())
    return res, int(u["samples"])


def h_invade(args, cfg, out):
    v = cfg["invade"]
    d, B, pc = int(v["d"]), int(v["budget"]), v["p_c"]
    if args.action == "rpoint":
        r = invasion_rpoint(d, B, v["times"], v["kvecs"], int(v["samples"]), cfg["seed"], v["profile_to"], pc)
        res = r.to_json()
        out.json("invade_rpoint.json", res, cfg.digest())
        return res, int(v["samples"])
    st = invade(d, B, stream(cfg["seed"], "cli.invade"), p_c=pc)
    if args.action == "weights":
        out.csv("invade_weights.csv", ["i", "weight", "raw_weight"],
                [(i, w, r) for i, (w, r) in enumerate(zip(st.weights, st.raw_weights))])
    else:
        out.edges("invaded.edges", st.bonds)
    dist = shortest_path_distances(st.bonds, (0,) * d)
    w = np.asarray(st.weights, float)
    fin = w[np.isfinite(w)]
    res = {"bonds": len(st.bonds), "vertices": len(st.vertices), "max_sp_distance": max(dist.values()),
           "second_half_max": float(fin[len(w) // 2:].max()) if fin.size else None,
           "uniform_picks": st.uniform_picks, "p_c": pc}
    out.json(f"invade_{args.action}.json", res, cfg.digest())
    return res, 1


def h_verify(args, cfg, out):
    from .verify import run_suite, summary_lines

    rep = run_suite(args.suite, cfg["seed"], cfg["workers"], cfg["law"]["offspring"], set(args.only) if args.only else None)
    timings = {"total_s": rep.pop("seconds")}
    for c in rep["criteria"]:
        timings[str(c["id"])] = c.pop("seconds")
    out.json(f"verify_{args.suite}.json", rep, cfg.digest())
    for line in summary_lines(rep):
        print(line)
    return {"passed": rep["passed"], "timings": timings}, None


HANDLERS = {"brw": h_brw, "iibrw": h_iibrw, "rpoint": h_rpoint, "mm": h_mm, "scaling": h_scaling, "op": h_op,
            "usf": h_usf, "invade": h_invade, "verify": h_verify}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = load_config(getattr(args, "config", None), _overrides(args), check_law=args.command != "verify")
        out = OutputDir(cfg["output_dir"])
        summary, samples = HANDLERS[args.command](args, cfg, out)
        command = " ".join(x for x in (args.command, getattr(args, "action", None) or getattr(args, "suite", "")) if x)
        out.manifest(digest=cfg.digest(), seed=cfg["seed"], command=command, params=dict(cfg), samples=samples,
                     started=started)
        if summary.get("passed") is False:
            raise StatisticalFailure(f"suite {args.suite} failed")
        if args.command != "verify":
            print(json.dumps(summary, sort_keys=True, default=str))
    except ValidationError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RUNTIME_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except StatisticalFailure as exc:
        print(f"statistical failure: {exc}", file=sys.stderr)
        return EXIT_STATISTICAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
