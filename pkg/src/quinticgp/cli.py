"""Command-line entry point.

Exit codes: 0 success, 1 an asserted invariant failed, 2 usage or config
error, 3 a resource cap was hit.  Thread count for FFTs comes from the
QUINTICGP_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import records as rec
from .collision import CapExceededError, CollisionMap, class_bound, count_maps, enumerate_maps
from .collision import partition_classes, reduce_to_echelon

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3

ESTIMATE_NAMES = ("gp-h1", "gp-hm1", "hartree-h1", "hartree-hm1", "split", "beckner", "final", "induction")


class UsageError(Exception):
    pass


class CapError(Exception):
    pass


# --- plumbing ---------------------------------------------------------------------------


def _targets(text: str):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad target list {text!r}") from exc


def _ints(text: str):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _config(args, keys, defaults=None):
    file_values = rec.load_config(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if "." in k}
    out = rec.resolve(keys, {**(defaults or {}), **file_values}, flags)
    return out


def _emit(text: str, path: str):
    if path:
        rec.write_text(path, text)
    else:
        sys.stdout.write(text)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _finish(command, cfg, seed, records, ok: bool, path: str) -> int:
    records = list(records) + [{"status": _status(ok)}]
    _emit(rec.render_report(command, cfg, seed, records), path)
    return EXIT_OK if ok else EXIT_INVARIANT


def _add(p, *names):
    table = {
        "k": ("--k", "combinatorics.k"), "n": ("--n", "combinatorics.n"), "cap": ("--cap", "combinatorics.cap"),
        "d": ("--d", "grid.d"), "N": ("--N", "grid.N"), "L": ("--L", "grid.L"),
        "T": ("--T", "time.T"), "dt": ("--dt", "time.dt"), "order": ("--order", "time.order"),
        "nodes": ("--nodes", "time.nodes"),
        "trials": ("--trials", "ensemble.trials"), "seed": ("--seed", "ensemble.seed"),
        "ensemble": ("--ensemble", "ensemble.kind"),
        "potential": ("--potential", "potential.kind"), "lambda": ("--lambda", "potential.lambda"),
        "width": ("--width", "potential.width"), "eps": ("--eps", "potential.eps"),
        "out": ("--out", "output.out"), "csv": ("--csv", "output.csv"), "plots": ("--plots", "output.plots"),
    }
    for name in names:
        flag, dest = table[name]
        p.add_argument(flag, dest=dest, default=None)


def _keys(*names):
    m = {"k": "combinatorics.k", "n": "combinatorics.n", "cap": "combinatorics.cap", "d": "grid.d",
         "N": "grid.N", "L": "grid.L", "T": "time.T", "dt": "time.dt", "order": "time.order",
         "nodes": "time.nodes", "trials": "ensemble.trials", "seed": "ensemble.seed",
         "ensemble": "ensemble.kind", "potential": "potential.kind", "lambda": "potential.lambda",
         "width": "potential.width", "eps": "potential.eps", "out": "output.out", "csv": "output.csv",
         "plots": "output.plots"}
    return [m[n] for n in names]


# --- maps / trees / fields ------------------------------------------------------------------


def cmd_maps_enumerate(args) -> int:
    cfg = _config(args, _keys("k", "n", "cap", "out"))
    k, n, cap = cfg["combinatorics.k"], cfg["combinatorics.n"], cfg["combinatorics.cap"]
    if k < 1 or n < 1:
        raise UsageError("need k >= 1 and n >= 1")
    if count_maps(k, n) > cap:
        raise CapError(f"|M_{{{k},{n}}}| = {count_maps(k, n)} exceeds cap {cap}")
    cfg["classes"] = bool(args.classes)
    if not args.classes:
        maps = enumerate_maps(k, n, cap)
        body = "".join(f"{m}\n" for m in maps)
        ok = len(maps) == count_maps(k, n)
        text = rec.format_header("maps enumerate", cfg) + body
        text += f"# map_count = {len(maps)}\n# status = {_status(ok)}\n"
        _emit(text, cfg["output.out"])
        return EXIT_OK if ok else EXIT_INVARIANT
    classes = partition_classes(k, n, cap)
    records = [
        {"representative": str(c.representative), "member_count": len(c),
         "members": " ".join(str(m) for m in c.members)}
        for c in classes
    ]
    total = sum(len(c) for c in classes)
    bound = class_bound(k, n)
    ok = len(classes) <= bound and total == count_maps(k, n)
    records.append({"map_count": total, "class_count": len(classes), "class_bound": bound})
    return _finish("maps enumerate --classes", cfg, None, records, ok, cfg["output.out"])


def cmd_maps_reduce(args) -> int:
    cfg = _config(args, _keys("k", "out"))
    cmap = CollisionMap(cfg["combinatorics.k"], len(_targets(args.targets)), _targets(args.targets))
    rep, trace = reduce_to_echelon(cmap)
    cfg["targets"] = str(cmap)
    r = {"input": str(cmap), "representative": str(rep), "moves": " ".join(map(str, trace.moves)) or "none",
         "time_row": " ".join(map(str, trace.time_row)) or "none"}
    return _finish("maps reduce", cfg, None, [r], rep.is_echelon(), cfg["output.out"])


def cmd_trees_build(args) -> int:
    from .trees import build_forest, forest_summary, to_dot

    cfg = _config(args, _keys("k", "out"))
    tg = _targets(args.targets)
    if args.n is not None and int(args.n) != len(tg):
        raise UsageError(f"--n {args.n} does not match {len(tg)} targets")
    cmap = CollisionMap(cfg["combinatorics.k"], len(tg), tg)
    forest = build_forest(cmap)
    cfg["targets"] = str(cmap)
    if args.dot:
        rec.write_text(args.dot, to_dot(forest))
    rows = forest_summary(forest)
    ok = sum(r["internal_count"] for r in rows) == cmap.n and sum(t.distinguished for t in forest.trees) == 1
    rows.append({"distinguished_tree": f"tau_{forest.distinguished_index}"})
    return _finish("trees build", cfg, None, rows, ok, cfg["output.out"])


def cmd_fields_make(args) -> int:
    from .fields import gaussian, plane_wave, write_field

    cfg = _config(args, _keys("d", "N", "L", "width"), {"grid.N": 32})
    d, N, L = cfg["grid.d"], cfg["grid.N"], cfg["grid.L"]
    if d not in (1, 3):
        raise UsageError("d must be 1 or 3")
    if args.profile == "gaussian":
        f = gaussian(d, N, L, width=cfg["potential.width"], normalize=args.normalize)
    else:
        mode = _ints(args.mode) if args.mode else (1,) * d
        if len(mode) != d:
            raise UsageError(f"--mode needs {d} integers")
        f = plane_wave(d, N, L, mode)
    write_field(args.path, f)
    cfg.update({"profile": args.profile, "path": args.path})
    r = {"dim": d, "N": N, "L": L, "l2_norm": f.l2_norm(), "spectral_l2_norm": f.spectral_l2_norm()}
    ok = abs(r["l2_norm"] - r["spectral_l2_norm"]) <= 1e-12 * max(r["l2_norm"], 1e-300)
    sys.stdout.write(rec.render_report("fields make", cfg, None, [r, {"status": _status(ok)}]))
    return EXIT_OK if ok else EXIT_INVARIANT


# --- verify ------------------------------------------------------------------------------


def _ensemble(cfg, arity):
    from .estimates import mode_ensemble, packet_ensemble

    trials, seed, N = cfg["ensemble.trials"], cfg["ensemble.seed"], cfg["grid.N"]
    if cfg["ensemble.kind"] == "modes":
        return mode_ensemble(seed, trials, arity, N // 4)
    if cfg["ensemble.kind"] == "packets":
        return packet_ensemble(seed, trials, arity)
    raise UsageError(f"unknown ensemble kind {cfg['ensemble.kind']!r}")


def _potential_factory(cfg, default_kind):
    from .estimates import default_potential

    kind = cfg["potential.kind"] if cfg["potential.kind"] else default_kind
    if kind not in ("delta", "separable"):
        raise UsageError(f"unknown potential {kind!r}")
    return default_potential(kind, cfg["potential.width"], cfg["potential.lambda"])


def run_estimate(name: str, cfg: dict, C=None, alpha: int = 1, targets=(1, 2, 4, 4), k: int = 2,
                 cube_order: int = 2, beckner=(1.0, 2.0, 4.0, 4.0)):
    """Run one named estimate; returns a list of EstimateReport."""
    from . import estimates as est

    N, L, T = cfg["grid.N"], cfg["grid.L"], cfg["time.T"]
    nodes, eps = cfg["time.nodes"], cfg["potential.eps"]
    Ns = (N, 2 * N)
    if name in ("gp-h1", "gp-hm1"):
        reps = est.check_gp_multilinear(Ns=Ns, T=T, L=L, nodes=nodes, ensemble=_ensemble(cfg, 5))
        return [reps[name]]
    if name in ("hartree-h1", "hartree-hm1"):
        Vf = _potential_factory(cfg, "separable")
        reps = est.check_hartree_multilinear(Vf, eps, Ns=Ns, T=T, L=L, nodes=nodes, ensemble=_ensemble(cfg, 5))
        return [r for key, r in reps.items() if key.startswith(name)]
    if name == "split":
        return [est.check_negative_sobolev_product(Ns=Ns, L=L, ensemble=_ensemble(cfg, 2))]
    if name == "final":
        return [est.check_final_bound(_potential_factory(cfg, "delta"), eps, Ns=Ns, L=L,
                                      ensemble=_ensemble(cfg, 1))]
    if name == "beckner":
        p, q, s1, s2 = beckner
        return [est.check_beckner(_potential_factory(cfg, "separable"), p, q, s1, s2, N=N, L=L,
                                  ensemble=_ensemble(cfg, 2))]
    if name == "induction":
        from .fields import gaussian
        from .trees import build_forest

        if C is None:
            raise UsageError("induction needs --C (a calibrated constant)")
        forest = build_forest(CollisionMap(k, len(targets), targets))
        tree = next(t for t in forest.trees if t.distinguished)
        rng = np.random.default_rng(cfg["ensemble.seed"])
        phis = [gaussian(3, N, L, width=3.0 * rng.uniform(0.8, 1.2), amplitude=1.0).project_mean()
                for _ in range(cfg["ensemble.trials"])]
        V = _potential_factory(cfg, "delta")(N, L)
        return [est.check_induction_bounds(tree, alpha, phis, V, eps, T, C, order=cube_order,
                                           seed=cfg["ensemble.seed"])]
    raise UsageError(f"unknown estimate {name!r}")


def _estimate_ok(r, name, beckner_p):
    ok = r.finite() and r.violations == 0 and r.refinement_spread() <= 2.0
    if name == "beckner" and beckner_p == 1.0:
        ok = ok and r.ratio_max <= 1 + 1e-6
    if name == "induction":
        ok = ok and bool(r.parameters.get("bound_holds"))
    return ok


def cmd_verify_estimate(args) -> int:
    keys = _keys("d", "N", "L", "T", "nodes", "trials", "seed", "ensemble", "potential", "lambda", "width", "eps",
                 "out", "csv", "plots")
    cfg = _config(args, keys, {"grid.N": 24, "potential.kind": ""})
    if cfg["grid.d"] != 3:
        raise UsageError("the multilinear estimates are checked in d = 3 only")
    cfg["name"] = args.name
    beck = (float(args.p), float(args.q), float(args.s1), float(args.s2))
    if args.name == "beckner":
        cfg["beckner"] = beck
    C = float(args.C) if args.C is not None else None
    if args.name == "induction":
        cfg.update({"C": C, "alpha": args.alpha, "targets": args.targets, "cube_order": args.cube_order})
    from .estimates import ExponentError

    try:
        reports = run_estimate(args.name, cfg, C=C, alpha=int(args.alpha), targets=_targets(args.targets),
                               cube_order=int(args.cube_order), beckner=beck)
    except ExponentError as exc:
        raise UsageError(str(exc)) from exc
    ok = all(_estimate_ok(r, args.name, beck[0]) for r in reports)
    if cfg["output.csv"]:
        rows = [{"estimate": r.name, "trial": i, "ratio": x} for r in reports for i, x in enumerate(r.ratios)]
        header = rec.format_header("verify estimate", cfg, cfg["ensemble.seed"])
        rec.write_text(cfg["output.csv"], rec.render_csv(header, ["estimate", "trial", "ratio"], rows))
    if cfg["output.plots"]:
        from .plotting import plot_ratios

        os.makedirs(cfg["output.plots"], exist_ok=True)
        for r in reports:
            if r.ratios:
                plot_ratios(r.ratios, os.path.join(cfg["output.plots"], f"{r.name}.png"), r.name)
    return _finish("verify estimate", cfg, cfg["ensemble.seed"], [r.record() for r in reports], ok,
                   cfg["output.out"])


def cmd_verify_decay(args) -> int:
    from .estimates import contraction_decay

    cfg = _config(args, _keys("k", "T", "eps", "out", "csv", "plots"))
    d = contraction_decay(cfg["combinatorics.k"], float(args.M), cfg["time.T"], cfg["potential.eps"],
                          float(args.V_norm), float(args.C), int(args.n_max))
    cfg.update({"M": float(args.M), "V_norm": float(args.V_norm), "C": float(args.C), "n_max": int(args.n_max)})
    if cfg["output.csv"]:
        header = rec.format_header("verify decay", cfg)
        rows = [{"n": i, "bound": b} for i, b in enumerate(d.bounds, start=1)]
        rec.write_text(cfg["output.csv"], rec.render_csv(header, ["n", "bound"], rows))
    if cfg["output.plots"]:
        from .plotting import plot_decay

        os.makedirs(cfg["output.plots"], exist_ok=True)
        plot_decay(d.bounds, os.path.join(cfg["output.plots"], "decay.png"))
    _emit(rec.render_report("verify decay", cfg, None, [d.record(), {"status": "pass"}]), cfg["output.out"])
    return EXIT_OK


# --- simulate / check ----------------------------------------------------------------------


def _nls_potential(cfg, dim, N, L):
    from .fields import Potential, gaussian_potential

    if cfg["potential.kind"] == "delta":
        return Potential.delta(cfg["potential.lambda"])
    if cfg["potential.kind"] == "separable":
        return gaussian_potential(dim, N, L, width=cfg["potential.width"], sign=cfg["potential.lambda"])
    raise UsageError(f"unknown potential {cfg['potential.kind']!r}")


def cmd_simulate_nls(args) -> int:
    from .fields import gaussian
    from .hierarchy import BlowupError, energy, mass, nls_solve, write_trajectory

    cfg = _config(args, _keys("d", "N", "L", "T", "dt", "potential", "lambda", "width", "out"),
                  {"time.dt": 0.005})
    d, N, L, T, dt = cfg["grid.d"], cfg["grid.N"], cfg["grid.L"], cfg["time.T"], cfg["time.dt"]
    if d not in (1, 3):
        raise UsageError("d must be 1 or 3")
    steps = max(1, int(round(T / dt)))
    cfg.update({"amplitude": float(args.amplitude), "data_width": float(args.data_width),
                "save_every": int(args.save_every)})
    V = _nls_potential(cfg, d, N, L)
    phi0 = gaussian(d, N, L, width=float(args.data_width), amplitude=float(args.amplitude))
    try:
        traj = nls_solve(phi0, V, T, steps, save_every=int(args.save_every))
    except BlowupError as exc:
        return _finish("simulate nls", cfg, None, [{"error": str(exc)}], False, "")
    m0, m1 = mass(phi0), mass(traj.final)
    r = {"steps": steps, "dt": T / steps, "snapshots": len(traj.snapshots), "mass_drift": abs(m1 - m0) / m0}
    if V.kind == "delta":
        e0, e1 = energy(phi0, V.strength), energy(traj.final, V.strength)
        r["energy_drift"] = abs(e1 - e0) / abs(e0)
    if cfg["output.out"]:
        write_trajectory(cfg["output.out"], traj, rec.format_header("simulate nls", cfg))
    ok = r["mass_drift"] <= 1e-10
    sys.stdout.write(rec.render_report("simulate nls", cfg, None, [r, {"status": _status(ok)}]))
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_check_residual(args) -> int:
    from .fields import Potential, gaussian
    from .hierarchy import hierarchy_residual, nls_solve

    cfg = _config(args, _keys("k", "d", "N", "L", "T", "lambda", "out"),
                  {"grid.d": 1, "grid.N": 64, "grid.L": 2 * math.pi * 4})
    k, d, N, L, T = cfg["combinatorics.k"], cfg["grid.d"], cfg["grid.N"], cfg["grid.L"], cfg["time.T"]
    if k not in (1, 2):
        raise UsageError("residual checks support k = 1 and k = 2")
    if k == 2 and (d != 1 or N > 32):
        raise UsageError("the two-particle residual is dense: use d = 1 and N <= 32")
    if d not in (1, 3):
        raise UsageError("d must be 1 or 3")
    cfg.update({"steps": int(args.steps), "levels": int(args.levels)})
    phi = gaussian(d, N, L, width=2.0)
    V = Potential.delta(cfg["potential.lambda"])
    rows, prev = [], None
    ok = True
    for i in range(int(args.levels)):
        steps = int(args.steps) * 2**i
        res = hierarchy_residual(nls_solve(phi, V, T, steps), k)
        row = {"steps": steps, "dt": T / steps, "residual": res}
        if prev is not None:
            row["reduction"] = prev / res if res > 0 else math.inf
            ok = ok and 3.2 <= row["reduction"] <= 4.8
        rows.append(row)
        prev = res
    if cfg["potential.lambda"] == 0:
        ok = all(r["residual"] <= 1e-10 for r in rows)
    return _finish("check hierarchy-residual", cfg, None, rows, ok, cfg["output.out"])


def cmd_check_class_integral(args) -> int:
    from .fields import Potential, gaussian
    from .hierarchy import SizeCapError, class_integral_check

    cfg = _config(args, _keys("k", "n", "d", "N", "L", "T", "lambda", "cap", "out"),
                  {"grid.d": 1, "grid.L": 2 * math.pi * 4})
    if cfg["grid.d"] != 1:
        raise UsageError("the class-integral check uses dense kernels and needs d = 1")
    k, n, N = cfg["combinatorics.k"], cfg["combinatorics.n"], cfg["grid.N"]
    orders = _ints(args.orders)
    cfg["orders"] = orders
    phi = gaussian(1, N, cfg["grid.L"], width=2.0, normalize=True)
    V = Potential.delta(cfg["potential.lambda"])
    rows, ok = [], True
    try:
        classes = partition_classes(k, n, cfg["combinatorics.cap"])
        for cls in classes:
            gaps = [class_integral_check(cls, cfg["time.T"], phi, V, order=o).relative_gap for o in orders]
            mono = all(b <= a for a, b in zip(gaps, gaps[1:]))
            ok = ok and mono and gaps[-1] < 1e-6
            rows.append({"representative": str(cls.representative), "members": len(cls),
                         "relative_gaps": gaps, "monotone": mono})
    except (SizeCapError, CapExceededError) as exc:
        raise CapError(str(exc)) from exc
    return _finish("check class-integral", cfg, None, rows, ok, cfg["output.out"])


def cmd_check_partial_trace(args) -> int:
    from .fields import gaussian
    from .hierarchy import MixtureHierarchy, mixture_partial_trace

    cfg = _config(args, _keys("N", "L", "out"), {"grid.N": 32, "grid.L": 2 * math.pi * 4})
    N, L = cfg["grid.N"], cfg["grid.L"]
    cfg.update({"mode": args.mode, "norm": float(args.norm)})
    a = gaussian(1, N, L, width=2.0, normalize=True)
    b = gaussian(1, N, L, width=1.5, center=[3.0], momentum=[0.5], normalize=True)
    if args.mode == "sphere":
        h = MixtureHierarchy([0.5, 0.5], [a, b])
    else:
        h = MixtureHierarchy([0.5, 0.5], [a * float(args.norm), b * float(args.norm)], mode="ball")
    r = mixture_partial_trace(h, 1)
    if args.mode == "sphere":
        ok = r["admissible"]
    else:
        ok = all(abs(x - float(args.norm) ** 2) <= 1e-12 for x in r["deficit"])
    return _finish("check partial-trace", cfg, None, [r], ok, cfg["output.out"])


def cmd_check_factorization(args) -> int:
    from .fields import Potential, gaussian
    from .hierarchy import SizeCapError, duhamel_direct, factorized_product, product_gap

    cfg = _config(args, _keys("k", "n", "N", "L", "T", "seed", "lambda", "out"),
                  {"grid.N": 32, "grid.L": 2 * math.pi * 2})
    k, n, N, L, T = (cfg["combinatorics.k"], cfg["combinatorics.n"], cfg["grid.N"], cfg["grid.L"],
                     cfg["time.T"])
    cfg["draws"] = int(args.draws)
    phi = gaussian(1, N, L, width=1.5, normalize=True, momentum=[0.3])
    V = Potential.delta(cfg["potential.lambda"])
    rng = np.random.default_rng(cfg["ensemble.seed"])
    worst = 0.0
    try:
        maps = enumerate_maps(k, n)
        for m in maps:
            for _ in range(int(args.draws)):
                ts = np.sort(rng.uniform(0, T, n))[::-1]
                worst = max(worst, product_gap(duhamel_direct(m, T, ts, phi, V),
                                               factorized_product(m, T, ts, phi, V), phi.dx))
    except SizeCapError as exc:
        raise CapError(str(exc)) from exc
    r = {"maps": len(maps), "draws": int(args.draws), "max_relative_gap": worst}
    return _finish("check factorization", cfg, cfg["ensemble.seed"], [r], worst <= 1e-8, cfg["output.out"])


# --- report bundle ------------------------------------------------------------------------


def report_bundle(paths, plots_dir: str = "") -> str:
    """Summarize report files: ratio tables, pass/fail matrix, decay series."""
    parsed = [(p, *rec.read_report(p)) for p in paths]
    versions = {h.get("schema_version") for _, h, _ in parsed}
    if len(versions) > 1:
        raise rec.SchemaMismatchError(f"mixed schema versions {sorted(map(str, versions))}")
    lines = [f"# schema_version = {rec.SCHEMA_VERSION}", "# command = report", f"# inputs = {len(paths)}"]
    if not parsed:
        return "\n".join(lines) + "\n"
    lines += ["", "[ratio statistics]", "file,estimate,trials,discarded,ratio_max,ratio_mean,ratio_std"]
    refinement = {}
    for path, _, recs in parsed:
        for r in recs:
            if "estimate" in r:
                lines.append(",".join([os.path.basename(path), r["estimate"], r["trials"], r["discarded"],
                                       r["ratio_max"], r["ratio_mean"], r["ratio_std"]]))
                lv = [(int(k[len("refinement.N"):]), float(v)) for k, v in r.items() if k.startswith("refinement.N")]
                if lv:
                    refinement[r["estimate"]] = sorted(lv)
    lines += ["", "[pass/fail]", "file,command,status"]
    for path, h, recs in parsed:
        status = next((r["status"] for r in recs if "status" in r), "n/a")
        lines.append(f"{os.path.basename(path)},{h.get('command', '?')},{status}")
    series = []
    for path, _, recs in parsed:
        for r in recs:
            bs = [(int(k[1:]), float(v)) for k, v in r.items() if k[:1] == "b" and k[1:].isdigit()]
            if bs:
                series.append((os.path.basename(path), sorted(bs)))
    if series:
        lines += ["", "[decay series]", "file,n,bound"]
        for name, bs in series:
            lines += [f"{name},{n},{rec.format_value(b)}" for n, b in bs]
    if plots_dir:
        from .plotting import plot_decay, plot_refinement

        os.makedirs(plots_dir, exist_ok=True)
        if refinement:
            plot_refinement(refinement, os.path.join(plots_dir, "refinement.png"))
        for i, (name, bs) in enumerate(series):
            plot_decay([b for _, b in bs], os.path.join(plots_dir, f"decay_{i}.png"), name)
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    cfg = _config(args, _keys("out", "plots"))
    try:
        text = report_bundle(args.inputs, cfg["output.plots"])
    except rec.SchemaMismatchError as exc:
        raise UsageError(str(exc)) from exc
    _emit(text, cfg["output.out"])
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quinticgp", description=__doc__.splitlines()[0])
    p.add_argument("--config", default=None, help="INI file with [grid], [time], [ensemble], ... sections")
    sub = p.add_subparsers(dest="group", required=True)

    maps = sub.add_parser("maps").add_subparsers(dest="action", required=True)
    e = maps.add_parser("enumerate")
    _add(e, "k", "n", "cap", "out")
    e.add_argument("--classes", action="store_true")
    e.set_defaults(func=cmd_maps_enumerate)
    r = maps.add_parser("reduce")
    _add(r, "k", "out")
    r.add_argument("--targets", required=True)
    r.set_defaults(func=cmd_maps_reduce)

    trees = sub.add_parser("trees").add_subparsers(dest="action", required=True)
    b = trees.add_parser("build")
    _add(b, "k", "out")
    b.add_argument("--n", default=None)
    b.add_argument("--targets", required=True)
    b.add_argument("--dot", default="")
    b.set_defaults(func=cmd_trees_build)

    fields = sub.add_parser("fields").add_subparsers(dest="action", required=True)
    m = fields.add_parser("make")
    _add(m, "d", "N", "L", "width")
    m.add_argument("--profile", choices=("gaussian", "mode"), default="gaussian")
    m.add_argument("--mode", default="")
    m.add_argument("--normalize", action="store_true")
    m.add_argument("path")
    m.set_defaults(func=cmd_fields_make)

    verify = sub.add_parser("verify").add_subparsers(dest="action", required=True)
    v = verify.add_parser("estimate")
    _add(v, "d", "N", "L", "T", "nodes", "trials", "seed", "ensemble", "potential", "lambda", "width", "eps",
         "out", "csv", "plots")
    v.add_argument("--name", choices=ESTIMATE_NAMES, required=True)
    v.add_argument("--p", default="1")
    v.add_argument("--q", default="2")
    v.add_argument("--s1", default="4")
    v.add_argument("--s2", default="4")
    v.add_argument("--C", default=None)
    v.add_argument("--alpha", default="1")
    v.add_argument("--targets", default="1,2,4,4")
    v.add_argument("--cube-order", dest="cube_order", default="2")
    v.set_defaults(func=cmd_verify_estimate)
    dcy = verify.add_parser("decay")
    _add(dcy, "k", "T", "eps", "out", "csv", "plots")
    dcy.add_argument("--M", required=True)
    dcy.add_argument("--C", required=True)
    dcy.add_argument("--V-norm", dest="V_norm", default="1")
    dcy.add_argument("--n-max", dest="n_max", default="20")
    dcy.set_defaults(func=cmd_verify_decay)

    sim = sub.add_parser("simulate").add_subparsers(dest="action", required=True)
    s = sim.add_parser("nls")
    _add(s, "d", "N", "L", "T", "dt", "potential", "lambda", "width", "out")
    s.add_argument("--amplitude", default="1.0")
    s.add_argument("--data-width", dest="data_width", default="4.0")
    s.add_argument("--save-every", dest="save_every", default="10")
    s.set_defaults(func=cmd_simulate_nls)

    chk = sub.add_parser("check").add_subparsers(dest="action", required=True)
    h = chk.add_parser("hierarchy-residual")
    _add(h, "k", "d", "N", "L", "T", "lambda", "out")
    h.add_argument("--steps", default="20")
    h.add_argument("--levels", default="3")
    h.set_defaults(func=cmd_check_residual)
    c = chk.add_parser("class-integral")
    _add(c, "k", "n", "d", "N", "L", "T", "lambda", "cap", "out")
    c.add_argument("--orders", default="2,4,8,16")
    c.set_defaults(func=cmd_check_class_integral)
    t = chk.add_parser("partial-trace")
    _add(t, "N", "L", "out")
    t.add_argument("--mode", choices=("sphere", "ball"), default="sphere")
    t.add_argument("--norm", default="0.9")
    t.set_defaults(func=cmd_check_partial_trace)
    f = chk.add_parser("factorization")
    _add(f, "k", "n", "N", "L", "T", "seed", "lambda", "out")
    f.add_argument("--draws", default="5")
    f.set_defaults(func=cmd_check_factorization)

    rp = sub.add_parser("report")
    _add(rp, "out", "plots")
    rp.add_argument("inputs", nargs="*")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, rec.ConfigError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (CapError, CapExceededError) as exc:
        sys.stderr.write(f"resource cap: {exc}\n")
        given = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "group", "action") and v is not None}
        command = f"{args.group} {args.action}" if getattr(args, "action", None) else args.group
        fail = {"status": "fail", "reason": "resource-cap", "detail": str(exc)}
        sys.stdout.write(rec.render_report(command, given, given.get("seed"), [fail]))
        return EXIT_CAP
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
