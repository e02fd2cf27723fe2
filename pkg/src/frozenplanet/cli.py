"""Command-line front end.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .functionals import ModelParams
from .grid import LoopGrid, ZLoop, ZPair, project_symmetry, resample
from .levi_civita import PERIOD, _physical, kepler_energy, mean_q, time_change
from .solvers import (
    ContinuationStalled,
    SolveOptions,
    SolverError,
    continue_homotopy,
    kepler_seed,
    model_gradient,
    newton_solve,
)
from .verify import total_energy, verify_kepler, verify_pair

log = logging.getLogger("frozenplanet")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _pair_list(text: str, kind=int) -> list:
    try:
        return [kind(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated values, got {text!r}") from exc


def _effective_r(model: str, r: float) -> float:
    return {"av": 0.0, "in": 1.0}.get(model, r)


def _summary(z, model: str, r: float, N: float, grad: float) -> str:
    if model == "kepler":
        e = float(np.mean(kepler_energy(z, N)))
        qb = mean_q(z)
        return f"model={model} r={r:g} grad={grad:.3e} E={e:.12g} qbar1=nan qbar2={qb:.12g}"
    from .levi_civita import orbit_from_pair

    dec = r if model == "decoupled" else None
    q = orbit_from_pair(z, r if dec is None else 0.0, N)
    e = total_energy(q, r, dec)
    return f"model={model} r={r:g} grad={grad:.3e} E={e:.12g} qbar1={q.qbar1:.12g} qbar2={q.qbar2:.12g}"


def _load_seed(path, model: str, n: int):
    f = io.load(path)
    z = f.solution()
    if model == "kepler":
        z = z if isinstance(z, ZLoop) else z.z2
        return project_symmetry(resample(z, n), z.cls) if z.n != n else z
    if not isinstance(z, ZPair):
        raise io.OrbitFileError("a pair model needs a pair seed")
    if z.grid.n != n:
        z = ZPair(project_symmetry(resample(z.z1, n), z.z1.cls), project_symmetry(resample(z.z2, n), z.z2.cls))
    return z


def _options(args) -> SolveOptions:
    return SolveOptions(grad_tol=args.tol, max_iter=args.max_iter)


def cmd_solve(args) -> int:
    model, N, n = args.model, args.N, args.n
    r = _effective_r(model, args.r)
    opts = _options(args)
    prov = {"solver": asdict(opts), "command": "solve"}
    try:
        if model == "kepler" or args.seed:
            z0 = _load_seed(args.seed, model, n) if args.seed else kepler_seed(LoopGrid(n), N)
            rep = newton_solve(model_gradient(model, r, N), z0, opts)
        else:
            stage_a, stage_b = args.steps
            if model == "decoupled":
                r_end, stage_b = r, 0
            else:
                r_end = r
                if model == "av":
                    stage_b = 0
            coarse = args.coarse_n if args.coarse_n and args.coarse_n < n else None
            if model == "decoupled":
                trace = _decoupled_only(stage_a, r_end, opts, n, N, coarse)
            else:
                trace = continue_homotopy(stage_a, stage_b, opts, n=n, N=N, coarse_n=coarse, r_end=r_end)
            prov["continuation"] = trace.schedule
            rep = trace.final
    except (SolverError, ContinuationStalled) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if not rep.converged:
        print(f"solver failure: {rep.message or 'not converged'}", file=sys.stderr)
        return EXIT_NUMERIC
    prov.update({"iterations": rep.iterations, "solver_gradient_norm": rep.final_grad_norm,
                 "tolerance": rep.tolerance})
    f = io.OrbitFile.from_solution(rep.z, model, r, N, prov)
    if args.out:
        io.save(f, args.out)
    print(_summary(rep.z, model, r, N, f.provenance["gradient_norm"]))
    return EXIT_OK


def _decoupled_only(steps, r_end, opts, n, N, coarse):
    """Stage A alone, stopped at s = r_end."""
    from .solvers import ContinuationTrace, _follow, decoupled_seed

    work_n = coarse or n
    trace = ContinuationTrace(schedule={"stageA_steps": steps, "n": n, "coarse_n": work_n, "r_end": r_end})
    start = newton_solve(model_gradient("decoupled", 0.0, N), decoupled_seed(LoopGrid(work_n), N), opts)
    trace.add("seed", 0.0, start)
    z = start.z
    if r_end > 0:
        z = _follow(trace, "A", lambda s: model_gradient("decoupled", s, N), z, max(steps, 1), opts, r_end=r_end)
    if work_n != n:
        fine = ZPair(project_symmetry(resample(z.z1, n), z.z1.cls), project_symmetry(resample(z.z2, n), z.z2.cls))
        rep = newton_solve(model_gradient("decoupled", r_end, N), fine, opts)
        if not rep.converged:
            raise ContinuationStalled(f"refinement to n={n} failed", trace)
        trace.add("A", r_end, rep)
    return trace


def cmd_continue(args) -> int:
    stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    bad = [s for s in stages if s not in ("A", "B")]
    if bad or not stages:
        raise UsageError(f"invalid stage name(s): {bad or stages}; choose from A,B")
    if "B" in stages and "A" not in stages:
        raise UsageError("stage B starts from the end of stage A; pass --stages A,B")
    steps_a, steps_b = args.steps
    if "B" not in stages:
        steps_b = 0
    opts = _options(args)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc}") from exc
    coarse = args.coarse_n if args.coarse_n and args.coarse_n < args.n else None
    status = EXIT_OK
    try:
        trace = continue_homotopy(steps_a, steps_b, opts, n=args.n, N=args.N, coarse_n=coarse)
    except ContinuationStalled as exc:
        print(str(exc), file=sys.stderr)
        trace, status = exc.trace, EXIT_NUMERIC
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = []
    for i, (label, r, rep) in enumerate(trace.stages):
        model = "interp" if label == "B" else "decoupled"
        name = f"step{i:03d}_{label}_r{r:.6f}.json"
        prov = {"solver": asdict(opts), "stage": label, "continuation": trace.schedule,
                "solver_gradient_norm": rep.final_grad_norm}
        f = io.OrbitFile.from_solution(rep.z, model, r, args.N, prov)
        io.save(f, out / name)
        manifest.append({"file": name, "stage": label, "r": r, "n": rep.z.grid.n,
                         "gradient_norm": f.provenance["gradient_norm"], "converged": bool(rep.converged)})
    (out / "trace.json").write_text(json.dumps({"schedule": trace.schedule, "steps": manifest}, indent=2) + "\n")
    print(f"wrote {len(manifest)} orbit files to {out}")
    return status


def cmd_verify(args) -> int:
    f = io.load(args.path)
    z = f.solution()
    if f.is_kepler:
        rep = verify_kepler(z, f.N, grad_tol=args.tol)
    elif f.model == "decoupled":
        rep = verify_pair(z, f.r, f.N, decoupled=f.r, grad_tol=args.tol)
    else:
        rep = verify_pair(z, _effective_r(f.model, f.r), f.N, grad_tol=args.tol)
    stored = f.provenance.get("gradient_norm")
    if stored is not None:
        again = io.gradient_norm(z, f.model, f.r, f.N)
        rep.add("stored gradient reproducible", abs(again - float(stored)), 1e-10)
    print(rep.format())
    print("json: " + json.dumps(rep.as_dict(), default=float))
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def trajectory(f: io.OrbitFile, samples: int | None = None):
    """(t, q1, q2, E1, E2) at uniform times over the file's grid period.

    With samples equal to the grid size the values are exactly those of
    z_to_q on that grid.
    """
    z = f.solution()
    n = samples or f.n
    t = np.arange(n) * (PERIOD / n)
    if f.is_kepler:
        q2, _, _, e2 = _physical(z, t, f.N)
        nan = np.full(n, np.nan)
        return t, nan, q2, nan, e2
    q1, _, _, e1 = _physical(z.z1, t, f.N)
    q2, _, _, e2 = _physical(z.z2, t, f.N)
    return t, q1, q2, e1, e2


def _reference_energy(f: io.OrbitFile) -> float:
    z = f.solution()
    if f.is_kepler:
        return float(np.mean(kepler_energy(z, f.N)))
    from .levi_civita import orbit_from_pair

    dec = f.r if f.model == "decoupled" else None
    r = _effective_r(f.model, f.r)
    return total_energy(orbit_from_pair(z, r, f.N), r, dec)


_PLOT = """# q1 and q2 over one period; the outer electron hovers while the inner one bounces off the nucleus
set datafile separator ','
set key top left
set xlabel 't'
set ylabel 'distance from nucleus'
set yrange [0:*]
plot '{csv}' using 1:2 skip 1 with lines lw 2 title 'q1 (outer)', \\
     '{csv}' using 1:3 skip 1 with lines lw 2 title 'q2 (inner)'
"""


def cmd_export(args) -> int:
    f = io.load(args.path)
    if args.samples is not None and args.samples < 2:
        raise UsageError("--samples must be at least 2")
    t, q1, q2, e1, e2 = trajectory(f, args.samples)
    if args.rescale_energy is not None:
        target = args.rescale_energy
        e0 = _reference_energy(f)
        if not (target < 0 and e0 < 0):
            raise UsageError("--rescale-energy needs a negative target and a negative orbit energy")
        c = np.sqrt(e0 / target)
        t, q1, q2, e1, e2 = c**3 * t, c**2 * q1, c**2 * q2, e1 / c**2, e2 / c**2
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "q1", "q2", "E1", "E2"])
            for row in zip(t, q1, q2, e1, e2):
                w.writerow([format(float(v), ".17g") for v in row])
        if args.plot:
            Path(args.plot).write_text(_PLOT.format(csv=Path(args.out).name))
    except OSError as exc:
        raise UsageError(f"cannot write output: {exc}") from exc
    print(f"wrote {len(t)} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="frozenplanet", description="Symmetric frozen planet orbits of helium via regularized loops.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(sp):
        sp.add_argument("--n", type=int, default=512)
        sp.add_argument("--N", type=float, default=2.0, help="nuclear charge")
        sp.add_argument("--tol", type=float, default=1e-9)
        sp.add_argument("--max-iter", type=int, default=100)
        sp.add_argument("--steps", type=_pair_list, default=[5, 10], help="continuation steps for stages A,B")
        sp.add_argument("--coarse-n", type=int, default=128, help="grid for following the path (0 to disable)")

    s = sub.add_parser("solve", help="solve one model")
    s.add_argument("--model", choices=io.MODELS, required=True)
    s.add_argument("--r", type=float, default=1.0)
    s.add_argument("--out")
    s.add_argument("--seed", help="orbit file to start Newton from")
    solver_flags(s)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("continue", help="two-stage continuation, one file per step")
    c.add_argument("--stages", default="A,B")
    c.add_argument("--out-dir", required=True)
    solver_flags(c)
    c.set_defaults(func=cmd_continue)

    v = sub.add_parser("verify", help="run all checks on an orbit file")
    v.add_argument("path")
    v.add_argument("--tol", type=float, default=1e-8, help="gradient tolerance")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="write t,q1,q2,E1,E2 as CSV")
    e.add_argument("path")
    e.add_argument("--out", required=True)
    e.add_argument("--samples", type=int)
    e.add_argument("--plot", help="also write a gnuplot script")
    e.add_argument("--rescale-energy", type=float)
    e.set_defaults(func=cmd_export)
    return p


def _check_args(args):
    if getattr(args, "n", 512) < 16 or getattr(args, "n", 512) % 4:
        raise UsageError("--n must be a multiple of 4 and at least 16")
    if hasattr(args, "steps") and (len(args.steps) != 2 or min(args.steps) < 0):
        raise UsageError("--steps takes two non-negative integers A,B")
    if hasattr(args, "r") and not 0.0 <= args.r <= 1.0:
        raise UsageError("--r must lie in [0, 1]")
    if hasattr(args, "tol") and not 0 < args.tol < 1e-4:
        raise UsageError("--tol must lie in (0, 1e-4)")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_args(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        msg = str(exc)
        print(msg if "usage:" in msg else f"{msg}\n{parser.format_usage()}", file=sys.stderr)
        return EXIT_USAGE
    except io.OrbitFileError as exc:
        print(f"invalid orbit file: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
