"""Command-line front end: ``gerbelab <command> <dataset.json> [options]``.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 on input errors (unreadable or malformed dataset, bad options).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .calculus import CalculusError, chern, chern_number, curvature, validate_connection
from .cech import coboundary_witness, enumerate_witnesses
from .gerbe import GerbeError, clifford_gerbe, invariant_subbundle, validate_gerbe
from .index import graded_index, spectrum
from .io import ParseError, canonical_json, parse
from .model import SCHEMA, Dataset
from .sections import (DefectReport, GlobalSection, SectionError, check_global_section,
                       construct_bump_section, defect_cocycle, inner_product)

COMMANDS = ("validate", "cohomology", "sections", "spectrum", "chern", "index", "all")


class Run:
    """Accumulates check results and failures for one report."""

    def __init__(self, ds: Dataset, threshold: float | None, tolerance: float | None):
        self.ds = ds
        self.threshold = threshold
        self.tolerance = tolerance
        self.checks: dict[str, dict] = {}
        self.failures: list[str] = []
        self.top: dict[str, Any] = {}

    def record(self, name: str, passed: bool | None, message: str = "", **data) -> dict:
        entry = {"passed": passed, **data}
        if message and passed is not True:
            entry["message"] = message
        self.checks[name] = entry
        if passed is False:
            self.failures.append(f"{name}: {message or 'failed'}")
        return entry

    def spectrum_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return float(self.ds.tolerances.get("spectrum_threshold", 1e-6))

    def ids(self) -> list[str]:
        return [c.id for c in self.ds.cover.charts]


# -- commands -------------------------------------------------------------------------------

def _gerbe_check(run: Run, name: str, gerbe, expected: str | None) -> None:
    kw = {} if run.tolerance is None else {"band_tol": run.tolerance}
    rep = validate_gerbe(gerbe, **kw)
    data = rep.as_dict(run.ids())
    ok = rep.passed
    msg = "; ".join(rep.failures)
    if ok and expected is not None and rep.cocycle_class != expected:
        ok = False
        msg = f"cocycle class {rep.cocycle_class}, expected {expected}"
    data.pop("passed")
    run.record(name, ok, msg, **data)


def do_validate(run: Run) -> None:
    ds = run.ds
    expected = ds.expect.get("cocycle_class")
    has_frames = ds.frames is not None
    try:
        gerbe = ds.gerbe()
    except (GerbeError, ValueError) as exc:
        run.record("gerbe", False, str(exc))
        return
    _gerbe_check(run, "gerbe", gerbe, None if has_frames else expected)
    run.top["cocycle_class"] = run.checks["gerbe"].get("cocycle_class")
    if has_frames:
        try:
            cg = clifford_gerbe(ds.frames)
        except GerbeError as exc:
            run.record("clifford_gerbe", False, str(exc))
        else:
            _gerbe_check(run, "clifford_gerbe", cg, expected)
            run.top["cocycle_class"] = run.checks["clifford_gerbe"].get("cocycle_class")
    if ds.lifting is not None:
        sub = invariant_subbundle(gerbe)
        want = ds.expect.get("invariant_rank")
        ok = sub.cocycle_residual < 1e-9 and (want is None or sub.rank == want)
        run.record("invariant_subbundle", ok, "" if ok else f"rank {sub.rank}, cocycle residual "
                   f"{sub.cocycle_residual:.3g}", rank=sub.rank, commutation_residual=sub.commutation_residual,
                   cocycle_residual=sub.cocycle_residual)
    if ds.connection is not None:
        C = float(ds.tolerances.get("connection_C", 10.0))
        try:
            rep = validate_connection(ds.connection, ds.transitions, C=C)
        except CalculusError as exc:
            if ds.expect.get("connection") == "unaligned":
                run.record("connection", None, f"not applicable: {exc}")
            else:
                run.record("connection", False, str(exc))
        else:
            run.record("connection", rep.passed, "; ".join(rep.failures), max_residual=rep.max_residual,
                       tolerance=rep.tolerance, per_overlap=rep.per_overlap)
    for name, part in sorted(ds.partitions.items()):
        try:
            worst = part.check_subordinate(ds.cover)
        except SectionError as exc:
            run.record(f"partition:{name}", False, str(exc))
        else:
            run.record(f"partition:{name}", True, sum_defect=worst)


def do_cohomology(run: Run) -> None:
    ds = run.ds
    gerbe = clifford_gerbe(ds.frames) if ds.frames is not None else ds.gerbe()
    rep = validate_gerbe(gerbe)
    if rep.cocycle is None:
        run.record("cohomology", False, "; ".join(rep.failures) or "no cocycle")
        return
    c = rep.cocycle
    ids = run.ids()
    name = lambda s: "-".join(ids[v] for v in s)
    data: dict[str, Any] = {"cocycle": {name(s): v for s, v in sorted(c.as_dict().items())},
                            "cocycle_class": rep.cocycle_class}
    expected = ds.expect.get("cocycle_class")
    ok = expected is None or expected == rep.cocycle_class
    if c.modulus == 2 and c.degree == 2:
        w = coboundary_witness(c)
        data["witness"] = None if w is None else {name(s): v for s, v in sorted(w.as_dict().items())}
        if c.nerve.count(1) <= 16:
            found = enumerate_witnesses(c)
            data["enumerated_witnesses"] = len(found)
            agrees = (w is None) == (len(found) == 0)
            data["enumeration_agrees"] = agrees
            ok = ok and agrees
    run.top["cocycle_class"] = rep.cocycle_class
    run.record("cohomology", ok, "" if ok else f"cocycle class {rep.cocycle_class}, expected {expected}", **data)


def _section_export(s: GlobalSection) -> dict:
    flat, offsets = s.flat()
    out = {"offsets": offsets, "real": np.real(flat).ravel().tolist(), "shape": list(flat.shape)}
    if np.iscomplexobj(flat):
        out["imag"] = np.imag(flat).ravel().tolist()
    return out


def do_sections(run: Run) -> None:
    ds = run.ds
    tol = run.tolerance if run.tolerance is not None else float(ds.tolerances.get("section", 1e-8))
    chain = ds.total_chain() if ds.lifting is None else ds.gerbe().transitions
    defects = ds.expect.get("defect_sections", {})
    gerbe = None
    for name, vals in sorted(ds.sections.items()):
        try:
            out = check_global_section(chain, vals, tol)
        except SectionError as exc:
            run.record(f"section:{name}", False, str(exc))
            continue
        if name in defects:
            from .datasets import LIFTINGS

            spec = LIFTINGS[ds.lifting](ds.transitions) if ds.lifting else None
            dc = defect_cocycle(chain, vals, spec)
            want = defects[name].get("nonzero_triple")
            nonzero = dc.max_norm() > 1e-8
            ok = isinstance(out, DefectReport) and dc.identity_residual < 1e-12 and \
                (dc.base_residual is None or dc.base_residual < 1e-12) and (want is None or nonzero == want)
            run.record(f"section:{name}", ok, "" if ok else "defect section behaved unexpectedly",
                       accepted=not isinstance(out, DefectReport), max_triple_defect=dc.max_norm(),
                       identity_residual=dc.identity_residual, base_residual=dc.base_residual)
            continue
        if isinstance(out, DefectReport):
            run.record(f"section:{name}", False, f"overlap defect {out.max_defect:.3g} >= {tol:.3g}",
                       max_defect=out.max_defect)
            continue
        entry = run.record(f"section:{name}", True, export=_section_export(out))
        if len(ds.partitions) >= 2:
            gerbe = gerbe or ds.gerbe()
            vals_ = {p: inner_product(out, out, part, gerbe) for p, part in sorted(ds.partitions.items())}
            spread = max(vals_.values()) - min(vals_.values())
            entry["inner_products"] = vals_
            entry["partition_spread"] = spread
            if spread > 1e-9:
                entry["passed"] = False
                run.failures.append(f"section:{name}: inner product depends on the partition ({spread:.3g})")
    try:
        bump = construct_bump_section(chain, 0)
    except SectionError as exc:
        run.record("bump_section", None, str(exc))
    else:
        ok = isinstance(check_global_section(chain, bump.values, tol), GlobalSection)
        run.record("bump_section", ok, chart=run.ids()[0])


def do_spectrum(run: Run) -> None:
    ds = run.ds
    if ds.dirac is None:
        run.record("spectrum", None, "not applicable: dataset declares no Dirac operator")
        return
    D = ds.dirac_operator()
    rep = spectrum(D, threshold=run.spectrum_threshold())
    data = rep.as_dict()
    ok, msgs = True, []
    want = ds.expect.get("kernel_dim")
    if want is not None and rep.kernel_dim != want:
        ok = False
        msgs.append(f"kernel dimension {rep.kernel_dim}, expected {want}")
    if "gap" in ds.expect:
        g, tol = ds.expect["gap"]
        if rep.gap is None or abs(rep.gap - g) > tol:
            ok = False
            msgs.append(f"gap {rep.gap}, expected {g} within {tol}")
    if "gap_min" in ds.expect and (rep.gap is None or rep.gap < ds.expect["gap_min"]):
        ok = False
        msgs.append(f"gap {rep.gap} below {ds.expect['gap_min']}")
    if rep.cluster_warning:
        msgs.append("threshold sits inside a cluster")
    run.top["kernel_dim"] = rep.kernel_dim
    run.record("spectrum", ok, "; ".join(msgs), **data)
    if ds.scalar_curvature is not None:
        from .experiments import vanishing

        v = vanishing(ds, run.spectrum_threshold())
        run.top.setdefault("index_experiments", {})["harmonic_vanishing"] = v.as_dict()
        run.record("harmonic_vanishing", v.passed, "; ".join(v.notes) if not v.passed else "")


def do_chern(run: Run) -> None:
    ds = run.ds
    if ds.connection is None:
        run.record("chern", None, "not applicable: dataset declares no connection")
        return
    ch = chern(curvature(ds.connection), max_k=1)
    numbers = {name: float(np.real(chern_number(ch, p))) for name, p in sorted(ds.partitions.items())}
    data = {"chern_numbers": numbers, "overlap_residual": ch.overlap_residual}
    ok, msg = True, ""
    if "chern" in ds.expect and numbers:
        target, tol = ds.expect["chern"]
        err = max(abs(v - target) for v in numbers.values())
        data["error"] = err
        if err > tol:
            ok, msg = False, f"Chern number off by {err:.3g} (tolerance {tol})"
    run.top["chern_number"] = next(iter(numbers.values()), None)
    run.record("chern", ok, msg, **data)


def do_index(run: Run) -> None:
    from . import experiments as ex

    ds = run.ds
    if ds.dirac is None or ds.fiber.grading is None:
        run.record("index", None, "not applicable: dataset declares no graded Dirac operator")
        return
    thr = run.spectrum_threshold()
    if ds.dirac.wilson:
        res = ex.overlap_index(ds, threshold=thr)
    else:
        res = graded_index(ds.dirac_operator(), threshold=thr)
    data = res.as_dict()
    want = ds.expect.get("graded_index")
    ok = not res.inconclusive and (want is None or res.index == want)
    msg = "" if ok else f"graded index {res.index}, expected {want}" + (" (inconclusive)" if res.inconclusive else "")
    run.top["graded_index"] = res.index
    run.record("index", ok, msg, **data)
    exps = run.top.setdefault("index_experiments", {})
    exps["pairing"] = ex.pairing(ds, res.index).as_dict()
    if ds.flat and exps["pairing"]["error"] is not None and "chern" in ds.expect:
        tol = ds.expect["chern"][1]
        run.record("pairing", exps["pairing"]["error"] <= tol, "index and Chern integral disagree")
    si = ds.expect.get("symbol_invariance")
    if si:
        inv = ex.symbol_invariance(ds, count=int(si["count"]), norm=float(si["norm"]),
                                   seed=int(si.get("seed", 0)), threshold=thr)
        exps["symbol_invariance"] = inv.as_dict()
        ok = inv.consistent and not any(inv.inconclusive) and all(i == res.index for i in inv.indices)
        run.record("symbol_invariance", ok, "" if ok else "index changed or inconclusive under perturbation")


HANDLERS: dict[str, list[Callable[[Run], None]]] = {
    "validate": [do_validate],
    "cohomology": [do_cohomology],
    "sections": [do_sections],
    "spectrum": [do_spectrum],
    "chern": [do_chern],
    "index": [do_index],
    "all": [do_validate, do_cohomology, do_sections, do_spectrum, do_chern, do_index],
}


def run(command: str, ds: Dataset, threshold: float | None = None,
        tolerance: float | None = None) -> tuple[int, dict]:
    """Execute ``command`` on a parsed dataset; returns (exit code, report)."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    r = Run(ds, threshold, tolerance)
    for step in HANDLERS[command]:
        try:
            step(r)
        except (GerbeError, CalculusError, SectionError) as exc:
            r.record(step.__name__[3:], False, str(exc))
    report = build_report(command, r)
    return (0 if not r.failures else 1), report


def build_report(command: str, r: Run) -> dict:
    """Metadata plus whatever checks ``r`` accumulated (possibly none)."""
    return {
        "schema": SCHEMA,
        "generator": f"gerbelab {__version__}",
        "command": command,
        "dataset": r.ds.name,
        "flags": {"threshold": r.threshold, "tolerance": r.tolerance},
        "checks": r.checks,
        "failures": r.failures,
        "passed": not r.failures,
        **r.top,
    }


def emit_report(report: dict) -> bytes:
    return (canonical_json(report) + "\n").encode("utf-8")


def _limit_threads():
    n = os.environ.get("GERBELAB_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gerbelab", description="Validate vectorial gerbe datasets and run "
                                "the Dirac and index experiments on them.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("dataset", help="dataset JSON file")
    p.add_argument("--threshold", type=float, default=None,
                   help="relative kernel threshold (fraction of the largest spectral value)")
    p.add_argument("--tolerance", type=float, default=None, help="compatibility tolerance override")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    return p


def main(argv: list[str] | None = None) -> int:
    p = build_parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    limiter = _limit_threads()
    try:
        try:
            ds = parse(args.dataset)
        except ParseError as exc:
            print(f"gerbelab: input error: {exc}", file=sys.stderr)
            return 2
        code, report = run(args.command, ds, args.threshold, args.tolerance)
        data = emit_report(report)
        if args.out:
            Path(args.out).write_bytes(data)
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        return code
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
