"""Configuration-driven experiment runner.

``khessian --config run.yaml`` validates the file, runs the named command
and writes ``report.json`` plus CSV side files (and grid dumps where a
field is produced) into the output directory.  Exit status: 0 success,
2 when the numerics contradict an expected verdict, 1 on any error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import cones, suite
from .analytic import AnalyticFunctionSpec, family_generate, flux_atom_mass
from .config import COMMANDS, REQUIRED, ConfigError, RunConfig, Section, load_config
from .dirichlet import (DirichletProblemSpec, comparison_check, harmonic_extension,
                        radial_comparison_check, solve_grid, solve_measure_data, solve_radial)
from .errors import DomainError, IntegrityError, PreconditionError
from .estimates import ESTIMATES, EstimateCase, builtin_cases, verify
from .field import (MollifierKernel, hessian_operator, kconvexity_report, mollify,
                    pk_hessian_operator, slice_rows, weighted_norms)
from .measures import (TestFunctionSpec, atom_mass, h_schedule, measure_approx,
                       radial_weak_continuity, weak_continuity_experiment)
from .reporting import OutputWriter, resolve_out_dir
from .symmetric import (MAX_DIM, binom, elem_sym_all, elem_sym_brute, elem_sym_restricted,
                        minor_sum, minor_sum_derivative)

# estimates evaluated on a function; without one the runner uses w_k(n, k)
FUNCTION_ESTIMATES = ("interp_2_12", "holder_2_13", "mass_3_1", "gradint_4_1", "uq_4_3")
CASE_KEYS = ("estimate", "function", "domain", "subdomain", "schedule", "family", "probe",
             "label", "seed")


@dataclass
class Outcome:
    payload: dict
    failures: list = dc_field(default_factory=list)
    summary: list = dc_field(default_factory=list)
    csv: dict = dc_field(default_factory=dict)
    grids: dict = dc_field(default_factory=dict)
    metadata: dict = dc_field(default_factory=dict)


# ---------------------------------------------------------------- shared parsing

def _function(sec: Section, key: str = "function", default=REQUIRED):
    d = sec.get(key, "dict", default)
    if d is None:
        return None
    with sec.anchored(key):
        return AnalyticFunctionSpec.from_dict(d)


def _box(sec: Section, n: int, default_half: float = 1.0) -> tuple:
    box = sec.get("box", "box", ((-default_half, default_half),) * n)
    if len(box) != n:
        raise sec.error("box", f"needs {n} intervals, got {len(box)}")
    return box


def _point(sec: Section, key: str, n: int, default=REQUIRED):
    p = sec.get(key, "floats", default)
    if p is not None and len(p) != n:
        raise sec.error(key, f"needs {n} coordinates, got {len(p)}")
    return p


def _tuples(sec: Section) -> list:
    """``lam`` (one tuple) or ``lams`` (a list of tuples)."""
    if sec.has("lams"):
        rows = sec.get("lams", "list")
        out = []
        for i, row in enumerate(rows):
            sub = Section(sec.source, {"row": row}, sec.path + ("lams", i))
            out.append(np.array(sub.get("row", "floats")))
        sec.used.add("lam")
        if sec.has("lam"):
            raise sec.error("lam", "give either lam or lams, not both")
    else:
        out = [np.array(sec.get("lam", "floats"))]
    for i, lam in enumerate(out):
        if len(lam) > MAX_DIM:
            key = ("lams", i) if sec.has("lams") else ("lam",)
            raise ConfigError(f"at most {MAX_DIM} entries supported, got {len(lam)}",
                              sec.source.where(sec.path + key))
    return out


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    f = v[np.isfinite(v)]
    if f.size == 0:
        return {"finite_nodes": 0}
    return {"finite_nodes": int(f.size), "min": float(f.min()), "max": float(f.max()),
            "mean": float(f.mean())}


def _rel_err(a, b, scale):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(scale, 1e-300)))


# ---------------------------------------------------------------- symfunc

def _symfunc(run: RunConfig):
    p = run.params
    lams = _tuples(p)
    k = p.get("k", "int", None, minimum=0)
    exclude = p.get("exclude", "ints", None, minimum=0)
    matrix = p.get("matrix", "matrix", None)
    tol = run.tolerance("identity", 1e-10)
    for lam in lams:
        if k is not None and k > len(lam):
            raise p.error("k", f"order k = {k} exceeds the tuple length {len(lam)}")
        if exclude is not None and max(exclude) >= len(lam):
            raise p.error("exclude", f"index {max(exclude)} outside a tuple of length {len(lam)}")
    if matrix is not None:
        if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] > MAX_DIM:
            raise p.error("matrix", f"needs a square matrix of size at most {MAX_DIM}")
        if k is not None and k > matrix.shape[0]:
            raise p.error("k", f"order k = {k} exceeds the matrix size {matrix.shape[0]}")
    p.finish()

    def execute():
        records, rows, failures = [], [], []
        for i, lam in enumerate(lams):
            n = len(lam)
            S = elem_sym_all(lam)
            absS = elem_sym_all(np.abs(lam))
            brute = np.array([elem_sym_brute(lam, j) for j in range(n + 1)])
            brute_err = _rel_err(S, brute, absS)
            sum_err = 0.0
            for j in range(1, n + 1):
                total = sum(elem_sym_restricted(lam, j - 1, m) for m in range(n))
                sum_err = max(sum_err, _rel_err(total, (n - j + 1) * S[j - 1],
                                                (n - j + 1) * absS[j - 1]))
            rec = {"lambda": lam, "S": S, "S_brute": brute, "brute_error": brute_err,
                   "sum_rule_error": sum_err}
            if k is not None:
                rec["S_k"] = S[k]
            if exclude is not None:
                rec["excluded"] = list(exclude)
                rec["S_restricted"] = [elem_sym_restricted(lam, j, exclude)
                                       for j in range(n - len(set(exclude)) + 1)]
            records.append(rec)
            for j in range(n + 1):
                rows.append({"index": i, "k": j, "S": S[j], "S_brute": brute[j]})
            for name, err in (("brute", brute_err), ("sum_rule", sum_err)):
                if err > tol:
                    failures.append(f"tuple {i}: {name} error {err:.3e} exceeds {tol:.1e}")
        payload = {"tuples": records, "tolerance": tol}
        if matrix is not None:
            n = matrix.shape[0]
            sums = [minor_sum(matrix, j) for j in range(n + 1)]
            row_norm = float(np.linalg.norm(matrix, axis=1).max())
            contraction = 0.0
            for j in range(1, n + 1):
                lhs = float(np.sum(minor_sum_derivative(matrix, j) * matrix))
                contraction = max(contraction, abs(lhs - j * sums[j])
                                  / max(j * binom(n, j) * row_norm ** j, 1e-300))
            mrec = {"matrix": matrix, "minor_sums": sums, "contraction_error": contraction}
            if np.allclose(matrix, matrix.T, rtol=0, atol=0):
                eig = np.linalg.eigvalsh(matrix)
                mrec["eigen_error"] = _rel_err(sums, elem_sym_all(eig), elem_sym_all(np.abs(eig)))
            if k is not None and k >= 1:
                mrec["derivative"] = minor_sum_derivative(matrix, k)
            for name in ("contraction_error", "eigen_error"):
                if mrec.get(name, 0.0) > tol:
                    failures.append(f"matrix: {name} {mrec[name]:.3e} exceeds {tol:.1e}")
            payload["matrix"] = mrec
        summary = [f"{len(lams)} tuple(s); worst identity error "
                   f"{max(max(r['brute_error'], r['sum_rule_error']) for r in records):.2e}"]
        return Outcome(payload, failures, summary, {"symfunc.csv": rows})

    return execute


# ---------------------------------------------------------------- cone

def _cone(run: RunConfig):
    p = run.params
    sample = p.section("sample", default=None) if p.has("sample") else None
    if sample is not None:
        n = sample.get("n", "int", minimum=1, maximum=MAX_DIM)
        k = p.order("k", n)
        count = sample.get("count", "int", 1000, minimum=1)
        spread = sample.get("spread", "float", 1.0, strict_minimum=True, minimum=0.0)
        sample.finish()
        lams = []
    else:
        lams = _tuples(p)
        k = p.order("k", min(len(lam) for lam in lams))
    tol = p.get("boundary_tol", "float", 0.0, minimum=0.0)
    project = p.get("project", "bool", False)
    dual = p.get("dual", "bool", False)
    expect = p.get("expect", "list", None)
    if expect is not None:
        if len(expect) != len(lams) or any(e not in ("in", "out") for e in expect):
            raise p.error("expect", "needs one of 'in' / 'out' per tuple")
    p.finish()

    def execute():
        failures, rows, records = [], [], []
        if sample is not None:
            rng = np.random.default_rng(run.seed)
            a = cones.sample_gamma(n, k, count, rng, spread)
            scale = np.abs(a).max(axis=1)
            margins = cones.gamma_margin(a, k)
            bad = int(np.sum(margins < -1e-12 * scale ** k))
            nest = sum(int(np.sum(cones.gamma_margin(a, j) < -1e-12 * scale ** j))
                       for j in range(1, k))
            payload = {"n": n, "k": k, "count": count, "membership_violations": bad,
                       "nesting_violations": nest, "margin": _stats(margins / scale ** k)}
            if bad or nest:
                failures.append(f"{bad + nest} sampled tuples violate membership or nesting")
            return Outcome(payload, failures, [f"{count} samples of Gamma_{k} in R^{n}: "
                                               f"{bad + nest} violations"])
        for i, lam in enumerate(lams):
            rep = cones.gamma_membership(lam, k, tol)
            rec = {"lambda": lam, "in_cone": rep.in_cone, "margin": rep.margin,
                   "boundary": rep.boundary, "status": rep.status}
            row = {"index": i, "status": rep.status, "margin": rep.margin}
            if project:
                proj, t = cones.project_to_cone(lam, k)
                rec["projection"] = {"point": proj, "shift": t}
                row["shift"] = t
            if dual:
                d = cones.dual_membership(lam, k, seed=run.seed)
                rec["dual"] = {"status": d.status, "margin": d.margin, "witness": d.witness}
                row["dual_status"] = d.status
            if expect is not None and rep.status != expect[i]:
                failures.append(f"tuple {i}: expected {expect[i]}, got {rep.status}")
            records.append(rec)
            rows.append(row)
        summary = [f"tuple {i}: {r['status']} (margin {r['margin']:.6g})"
                   for i, r in enumerate(records)]
        return Outcome({"k": k, "tuples": records}, failures, summary, {"cone.csv": rows})

    return execute


# ---------------------------------------------------------------- fieldop

OPERATORS = ("hessian", "pk_hessian", "kconvexity", "norms", "mollify")


def _fieldop(run: RunConfig):
    p = run.params
    spec = _function(p)
    n = spec.n
    box = _box(p, n)
    res = p.get("resolution", "int", 33, minimum=5)
    op = p.get("operator", "str", choices=OPERATORS)
    opts = {}
    if op in ("hessian", "kconvexity"):
        opts["k"] = p.order("k", n)
    if op == "hessian":
        opts["method"] = p.get("method", "str", "eigen", choices=("eigen", "minors"))
    if op == "pk_hessian":
        opts["l"] = p.order("l", n)
        opts["p"] = p.get("p", "float", minimum=2.0)
    if op == "kconvexity":
        opts["tol"] = p.get("tol", "float", 1e-8, minimum=0.0)
        opts["min_fraction"] = p.get("min_fraction", "float", None, minimum=0.0, maximum=1.0)
    if op == "norms":
        opts["sigma"] = p.get("sigma", "float", float(n), minimum=0.0)
        opts["alpha"] = p.get("alpha", "float", minimum=0.0, maximum=1.0, strict_minimum=True)
    if op == "mollify":
        opts["h"] = p.get("h", "float", minimum=0.0, strict_minimum=True)
    expect = p.get("expect", "float", None) if op in ("hessian", "pk_hessian", "mollify") else None
    tol = run.tolerance("expect", 1e-8) if expect is not None else None
    dump = p.get("dump", "bool", True)
    p.finish()
    with p.anchored("resolution"):
        u = spec.sample(box, res)

    def execute():
        payload = {"function": spec.to_dict(), "box": box, "resolution": res, "operator": op,
                   "options": opts}
        failures, out = [], None
        if op == "hessian":
            out = hessian_operator(u, opts["k"], method=opts["method"])
        elif op == "pk_hessian":
            out = pk_hessian_operator(u, opts["l"], opts["p"])
        elif op == "mollify":
            out = mollify(u, MollifierKernel(opts["h"], n))
        elif op == "kconvexity":
            rep = kconvexity_report(u, opts["k"], opts["tol"])
            payload["report"] = rep
            if opts["min_fraction"] is not None and rep.fraction < opts["min_fraction"]:
                failures.append(f"k-convex fraction {rep.fraction:.4f} below "
                                f"{opts['min_fraction']}")
            summary = [f"k-convex fraction {rep.fraction:.6f} over {rep.evaluated} nodes"]
        else:
            rep = weighted_norms(u, opts["sigma"], opts["alpha"], seed=run.seed)
            payload["report"] = {**rep.__dict__, "norm": rep.norm}
            summary = [f"sup {rep.sup_norm:.6g}, weighted Holder seminorm "
                       f"{rep.holder_seminorm:.6g}"]
        grids = {"input.grid": u} if dump else {}
        csvs = {}
        if out is not None:
            payload["stats"] = _stats(out.values)
            summary = [f"{op}: " + ", ".join(f"{key} {v:.6g}" for key, v in payload["stats"].items())]
            if expect is not None:
                finite = out.values[np.isfinite(out.values)]
                err = float(np.max(np.abs(finite - expect))) if finite.size else math.inf
                payload["expect"] = {"value": expect, "max_deviation": err, "tolerance": tol}
                if err > tol * max(1.0, abs(expect)):
                    failures.append(f"{op} deviates from {expect} by {err:.3e}")
            if dump:
                grids["output.grid"] = out
                names = [f"x{i + 1}" for i in range(n)] + ["value"]
                csvs["output_slice.csv"] = [dict(zip(names, r)) for r in slice_rows(out)]
        return Outcome(payload, failures, summary, csvs, grids)

    return execute


# ---------------------------------------------------------------- measure

def _integrity_tol(run: RunConfig):
    rel = run.tolerance("integrity", -1.0)
    return None if rel < 0 else (lambda total: rel * (abs(total) + 1.0))


def _test_functions(p: Section, n: int) -> list:
    out = []
    for sec in p.sections("test_functions"):
        with sec.anchored():
            eta = TestFunctionSpec.from_dict(sec.data)
        if eta.n != n:
            raise sec.error(None, f"test function lives in R^{eta.n}, expected R^{n}")
        sec.used.update(sec.data)
        out.append(eta)
    if not out:
        raise p.error("test_functions", "needs at least one test function")
    return out


def _measure(run: RunConfig):
    p = run.params
    mode = p.get("mode", "str", "total", choices=("total", "atom", "weak_continuity"))
    k_tol = _integrity_tol(run)
    if mode == "weak_continuity":
        return _weak_continuity(run, p, k_tol)
    spec = _function(p)
    n = spec.n
    k = p.order("k", n)
    box = _box(p, n)
    res = p.get("resolution", "int", 64, minimum=5)
    spacing = max((b - a) / (res - 1) for a, b in box)
    if mode == "total":
        hs = p.get("hs", "floats", minimum=0.0, strict_minimum=True)
        ball = p.section("ball", default=None) if p.has("ball") else None
        if ball is not None:
            center = _point(ball, "center", n, (0.0,) * n)
            radius = ball.get("radius", "float", minimum=0.0, strict_minimum=True)
            ball.finish()
    else:
        center = _point(p, "center", n, (0.0,) * n)
        radius = p.get("radius", "float", minimum=0.0, strict_minimum=True)
        hs = p.get("hs", "floats", None, minimum=0.0, strict_minimum=True)
        if hs is None:
            with p.anchored("radius"):
                hs = h_schedule(spacing, h_max=0.85 * radius)
        elif max(hs) >= radius:
            raise p.error("hs", f"radii must stay below the ball radius {radius}")
        expect = p.get("expect", "any", None)
        if expect == "flux":
            expect = flux_atom_mass(n, k)
        elif expect is not None:
            expect = p.get("expect", "float")
        rel = run.tolerance("atom", 0.02)
    p.finish()

    def execute():
        payload = {"function": spec.to_dict(), "k": k, "box": box, "resolution": res, "mode": mode}
        failures = []
        if mode == "total":
            rows = []
            for h in hs:
                mu = measure_approx(spec, k, h, box, res, tol=k_tol)
                row = {"h": h, "total": mu.total, "min_cell": mu.min_mass}
                if ball is not None:
                    row["ball_mass"] = mu.ball_mass(center, radius)
                rows.append(row)
            payload["masses"] = rows
            summary = [f"h = {r['h']:.4g}: total {r['total']:.10g}" for r in rows]
            return Outcome(payload, failures, summary, {"measure.csv": rows})
        kwargs = {} if k_tol is None else {"tol": k_tol}
        rep = atom_mass(spec, k, center, hs, radius, box, res, **kwargs)
        payload["atom"] = rep
        summary = [f"extrapolated ball mass {rep.extrapolated:.10g} (order {rep.order:.3g})"]
        if expect is not None:
            err = abs(rep.extrapolated - expect) / abs(expect) if expect else abs(rep.extrapolated)
            payload["expect"] = {"value": expect, "relative_error": err, "tolerance": rel}
            summary.append(f"expected {expect:.10g}, relative error {err:.3e}")
            if err > rel:
                failures.append(f"atom mass {rep.extrapolated:.6g} differs from {expect:.6g} "
                                f"by {err:.2%}")
        rows = [{"h": h, "mass": m} for h, m in zip(rep.hs, rep.masses)]
        return Outcome(payload, failures, summary, {"atom.csv": rows})

    return execute


def _weak_continuity(run: RunConfig, p: Section, k_tol):
    limit = _function(p, "limit")
    n = limit.n
    k = p.order("k", n)
    seq_raw = p.get("sequence", "list")
    with p.anchored("sequence"):
        sequence = family_generate(seq_raw)
    if len(sequence) < 2:
        raise p.error("sequence", "needs at least two members")
    if any(s.n != n for s in sequence):
        raise p.error("sequence", f"every member must live in R^{n}")
    etas = _test_functions(p, n)
    radial = p.get("radial", "bool", False)
    tolerance = run.tolerance("weak_continuity", 1e-2)
    inversions = p.get("max_inversions", "int", 1, minimum=0)
    if radial:
        R = p.get("R", "float", 1.0, minimum=0.0, strict_minimum=True)
        bps = p.get("breakpoints", "list", None)
        if bps is not None and len(bps) != len(sequence):
            raise p.error("breakpoints", "needs one list of radii per sequence member")
    else:
        box = _box(p, n)
        res = p.get("resolution", "int", 64, minimum=5)
        hs = p.get("hs", "floats", minimum=0.0, strict_minimum=True)
    p.finish()

    def execute():
        if radial:
            rep = radial_weak_continuity(sequence, limit, k, etas, R, tolerance, inversions,
                                         breakpoints=None if bps is None else [tuple(b) for b in bps])
        else:
            rep = weak_continuity_experiment(sequence, limit, k, etas, hs, box, res, tolerance,
                                             inversions, tol=k_tol)
        payload = {"limit": limit.to_dict(), "k": k, "sequence": [s.to_dict() for s in sequence],
                   "test_functions": [e.to_dict() for e in etas], "report": rep}
        failures = [] if rep.verdict == "converged" else [f"weak continuity verdict {rep.verdict}"]
        summary = [f"verdict {rep.verdict}; final relative discrepancy "
                   f"{max(rep.relative_final()):.3e}"]
        return Outcome(payload, failures, summary, {"weak_continuity.csv": rep.rows()})

    return execute


# ---------------------------------------------------------------- estimate

def _estimate_case(sec: Section, seed: int) -> EstimateCase:
    est = sec.get("estimate", "str", choices=ESTIMATES)
    spec = _function(sec, default=None)
    family = sec.get("family", "list", None)
    fam = ()
    if family is not None:
        with sec.anchored("family"):
            fam = tuple(family_generate(family))
        if not fam:
            raise sec.error("family", "needs at least one member")
    params = {key: v for key, v in sec.data.items() if key not in CASE_KEYS}
    n = spec.n if spec is not None else fam[0].n if fam else None
    if n is None and "n" in params:
        n = sec.get("n", "int", minimum=1, maximum=MAX_DIM)
    if "k" in params:
        if n is None:
            raise sec.error("k", "order k needs n (or a function) to be checked")
        k = sec.order("k", n)
        if "l" in params:
            if est == "plconvex_4_2":
                sec.order("l", max(1, k - 1))
            else:
                sec.order("l", k - 1, low=0)
    if spec is None and not fam and est in FUNCTION_ESTIMATES:
        if n is None or "k" not in params:
            raise sec.error(None, f"{est} needs a function or both n and k (for w_k)")
        spec = AnalyticFunctionSpec.wk(n, params["k"])
    for key in params:
        sec.used.add(key)
    for key in ("domain", "subdomain", "schedule", "probe", "label", "seed"):
        sec.used.add(key)
    sec.finish()
    with sec.anchored():
        return EstimateCase(est, spec, sec.data.get("domain"), sec.data.get("subdomain"),
                            params, sec.data.get("schedule"), fam,
                            bool(sec.data.get("probe", False)),
                            int(sec.data.get("seed", seed)), str(sec.data.get("label", "")))


def _estimate(run: RunConfig, jobs: int):
    p = run.params
    if p.get("builtin", "bool", False):
        p.finish()
        cases = builtin_cases()
        anchors = [p.error("builtin", "")] * len(cases)
    elif p.has("cases"):
        secs = p.sections("cases")
        p.finish()
        cases = [_estimate_case(s, run.seed) for s in secs]
        anchors = [s.error(None, "") for s in secs]
    else:
        cases = [_estimate_case(p, run.seed)]
        anchors = [p.error(None, "")]

    def execute():
        reports = _run_pool(verify, cases, jobs, anchors)
        failures, rows, summary = [], [], []
        for i, (case, rep) in enumerate(zip(cases, reports)):
            name = f"{case.estimate}" + (f" [{case.label}]" if case.label else "")
            line = f"{name}: {rep.verdict} (expected {rep.expected})"
            if rep.verdict == "growing" and rep.growth_rate is not None:
                line += f", rate {rep.growth_rate:.3g}"
            if rep.probe is not None:
                line += f"; probe {rep.probe.verdict}, rate {rep.probe.growth_rate or 0:.3g}"
            summary.append(line)
            if not rep.passed:
                failures.append(line)
            rows += [{"case": i, **r} for r in rep.rows()]
        payload = {"cases": [c.to_dict() for c in cases], "reports": reports}
        return Outcome(payload, failures, summary, {"estimates.csv": rows})

    return execute


def _run_pool(fn, items, jobs: int, anchors) -> list:
    """Apply ``fn`` to each item (in a process pool when ``jobs > 1``), keeping order.

    An exception from item ``i`` is re-raised as a :class:`ConfigError`
    anchored where that item was configured.
    """
    def fail(i, exc):
        where = anchors[i].where
        raise ConfigError(f"{type(exc).__name__}: {exc}", where) from None

    out = []
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn, item) for item in items]
            for i, fut in enumerate(futures):
                try:
                    out.append(fut.result())
                except (DomainError, PreconditionError, IntegrityError) as exc:
                    fail(i, exc)
        return out
    for i, item in enumerate(items):
        try:
            out.append(fn(item))
        except (DomainError, PreconditionError, IntegrityError) as exc:
            fail(i, exc)
    return out


# ---------------------------------------------------------------- dirichlet

def _manufactured(exact: AnalyticFunctionSpec, k: int, geometry: str, R: float):
    """Right-hand side and boundary data that make ``exact`` the solution."""
    n = exact.n

    def fk(pts):
        _, _, H = exact.evaluate(pts, derivatives=True)
        return elem_sym_all(np.linalg.eigvalsh(H))[..., k]

    if geometry == "box":
        return fk, exact
    e1 = np.eye(n)[0]
    psi = lambda r: fk(np.asarray(r, dtype=float)[..., None] * e1)
    return psi, float(exact(R * e1))


def _dirichlet(run: RunConfig):
    p = run.params
    geometry = p.get("geometry", "str", choices=("box", "radial"))
    n = p.get("n", "int", 2 if geometry == "box" else REQUIRED, minimum=1, maximum=MAX_DIM)
    if geometry == "box" and n != 2:
        raise p.error("n", "the grid solver supports n = 2 only")
    k = p.order("k", n)
    exact = _function(p, "exact", default=None)
    if exact is not None:
        if p.has("psi") or p.has("phi"):
            raise p.error("exact", "psi and phi are derived from the exact solution; drop them")
        if exact.n != n:
            raise p.error("exact", f"exact solution lives in R^{exact.n}, expected R^{n}")
        if geometry == "radial" and exact.radial_center() != (0.0,) * n:
            raise p.error("exact", "radial problems need a solution radial about the origin")
    psi = p.get("psi", "float", 0.0, minimum=0.0)
    phi = p.get("phi", "float", 0.0)
    atoms = []
    for sec in p.sections("atoms", default=None):
        atoms.append((_point(sec, "center", n), sec.get("mass", "float", minimum=0.0)))
        sec.finish()
    kw = {"tol": p.get("tol", "float", 1e-10, minimum=0.0, strict_minimum=True),
          "max_iter": p.get("max_iter", "int", 500, minimum=1)}
    if geometry == "box":
        kw["box"] = _box(p, 2)
        kw["resolution"] = p.get("resolution", "int", 65, minimum=5)
        kw["method"] = p.get("method", "str", "preconditioned",
                             choices=("preconditioned", "explicit"))
    else:
        kw["R"] = p.get("R", "float", 1.0, minimum=0.0, strict_minimum=True)
    md = p.section("measure_data", default=None) if p.has("measure_data") else None
    if md is not None:
        levels = md.get("levels", "int", 4, minimum=1)
        h0 = md.get("h0", "float", None, minimum=0.0, strict_minimum=True)
        ref = _function(md, "reference", default=None)
        md.finish()
        if not atoms:
            raise p.error("measure_data", "needs at least one atom")
    compare = p.get("comparison", "bool", True)
    dump = p.get("dump", "bool", True)
    sol_tol = run.tolerance("solution", -1.0)
    p.finish()
    if exact is not None:
        psi, phi = _manufactured(exact, k, geometry, kw.get("R", 1.0))
    with p.anchored():
        spec = DirichletProblemSpec(geometry, n, k, psi, phi, atoms, **kw)

    def reference_fn():
        if ref is None:
            return None
        if geometry == "radial":
            e1 = np.eye(n)[0]
            return lambda r: ref(np.asarray(r, dtype=float)[..., None] * e1)
        return ref

    def compare_one(rep):
        if geometry == "radial":
            return radial_comparison_check(rep, n, kw["R"] / math.sqrt(n))
        return comparison_check(rep.solution, harmonic_extension(rep.solution), k=k)

    def execute():
        failures, csvs, grids = [], {}, {}
        payload = {"geometry": geometry, "n": n, "k": k, "atoms": atoms,
                   "exact": None if exact is None else exact.to_dict()}
        if md is not None:
            mrep = solve_measure_data(spec, levels, h0, reference_fn())
            reports = mrep.solutions
            payload["measure_data"] = {k: v for k, v in mrep.to_dict().items() if k != "solves"}
            csvs["measure_data.csv"] = mrep.rows()
            if mrep.convergence.verdict != "converged":
                failures.append(f"measure-data sequence {mrep.convergence.verdict}")
        else:
            reports = [solve_radial(spec) if geometry == "radial" else solve_grid(spec)]
        payload["solves"] = reports
        for i, rep in enumerate(reports):
            if rep.status != "converged":
                failures.append(f"solve {i}: status {rep.status}")
        final = reports[-1]
        summary = [f"{len(reports)} solve(s); final residual {final.residual:.3e}, "
                   f"status {final.status}"]
        if md is not None:
            c = payload["measure_data"]
            line = f"successive L1 distances {', '.join(f'{x:.3e}' for x in c['successive_l1'])}"
            if c["reference_l1"]:
                line += f"; final L1 to the reference {c['reference_l1'][-1]:.3e}"
            summary.append(line)
        if exact is not None:
            u = final.solution
            if geometry == "box":
                err = float(np.max(np.abs(u.values - exact(u.points))))
            else:
                e1 = np.eye(n)[0]
                err = float(np.max(np.abs(u.u - exact(u.r[:, None] * e1))))
            payload["sup_error"] = err
            summary.append(f"sup error against the exact solution {err:.3e}")
            if sol_tol >= 0 and err > sol_tol:
                failures.append(f"sup error {err:.3e} exceeds {sol_tol:.1e}")
        if compare:
            results = []
            for i, rep in enumerate(reports):
                c = compare_one(rep)
                results.append({"solve": i, "passed": c.passed, "boundary_ordered": c.boundary_ordered,
                                "violations": int(len(c.violations)), "max_excess": c.max_excess})
                if not (c.passed and c.boundary_ordered):
                    failures.append(f"solve {i}: comparison check failed")
            payload["comparison"] = results
            summary.append(f"comparison: {sum(r['passed'] for r in results)}/{len(results)} pass")
        if dump:
            if geometry == "box":
                grids["solution.grid"] = final.solution
                csvs["solution_slice.csv"] = [dict(zip(("x1", "x2", "value"), r))
                                              for r in slice_rows(final.solution)]
            else:
                prof = final.solution
                csvs["profile.csv"] = [{"r": r, "u": v, "du": d}
                                       for r, v, d in zip(prof.r, prof.u, prof.du)]
        return Outcome(payload, failures, summary, csvs, grids)

    return execute


# ---------------------------------------------------------------- suite

def _run_entry(args):
    entry_id, seed = args
    entry = next(e for e in suite.CATALOG if e.id == entry_id)
    return entry.runner(seed=seed)


def _suite(run: RunConfig, jobs: int):
    p = run.params
    ids = [e.id for e in suite.CATALOG]
    only = p.get("only", "list", None)
    if only is not None:
        unknown = [x for x in only if x not in ids]
        if unknown:
            raise p.error("only", f"unknown criterion {unknown[0]!r}; known: {', '.join(ids)}")
    p.finish()
    chosen = [i for i in ids if only is None or i in only]

    def execute():
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_entry, [(i, run.seed) for i in chosen]))
            for r in results:
                print(r.line(), flush=True)
        else:
            results = []
            for i in chosen:
                results.append(_run_entry((i, run.seed)))
                print(results[-1].line(), flush=True)
        payload = {"criteria": [{k: v for k, v in r.to_dict().items() if k != "elapsed"}
                                for r in results]}
        rows = [{"criterion": r.id, "check": c["name"], "value": c["value"],
                 "target": c["target"], "tolerance": c["tolerance"], "ok": c["ok"]}
                for r in results for c in r.checks]
        failures = [r.line() for r in results if not r.passed]
        width = max(len(r.id) for r in results)
        summary = [f"{'criterion':<{width}}  result  time", "-" * (width + 16)]
        summary += [f"{r.id:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.elapsed:6.1f}s"
                    for r in results]
        summary.append(f"{sum(r.passed for r in results)}/{len(results)} criteria pass")
        return Outcome(payload, failures, summary, {"suite.csv": rows},
                       metadata={"timings": {r.id: r.elapsed for r in results}})

    return execute


# ---------------------------------------------------------------- entry point

def catalog_lines() -> list:
    lines = [f"{len(suite.CATALOG)} acceptance criteria"]
    for e in suite.CATALOG:
        lines.append(f"{e.id}: {e.anchor}")
        lines += [f"    {c}" for c in e.cases]
    return lines


def prepare(run: RunConfig, jobs: int = 1):
    """Validate the run's parameters and return a thunk that executes it."""
    if run.command == "symfunc":
        thunk = _symfunc(run)
    elif run.command == "cone":
        thunk = _cone(run)
    elif run.command == "fieldop":
        thunk = _fieldop(run)
    elif run.command == "measure":
        thunk = _measure(run)
    elif run.command == "estimate":
        thunk = _estimate(run, jobs)
    elif run.command == "dirichlet":
        thunk = _dirichlet(run)
    else:
        thunk = _suite(run, jobs)
    run.tolerances.finish()
    return thunk


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="khessian", description="Run a k-Hessian experiment from a YAML config.")
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="optional; must match the config's command when both are given")
    ap.add_argument("--config", help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides $KHESSIAN_OUT and the config)")
    ap.add_argument("--seed", type=int, help="override the config's seed")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for independent cases")
    ap.add_argument("--list", action="store_true", help="print the acceptance catalog and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print("\n".join(catalog_lines()))
        return 0
    if not args.config:
        print("khessian: error: --config is required (or use --list)", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("khessian: error: --jobs must be at least 1", file=sys.stderr)
        return 1
    if args.seed is not None and args.seed < 0:
        print("khessian: error: --seed must be nonnegative", file=sys.stderr)
        return 1
    try:
        run = load_config(args.config, args.command, args.seed)
        thunk = prepare(run, args.jobs)
        writer = OutputWriter(resolve_out_dir(args.out, run.out), run.path, run.sha256,
                              run.command, run.seed)
        t0 = time.perf_counter()
        outcome = thunk()
        elapsed = time.perf_counter() - t0
        for name, u in outcome.grids.items():
            writer.grid(name, u)
        for name, rows in outcome.csv.items():
            writer.csv(name, rows)
        code = 2 if outcome.failures else 0
        status = {"exit_code": code, "failures": outcome.failures}
        path = writer.report(outcome.payload, status,
                             {"elapsed": elapsed, "jobs": args.jobs, **outcome.metadata})
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, PreconditionError, IntegrityError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1
    for line in outcome.summary:
        print(line)
    for line in outcome.failures:
        print(f"verdict failure: {line}", file=sys.stderr)
    print(f"report written to {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
