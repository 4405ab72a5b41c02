"""Command-line front end: problem JSON in, JSON (or CSV for circle sweeps) out.

Exit codes: 0 success, 2 schema error, 3 numerical non-stabilization,
4 precondition violation (Legendre failure, bad boundary data, ...).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass

import jsonschema
import numpy as np

from .graph import BoundaryCondition, Edge, GraphProblem, MetricGraph
from .jacobi import IntegrationError, LegendreError, LQEdgeData, flow, jacobi_from_lq
from .maslov import triple_index
from .oracle import NonStabilizationError, oracle_index
from .sampling import random_lagrangian
from .symplectic import DEFAULT_TOL, LagrangianFrame, SymplecticMatrix, Tolerances, standard_space
from .theorems import (
    IterationInput,
    circle_jumps,
    circle_sweep,
    compare_boundaries,
    discretization_index,
    filtration_contributions,
    iteration_index_I,
    iteration_index_II,
)

log = logging.getLogger("graphmorse")

TASKS = ("maslov", "compare", "discretize", "iterate", "circle", "filtrate", "oracle")
FORMAT_VERSION = 1

EXIT_OK, EXIT_SCHEMA, EXIT_STABILITY, EXIT_PRECONDITION = 0, 2, 3, 4


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class PreconditionError(ValueError):
    pass


# --- schema ---------------------------------------------------------------

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_matrix_or_number = {"anyOf": [{"type": "number"}, _matrix]}
_time_matrix = {
    "anyOf": [
        _matrix_or_number,
        {
            "type": "object",
            "required": ["breakpoints", "pieces"],
            "properties": {
                "breakpoints": {"type": "array", "items": {"type": "number"}},
                "pieces": {"type": "array"},
            },
        },
    ]
}
_vertex_ref = {"anyOf": [{"type": "integer", "minimum": 0}, {"type": "string"}]}
_boundary = {
    "type": "object",
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["fixed", "free", "flags", "per_vertex", "general"]},
        "data": {},
    },
}


def problem_schema(strict: bool = False) -> dict:
    closed = {"additionalProperties": False} if strict else {}
    lq = {
        "type": "object",
        "required": ["B", "R"],
        "properties": {k: _time_matrix for k in "ABWSR"},
        **closed,
    }
    edge = {
        "type": "object",
        "required": ["src", "tgt", "length", "lq"],
        "properties": {
            "src": _vertex_ref,
            "tgt": _vertex_ref,
            "length": {"type": "number", "exclusiveMinimum": 0},
            "lq": lq,
        },
        **closed,
    }
    return {
        "type": "object",
        "required": ["version", "task"],
        "properties": {
            "version": {"const": FORMAT_VERSION},
            "vertices": {"type": "array", "items": {"type": ["string", "integer"]}},
            "edges": {"type": "array", "items": edge, "minItems": 1},
            "boundary": {**_boundary, **closed},
            "task": {
                "type": "object",
                "required": ["name"],
                "properties": {"name": {"enum": list(TASKS)}},
            },
            "tolerances": {
                "type": "object",
                "properties": {
                    "rank": {"type": "number", "exclusiveMinimum": 0},
                    "eig": {"type": "number", "exclusiveMinimum": 0},
                    "symp": {"type": "number", "exclusiveMinimum": 0},
                },
                **closed,
            },
        },
        **closed,
    }


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate(doc: dict, strict: bool = False) -> None:
    v = jsonschema.Draft202012Validator(problem_schema(strict))
    errs = sorted(v.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errs:
        e = errs[0]
        raise SchemaError(_path(e.absolute_path), e.message)


# --- problem assembly -------------------------------------------------------

def _as_matrix(x, path: str, shape=None) -> np.ndarray:
    try:
        M = np.atleast_2d(np.asarray(x, dtype=float))
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, f"not a numeric matrix ({exc})") from None
    if M.ndim != 2:
        raise SchemaError(path, "expected a matrix")
    if shape is not None and M.shape != shape:
        raise SchemaError(path, f"shape {M.shape}, expected {shape}")
    return M


def _complex_matrix(x, path: str) -> np.ndarray:
    if isinstance(x, dict):
        re = _as_matrix(x.get("re"), path + ".re")
        im = _as_matrix(x.get("im", np.zeros_like(re)), path + ".im", re.shape)
        return re + 1j * im
    return _as_matrix(x, path)


@dataclass
class Problem:
    doc: dict
    graph: MetricGraph | None
    lq: tuple
    boundary: BoundaryCondition | None
    tol: Tolerances

    @property
    def n(self) -> int:
        return self.lq[0].n

    def graph_problem(self) -> GraphProblem:
        if self.graph is None:
            raise SchemaError("$.edges", "this task needs a graph")
        return GraphProblem(self.graph, self.lq, self.boundary)


def _vertex_index(ref, names, path: str) -> int:
    if isinstance(ref, str):
        if ref not in names:
            raise SchemaError(path, f"no vertex named {ref!r}")
        return names.index(ref)
    if not 0 <= ref < len(names):
        raise SchemaError(path, f"no vertex {ref}")
    return int(ref)


def parse_boundary(spec: dict, n: int, n_vertices: int, path: str = "$.boundary") -> BoundaryCondition:
    mode = spec["mode"]
    data = spec.get("data")
    if mode == "fixed":
        return BoundaryCondition.fixed(n_vertices, n)
    if mode == "free":
        return BoundaryCondition.from_flags([True] * n_vertices, n)
    if mode == "flags":
        if not isinstance(data, list) or len(data) != n_vertices or not all(isinstance(f, bool) for f in data):
            raise SchemaError(path + ".data", f"expected {n_vertices} booleans")
        return BoundaryCondition.from_flags(data, n)
    if mode == "per_vertex":
        if not isinstance(data, list) or len(data) != n_vertices:
            raise SchemaError(path + ".data", f"expected one frame per vertex ({n_vertices})")
        frames = []
        for v, F in enumerate(data):
            p = f"{path}.data[{v}]"
            if F is None or F == []:
                frames.append(np.zeros((n, 0)))
                continue
            M = np.asarray(F, dtype=float)
            if M.ndim == 1 and n == 1:
                M = M[None, :]
            if M.ndim != 2 or M.shape[0] != n:
                raise SchemaError(p, f"expected an {n} x d frame")
            frames.append(M)
        try:
            return BoundaryCondition.per_vertex(frames, n)
        except ValueError as exc:
            raise PreconditionError(f"graph-boundary: {path}: {exc}") from None
    F = _as_matrix(data, path + ".data")
    if F.shape[0] != n * n_vertices:
        raise SchemaError(path + ".data", f"expected {n * n_vertices} rows")
    try:
        return BoundaryCondition("general", n, F)
    except ValueError as exc:
        raise PreconditionError(f"graph-boundary: {path}: {exc}") from None


def load_problem(doc: dict, strict: bool = False, overrides: dict | None = None) -> Problem:
    validate(doc, strict)
    tol_doc = dict(doc.get("tolerances", {}))
    tol_doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    tol = DEFAULT_TOL.with_overrides(
        rank_atol=tol_doc.get("rank"), eig_atol=tol_doc.get("eig"), symp=tol_doc.get("symp")
    )
    if "edges" not in doc:
        return Problem(doc, None, (), None, tol)
    names = list(doc.get("vertices") or [])
    edges, lqs = [], []
    if not names:
        raise SchemaError("$.vertices", "graph problems need a vertex list")
    for i, e in enumerate(doc["edges"]):
        p = f"$.edges[{i}]"
        s = _vertex_index(e["src"], names, p + ".src")
        t = _vertex_index(e["tgt"], names, p + ".tgt")
        L = float(e["length"])
        edges.append(Edge(s, t, L))
        spec = e["lq"]
        B = spec["B"]
        Bm = B if isinstance(B, dict) else _as_matrix(B, p + ".lq.B")
        n, k = (Bm.shape if not isinstance(B, dict) else np.asarray(B["pieces"][0]).shape[-2:])
        default = {"A": np.zeros((n, n)), "W": np.zeros((n, n)), "S": np.zeros((n, k))}
        parts = {}
        for name in "ABWSR":
            x = spec.get(name, default.get(name))
            parts[name] = x if isinstance(x, dict) else _as_matrix(x, f"{p}.lq.{name}")
        try:
            lqs.append(LQEdgeData(**parts, t0=0.0, t1=L))
        except LegendreError as exc:
            raise PreconditionError(f"jacobi-flow: {p}.lq: {exc}") from None
        except ValueError as exc:
            raise SchemaError(p + ".lq", str(exc)) from None
    ns = {d.n for d in lqs}
    if len(ns) != 1:
        raise SchemaError("$.edges", "all edges need the same state dimension")
    try:
        graph = MetricGraph(tuple(names), tuple(edges))
    except (IndexError, ValueError) as exc:
        raise SchemaError("$.edges", str(exc)) from None
    bspec = doc.get("boundary", {"mode": "fixed"})
    bc = parse_boundary(bspec, ns.pop(), len(names))
    return Problem(doc, graph, tuple(lqs), bc, tol)


# --- tasks ------------------------------------------------------------------

def _edge_of(prob: Problem, params: dict, path: str) -> int:
    e = params.get("edge", 0)
    if not isinstance(e, int) or not 0 <= e < len(prob.lq):
        raise SchemaError(path + ".edge", f"no edge {e!r}")
    return e


def _monodromy(prob: Problem, params: dict, path: str) -> SymplecticMatrix:
    if "monodromy" in params:
        M = _as_matrix(params["monodromy"], path + ".monodromy")
        if M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise SchemaError(path + ".monodromy", "expected a square matrix of even size")
        try:
            return SymplecticMatrix(standard_space(M.shape[0] // 2), M, prob.tol)
        except ValueError as exc:
            raise PreconditionError(f"symplectic-core: {path}.monodromy: {exc}") from None
    e = _edge_of(prob, params, path)
    return flow(jacobi_from_lq(prob.lq[e]), prob.tol)


def task_maslov(prob: Problem, params: dict, seed: int) -> dict:
    path = "$.task"
    if "frames" in params:
        frames = params["frames"]
        if not isinstance(frames, list) or len(frames) != 3:
            raise SchemaError(path + ".frames", "expected three Lagrangian frames")
        mats = [_complex_matrix(F, f"{path}.frames[{i}]") for i, F in enumerate(frames)]
        dim = mats[0].shape[0]
        field = "complex" if any(np.iscomplexobj(M) for M in mats) else "real"
        if dim % 2 or any(M.shape[0] != dim for M in mats):
            raise SchemaError(path + ".frames", "frames need a common even row count")
        space = standard_space(dim // 2, field)
        try:
            Ls = [LagrangianFrame(space, M, prob.tol) for M in mats]
        except ValueError as exc:
            raise PreconditionError(f"symplectic-core: {exc}") from None
    else:
        n = int(params.get("n", 1))
        rng = np.random.default_rng(seed)
        space = standard_space(n)
        Ls = [random_lagrangian(space, rng) for _ in range(3)]
    res = triple_index(*Ls, prob.tol, bool(params.get("reduce_first", False)))
    return {
        "index_neg": res.index_neg,
        "signature": res.signature,
        "kernel_dim": res.kernel_dim,
        "domain_dim": res.domain_dim,
    }


def task_compare(prob: Problem, params: dict, seed: int) -> dict:
    gp = prob.graph_problem()
    nv = len(gp.graph.vertices)
    if "target" not in params:
        raise SchemaError("$.task.target", "compare needs a target boundary")
    ref = parse_boundary(params["reference"], gp.n, nv, "$.task.reference") if "reference" in params else gp.boundary
    tgt = parse_boundary(params["target"], gp.n, nv, "$.task.target")
    out = {"index_difference": compare_boundaries(gp, ref, tgt, prob.tol)}
    if params.get("check_oracle"):
        a = oracle_index(gp.with_boundary(ref)).index
        b = oracle_index(gp.with_boundary(tgt)).index
        out["oracle_difference"] = b - a
    return out


def task_discretize(prob: Problem, params: dict, seed: int) -> dict:
    e = _edge_of(prob, params, "$.task")
    sys_ = jacobi_from_lq(prob.lq[e])
    part = params.get("partition")
    if part is None:
        part = np.linspace(sys_.t0, sys_.t1, int(params.get("segments", 8)) + 1).tolist()
    try:
        res = discretization_index(sys_, part, bool(params.get("count_kernel", False)), prob.tol)
    except ValueError as exc:
        raise SchemaError("$.task.partition", str(exc)) from None
    return {
        "lower_bound": res.lower_bound,
        "exact": res.exact,
        "terms": list(res.terms),
        "kernels": list(res.kernels),
    }


def _periodic_problems(prob: Problem, e: int, k: int):
    """The loop edge as a closed orbit, and its k-fold cover as a k-cycle."""
    d = prob.lq[e]
    L = d.t1 - d.t0
    one = GraphProblem(MetricGraph(("v",), (Edge(0, 0, L),)), (d,),
                       BoundaryCondition.from_flags([True], d.n))
    cyc = MetricGraph(tuple(range(k)), tuple(Edge(j, (j + 1) % k, L) for j in range(k)))
    many = GraphProblem(cyc, (d,) * k, BoundaryCondition.from_flags([True] * k, d.n))
    return one, many


def task_iterate(prob: Problem, params: dict, seed: int) -> dict:
    k = params.get("k")
    if not isinstance(k, int):
        raise SchemaError("$.task.k", "iterate needs an integer k")
    Theta = _monodromy(prob, params, "$.task")
    omega = params.get("omega")
    if omega is not None:
        omega = complex(*omega) if isinstance(omega, list) else complex(omega)
    try:
        inp = IterationInput(Theta, k, omega)
    except ValueError as exc:
        raise PreconditionError(f"index-theorems: $.task: {exc}") from None
    out = {"k": k, "formula_I": iteration_index_I(inp, prob.tol),
           "formula_II": iteration_index_II(inp, prob.tol)}
    if params.get("check_oracle"):
        if "monodromy" in params:
            raise SchemaError("$.task.check_oracle", "the oracle needs edge data, not a monodromy")
        one, many = _periodic_problems(prob, _edge_of(prob, params, "$.task"), k)
        out["oracle_difference"] = oracle_index(many).index - k * oracle_index(one).index
    return out


def task_circle(prob: Problem, params: dict, seed: int) -> str:
    Theta = _monodromy(prob, params, "$.task")
    samples = int(params.get("samples", 1024))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z_re", "z_im", "index"])
    if params.get("rows", "jumps") == "sweep":
        angles, idx = circle_sweep(Theta, samples, prob.tol)
        for a, i in zip(angles, idx):
            w.writerow([_fmt(np.cos(a)), _fmt(np.sin(a)), int(i)])
    else:
        for j in circle_jumps(Theta, samples, prob.tol):
            w.writerow([_fmt(j.z.real), _fmt(j.z.imag), j.after])
    return buf.getvalue()


def task_filtrate(prob: Problem, params: dict, seed: int) -> dict:
    gp = prob.graph_problem()
    names = list(gp.graph.vertices)
    order = params.get("order", list(range(len(names))))
    idx = [_vertex_index(v, names, f"$.task.order[{i}]") for i, v in enumerate(order)]
    try:
        steps = filtration_contributions(gp, idx, prob.tol)
    except ValueError as exc:
        raise SchemaError("$.task.order", str(exc)) from None
    return {
        "steps": [{"vertex": s.vertex, "contribution": s.contribution} for s in steps],
        "total": sum(s.contribution for s in steps),
    }


def task_oracle(prob: Problem, params: dict, seed: int) -> dict:
    gp = prob.graph_problem()
    res = oracle_index(gp, params.get("mesh"), int(params.get("max_mesh", 1024)))
    return res.as_dict()


HANDLERS = {
    "maslov": task_maslov,
    "compare": task_compare,
    "discretize": task_discretize,
    "iterate": task_iterate,
    "circle": task_circle,
    "filtrate": task_filtrate,
    "oracle": task_oracle,
}


# --- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            return None
        # six digits keeps goldens stable across BLAS builds
        return float(f"{float(obj):.6g}")
    return obj


def run_task(doc: dict, task: str | None = None, seed: int = 0, strict: bool = False,
             overrides: dict | None = None, mesh: int | None = None):
    """Validate, dispatch and return the task output (dict or CSV text)."""
    prob = load_problem(doc, strict, overrides)
    section = doc["task"]
    name = task or section["name"]
    if name not in HANDLERS:
        raise SchemaError("$.task.name", f"unknown task {name!r}")
    # flat keys belong to the file's own task; a block named after a task
    # holds parameters for running the same file with --task
    params = {}
    if name == section["name"]:
        params.update({k: v for k, v in section.items() if k != "name" and k not in TASKS})
    block = section.get(name, {})
    if not isinstance(block, dict):
        raise SchemaError(f"$.task.{name}", "expected an object of task parameters")
    params.update(block)
    if mesh is not None:
        params["mesh"] = mesh
    out = HANDLERS[name](prob, params, seed)
    if isinstance(out, str):
        return out
    return {"version": FORMAT_VERSION, "task": name, "result": _clean(out)}


def build_parser() -> argparse.ArgumentParser:
    t = DEFAULT_TOL
    p = argparse.ArgumentParser(
        prog="graphmorse",
        description="Morse indices of LQ problems on metric graphs via Maslov indices.",
    )
    p.add_argument("task_pos", nargs="?", choices=TASKS, metavar="TASK",
                   help="task to run (overrides the file); one of " + ", ".join(TASKS))
    p.add_argument("--in", dest="inp", required=True, help="problem JSON file, '-' for stdin, or an inline JSON object")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--task", choices=TASKS, help="same as the positional TASK")
    p.add_argument("--seed", type=int, default=0, help="seed for random instances (default 0)")
    p.add_argument("--tol-rank", type=float, help=f"relative rank floor (default {t.rank_atol:g})")
    p.add_argument("--tol-eig", type=float, help=f"eigenvalue sign floor (default {t.eig_atol:g})")
    p.add_argument("--tol-symp", type=float, help=f"symplectic defect bound (default {t.symp:g})")
    p.add_argument("--mesh", type=int, help="oracle starting mesh (default: from edge data)")
    p.add_argument("--strict", action="store_true", help="reject unknown fields")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="graphmorse: %(message)s")
    try:
        if args.inp == "-":
            text = sys.stdin.read()
        elif args.inp.lstrip().startswith("{"):
            text = args.inp  # inline document
        else:
            text = open(args.inp, encoding="utf-8").read()
        doc = json.loads(text)
    except OSError as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_SCHEMA
    except json.JSONDecodeError as exc:
        log.error("schema: $: invalid JSON (%s)", exc)
        return EXIT_SCHEMA
    if not isinstance(doc, dict):
        log.error("schema: $: top level must be an object")
        return EXIT_SCHEMA
    overrides = {"rank": args.tol_rank, "eig": args.tol_eig, "symp": args.tol_symp}
    try:
        out = run_task(doc, args.task or args.task_pos, args.seed, args.strict, overrides, args.mesh)
    except SchemaError as exc:
        log.error("schema: %s", exc)
        return EXIT_SCHEMA
    except (NonStabilizationError, IntegrationError) as exc:
        log.error("hessian-oracle/jacobi-flow: %s", exc)
        return EXIT_STABILITY
    except (PreconditionError, LegendreError) as exc:
        log.error("precondition: %s", exc)
        return EXIT_PRECONDITION
    except ValueError as exc:
        log.error("precondition: %s", exc)
        return EXIT_PRECONDITION
    text = out if isinstance(out, str) else json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
