"""Best-first branch-and-bound over the binary columns of a :class:`MipInstance`."""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .simplex import LpError, solve_lp

log = logging.getLogger(__name__)

MIP_STATUSES = ("optimal", "gap_limit", "node_limit", "time_limit", "infeasible")


class BnbError(RuntimeError):
    """An LP failure inside the tree, annotated with the node that hit it."""


@dataclass(frozen=True)
class BnbOptions:
    abs_gap: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    branching: str = "most-fractional"
    integer_tol: float = 1e-6

    def __post_init__(self):
        if self.abs_gap < 0 or self.rel_gap < 0:
            raise ValueError("gaps must be >= 0")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.branching != "most-fractional":
            raise ValueError(f"unsupported branching rule {self.branching!r}")
        if not 0 < self.integer_tol < 0.5:
            raise ValueError("integer_tol must lie in (0, 0.5)")


@dataclass(frozen=True)
class NodeRecord:
    id: int
    parent: int | None
    depth: int
    bound: float
    fractional: int
    event: str  # branched, integral, pruned, infeasible, rejected

    def line(self) -> str:
        parent = "-" if self.parent is None else self.parent
        return f"{self.id} {parent} {self.depth} {self.bound!r} {self.fractional} {self.event}"


@dataclass
class MipResult:
    status: str
    x: np.ndarray | None
    objective: float
    best_bound: float
    nodes: int
    lp_iterations: int = 0
    node_log: list[NodeRecord] = field(default_factory=list)
    bound_trace: list[float] = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.x is None:
            return math.inf
        return max(self.objective - self.best_bound, 0.0)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "best_bound": self.best_bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "lp_iterations": self.lp_iterations,
        }


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    id: int = field(compare=False)
    parent: int | None = field(compare=False)
    depth: int = field(compare=False)
    fixings: dict = field(compare=False)
    branch_col: int = field(compare=False)
    lp: object = field(compare=False, default=None)


def solve_mip(instance, opts: BnbOptions | None = None, *,
              accept: Callable[[np.ndarray], bool] | None = None,
              log_stream: TextIO | None = None) -> MipResult:
    """Minimize ``instance`` over its binary columns.

    Children are solved as soon as they are created so the queue is keyed by
    their own relaxation bound.  The branching column is the most fractional
    binary within the highest ``instance.priority`` class present.
    ``accept`` may veto an integral LP point (used to demand validate-level
    feasibility); vetoed points are dropped.
    """
    opts = opts or BnbOptions()
    start = time.perf_counter()
    binaries = np.flatnonzero(instance.integer)
    tol = opts.integer_tol
    prio = instance.priority[binaries]

    incumbent_x = None
    incumbent = math.inf
    heap: list[_Node] = []
    records: list[NodeRecord] = []
    trace: list[float] = []
    counter = {"nodes": 0, "iters": 0}

    def record(rec: NodeRecord):
        records.append(rec)
        if log_stream is not None:
            log_stream.write(rec.line() + "\n")

    def evaluate(parent: _Node | None, fixings: dict):
        """Solve one node; push it, adopt it as incumbent, or drop it."""
        nonlocal incumbent, incumbent_x
        node_id = counter["nodes"]
        counter["nodes"] += 1
        depth = 0 if parent is None else parent.depth + 1
        parent_id = None if parent is None else parent.id
        try:
            lp = solve_lp(instance, fixings, warm_start=None if parent is None else parent.lp)
        except LpError as err:
            raise BnbError(f"node {node_id} (depth {depth}, fixings {sorted(fixings.items())}): {err}") from err
        counter["iters"] += lp.iterations
        if lp.status == "infeasible":
            record(NodeRecord(node_id, parent_id, depth, math.inf, 0, "infeasible"))
            return
        if lp.status != "optimal":
            raise BnbError(f"node {node_id} (depth {depth}): LP status {lp.status}")
        bound = lp.objective if parent is None else max(lp.objective, parent.bound)
        xb = lp.x[binaries]
        frac = np.abs(xb - np.round(xb))
        n_frac = int(np.count_nonzero(frac > tol))
        if bound >= incumbent - opts.abs_gap:
            record(NodeRecord(node_id, parent_id, depth, bound, n_frac, "pruned"))
            return
        if n_frac == 0:
            x = lp.x.copy()
            x[binaries] = np.round(xb)
            if accept is not None and not accept(x):
                log.warning("node %d: integral point rejected by the acceptance check", node_id)
                record(NodeRecord(node_id, parent_id, depth, bound, 0, "rejected"))
                return
            incumbent, incumbent_x = float(instance.c @ x), x
            record(NodeRecord(node_id, parent_id, depth, bound, 0, "integral"))
            return
        # priority class first, then most fractional; argmax keeps the lowest index on ties
        score = np.where(frac > tol, np.minimum(frac, 1.0 - frac) + prio, -1.0)
        col = int(binaries[int(np.argmax(score))])
        record(NodeRecord(node_id, parent_id, depth, bound, n_frac, "open"))
        heapq.heappush(heap, _Node(bound, node_id, node_id, parent_id, depth, fixings, col, lp))

    evaluate(None, {})
    status = None
    best_bound = incumbent
    while heap:
        top = heap[0]
        best_bound = min(top.bound, incumbent)
        trace.append(best_bound)
        if top.bound >= incumbent - opts.abs_gap:
            heap.clear()
            break
        if incumbent_x is not None and incumbent - top.bound <= opts.rel_gap * abs(incumbent):
            status = "gap_limit"
            break
        if opts.node_limit is not None and counter["nodes"] >= opts.node_limit:
            status = "node_limit"
            break
        if opts.time_limit is not None and time.perf_counter() - start >= opts.time_limit:
            status = "time_limit"
            break
        node = heapq.heappop(heap)
        for value in (0.0, 1.0):
            evaluate(node, {**node.fixings, node.branch_col: (value, value)})
        node.lp = None

    if status is None:
        best_bound = incumbent
        status = "optimal" if incumbent_x is not None else "infeasible"
    if incumbent_x is None:
        objective = math.nan
        if status == "infeasible":
            best_bound = math.inf
    else:
        objective = incumbent
    trace.append(best_bound)
    return MipResult(status, incumbent_x, objective, best_bound, counter["nodes"],
                     counter["iters"], records, trace)
