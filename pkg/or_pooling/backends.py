"""
OR Pooling — Solver Backends
============================
SolverBackend:  interface every MILP binding implements
HighsBackend:   HiGHS through scipy.optimize.milp (default)
CbcBackend:     COIN-OR CBC through PuLP
get_backend():  name → backend, honouring OR_POOLING_SOLVER
write_lp():     export a model in LP text format (via PuLP)

Backends are not assumed reentrant: run one session per thread.
"""

import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import BackendUnavailable
from .models import SolverLimits, SolveStatus

try:
    import pulp
except ImportError:     # CBC backend and LP export become unavailable
    pulp = None

logger = logging.getLogger(__name__)

ENV_VAR = "OR_POOLING_SOLVER"
DEFAULT_BACKEND = "highs"

# a solve whose relative gap is below this counts as proven optimal
PROVEN_GAP = 1e-9


@dataclass
class BackendResult:
    status: SolveStatus
    values: np.ndarray      # None when there is no incumbent
    objective: float
    bound: float
    message: str = ""


class SolverBackend:
    name = "abstract"
    capabilities = frozenset()

    def available(self) -> bool:
        raise NotImplementedError

    def run(self, model, limits: SolverLimits) -> BackendResult:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


# ═══════════════════════════════════════════════════════════════
# HiGHS
# ═══════════════════════════════════════════════════════════════

class HighsBackend(SolverBackend):
    name = "highs"
    capabilities = frozenset({"mip_gap_control", "time_limit"})

    def available(self) -> bool:
        try:
            from scipy.optimize import milp  # noqa: F401
        except ImportError:
            return False
        return True

    def run(self, model, limits: SolverLimits) -> BackendResult:
        from scipy.optimize import Bounds, LinearConstraint, milp

        arr = model.to_arrays()
        constraints = ()
        if arr["A"].shape[0]:
            constraints = LinearConstraint(arr["A"], arr["row_lo"], arr["row_hi"])
        res = milp(
            arr["c"],
            constraints=constraints,
            integrality=arr["integrality"],
            bounds=Bounds(arr["lb"], arr["ub"]),
            options={"disp": False, "time_limit": limits.time_limit,
                     "mip_rel_gap": limits.rel_gap},
        )
        values = None if res.x is None else np.asarray(res.x)
        objective = float(res.fun) if res.fun is not None else float("nan")
        bound = getattr(res, "mip_dual_bound", None)
        bound = objective if bound is None else float(bound)

        if res.status == 0:
            gap = getattr(res, "mip_gap", 0.0) or 0.0
            status = SolveStatus.OPTIMAL if gap <= PROVEN_GAP else SolveStatus.FEASIBLE
        elif res.status == 2:
            status = SolveStatus.INFEASIBLE
        elif res.status == 1:
            status = SolveStatus.TIME_LIMIT
        else:
            status, values = SolveStatus.INFEASIBLE, None
        return BackendResult(status, values, objective, bound, str(res.message))


# ═══════════════════════════════════════════════════════════════
# CBC (PuLP)
# ═══════════════════════════════════════════════════════════════

_SENSE = {"<=": "LpConstraintLE", ">=": "LpConstraintGE", "=": "LpConstraintEQ"}
_CAT = {"B": "Binary", "I": "Integer", "C": "Continuous"}


def to_pulp(model):
    """(LpProblem, [LpVariable]) mirroring the model column by column"""
    if pulp is None:
        raise BackendUnavailable("cbc", "pulp is not installed")
    prob = pulp.LpProblem("or_pooling", pulp.LpMinimize)
    lp_vars = [
        pulp.LpVariable(v.name, lowBound=v.lb,
                        upBound=None if np.isinf(v.ub) else v.ub,
                        cat=_CAT[v.kind])
        for v in model.variables
    ]
    prob += pulp.lpSum(v.cost * lv for v, lv in zip(model.variables, lp_vars) if v.cost)
    for k, row in enumerate(model.rows):
        if not row.cols:
            continue
        expr = pulp.LpAffineExpression([(lp_vars[c], a) for c, a in zip(row.cols, row.vals)])
        sense = getattr(pulp, _SENSE[row.sense])
        prob += pulp.LpConstraint(expr, sense=sense, rhs=row.rhs, name=f"eq{row.tag}_{k}")
    return prob, lp_vars


class CbcBackend(SolverBackend):
    name = "cbc"
    capabilities = frozenset({"mip_gap_control", "time_limit"})

    def available(self) -> bool:
        if pulp is None:
            return False
        try:
            return bool(pulp.PULP_CBC_CMD(msg=False).available())
        except pulp.PulpSolverError:
            return False

    def run(self, model, limits: SolverLimits) -> BackendResult:
        prob, lp_vars = to_pulp(model)
        with tempfile.TemporaryDirectory(prefix="or_pooling_cbc_") as tmp:
            log_path = os.path.join(tmp, "cbc.log")
            solver = pulp.PULP_CBC_CMD(msg=False, timeLimit=limits.time_limit,
                                       gapRel=limits.rel_gap, threads=limits.threads,
                                       logPath=log_path)
            prob.solve(solver)
            log = ""
            if os.path.exists(log_path):
                with open(log_path, encoding="utf-8", errors="replace") as f:
                    log = f.read()
        result, bound = parse_cbc_log(log)
        if not result and prob.sol_status == pulp.LpSolutionOptimal:
            result = "Optimal solution found"

        sol_status = prob.sol_status
        if sol_status == pulp.LpSolutionInfeasible or prob.status == pulp.LpStatusInfeasible:
            return BackendResult(SolveStatus.INFEASIBLE, None, float("nan"), float("nan"),
                                 pulp.LpStatus[prob.status])
        if sol_status in (pulp.LpSolutionNoSolutionFound, pulp.LpSolutionUnbounded):
            return BackendResult(SolveStatus.TIME_LIMIT, None, float("nan"), float("nan"),
                                 pulp.LpStatus[prob.status])

        values = np.array([lv.varValue or 0.0 for lv in lp_vars])
        objective = float(pulp.value(prob.objective) or 0.0)
        status, bound = cbc_status(result, bound, objective, limits.rel_gap)
        return BackendResult(status, values, objective, bound, result or pulp.LpStatus[prob.status])


_CBC_RESULT = re.compile(r"^Result - (.+?)\s*$", re.MULTILINE)
_CBC_BOUND = re.compile(r"^Lower bound:\s+(\S+)", re.MULTILINE)


def parse_cbc_log(text: str) -> tuple:
    """(result line, best bound or None) from a CBC log"""
    m = _CBC_RESULT.search(text)
    result = m.group(1) if m else ""
    m = _CBC_BOUND.search(text)
    try:
        bound = float(m.group(1)) if m else None
    except ValueError:
        bound = None
    return result, bound


def relative_gap(objective: float, bound: float) -> float:
    if math.isnan(bound):
        return math.inf
    if objective == bound:
        return 0.0
    return abs(objective - bound) / max(abs(objective), 1e-10)


def cbc_status(result: str, bound, objective: float, rel_gap: float) -> tuple:
    """
    (SolveStatus, bound) for a CBC run that holds an incumbent.

    CBC prints no bound line when it closes the tree; that result proves
    the incumbent only if the run asked for a zero gap.
    """
    if bound is None:
        closed = result.startswith("Optimal solution found") and "gap" not in result
        bound = objective if closed and rel_gap <= PROVEN_GAP else float("nan")
    if relative_gap(objective, bound) <= PROVEN_GAP:
        return SolveStatus.OPTIMAL, bound
    if "time" in result.lower():
        return SolveStatus.TIME_LIMIT, bound
    return SolveStatus.FEASIBLE, bound


# ═══════════════════════════════════════════════════════════════
# Registry
# ═══════════════════════════════════════════════════════════════

BACKENDS = {"highs": HighsBackend, "cbc": CbcBackend}


def get_backend(name: str = None) -> SolverBackend:
    name = (name or os.environ.get(ENV_VAR) or DEFAULT_BACKEND).strip().lower()
    if name not in BACKENDS:
        raise BackendUnavailable(name, f"unknown backend, choose from {sorted(BACKENDS)}")
    backend = BACKENDS[name]()
    if not backend.available():
        raise BackendUnavailable(name, "solver is not installed")
    logger.debug("using solver backend %s", name)
    return backend


def write_lp(model, path) -> str:
    prob, _ = to_pulp(model)
    prob.writeLP(str(path))
    return str(path)
