"""Batch iLQR with Gauss-Newton updates and backtracking line search.

The problem is open loop: stacked joint states are a linear function of the
stacked velocity commands, the state cost is a precision-weighted squared
geodesic residual in the selected chart at each active timestep, and each
iteration solves the regularized normal equations for the full horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .charts import (ChartId, OriginSingularity, chart_jacobian,
                     chart_spec, to_chart)
from .kinematics import (ArmModel, JointTrajectory, batch_dynamics,
                         forward_kinematics, kinematic_jacobian, rollout)
from .manifolds import (AntipodalPoint, ManifoldPoint, log_map_batch,
                        log_map_jacobian)

LINE_SEARCH_MIN_STEP = 1e-4
STEP_TOL = 1e-9
COST_TOL = 1e-9
MAX_ITER = 100


class SingularSystem(RuntimeError):
    """Normal equations are not positive definite (r = 0 and rank deficient)."""


class LineSearchFailed(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Reference:
    """Active viapoint distribution for one timestep in one chart."""
    chart: ChartId
    mean: ManifoldPoint          # point on the chart's product manifold
    precision: np.ndarray        # tangent-space precision at the mean

    def __post_init__(self):
        if self.mean.spec != chart_spec(self.chart):
            raise ValueError("reference mean is not on the chart manifold")


@dataclass
class PlanProblem:
    arm: ArmModel
    q0: np.ndarray
    horizon: int
    dt: float
    frame: object                           # object frame the charts live in
    references: list                        # length T, Reference or None
    control_weight: float = 1e-2
    activation_start: int = 0

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, dtype=float)
        if len(self.references) != self.horizon:
            raise ValueError("references list must match the horizon")
        if not any(self.active_references()):
            raise ValueError("at least one active reference required")

    def active_references(self):
        """(t, Reference) pairs honoring the activation window."""
        return [(t, r) for t, r in enumerate(self.references)
                if r is not None and t >= self.activation_start]


@dataclass
class PlanResult:
    trajectory: JointTrajectory
    cost_history: list
    converged: bool
    iterations: int
    residual_norms: dict = field(default_factory=dict)  # timestep -> norm


def _states_from_u(problem: PlanProblem, u: np.ndarray) -> np.ndarray:
    return rollout(problem.q0, u.reshape(problem.horizon, problem.arm.dof),
                   problem.dt)


def residuals_and_jacobian(problem: PlanProblem, u: np.ndarray):
    """Stacked residual f, its Jacobian w.r.t. stacked states q, and the big
    block-diagonal precision. Inactive timesteps contribute no rows.
    """
    D, T = problem.arm.dof, problem.horizon
    states = _states_from_u(problem, u)
    active = problem.active_references()
    m = sum(ref.mean.spec.tangent_dim for _, ref in active)
    f = np.empty(m)
    J = np.zeros((m, D * T))
    Q = np.zeros((m, m))
    norms = {}
    row = 0
    for t, ref in active:
        pose = forward_kinematics(problem.arm, states[t])
        try:
            cp = to_chart(pose, ref.chart, problem.frame)
            x = cp.point()
            res = log_map_batch(ref.mean, x.coords[None, :])[0]
            Jlog = log_map_jacobian(ref.mean, x)
            Jchart = chart_jacobian(pose, ref.chart, problem.frame)
        except (OriginSingularity, AntipodalPoint) as exc:
            raise type(exc)(f"timestep {t}: {exc}") from exc
        Jkin = kinematic_jacobian(problem.arm, states[t])
        d = res.shape[0]
        f[row:row + d] = res
        J[row:row + d, t * D:(t + 1) * D] = Jlog @ Jchart @ Jkin
        Q[row:row + d, row:row + d] = ref.precision
        norms[t] = float(np.linalg.norm(res))
        row += d
    return f, J, Q, norms


def cost(problem: PlanProblem, u: np.ndarray) -> float:
    """True cost: precision-weighted squared residuals plus control effort.

    Poses that fall into a chart singularity make the candidate infeasible
    (infinite cost), so the line search rejects such steps.
    """
    states = _states_from_u(problem, u)
    total = problem.control_weight * float(u @ u)
    for t, ref in problem.active_references():
        pose = forward_kinematics(problem.arm, states[t])
        try:
            x = to_chart(pose, ref.chart, problem.frame).point()
            res = log_map_batch(ref.mean, x.coords[None, :])[0]
        except (OriginSingularity, AntipodalPoint):
            return np.inf
        total += float(res @ ref.precision @ res)
    return total


def gauss_newton_step(problem: PlanProblem, u: np.ndarray, f: np.ndarray,
                      J: np.ndarray, Q: np.ndarray,
                      S_u: np.ndarray) -> np.ndarray:
    """Regularized Gauss-Newton update of the stacked controls."""
    JS = J @ S_u
    H = JS.T @ Q @ JS
    r = problem.control_weight
    H[np.diag_indices_from(H)] += r
    g = -JS.T @ (Q @ f) - r * u
    try:
        return cho_solve(cho_factor(H), g)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("normal equations not positive definite; "
                             "set control_weight > 0") from exc


def solve(problem: PlanProblem) -> PlanResult:
    D, T = problem.arm.dof, problem.horizon
    _, S_u = batch_dynamics(D, T, problem.dt)
    u = np.zeros(D * T)
    c = cost(problem, u)
    history = [c]
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        f, J, Q, _ = residuals_and_jacobian(problem, u)
        du = gauss_newton_step(problem, u, f, J, Q, S_u)
        if np.linalg.norm(du) < STEP_TOL:
            converged = True
            break
        alpha = 1.0
        while alpha >= LINE_SEARCH_MIN_STEP:
            c_new = cost(problem, u + alpha * du)
            if c_new < c:
                break
            alpha *= 0.5
        else:
            import warnings
            warnings.warn("no descent step found; returning best iterate",
                          LineSearchFailed)
            break
        u = u + alpha * du
        improvement = c - c_new
        c = c_new
        history.append(c)
        if improvement < COST_TOL * max(abs(c), 1.0):
            converged = True
            break
    _, _, _, norms = residuals_and_jacobian(problem, u)
    traj = JointTrajectory(problem.dt, _states_from_u(problem, u),
                           u.reshape(T, D))
    return PlanResult(traj, history, converged, it, norms)


# --- JSON round trip --------------------------------------------------------

def problem_to_dict(problem: PlanProblem) -> dict:
    from .io import frame_to_dict
    refs = []
    for t, r in enumerate(problem.references):
        if r is None:
            continue
        refs.append({
            "t": t,
            "chart": {"space": r.chart.space, "index": r.chart.index},
            "mean": r.mean.coords.tolist(),
            "precision": r.precision.tolist(),
        })
    return {
        "schema_version": 1,
        "arm": {"link_lengths": problem.arm.link_lengths.tolist(),
                "base_position": problem.arm.base_position.tolist(),
                "base_angle": problem.arm.base_angle},
        "q0": problem.q0.tolist(),
        "horizon": problem.horizon,
        "dt": problem.dt,
        "frame": frame_to_dict(problem.frame),
        "references": refs,
        "control_weight": problem.control_weight,
        "activation_start": problem.activation_start,
    }


def problem_from_dict(d: dict) -> PlanProblem:
    from .io import frame_from_dict
    arm = ArmModel(np.array(d["arm"]["link_lengths"]),
                   np.array(d["arm"]["base_position"]),
                   float(d["arm"]["base_angle"]))
    refs = [None] * int(d["horizon"])
    for r in d["references"]:
        chart = ChartId(r["chart"]["space"], int(r["chart"]["index"]))
        mean = ManifoldPoint(chart_spec(chart), np.array(r["mean"]))
        refs[int(r["t"])] = Reference(chart, mean, np.array(r["precision"]))
    return PlanProblem(arm, np.array(d["q0"]), int(d["horizon"]),
                       float(d["dt"]), frame_from_dict(d["frame"]), refs,
                       float(d["control_weight"]), int(d["activation_start"]))


def result_to_dict(result: PlanResult) -> dict:
    return {
        "schema_version": 1,
        "dt": result.trajectory.dt,
        "states": result.trajectory.states.tolist(),
        "controls": result.trajectory.controls.tolist(),
        "cost_history": list(result.cost_history),
        "converged": result.converged,
        "iterations": result.iterations,
        "residual_norms": {str(t): v for t, v in result.residual_norms.items()},
    }


def result_from_dict(d: dict) -> PlanResult:
    traj = JointTrajectory(float(d["dt"]), np.array(d["states"]),
                           np.array(d["controls"]))
    return PlanResult(traj, list(d["cost_history"]), bool(d["converged"]),
                      int(d["iterations"]),
                      {int(t): v for t, v in d["residual_norms"].items()})
