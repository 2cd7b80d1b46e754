"""Two-point boundary-value solver for the orbit-transfer problem.

The eight unknowns are the initial costates (six elements plus mass) and
the transfer time. The residual matches the five orbit-shape elements of
the target (true longitude stays free), enforces the terminal
transversality conditions on the longitude and mass costates, and the
free-time condition on the Hamiltonian. A logarithmic-barrier
continuation walks the smoothing parameter from an easy value down to
the near-bang-bang regime, warm-starting each solve from the last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import root

from . import _kernels
from .integrator import IntegratorConfig, PropagationError, SampledTrajectory, \
    propagate_sampled, _effective_max_step
from .units import ThrustConfig, UnitSystem

DEFAULT_EPS_SCHEDULE = (
    0.1, 0.05, 0.02, 0.01, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4,
    5e-5, 2e-5, 1e-5, 5e-6, 2e-6, 1e-6,
)


class ContinuationError(RuntimeError):
    def __init__(self, message: str, last_eps: float | None,
                 last_unknowns: "ShootingUnknowns | None" = None):
        super().__init__(message)
        self.last_eps = last_eps
        self.last_unknowns = last_unknowns


@dataclass
class ShootingUnknowns:
    lam0: np.ndarray   # (6,)
    lam_m0: float
    tf: float

    def __post_init__(self):
        self.lam0 = np.asarray(self.lam0, dtype=float)
        if self.lam0.shape != (6,):
            raise ValueError("lam0 must be a 6-vector")
        if self.tf <= 0.0:
            raise ValueError("tf must be positive")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lam0, [self.lam_m0, self.tf]])

    @classmethod
    def from_array(cls, z) -> "ShootingUnknowns":
        z = np.asarray(z, dtype=float)
        return cls(lam0=z[:6].copy(), lam_m0=float(z[6]), tf=float(z[7]))


@dataclass(frozen=True)
class TransferProblem:
    """Fixed data of one transfer: start state and target orbit shape."""

    x0: np.ndarray       # (6,) equinoctial elements at departure
    m0: float            # departure mass (canonical)
    target: np.ndarray   # (5,) [p, f, g, h, k] of the target orbit
    c1: float
    c2: float

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.x0.shape != (6,) or self.target.shape != (5,):
            raise ValueError("x0 must be (6,), target (5,)")

    def thrust(self, eps: float) -> ThrustConfig:
        return ThrustConfig(c1=self.c1, c2=self.c2, eps=eps)


@dataclass(frozen=True)
class ShootingConfig:
    solver_tol: float = 1e-8
    final_polish_tol: float = 1e-11   # extra solve accuracy at the last eps
    max_iterations: int = 80          # LM iteration cap per solve
    fd_step: float = 1e-7             # relative forward-difference step
    restarts: int = 100
    restart_halfwidth: float = 10.0   # uniform costate guesses in [-hw, hw]
    successes_to_keep: int = 4        # stop restarting after this many hits
    restart_batch: int = 16
    fd_step_floor: float = 3e-6   # FD step used once eps < 1e-5
    tf_guess_years: float = 1.5
    tf_bounds: tuple[float, float] = (0.1, 25.0)   # canonical time units
    sentinel: float = 1e3
    seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    @property
    def tf_guess(self) -> float:
        return UnitSystem().years_to_nd(self.tf_guess_years)


@dataclass
class SolveReport:
    unknowns: ShootingUnknowns
    residual: np.ndarray
    residual_norm: float
    converged: bool
    n_evaluations: int
    eps: float
    terminal_state: np.ndarray | None = None   # (14,) when converged

    @property
    def final_mass(self) -> float:
        if self.terminal_state is None:
            raise ValueError("no terminal state recorded")
        return float(self.terminal_state[6])


def _propagate_raw(problem: TransferProblem, z: np.ndarray, eps: float,
                   cfg: ShootingConfig):
    """Terminal 14-vector for unknowns z, or None on failure."""
    tf = z[7]
    lo, hi = cfg.tf_bounds
    if not (lo <= tf <= hi) or not np.all(np.isfinite(z)):
        return None
    y0 = np.empty(14)
    y0[:6] = problem.x0
    y0[6] = problem.m0
    y0[7:13] = z[:6]
    y0[13] = z[6]
    ic = cfg.integrator
    yf, _, status, _, _ = _kernels.propagate_core(
        y0, 0.0, tf, problem.c1, problem.c2, eps,
        ic.rel_tol, ic.abs_tol, _effective_max_step(tf, eps, ic),
        ic.max_steps, ic.initial_step, ic.max_throttle_change)
    if status != _kernels.STATUS_OK:
        return None
    return yf


def _initial_hamiltonian(problem: TransferProblem, z: np.ndarray,
                         eps: float) -> float:
    """Hamiltonian at departure for unknowns z (exact, no integration).

    The system is autonomous, so H is a first integral: the free-time
    condition H(tf) = 0 is enforced as H(0) = 0, which is an analytic
    function of the unknowns and therefore free of propagation noise.
    """
    y0 = np.empty(14)
    y0[:6] = problem.x0
    y0[6] = problem.m0
    y0[7:13] = z[:6]
    y0[13] = z[6]
    u, ir, it, in_, _, _ = _kernels.control_from_costates(
        y0, problem.c1, problem.c2, eps)
    return _kernels.hamiltonian(
        y0, u, ir, it, in_, problem.c1, problem.c2, eps)


def _residual_from_terminal(yf: np.ndarray, problem: TransferProblem,
                            z: np.ndarray, eps: float) -> np.ndarray:
    res = np.empty(8)
    res[:5] = yf[:5] - problem.target
    res[5] = yf[12]          # terminal longitude costate
    res[6] = yf[13]          # terminal mass costate
    res[7] = _initial_hamiltonian(problem, z, eps)
    return res


def shoot(unknowns: ShootingUnknowns, problem: TransferProblem, eps: float,
          cfg: ShootingConfig | None = None) -> np.ndarray:
    """Boundary residual (8,) for one set of unknowns.

    Propagation failures map to a large sentinel so root solvers retreat
    instead of crashing.
    """
    cfg = cfg or ShootingConfig()
    z = unknowns.as_array()
    yf = _propagate_raw(problem, z, eps, cfg)
    if yf is None:
        return np.full(8, cfg.sentinel)
    return _residual_from_terminal(yf, problem, z, eps)


def solve(guess: ShootingUnknowns, problem: TransferProblem, eps: float,
          cfg: ShootingConfig | None = None,
          tol: float | None = None) -> SolveReport:
    """Levenberg-Marquardt solve of the eight boundary conditions."""
    cfg = cfg or ShootingConfig()
    tol = cfg.solver_tol if tol is None else tol
    fd = cfg.fd_step if eps >= 1e-5 else cfg.fd_step_floor
    n_eval = 0

    def fun(z):
        nonlocal n_eval
        n_eval += 1
        yf = _propagate_raw(problem, z, eps, cfg)
        if yf is None:
            return np.full(8, cfg.sentinel)
        return _residual_from_terminal(yf, problem, z, eps)

    sol = root(fun, guess.as_array(), method="lm",
               options={"maxiter": cfg.max_iterations * 9,
                        "eps": fd**2,
                        "xtol": 2e-15, "ftol": 1e-16})
    z = np.asarray(sol.x, dtype=float)
    yf = _propagate_raw(problem, z, eps, cfg)
    if yf is None:
        residual = np.full(8, cfg.sentinel)
    else:
        residual = _residual_from_terminal(yf, problem, z, eps)
    norm = float(np.max(np.abs(residual)))
    converged = norm < tol and yf is not None
    unknowns = ShootingUnknowns.from_array(z) if z[7] > 0.0 else guess
    return SolveReport(
        unknowns=unknowns, residual=residual, residual_norm=norm,
        converged=converged, n_evaluations=n_eval, eps=eps,
        terminal_state=yf if converged else None)


def random_restarts(problem: TransferProblem, eps: float,
                    cfg: ShootingConfig | None = None,
                    extra_guesses: list[ShootingUnknowns] | None = None
                    ) -> SolveReport:
    """Cold-start search: uniform random costates, fixed transfer-time guess.

    Restart index i draws from its own seeded stream, so results do not
    depend on evaluation order or worker count. Candidates are processed
    in fixed-size batches; once a batch closes with enough successes the
    search stops and the lowest-propellant solution wins (ties by restart
    index).
    """
    cfg = cfg or ShootingConfig()
    guesses: list[ShootingUnknowns] = list(extra_guesses or [])
    for i in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, i])
        lam = rng.uniform(-cfg.restart_halfwidth, cfg.restart_halfwidth, 7)
        guesses.append(ShootingUnknowns(
            lam0=lam[:6], lam_m0=float(lam[6]), tf=cfg.tf_guess))

    successes: list[SolveReport] = []
    for start in range(0, len(guesses), cfg.restart_batch):
        for guess in guesses[start:start + cfg.restart_batch]:
            rep = solve(guess, problem, eps, cfg)
            if rep.converged:
                successes.append(rep)
        if len(successes) >= cfg.successes_to_keep:
            break
    if not successes:
        raise ContinuationError(
            f"no restart converged at eps={eps:g} "
            f"({len(guesses)} attempts)", last_eps=None)
    return min(successes, key=lambda r: -r.final_mass)


@dataclass
class ContinuationRecord:
    eps: float
    n_evaluations: int
    residual_norm: float
    tf: float
    final_mass: float


@dataclass
class ContinuationResult:
    unknowns: ShootingUnknowns
    eps: float
    chain: list[ContinuationRecord]
    terminal_state: np.ndarray        # (14,)
    trajectory: SampledTrajectory
    problem: TransferProblem

    @property
    def tf(self) -> float:
        return self.unknowns.tf

    @property
    def final_mass(self) -> float:
        return float(self.terminal_state[6])

    @property
    def propellant(self) -> float:
        return self.problem.m0 - self.final_mass


def continuation(problem: TransferProblem,
                 schedule=DEFAULT_EPS_SCHEDULE,
                 cfg: ShootingConfig | None = None,
                 initial_guess: ShootingUnknowns | None = None,
                 n_samples: int = 100) -> ContinuationResult:
    """Walk the smoothing parameter down the schedule with warm starts.

    The first entry is solved from random restarts unless an initial
    guess is supplied. Aborts with the last successful parameter if a
    step fails.
    """
    cfg = cfg or ShootingConfig()
    schedule = list(schedule)
    if not schedule or any(e <= 0.0 for e in schedule):
        raise ValueError("schedule must contain positive values")
    if not all(a > b for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")

    chain: list[ContinuationRecord] = []
    current: SolveReport | None = None
    for step, eps in enumerate(schedule):
        final = step == len(schedule) - 1
        tol = cfg.final_polish_tol if final else cfg.solver_tol
        if current is None:
            if initial_guess is not None:
                rep = solve(initial_guess, problem, eps, cfg, tol=tol)
                if not rep.converged:
                    rep = random_restarts(
                        problem, eps, cfg, extra_guesses=[initial_guess])
            else:
                rep = random_restarts(problem, eps, cfg)
                if not rep.converged:
                    raise ContinuationError(
                        f"restart search failed at eps={eps:g}", None)
        else:
            rep = solve(current.unknowns, problem, eps, cfg, tol=tol)
        if not rep.converged:
            # One retry at the plain tolerance before giving up; the
            # polish tolerance is best-effort.
            if final and rep.residual_norm < cfg.solver_tol:
                rep = replace(rep, converged=True,
                              terminal_state=_propagate_raw(
                                  problem, rep.unknowns.as_array(), eps, cfg))
            else:
                last = chain[-1].eps if chain else None
                raise ContinuationError(
                    f"continuation stalled at eps={eps:g} "
                    f"(residual {rep.residual_norm:.3e})",
                    last_eps=last,
                    last_unknowns=current.unknowns if current else None)
        current = rep
        chain.append(ContinuationRecord(
            eps=eps, n_evaluations=rep.n_evaluations,
            residual_norm=rep.residual_norm, tf=rep.unknowns.tf,
            final_mass=rep.final_mass))

    assert current is not None and current.terminal_state is not None
    eps_final = schedule[-1]
    thrust = problem.thrust(eps_final)
    y0 = np.empty(14)
    y0[:6] = problem.x0
    y0[6] = problem.m0
    y0[7:13] = current.unknowns.lam0
    y0[13] = current.unknowns.lam_m0
    trajectory = propagate_sampled(
        y0, 0.0, current.unknowns.tf, n_samples=n_samples, thrust=thrust,
        cfg=cfg.integrator)
    return ContinuationResult(
        unknowns=current.unknowns, eps=eps_final, chain=chain,
        terminal_state=current.terminal_state, trajectory=trajectory,
        problem=problem)
