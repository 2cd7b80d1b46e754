"""Mass production of optimal trajectories by perturbed backward flow.

One converged transfer supplies terminal states and costates. Each new
trajectory perturbs the terminal costates inside a small ball (keeping
the transversality components exactly zero), restores the free-time
condition by adjusting the terminal mass at a jittered arrival
longitude, and integrates the full state/costate system backward for
the nominal transfer duration. Every point of every trajectory then
satisfies the minimum-principle necessary conditions by construction;
no boundary-value problem is ever re-solved.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .integrator import IntegratorConfig, PropagationError
from .units import ThrustConfig

SCHEMA_VERSION = 1

COLUMNS = (
    "trajectory_id", "sample_index", "time_to_go",
    "p", "f", "g", "h", "k", "L", "m",
    "lam_p", "lam_f", "lam_g", "lam_h", "lam_k", "lam_L", "lam_m",
    "u", "i_r", "i_t", "i_n",
    "value", "propellant_to_go",
)

# Column offsets into a dataset row.
COL_TRAJ, COL_INDEX, COL_TGO = 0, 1, 2
COL_STATE = slice(3, 9)       # p..L
COL_MASS = 9
COL_COSTATE = slice(10, 16)   # lam_p..lam_L
COL_LAM_M = 16
COL_U = 17
COL_DIR = slice(18, 21)
COL_VALUE = 21
COL_MP = 22


class HamiltonianRestoreError(RuntimeError):
    """No terminal mass in the search bracket cancels the Hamiltonian."""


@dataclass(frozen=True)
class PerturbationConfig:
    """Knobs of the backward generator."""

    rho: float = 0.1              # costate perturbation radius
    rho_L: float = 0.1            # terminal longitude half-width [rad]
    n_perturbations: int = 1000   # attempts (accepted count is reported)
    n_samples: int = 100
    seed: int = 0
    eps: float = 1e-6             # throttle smoothing during generation
    mass_bracket: tuple[float, float] = (0.3, 1.2)  # times nominal m_f
    hamiltonian_tol: float = 1e-11
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")


@dataclass(frozen=True)
class NominalArtifact:
    """Everything the generator needs from the solved transfer."""

    terminal_state: np.ndarray   # (14,) at arrival
    tf: float
    target: np.ndarray           # (5,) arrival-orbit elements
    c1: float
    c2: float
    x0: np.ndarray               # (6,) departure elements
    m0: float
    eps: float                   # smoothing at which the transfer converged

    def thrust(self, eps: float | None = None) -> ThrustConfig:
        return ThrustConfig(c1=self.c1, c2=self.c2,
                            eps=self.eps if eps is None else eps)

    def to_json(self) -> dict:
        return {
            "terminal_state": self.terminal_state.tolist(),
            "tf": self.tf,
            "target": self.target.tolist(),
            "c1": self.c1, "c2": self.c2,
            "x0": self.x0.tolist(), "m0": self.m0,
            "eps": self.eps,
        }

    @classmethod
    def from_json(cls, d: dict) -> "NominalArtifact":
        return cls(
            terminal_state=np.asarray(d["terminal_state"], dtype=float),
            tf=float(d["tf"]),
            target=np.asarray(d["target"], dtype=float),
            c1=float(d["c1"]), c2=float(d["c2"]),
            x0=np.asarray(d["x0"], dtype=float), m0=float(d["m0"]),
            eps=float(d["eps"]),
        )


def perturb_terminal_costates(lam_f: np.ndarray, lam_m_f: float, rho: float,
                              rng: np.random.Generator) -> np.ndarray:
    """Terminal costates displaced uniformly inside a 5-ball of radius rho.

    Only the components conjugate to the orbit-shape elements move; the
    longitude and mass costates keep their transversality values
    exactly. Returns the full 7-vector [lam(6), lam_m].
    """
    lam_f = np.asarray(lam_f, dtype=float)
    direction = rng.normal(size=5)
    norm = np.linalg.norm(direction)
    while norm < 1e-12:
        direction = rng.normal(size=5)
        norm = np.linalg.norm(direction)
    radius = rho * rng.uniform() ** 0.2   # uniform density in the 5-ball
    delta = direction / norm * radius
    out = np.empty(7)
    out[:5] = lam_f[:5] + delta
    out[5] = lam_f[5]
    out[6] = lam_m_f
    return out


def restore_hamiltonian(x_f: np.ndarray, m_f: float, lam_pert: np.ndarray,
                        lam_m_f: float, thrust: ThrustConfig,
                        delta_L: float = 0.0,
                        bracket: tuple[float, float] = (0.3, 1.2),
                        tol: float = 1e-11) -> tuple[float, float]:
    """Terminal (mass, longitude) restoring the free-time condition.

    The longitude offset is fixed; the terminal mass is the single root
    of H = 0, searched by bracketing inside ``bracket * m_f``. Raises
    HamiltonianRestoreError when no sign change exists there.
    """
    y = np.empty(14)
    y[:6] = x_f
    y[5] = x_f[5] + delta_L
    y[7:13] = lam_pert[:6]
    y[13] = lam_m_f

    def h_of_m(m: float) -> float:
        y[6] = m
        u, ir, it, in_, _, _ = _kernels.control_from_costates(
            y, thrust.c1, thrust.c2, thrust.eps)
        return _kernels.hamiltonian(
            y, u, ir, it, in_, thrust.c1, thrust.c2, thrust.eps)

    a, b = bracket[0] * m_f, bracket[1] * m_f
    ha, hb = h_of_m(a), h_of_m(b)
    if not (np.isfinite(ha) and np.isfinite(hb)) or ha * hb > 0.0:
        raise HamiltonianRestoreError(
            f"no H=0 root in [{a:.4f}, {b:.4f}] (H({a:.3f})={ha:.3e}, "
            f"H({b:.3f})={hb:.3e})")
    m_new = float(brentq(h_of_m, a, b, xtol=1e-15, rtol=8.9e-16))
    h_res = h_of_m(m_new)
    if abs(h_res) > tol:
        raise HamiltonianRestoreError(
            f"root refinement left |H|={abs(h_res):.3e} above {tol:g}")
    return m_new, float(y[5])


def generate_trajectory(terminal: np.ndarray, tf: float, n_samples: int,
                        thrust: ThrustConfig,
                        integ: IntegratorConfig) -> np.ndarray:
    """Backward-propagate one terminal point and sample it.

    Returns an (n_samples, 23) block of dataset rows ordered by
    ascending time (descending time-to-go); the trajectory id column is
    left as zero for the caller to fill.
    """
    times = tf - (tf / (n_samples - 1)) * np.arange(n_samples)
    times[-1] = 0.0
    states = np.empty((n_samples, 14))
    status, _ = _kernels.propagate_to_times(
        np.asarray(terminal, dtype=float), times, thrust.c1, thrust.c2,
        thrust.eps, integ.rel_tol, integ.abs_tol, tf / 500.0,
        integ.max_steps, states, integ.max_throttle_change)
    if status != _kernels.STATUS_OK:
        raise PropagationError(status, math.nan)

    # Reorder ascending in time.
    states = states[::-1]
    times = times[::-1]
    m_f = terminal[6]

    rows = np.empty((n_samples, len(COLUMNS)))
    rows[:, COL_TRAJ] = 0.0
    rows[:, COL_INDEX] = np.arange(n_samples)
    rows[:, COL_TGO] = tf - times
    rows[:, COL_STATE] = states[:, 0:6]
    rows[:, COL_MASS] = states[:, 6]
    rows[:, COL_COSTATE] = states[:, 7:13]
    rows[:, COL_LAM_M] = states[:, 13]
    for i in range(n_samples):
        u, ir, it, in_, _, _ = _kernels.control_from_costates(
            states[i], thrust.c1, thrust.c2, thrust.eps)
        rows[i, COL_U] = u
        rows[i, COL_DIR] = (ir, it, in_)
    rows[:, COL_MP] = rows[:, COL_MASS] - m_f
    rows[:, COL_VALUE] = rows[:, COL_MP] / thrust.c2
    return rows


@dataclass
class FactoryReport:
    attempts: int
    accepted: int
    rejected_root: int
    rejected_propagation: int
    wall_time_s: float
    workers: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    @property
    def trajectories_per_second(self) -> float:
        return self.accepted / self.wall_time_s if self.wall_time_s else 0.0

    def summary(self) -> str:
        lines = [
            f"perturbation attempts : {self.attempts}",
            f"accepted trajectories : {self.accepted}",
            f"rejected (H=0 root)   : {self.rejected_root}",
            f"rejected (propagation): {self.rejected_propagation}",
            f"acceptance rate       : {self.acceptance_rate:.4f}",
            f"workers               : {self.workers}",
            f"wall time             : {self.wall_time_s:.1f} s",
            f"throughput            : {self.trajectories_per_second:.2f} trajectories/s",
        ]
        return "\n".join(lines)


@dataclass
class Dataset:
    """Labelled samples of many optimal trajectories plus provenance."""

    header: dict
    rows: np.ndarray   # (N, 23) float64

    @property
    def n_trajectories(self) -> int:
        return int(np.unique(self.rows[:, COL_TRAJ]).size)

    def trajectory_ids(self) -> np.ndarray:
        return np.unique(self.rows[:, COL_TRAJ]).astype(np.int64)

    def rows_for(self, traj_id: int) -> np.ndarray:
        return self.rows[self.rows[:, COL_TRAJ] == traj_id]

    # -- persistence --------------------------------------------------

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            for row in self.rows:
                fh.write(f"{int(row[0])},{int(row[1])},")
                fh.write(",".join(f"{v:.17g}" for v in row[2:]))
                fh.write("\n")
        self._write_header_sidecar(path)
        return path

    def write_binary(self, path: str | Path) -> Path:
        path = Path(path)
        data = np.ascontiguousarray(self.rows, dtype="<f8")
        with open(path, "wb") as fh:
            fh.write(data.tobytes())
        self._write_header_sidecar(path)
        return path

    def _write_header_sidecar(self, data_path: Path) -> Path:
        side = data_path.with_suffix(data_path.suffix + ".meta.json")
        header = dict(self.header)
        header["schema_version"] = SCHEMA_VERSION
        header["columns"] = list(COLUMNS)
        header["n_rows"] = int(self.rows.shape[0])
        header["n_columns"] = int(self.rows.shape[1])
        with open(side, "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return side

    @classmethod
    def read(cls, path: str | Path) -> "Dataset":
        path = Path(path)
        side = path.with_suffix(path.suffix + ".meta.json")
        if not side.exists():
            raise FileNotFoundError(f"missing dataset sidecar {side}")
        with open(side) as fh:
            header = json.load(fh)
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported dataset schema {header.get('schema_version')}")
        if path.suffix == ".csv":
            rows = np.loadtxt(path, delimiter=",", skiprows=1,
                              ndmin=2, dtype=np.float64)
        else:
            rows = np.fromfile(path, dtype="<f8").reshape(
                header["n_rows"], header["n_columns"]).astype(np.float64)
        if rows.shape != (header["n_rows"], header["n_columns"]):
            raise ValueError(f"dataset shape {rows.shape} does not match sidecar")
        return cls(header=header, rows=rows)

    def fingerprint(self) -> str:
        return hashlib.sha256(
            np.ascontiguousarray(self.rows, dtype="<f8").tobytes()
        ).hexdigest()


def _make_terminal(nominal: NominalArtifact, cfg: PerturbationConfig,
                   index: int) -> tuple[np.ndarray, int]:
    """Build the perturbed-and-restored terminal point for one index.

    Returns (terminal 14-vector, status) with status 0 = ok, 1 = root
    failure. The orbit-shape elements are pinned exactly to the target
    and the transversality costates exactly to zero, so every stored
    trajectory terminates exactly on the arrival orbit.
    """
    rng = np.random.default_rng([cfg.seed, index])
    lam_f = nominal.terminal_state[7:13].copy()
    lam_f[5] = 0.0
    lam_pert = perturb_terminal_costates(lam_f, 0.0, cfg.rho, rng)
    delta_L = rng.uniform(-cfg.rho_L, cfg.rho_L)

    x_f = np.empty(6)
    x_f[:5] = nominal.target
    x_f[5] = nominal.terminal_state[5]
    thrust = nominal.thrust(cfg.eps)
    try:
        m_new, L_new = restore_hamiltonian(
            x_f, nominal.terminal_state[6], lam_pert, 0.0, thrust,
            delta_L=delta_L, bracket=cfg.mass_bracket,
            tol=cfg.hamiltonian_tol)
    except HamiltonianRestoreError:
        return np.empty(0), 1

    terminal = np.empty(14)
    terminal[:6] = x_f
    terminal[5] = L_new
    terminal[6] = m_new
    terminal[7:13] = lam_pert[:6]
    terminal[13] = 0.0
    return terminal, 0


def _worker_block(nominal: NominalArtifact, cfg: PerturbationConfig,
                  indices: range) -> list[tuple[int, np.ndarray | None, int]]:
    """Generate rows for a block of perturbation indices.

    Each entry is (index, rows or None, status) with status 0 accepted,
    1 root rejection, 2 propagation rejection.
    """
    thrust = nominal.thrust(cfg.eps)
    out = []
    for index in indices:
        terminal, status = _make_terminal(nominal, cfg, index)
        if status != 0:
            out.append((index, None, 1))
            continue
        try:
            rows = generate_trajectory(
                terminal, nominal.tf, cfg.n_samples, thrust, cfg.integrator)
        except PropagationError:
            out.append((index, None, 2))
            continue
        rows[:, COL_TRAJ] = index
        out.append((index, rows, 0))
    return out


def run_factory(nominal: NominalArtifact, cfg: PerturbationConfig,
                workers: int = 1) -> tuple[Dataset, FactoryReport]:
    """Generate the dataset; content depends only on (config, seed).

    Work is partitioned by perturbation index and every index owns an
    independent random stream, so worker count and scheduling cannot
    change the result; blocks are merged in index order.
    """
    t_start = time.perf_counter()
    n = cfg.n_perturbations
    workers = max(1, workers)
    block = 64
    blocks = [range(s, min(s + block, n)) for s in range(0, n, block)]

    results: list[tuple[int, np.ndarray | None, int]] = []
    if workers == 1:
        for b in blocks:
            results.extend(_worker_block(nominal, cfg, b))
    else:
        # Threads suffice: the propagation kernels release the GIL.
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_worker_block, nominal, cfg, b)
                       for b in blocks]
            for fut in futures:
                results.extend(fut.result())
    results.sort(key=lambda r: r[0])

    accepted_rows = [rows for _, rows, status in results if status == 0]
    n_root = sum(1 for *_, status in results if status == 1)
    n_prop = sum(1 for *_, status in results if status == 2)
    rows = (np.vstack(accepted_rows) if accepted_rows
            else np.empty((0, len(COLUMNS))))
    wall = time.perf_counter() - t_start

    header = {
        "kind": "trajectory-dataset",
        "length_unit": "AU",
        "mass_unit": "nominal wet mass",
        "time_unit": "TU (mu = 1)",
        "c1": nominal.c1,
        "c2": nominal.c2,
        "eps": cfg.eps,
        "rho": cfg.rho,
        "rho_L": cfg.rho_L,
        "seed": cfg.seed,
        "n_perturbations": cfg.n_perturbations,
        "n_samples": cfg.n_samples,
        "tf": nominal.tf,
        "target": nominal.target.tolist(),
        "nominal_terminal_state": nominal.terminal_state.tolist(),
    }
    report = FactoryReport(
        attempts=n, accepted=len(accepted_rows), rejected_root=n_root,
        rejected_propagation=n_prop, wall_time_s=wall, workers=workers)
    return Dataset(header=header, rows=rows), report
