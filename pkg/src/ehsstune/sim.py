"""Closed-loop simulation, logging, objective and ultimate-bound diagnostics."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .controller import ControllerConfig, SmcConfig, gains
from .errors import DivergenceError, DomainError, EvaluationError, IncompleteLog
from .plant import PlantParams, Reference

__all__ = [
    "SimConfig",
    "SimLog",
    "ObjectiveWeights",
    "LOG_COLUMNS",
    "DIVERGED_OBJECTIVE",
    "simulate",
    "objective",
    "phi_matrix",
    "sigma_min",
    "ultimate_bound",
    "lyapunov_diagnostics",
    "lyapunov_tolerance",
    "lyapunov_check",
    "rk4_integrate",
    "total_variation",
    "TuningObjective",
]

LOG_COLUMNS = (
    "t", "xi1", "xi2", "xi3", "r", "e1", "e2", "e3", "u", "v",
    "theta_hat_1", "theta_hat_2", "theta_hat_3",
    "theta_d_hat_1", "theta_d_hat_2", "theta_d_hat_3",
    "V", "Vdot", "rhs_bound", "saturated",
)
_COL = {name: i for i, name in enumerate(LOG_COLUMNS)}

DIVERGED_OBJECTIVE = 1e15

# RK4 is stable on the real axis up to |z| ~ 2.78; the fastest closed-loop
# mode of the backstepping law decays at about a5 * lam**4
_STAGE_Z = 2.0
_MIN_SUBSTEPS = 100
_SMC_SUBSTEPS = 400


@dataclass(frozen=True)
class SimConfig:
    """Horizon, sampling and reference of a closed-loop run.

    Attributes
    ----------
    horizon : float
        Final time [s].
    sample_dt : float
        Logging period [s].
    internal_dt : float or None
        RK4 step [s]. ``None`` picks the largest step dividing ``sample_dt``
        that keeps the fastest closed-loop mode well inside the RK4
        stability region (see :meth:`substeps`).
    reference : Reference
    seed : int
        Carried into the log metadata; the simulation itself draws no
        random numbers.
    control_hold : bool
        Hold ``u`` constant over each sample interval instead of evaluating
        the law at every integrator stage.
    xi0 : tuple of float
        Initial plant state.
    """

    horizon: float = 20.0
    sample_dt: float = 0.01
    internal_dt: float = None
    reference: Reference = field(default_factory=Reference)
    seed: int = 0
    control_hold: bool = False
    xi0: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.horizon > 0 or not self.sample_dt > 0:
            raise DomainError("horizon and sample_dt must be positive")
        n = self.horizon / self.sample_dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise DomainError(f"sample_dt={self.sample_dt} does not divide horizon={self.horizon}")
        if self.internal_dt is not None:
            if not self.internal_dt > 0:
                raise DomainError("internal_dt must be positive")
            m = self.sample_dt / self.internal_dt
            if abs(m - round(m)) > 1e-9 * max(1.0, m):
                raise DomainError(
                    f"internal_dt={self.internal_dt} does not divide sample_dt={self.sample_dt}")
        object.__setattr__(self, "xi0", tuple(float(v) for v in self.xi0))

    @property
    def n_samples(self):
        return int(round(self.horizon / self.sample_dt))

    def with_(self, **changes):
        return replace(self, **changes)

    def substeps(self, ctrl):
        """Number of RK4 steps per sample interval for controller ``ctrl``."""
        if self.internal_dt is not None:
            return int(round(self.sample_dt / self.internal_dt))
        if isinstance(ctrl, ControllerConfig):
            _, a5, _ = K.gains(float(ctrl.lam))
            rate = a5 * ctrl.lam**4
            return max(_MIN_SUBSTEPS, math.ceil(self.sample_dt * rate / _STAGE_Z))
        return _SMC_SUBSTEPS


@dataclass(frozen=True)
class ObjectiveWeights:
    gamma_1_weight: float = 1.0
    gamma_2_weight: float = 1.0

    def __post_init__(self):
        if self.gamma_1_weight < 0 or self.gamma_2_weight < 0:
            raise DomainError("objective weights must be non-negative")
        if self.gamma_1_weight == 0 and self.gamma_2_weight == 0:
            raise DomainError("objective weights must not both be zero")


class SimLog:
    """Per-sample record of a run.

    Columns follow :data:`LOG_COLUMNS`. The array is read-only once built.
    ``diverged`` marks a partial log from a run that left the admissible
    region.
    """

    def __init__(self, data, sample_dt=0.01, diverged=False, meta=None):
        data = np.array(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(LOG_COLUMNS):
            raise DomainError(f"log data must have {len(LOG_COLUMNS)} columns")
        data.flags.writeable = False
        self.data = data
        self.sample_dt = float(sample_dt)
        self.diverged = bool(diverged)
        self.meta = dict(meta or {})

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, name):
        return self.data[:, _COL[name]]

    def __eq__(self, other):
        return (isinstance(other, SimLog) and self.diverged == other.diverged
                and np.array_equal(self.data, other.data, equal_nan=True))

    t = property(lambda self: self["t"])
    r = property(lambda self: self["r"])
    e1 = property(lambda self: self["e1"])
    u = property(lambda self: self["u"])
    v = property(lambda self: self["v"])
    V = property(lambda self: self["V"])
    Vdot = property(lambda self: self["Vdot"])
    rhs_bound = property(lambda self: self["rhs_bound"])
    xi = property(lambda self: self.data[:, 1:4])
    e = property(lambda self: self.data[:, 5:8])
    theta_hat = property(lambda self: self.data[:, 10:13])
    theta_d_hat = property(lambda self: self.data[:, 13:16])
    saturated = property(lambda self: self.data[:, _COL["saturated"]] != 0)

    @classmethod
    def from_kernel(cls, raw, sample_dt, diverged=False, meta=None):
        """Build from the kernel layout; Lyapunov columns start as zeros."""
        data = np.zeros((raw.shape[0], len(LOG_COLUMNS)))
        data[:, :16] = raw[:, :16]
        data[:, _COL["saturated"]] = raw[:, K.L_SAT]
        return cls(data, sample_dt, diverged, meta)

    def with_columns(self, **cols):
        data = self.data.copy()
        for name, values in cols.items():
            data[:, _COL[name]] = values
        return SimLog(data, self.sample_dt, self.diverged, self.meta)

    def to_csv(self, path):
        """Write with 17 significant digits so values round-trip exactly."""
        fmt = ["%.17g"] * (len(LOG_COLUMNS) - 1) + ["%d"]
        np.savetxt(path, self.data, fmt=fmt, delimiter=",",
                   header=",".join(LOG_COLUMNS), comments="")

    @classmethod
    def from_csv(cls, path, sample_dt=None, diverged=False):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if tuple(header) != LOG_COLUMNS:
            raise DomainError(f"{path}: unexpected log header")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if sample_dt is None:
            sample_dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.01
        return cls(data, sample_dt, diverged)


def rk4_integrate(rhs, y0, t0, dt, n, params=None):
    """Advance ``y0`` by ``n`` fixed RK4 steps of size ``dt``.

    ``rhs`` must be a compiled function ``rhs(t, y, p, dy)``; this is the same
    integrator used by :func:`simulate`.
    """
    p = np.zeros(1) if params is None else np.asarray(params, dtype=float)
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    return K.integrate(rhs, y, p, float(t0), float(dt), int(n))


def _pack(plant, ctrl, sim):
    p = plant.pack()
    sim.reference.pack(p)
    if isinstance(ctrl, ControllerConfig):
        ctrl.pack(p)
    elif isinstance(ctrl, SmcConfig):
        ctrl.pack(p)
    elif ctrl is None:
        p[K.C_KIND] = K.CTRL_NONE
    else:
        raise DomainError(f"unsupported controller {type(ctrl).__name__}")
    return p


def simulate(plant, ctrl, sim=None, diagnostics=True):
    """Integrate the closed loop and return its :class:`SimLog`.

    Parameters
    ----------
    plant : PlantParams, optional
    ctrl : ControllerConfig, SmcConfig or None
        ``None`` runs the plant open loop with ``u = 0``.
    sim : SimConfig, optional
    diagnostics : bool
        Fill the ``V``, ``Vdot`` and ``rhs_bound`` columns.

    Raises
    ------
    DivergenceError
        If a state exceeds 1e12 in magnitude or becomes non-finite. The
        partial log is attached as ``err.log``.
    """
    plant = PlantParams() if plant is None else plant
    sim = SimConfig() if sim is None else sim
    if ctrl is not None and not isinstance(ctrl, (ControllerConfig, SmcConfig)):
        raise DomainError(f"unsupported controller {type(ctrl).__name__}")
    p = _pack(plant, ctrl, sim)
    if isinstance(ctrl, ControllerConfig):
        est = np.array(ctrl.theta_hat0 + ctrl.theta_d_hat0)
    else:
        est = np.zeros(6)
    y0 = np.concatenate([np.array(sim.xi0), est, [0.0]])
    p[K.H_FLAG] = 1.0 if sim.control_hold else 0.0
    n = sim.n_samples
    raw = np.full((n + 1, K.N_LOG), np.nan)
    substeps = sim.substeps(ctrl)
    rows, diverged = K.simulate(y0, tuple(p), n, substeps,
                                float(sim.sample_dt), raw)
    meta = {"controller": type(ctrl).__name__ if ctrl is not None else "none",
            "substeps": substeps, "seed": sim.seed}
    log = SimLog.from_kernel(raw[:rows], sim.sample_dt, diverged, meta)
    if diagnostics and not diverged and rows >= 3:
        V, Vdot, rhs = lyapunov_diagnostics(log, ctrl, plant.theta_true)
        log = log.with_columns(V=V, Vdot=Vdot, rhs_bound=rhs)
    if diverged:
        t_end = log.t[-1] if len(log) else 0.0
        raise DivergenceError(f"simulation diverged after t = {t_end:.2f} s", log=log)
    return log


def objective(log, w=None):
    """Sum of ``G1 e1**2 + G2 u**2`` over all samples after t = 0.

    Uses a correctly rounded sum so the result does not depend on the
    summation order.

    Raises
    ------
    IncompleteLog
        If the log comes from a diverged run.
    """
    w = ObjectiveWeights() if w is None else w
    if log.diverged:
        raise IncompleteLog("objective needs a complete log; the run diverged")
    e1 = log.e1[1:]
    u = log.u[1:]
    terms = w.gamma_1_weight * e1 * e1 + w.gamma_2_weight * u * u
    return math.fsum(terms)


def total_variation(x):
    """Total variation ``sum |x[k+1] - x[k]|`` of a sampled signal."""
    return math.fsum(np.abs(np.diff(np.asarray(x, dtype=float))))


def phi_matrix(lam, form="weights1"):
    """Upper-triangular weighting matrix of the ultimate-bound argument.

    ``form="weights1"`` has rows ``(1/sqrt 2, lam, a4)``, ``(0, 1, a5)``,
    ``(0, 0, a6)``; ``form="phi2"`` has rows ``(1, lam, a4/lam**2)``,
    ``(0, 1, a5/lam**2)``, ``(0, 0, a6/lam**2)``.
    """
    a4, a5, a6 = gains(lam).as_tuple()
    if form == "weights1":
        return np.array([[1.0 / math.sqrt(2.0), lam, a4], [0.0, 1.0, a5], [0.0, 0.0, a6]])
    if form == "phi2":
        s = 1.0 / lam**2
        return np.array([[1.0, lam, a4 * s], [0.0, 1.0, a5 * s], [0.0, 0.0, a6 * s]])
    raise DomainError(f"unknown phi form {form!r}")


def _jacobi_eigenvalues(a, sweeps=50, tol=1e-15):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * np.linalg.norm(a):
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if a[i, j] == 0.0:
                    continue
                tau = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n)
                rot[i, i] = c
                rot[j, j] = c
                rot[i, j] = s
                rot[j, i] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def sigma_min(phi):
    """Smallest eigenvalue of ``phi @ phi.T``.

    The matrix is badly scaled (its smallest eigenvalue is far below
    ``eps * ||phi phi^T||``), so Jacobi is applied to the inverse
    ``phi^-T phi^-1`` whose largest eigenvalue carries full relative
    precision.
    """
    phi = np.asarray(phi, dtype=float)
    inv = np.linalg.inv(phi)
    return 1.0 / _jacobi_eigenvalues(inv.T @ inv)[-1]


def ultimate_bound(ctrl, g=None, phi=None, form="weights1"):
    """Return ``(bound, sigma_min)`` with ``bound = d_max**2/(2(lam+lam**5) sigma_min)``.

    ``phi`` overrides the weighting matrix (test hook).
    """
    lam = float(ctrl.lam)
    if not lam > 0:
        raise DomainError(f"lam must be positive, got {lam}")
    if g is not None and not np.allclose(g.as_tuple(), gains(lam).as_tuple(), rtol=1e-12):
        raise DomainError("gains do not correspond to ctrl.lam")
    mat = phi_matrix(lam, form) if phi is None else phi
    smin = sigma_min(mat)
    bound = ctrl.d_max**2 / (2.0 * (lam + lam**5) * smin)
    return bound, smin


def _central(values, dt):
    return np.gradient(values, dt)


def _estimate_rate(est, target, gamma, dt):
    """Rate of ``|target - est|**2 / (2 gamma)`` from differences of ``est``.

    The squared distance is huge compared to its change, so the difference
    ``(a - b)(2 target - a - b)`` is formed directly.
    """
    n = est.shape[0]
    out = np.zeros(n)
    if gamma == 0 or n < 2:
        return out
    lo = np.r_[0, np.arange(n - 2), n - 2]
    hi = np.r_[1, np.arange(2, n), n - 1]
    span = (hi - lo) * dt
    a, b = est[hi], est[lo]
    out = np.sum((b - a) * (2.0 * target - a - b), axis=1) / (2.0 * gamma) / span
    return out


def lyapunov_diagnostics(log, ctrl, true_theta):
    """Per-sample ``(V, Vdot, rhs_bound)`` along a logged run.

    For the backstepping law

        V = e1**2/2 + (e2 + lam e1)**2/(2 lam**4) + h**2/2
            + |theta - theta_hat|**2/(2 gamma6) + |theta_d - theta_d_hat|**2/(2 gamma7)

    with ``theta_d = theta/m_t``, and the decrease bound

        rhs = -(lam/2) e1**2 + (1/(2 lam) + 1/(2 lam**5)) d_max**2 - (e2 + lam e1)**2 - h**2.

    Estimate terms are skipped for a zero adaptation rate. For the
    sliding-mode baseline ``V = s**2/2`` and ``rhs = 0`` (reaching condition).
    ``Vdot`` is a central difference over the sample grid.
    """
    dt = log.sample_dt
    e1, e2, e3 = log.e.T
    if isinstance(ctrl, SmcConfig):
        s = e3 + ctrl.c2 * e2 + ctrl.c1 * e1
        V = 0.5 * s * s
        return V, _central(V, dt), np.zeros_like(V)
    if ctrl is None:
        V = 0.5 * e1 * e1
        return V, _central(V, dt), np.zeros_like(V)
    lam = ctrl.lam
    a4, a5, a6 = gains(lam).as_tuple()
    h = a4 * e1 + a5 * e2 + a6 * e3
    z = e2 + lam * e1
    Vs = 0.5 * e1 * e1 + z * z / (2.0 * lam**4) + 0.5 * h * h
    theta = np.asarray(true_theta, dtype=float)
    theta_d = theta / ctrl.m_t
    V = Vs.copy()
    if ctrl.gamma6 > 0:
        V += np.sum((theta - log.theta_hat) ** 2, axis=1) / (2.0 * ctrl.gamma6)
    if ctrl.gamma7 > 0:
        V += np.sum((theta_d - log.theta_d_hat) ** 2, axis=1) / (2.0 * ctrl.gamma7)
    Vdot = (_central(Vs, dt)
            + _estimate_rate(log.theta_hat, theta, ctrl.gamma6, dt)
            + _estimate_rate(log.theta_d_hat, theta_d, ctrl.gamma7, dt))
    rhs = (-(lam / 2.0) * e1 * e1 + (1.0 / (2.0 * lam) + 1.0 / (2.0 * lam**5)) * ctrl.d_max**2
           - z * z - h * h)
    return V, Vdot, rhs


def lyapunov_tolerance(log):
    """Discretization allowance ``10 * sample_dt * max |V''|``."""
    Vddot = _central(log.Vdot, log.sample_dt)
    return 10.0 * log.sample_dt * float(np.max(np.abs(Vddot)))


def lyapunov_check(log, ctrl):
    """Fraction of samples outside the ball ``V <= d_max**2/lam`` violating the bound.

    Returns
    -------
    fraction : float
        Violations divided by the number of checked samples.
    checked : int
    tol : float
    """
    tol = lyapunov_tolerance(log)
    mask = log.V > ctrl.d_max**2 / ctrl.lam
    bad = mask & (log.Vdot > log.rhs_bound + tol)
    checked = int(mask.sum())
    return (bad.sum() / checked if checked else 0.0), checked, tol


class TuningObjective:
    """Objective over ``x = (lam, log10 gamma1)`` for the optimizer.

    Diverged runs score :data:`DIVERGED_OBJECTIVE`. Instances are pure and
    reentrant, so evaluations may run concurrently.
    """

    def __init__(self, plant=None, ctrl=None, sim=None, weights=None):
        self.plant = PlantParams() if plant is None else plant
        self.ctrl = ControllerConfig.from_plant(self.plant) if ctrl is None else ctrl
        self.sim = SimConfig() if sim is None else sim
        self.weights = ObjectiveWeights() if weights is None else weights

    def config(self, x):
        lam, log_gamma = float(x[0]), float(x[1])
        return self.ctrl.with_(lam=lam).with_gamma1(10.0**log_gamma)

    def __call__(self, x):
        try:
            log = simulate(self.plant, self.config(x), self.sim, diagnostics=False)
        except DivergenceError:
            return DIVERGED_OBJECTIVE
        except DomainError as exc:
            raise EvaluationError(f"invalid parameters {tuple(x)}: {exc}") from exc
        val = objective(log, self.weights)
        return val if math.isfinite(val) else DIVERGED_OBJECTIVE
