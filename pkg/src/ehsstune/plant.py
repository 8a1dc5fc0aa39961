"""Electro-hydraulic servo plant in strict-feedback coordinates.

The state is ``xi = (position [m], velocity [m/s], differential pressure [Pa])``
and evolves as

    xi1' = xi2 + d
    xi2' = (S xi3 - b xi2 - beta xi1) / m_t,     b = b0 + df,  beta = theta . phi(xi)
    xi3' = 4B/V_t (k u sqrt(P_d - sign(u) xi3) - alpha xi3 / (1 + gamma |u|) - S xi2)

with regressor ``phi(xi) = (xi1**2, xi2**2, xi3**2)``.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .errors import DomainError, NonFiniteState

__all__ = [
    "PlantParams",
    "Reference",
    "ReferenceFrame",
    "regressor",
    "beta_effective",
    "friction_perturbation",
    "disturbance",
    "derivatives",
    "reference",
]


@dataclass(frozen=True)
class PlantParams:
    """Physical constants and the true uncertainty realization.

    Defaults are the published numerical values. ``theta_true`` holds the
    nonlinear stiffness coefficients acting on ``phi(xi)``; the default
    ``(k_l + dk_l, 0, 0)`` gives a cubic spring matching the linear stiffness
    bound at unit position.

    Attributes
    ----------
    B, V_t, S, m_t : float
        Bulk modulus [Pa], total volume [m^3], piston area [m^2], mass [kg].
    b0 : float
        Nominal viscous coefficient [kg/s].
    k, gamma_v, alpha_v : float
        Valve gain, leakage shape constant and leakage gain.
    P_s, P_r : float
        Supply and return pressure [Pa]; ``P_d = P_s - P_r``.
    k_l, dk_l : float
        Nominal spring stiffness and its uncertainty bound [N/m].
    theta_true : tuple of float
        True stiffness coefficients.
    d_const : float
        Disturbance amplitude on the velocity channel [m/s].
    F_max_true : float
        Amplitude of the friction perturbation ``F_max_true * sin(xi2)``.
    disturbance : {"constant", "sinusoidal"}
        Shape of ``d(t)``.
    d_freq : float
        Angular frequency of the sinusoidal disturbance [rad/s].
    """

    B: float = 2.2e9
    V_t: float = 1e-3
    S: float = 1.5e-3
    m_t: float = 70.0
    b0: float = 590.0
    k: float = 5.12e-5
    gamma_v: float = 8571.0
    alpha_v: float = 4.1816e-12
    P_s: float = 300e5
    P_r: float = 1e5
    k_l: float = 12500.0
    dk_l: float = 2500.0
    theta_true: tuple = (15000.0, 0.0, 0.0)
    d_const: float = 0.1
    F_max_true: float = 10.0
    disturbance: str = "constant"
    d_freq: float = 1.0

    def __post_init__(self):
        for name in ("B", "V_t", "S", "m_t", "k", "P_s"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if not self.P_d > 0:
            raise DomainError(f"P_d = P_s - P_r must be positive, got {self.P_d}")
        if self.disturbance not in ("constant", "sinusoidal"):
            raise DomainError(f"unknown disturbance shape {self.disturbance!r}")
        if self.F_max_true < 0 or self.d_const < 0:
            raise DomainError("F_max_true and d_const must be non-negative")
        object.__setattr__(self, "theta_true", tuple(float(v) for v in self.theta_true))
        if len(self.theta_true) != 3:
            raise DomainError("theta_true must have three entries")

    @property
    def P_d(self):
        return self.P_s - self.P_r

    def with_(self, **changes):
        return replace(self, **changes)

    def pack(self, p=None):
        """Write the plant slots of a kernel parameter vector."""
        if p is None:
            p = np.zeros(K.N_SLOTS)
        p[K.P_B] = self.B
        p[K.P_VT] = self.V_t
        p[K.P_S] = self.S
        p[K.P_MT] = self.m_t
        p[K.P_B0] = self.b0
        p[K.P_K] = self.k
        p[K.P_GAMMA] = self.gamma_v
        p[K.P_ALPHA] = self.alpha_v
        p[K.P_PD] = self.P_d
        p[K.P_TH0:K.P_TH2 + 1] = self.theta_true
        p[K.P_FTRUE] = self.F_max_true
        p[K.P_DKIND] = 0.0 if self.disturbance == "constant" else 1.0
        p[K.P_DAMP] = self.d_const
        p[K.P_DFREQ] = self.d_freq
        K.pack_plant_derived(p)
        return p


_REF_KINDS = {"step": K.REF_STEP, "sine": K.REF_SINE, "sum_of_sines": K.REF_SUM_OF_SINES}


@dataclass(frozen=True)
class Reference:
    """Reference trajectory family.

    ``step`` holds ``amplitude`` from t = 0; ``sine`` is ``amplitude*sin(t)``;
    ``sum_of_sines`` is ``amplitude*(sin t + sin 2t + sin 3t)``.
    """

    kind: str = "step"
    amplitude: float = 0.2

    def __post_init__(self):
        if self.kind not in _REF_KINDS:
            raise DomainError(f"unknown reference kind {self.kind!r}; "
                              f"expected one of {sorted(_REF_KINDS)}")

    @classmethod
    def step(cls, a=0.2):
        return cls("step", a)

    @classmethod
    def sine(cls, a=0.05):
        return cls("sine", a)

    @classmethod
    def sum_of_sines(cls, a=0.05):
        return cls("sum_of_sines", a)

    @property
    def code(self):
        return _REF_KINDS[self.kind]

    def pack(self, p):
        p[K.R_KIND] = self.code
        p[K.R_AMP] = self.amplitude
        return p


@dataclass(frozen=True)
class ReferenceFrame:
    r: float
    r_dot: float
    r_ddot: float
    r_dddot: float

    def as_tuple(self):
        return (self.r, self.r_dot, self.r_ddot, self.r_dddot)


def _state(xi):
    x = np.asarray(xi, dtype=float)
    if x.shape != (3,):
        raise DomainError(f"state must have three entries, got shape {x.shape}")
    return x


def regressor(xi):
    """Return ``phi(xi) = (xi1**2, xi2**2, xi3**2)``."""
    x = _state(xi)
    return x * x


def beta_effective(xi, theta_true):
    """Effective stiffness ``theta . phi(xi)`` [N/m]."""
    return float(np.dot(np.asarray(theta_true, dtype=float), regressor(xi)))


def friction_perturbation(xi, t, params):
    """Viscous perturbation ``df`` [kg/s]; bounded by ``params.F_max_true``."""
    return float(params.F_max_true * np.sin(_state(xi)[1]))


def disturbance(t, params):
    """Velocity-channel disturbance ``d(t)``."""
    return float(K.disturbance(float(t), params.pack()))


def derivatives(xi, u, d, t, params):
    """Plant rates for input ``u`` [A] and disturbance ``d``.

    The pressure is clamped to ``0.999 * P_d`` inside the valve square root
    only, so the result stays finite for any finite state.

    Raises
    ------
    NonFiniteState
        If any input is NaN or infinite.
    """
    x = _state(xi)
    vals = (*x, u, d, t)
    if not all(np.isfinite(vals)):
        raise NonFiniteState(f"non-finite input to derivatives: xi={x}, u={u}, d={d}, t={t}")
    p = params.pack()
    x1, x2, x3 = (float(v) for v in x)
    return np.array([
        x2 + float(d),
        K.plant_accel(x1, x2, x3, p),
        K.pressure_rate(x2, x3, float(u), p),
    ])


def reference(kind, t):
    """Reference value and its first three derivatives at time ``t``.

    ``kind`` is a :class:`Reference` or one of the kind names (default
    amplitudes are used for names).
    """
    if isinstance(kind, str):
        kind = {"step": Reference.step, "sine": Reference.sine,
                "sum_of_sines": Reference.sum_of_sines}[kind]()
    if t < 0:
        raise DomainError("reference time must be non-negative")
    return ReferenceFrame(*K.reference(float(t), kind.code, float(kind.amplitude)))
