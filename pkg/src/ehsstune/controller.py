"""Adaptive backstepping law for the servo plant and a sliding-mode baseline.

Tracking errors are ``e1 = xi1 - r``, ``e2 = xi2 - r'`` and
``e3 = f(xi) - r''`` with ``f`` the velocity rate. The law combines

    h = a4 e1 + a5 e2 + a6 e3
    g = e2 + lam e1 + a4 e2 + a5 e3 + a6 (b0**2/m_t**2 - 4 B S**2/(m_t V_t)) xi2
        - a6 b0 S / m_t**2 xi3
    u = m_t V_t / (4 a6 S B k min(sqrt(P_d - xi3), sqrt(P_d + xi3))) v

with ``a4 = 3/2 + lam``, ``a5 = 1 + 1/lam**3 + 1/(2 lam)``, ``a6 = 1/lam**4``.
Two feedback laws are available for ``v``:

``"smooth"`` (default)
    ``v = -g - tanh(h/eps) R - k_o h``. The robust magnitude ``R`` uses the
    velocity-rate friction bound ``F_max/m_t**2`` and clamped stiffness
    estimates.
``"printed"``
    ``v = -(|g| + R) - k_o h`` with ``F_max`` used as is, unclamped estimates
    and no ``a6`` on the ``xi3`` term of ``g``. Kept for reference; it does
    not stabilize the plant.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as K
from .errors import DomainError, SaturationError
from .plant import PlantParams, ReferenceFrame

__all__ = [
    "ControllerConfig",
    "SmcConfig",
    "Gains",
    "AdaptiveState",
    "ErrorVector",
    "gains",
    "compute_errors",
    "stabilizing_functions",
    "robust_phi",
    "control",
    "control_terms",
    "adaptation_rates",
    "smc_control",
]

_LAWS = {"smooth": K.LAW_SMOOTH, "printed": K.LAW_PRINTED}
_ACCEL = {"measured": K.ACCEL_MEASURED, "model": K.ACCEL_MODEL}


@dataclass(frozen=True)
class Gains:
    alpha4: float
    alpha5: float
    alpha6: float

    def as_tuple(self):
        return (self.alpha4, self.alpha5, self.alpha6)


@dataclass(frozen=True)
class ErrorVector:
    e1: float
    e2: float
    e3: float

    def as_tuple(self):
        return (self.e1, self.e2, self.e3)


@dataclass(frozen=True)
class AdaptiveState:
    """Running estimates of the stiffness coefficients and of ``theta/m_t``."""

    theta_hat: tuple = (0.0, 0.0, 0.0)
    theta_d_hat: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", tuple(float(v) for v in self.theta_hat))
        object.__setattr__(self, "theta_d_hat", tuple(float(v) for v in self.theta_d_hat))
        if len(self.theta_hat) != 3 or len(self.theta_d_hat) != 3:
            raise DomainError("estimates must have three entries each")

    def arrays(self):
        return np.array(self.theta_hat), np.array(self.theta_d_hat)


@dataclass(frozen=True)
class ControllerConfig:
    """Design gains and the plant constants known to the controller.

    Attributes
    ----------
    lam : float
        Design gain; sets ``a4, a5, a6``.
    k_o : float
        Linear feedback gain on ``h``.
    gamma6, gamma7 : float
        Adaptation rates for ``theta_hat`` and ``theta_d_hat``.
    d_max : float
        Assumed disturbance bound.
    F_max : float
        Assumed bound on the viscous perturbation [kg/s].
    eps : float
        Boundary-layer width of ``tanh(h/eps)`` in the smooth law.
    law : {"smooth", "printed"}
        Feedback law for ``v``.
    acceleration : {"measured", "model"}
        Source of the velocity rate in ``e3`` during simulation: the plant
        rate, or the nominal model with the current stiffness estimate.
    beta_max : float
        Bound on the stiffness estimate used inside the smooth law [N/m];
        ``theta_d_hat . phi`` is bounded by ``beta_max / m_t``.
    theta_hat0, theta_d_hat0 : tuple of float
        Initial estimates.
    """

    lam: float = 13.5585
    k_o: float = 1.0
    gamma6: float = 1e-10
    gamma7: float = 1e-10
    d_max: float = 0.1
    F_max: float = 10.0
    eps: float = 0.1
    law: str = "smooth"
    acceleration: str = "measured"
    beta_max: float = 15000.0
    b0: float = 590.0
    B: float = 2.2e9
    V_t: float = 1e-3
    S: float = 1.5e-3
    m_t: float = 70.0
    k: float = 5.12e-5
    alpha_v: float = 4.1816e-12
    gamma_v: float = 8571.0
    P_d: float = 2.99e7
    theta_hat0: tuple = (0.0, 0.0, 0.0)
    theta_d_hat0: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be positive, got {self.lam}")
        if not self.k_o > 0:
            raise DomainError(f"k_o must be positive, got {self.k_o}")
        if self.gamma6 < 0 or self.gamma7 < 0:
            raise DomainError("adaptation rates must be non-negative")
        if self.d_max < 0 or self.F_max < 0:
            raise DomainError("d_max and F_max must be non-negative")
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")
        if self.law not in _LAWS:
            raise DomainError(f"unknown law {self.law!r}; expected one of {sorted(_LAWS)}")
        if self.acceleration not in _ACCEL:
            raise DomainError(f"unknown acceleration source {self.acceleration!r}")
        if not self.beta_max > 0:
            raise DomainError("beta_max must be positive")
        for name in ("B", "V_t", "S", "m_t", "k", "P_d"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")
        object.__setattr__(self, "theta_hat0", tuple(float(v) for v in self.theta_hat0))
        object.__setattr__(self, "theta_d_hat0", tuple(float(v) for v in self.theta_d_hat0))

    @classmethod
    def from_plant(cls, plant: PlantParams, **kw):
        """Mirror the known plant constants; ``beta_max`` becomes ``k_l + dk_l``."""
        base = dict(b0=plant.b0, B=plant.B, V_t=plant.V_t, S=plant.S, m_t=plant.m_t,
                    k=plant.k, alpha_v=plant.alpha_v, gamma_v=plant.gamma_v,
                    P_d=plant.P_d, beta_max=plant.k_l + plant.dk_l)
        base.update(kw)
        return cls(**base)

    @property
    def gamma1(self):
        return self.gamma6

    def with_(self, **changes):
        return replace(self, **changes)

    def with_gamma1(self, gamma1):
        """Set both adaptation rates to ``gamma1``."""
        return replace(self, gamma6=float(gamma1), gamma7=float(gamma1))

    def initial_state(self):
        return AdaptiveState(self.theta_hat0, self.theta_d_hat0)

    def pack(self, p=None):
        if p is None:
            p = np.zeros(K.N_SLOTS)
        p[K.C_KIND] = K.CTRL_BACKSTEPPING
        p[K.C_LAM] = self.lam
        p[K.C_KO] = self.k_o
        p[K.C_G6] = self.gamma6
        p[K.C_G7] = self.gamma7
        p[K.C_DMAX] = self.d_max
        p[K.C_FMAX] = self.F_max
        p[K.C_EPS] = self.eps
        p[K.C_LAW] = _LAWS[self.law]
        p[K.C_ACCEL] = _ACCEL[self.acceleration]
        p[K.C_BMAX] = self.beta_max
        p[K.C_B] = self.B
        p[K.C_VT] = self.V_t
        p[K.C_S] = self.S
        p[K.C_MT] = self.m_t
        p[K.C_B0] = self.b0
        p[K.C_K] = self.k
        p[K.C_ALPHA] = self.alpha_v
        p[K.C_GAMMA] = self.gamma_v
        p[K.C_PD] = self.P_d
        K.pack_derived(p)
        return p


@dataclass(frozen=True)
class SmcConfig:
    """Sliding-mode baseline ``u = -K sign(s) - K_eq s``.

    The surface is ``s = e3 + c2 e2 + c1 e1``; ``e3`` uses the measured
    velocity rate. Defaults give tracking comparable to the backstepping law
    with a visibly switching input.
    """

    K: float = 0.01
    K_eq: float = 0.0
    c1: float = 400.0
    c2: float = 40.0

    def __post_init__(self):
        if self.K < 0 or self.K_eq < 0:
            raise DomainError("K and K_eq must be non-negative")
        if self.c1 < 0 or self.c2 < 0:
            raise DomainError("surface coefficients must be non-negative")

    def with_(self, **changes):
        return replace(self, **changes)

    def pack(self, p=None):
        if p is None:
            p = np.zeros(K.N_SLOTS)
        p[K.C_KIND] = K.CTRL_SMC
        p[K.M_K] = self.K
        p[K.M_KEQ] = self.K_eq
        p[K.M_C1] = self.c1
        p[K.M_C2] = self.c2
        return p


def gains(lam):
    """Stabilizing coefficients ``(a4, a5, a6)`` for design gain ``lam``.

    Raises
    ------
    DomainError
        If ``lam <= 0``.
    """
    lam = float(lam)
    if not lam > 0:
        raise DomainError(f"lam must be positive, got {lam}")
    return Gains(*K.gains(lam))


def _xi(xi):
    x = np.asarray(xi, dtype=float)
    if x.shape != (3,):
        raise DomainError(f"state must have three entries, got shape {x.shape}")
    return float(x[0]), float(x[1]), float(x[2])


def _err(e):
    if isinstance(e, ErrorVector):
        return e.as_tuple()
    e1, e2, e3 = (float(v) for v in e)
    return e1, e2, e3


def _adapt(adapt):
    """Estimates as one vector ``(theta_hat, theta_d_hat)``."""
    if adapt is None:
        adapt = AdaptiveState()
    return np.array(adapt.theta_hat + adapt.theta_d_hat)


def _check_gains(g, cfg):
    if g is None:
        return
    ref = K.gains(float(cfg.lam))
    if not np.allclose(g.as_tuple(), ref, rtol=1e-12, atol=0.0):
        raise DomainError("gains do not correspond to cfg.lam")


def compute_errors(xi, ref, cfg, adapt=None, accel=None):
    """Tracking errors for state ``xi`` against ``ref``.

    Parameters
    ----------
    xi : array_like, shape (3,)
    ref : ReferenceFrame or sequence of four floats
    cfg : ControllerConfig
    adapt : AdaptiveState, optional
        Estimates used for the nominal velocity rate (zero by default).
    accel : float, optional
        Measured velocity rate. When given it replaces the nominal model.
    """
    x1, x2, x3 = _xi(xi)
    r = ref.as_tuple() if isinstance(ref, ReferenceFrame) else tuple(float(v) for v in ref)
    if accel is None:
        p = cfg.pack()
        bh = K.estimates(x1, x2, x3, _adapt(adapt), 0, p)[0]
        accel = K.model_accel(x1, x2, x3, bh, p)
    return ErrorVector(x1 - r[0], x2 - r[1], float(accel) - r[2])


def stabilizing_functions(e, xi, g, cfg):
    """Return ``(h, g_fn)``."""
    _check_gains(g, cfg)
    e1, e2, e3 = _err(e)
    _, x2, x3 = _xi(xi)
    return K.stabilizing(e1, e2, e3, x2, x3, cfg.pack())


def robust_phi(xi, adapt, cfg):
    """Magnitude bound of the estimate-dependent terms dominated by ``v``.

    ``|A1 b x1| + |A2 b x2| + a6 F |x1| |b|`` with ``b = theta_hat . phi(xi)``,
    ``A1 = a6 b0/m_t**2`` and ``A2 = a6/m_t``.
    """
    x1, x2, x3 = _xi(xi)
    p = cfg.pack()
    bh = K.estimates(x1, x2, x3, _adapt(adapt), 0, p)[0]
    return K.phi_term(x1, x2, bh, p)


def control_terms(e, xi, adapt, g, cfg):
    """Return ``(u, v, h)`` for the configured law.

    Raises
    ------
    SaturationError
        If ``|xi3| >= P_d``, where the input gain is undefined.
    """
    _check_gains(g, cfg)
    e1, e2, e3 = _err(e)
    x1, x2, x3 = _xi(xi)
    if abs(x3) >= cfg.P_d:
        raise SaturationError(f"|xi3| = {abs(x3):.6g} Pa reaches P_d = {cfg.P_d:.6g} Pa",
                              state=(x1, x2, x3))
    return K.backstepping(e1, e2, e3, x1, x2, x3, _adapt(adapt), 0, cfg.pack())


def control(e, xi, adapt, g, cfg):
    """Valve current ``u`` [A]; see :func:`control_terms`."""
    return control_terms(e, xi, adapt, g, cfg)[0]


def adaptation_rates(e, xi, adapt, g, cfg):
    """Return ``(d theta_hat/dt, d theta_d_hat/dt)``, both parallel to ``phi(xi)``."""
    _check_gains(g, cfg)
    x1, x2, x3 = _xi(xi)
    h = stabilizing_functions(e, xi, None, cfg)[0]
    out = np.empty(6)
    K.adaptation(h, x1, x2, x3, cfg.pack(), out, 0)
    return out[:3].copy(), out[3:].copy()


def smc_control(e, cfg):
    """Sliding-mode input ``-K sign(s) - K_eq s`` [A]."""
    e1, e2, e3 = _err(e)
    return K.smc(e1, e2, e3, cfg.pack())[0]
