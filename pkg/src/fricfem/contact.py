"""Pointwise contact and friction operators.

All operators act on arrays of values sampled at contact-face quadrature
points.  In 2D the tangential quantities are scalars relative to the fixed
tangent obtained by rotating the outward normal by +90 degrees.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear elasticity, plane-strain Lame parameters."""
    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError("E must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (-1, 0.5)")

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


@dataclass(frozen=True)
class FrictionModel:
    """Tresca (given threshold ``s``) or Coulomb (coefficient ``mu_c``)."""
    kind: str
    s: float = 0.0
    mu_c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tresca", "coulomb"):
            raise ValueError("kind must be 'tresca' or 'coulomb'")
        if self.kind == "tresca" and self.s < 0.0:
            raise ValueError("Tresca threshold must be nonnegative")
        if self.kind == "coulomb" and self.mu_c < 0.0:
            raise ValueError("Coulomb coefficient must be nonnegative")


@dataclass(frozen=True)
class NitscheParams:
    """Nitsche parameter; the face-wise weight is gamma0 / h_T."""
    gamma0: float

    def __post_init__(self):
        if self.gamma0 <= 0.0:
            raise ValueError("gamma0 must be positive")


def proj_neg(x):
    """Projection onto the nonpositive reals, min(x, 0)."""
    return np.minimum(x, 0.0)


def proj_ball(x, radius):
    """Projection onto the ball [-radius, radius] (elementwise)."""
    return np.clip(x, -np.asarray(radius), np.asarray(radius))


def p_n(sig_nn, u_n, gamma):
    """Linear normal contact operator sigma_n(v) - gamma * v_n."""
    return sig_nn - gamma * u_n


def p_t(sig_nt, u_t, gamma):
    """Linear tangential contact operator sigma_t(v) - gamma * v_t."""
    return sig_nt - gamma * u_t


def s_h(friction, pn_prev):
    """Friction threshold: constant for Tresca, -mu_c*[P_n]_- for Coulomb."""
    if friction.kind == "tresca":
        return np.full_like(np.asarray(pn_prev, dtype=float), friction.s)
    return -friction.mu_c * proj_neg(pn_prev)


def p_lin_n(pn_w, pn_prev):
    """Linearization of [P_n]_- at the previous iterate, evaluated at w.

    Where the previous iterate is in contact (P_n < 0) the projection is the
    identity and the operator stays P_n(w); elsewhere it vanishes.  At the
    kink P_n = 0 the non-contact branch is used; both branches agree in
    value there.
    """
    return np.where(pn_prev < 0.0, pn_w, 0.0)


def p_lin_t(pt_w, pt_prev, radius):
    """Linearization of [P_t]_{S} at the previous iterate, frozen radius.

    Stick points (|P_t| <= radius, including the kink) keep the identity
    branch; slip points freeze the value at radius * sign(P_t).
    """
    stick = np.abs(pt_prev) <= radius
    return np.where(stick, pt_w, np.sign(pt_prev) * np.asarray(radius))
