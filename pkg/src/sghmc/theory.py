"""Closed-form constants and bounds for the underdamped dynamics.

Everything here is arithmetic on the certificate (A0, B, M, m, b), the run
parameters (gamma, beta, d, lam, delta, p, q) and, where unavoidable,
empirical pilot statistics. The chain of quantities:

* drift constants (lambda_c, A_c) -- verified numerically on probe points;
* the Lyapunov function 'V' of the dynamics and its integral under the
  initial law;
* contraction constants (Lambda_c, alpha_c, c*, C*, epsilon_c, R_1) and the
  concave comparison function h, evaluated by composite Simpson quadrature;
* the semimetrics r and rho built from h and V;
* uniform second-moment bounds (C^c/C^a families) and the step-size cap;
* the proof-constant chain c_2 ... c_18 and the aggregate C~ (the last two
  need sup-moment pilot statistics and are flagged "empirical");
* the three risk-bound terms B_1, B_2, B_3 and the iteration budget;
* growth orders of the constants across a (beta, d) grid.

Entries are exact evaluations of their defining formulas; nothing is tuned.
Quantities that cannot be computed in closed form are estimated and labelled
as such, never silently substituted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import cumulative_simpson
from scipy.special import gammaln

from .errors import CertificationError, ConfigurationError, NumericalError
from .objectives import (
    Dataset,
    ObjectiveSpec,
    SmoothnessCertificate,
    batch_empirical_gradient,
    batch_empirical_risk,
    default_probe_radius,
    empirical_risk,
)
from .rng import derive_stream

_TINY = float(np.finfo(float).tiny)


# ---------------------------------------------------------------------------
# Drift constants and the Lyapunov function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftConstants:
    """Verified pair (lambda_c, A_c) for the drift inequality

    <x, grad F(x)> >= 2 lambda_c (F(x) + gamma^2 |x|^2 / 4) - 2 A_c / beta.
    """

    lambda_c: float
    A_c: float

    def __post_init__(self):
        if not (0 < self.lambda_c <= 0.25):
            raise ConfigurationError("lambda_c must lie in (0, 1/4]")
        if self.A_c <= 0:
            raise ConfigurationError("A_c must be positive")


def lambda_c_cap(cert: SmoothnessCertificate, gamma: float) -> float:
    """Upper end of the admissible lambda_c interval."""
    return min(0.25, cert.m / (cert.M + 2.0 * cert.B + gamma**2 / 2.0))


def derive_drift_constants(
    cert: SmoothnessCertificate,
    gamma: float,
    beta: float,
    obj: ObjectiveSpec,
    data: Dataset,
    probes: int = 1000,
    radius: Optional[float] = None,
    seed: int = 0,
) -> DriftConstants:
    """Half the printed caps, then verify the drift inequality on probes.

    Starts from lambda_c = min{1/4, m/(M + 2B + gamma^2/2)} / 2 and
    A_c = (beta/2)(b + 2B + A0) (floored at the smallest positive float) and,
    should any probe violate the inequality, halves lambda_c and doubles A_c
    up to 20 times before giving up with the witnessing probe.
    """
    lam_c = 0.5 * lambda_c_cap(cert, gamma)
    a_c = max(0.5 * beta * (cert.b + 2.0 * cert.B + cert.A0), _TINY)
    if radius is None:
        radius = default_probe_radius(cert)
    rng = derive_stream(seed, "drift:probes")
    d = obj.dim
    U = rng.standard_normal((probes, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    R = radius * rng.uniform(0.0, 1.0, size=(probes, 1)) ** (1.0 / d)
    X = U * R
    risks = batch_empirical_risk(X, obj, data)
    grads = batch_empirical_gradient(X, obj, data)
    lhs = np.sum(grads * X, axis=1)
    norm2 = np.sum(X * X, axis=1)
    for _ in range(21):
        rhs = 2.0 * lam_c * (risks + gamma**2 * norm2 / 4.0) - 2.0 * a_c / beta
        slack = lhs - rhs
        j = int(np.argmin(slack))
        if slack[j] >= -1e-9 * (1.0 + np.abs(rhs[j])):
            return DriftConstants(lambda_c=lam_c, A_c=a_c)
        lam_c *= 0.5
        a_c *= 2.0
    raise CertificationError(
        "drift inequality could not be certified after 20 shrinks",
        witness={"x": X[j].tolist(), "slack": float(slack[j])},
    )


@dataclass(frozen=True)
class LyapunovParams:
    """Parameters of the energy functional

    V(x, v) = beta F(x) + (beta gamma^2 / 4)(|x + v/gamma|^2 + |v/gamma|^2
              - lambda_c |x|^2).
    """

    beta: float
    gamma: float
    lambda_c: float
    obj: ObjectiveSpec
    data: Dataset

    def value(self, x, v) -> float:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        g = self.gamma
        quad = (
            float(np.sum((x + v / g) ** 2))
            + float(np.sum((v / g) ** 2))
            - self.lambda_c * float(np.sum(x * x))
        )
        return self.beta * empirical_risk(x, self.obj, self.data) + 0.25 * self.beta * g * g * quad

    def value_rows(self, X, V) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        V = np.atleast_2d(np.asarray(V, dtype=float))
        g = self.gamma
        quad = (
            np.sum((X + V / g) ** 2, axis=1)
            + np.sum((V / g) ** 2, axis=1)
            - self.lambda_c * np.sum(X * X, axis=1)
        )
        return self.beta * batch_empirical_risk(X, self.obj, self.data) + 0.25 * self.beta * g * g * quad


def lyapunov(params: LyapunovParams, x, v) -> float:
    """Evaluate the Lyapunov functional at a single (x, v)."""
    return params.value(x, v)


def lyapunov_lower_bound(params: LyapunovParams, x, v) -> float:
    """Known lower envelope: max of the quadratic floors in |x| and |v|."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    one = 1.0 - 2.0 * params.lambda_c
    return max(
        0.125 * one * params.beta * params.gamma**2 * float(x @ x),
        0.25 * one * params.beta * float(v @ v),
    )


def initial_lyapunov_integral(init, lyap: LyapunovParams, dim: int,
                              mc_draws: int = 4096, seed: int = 0) -> float:
    """Integral of the Lyapunov functional under the initial law.

    Exact for a point mass, Monte Carlo (``mc_draws`` draws) for a Gaussian.
    """
    if init.kind == "point":
        x0 = np.zeros(dim) if init.x0 is None else np.asarray(init.x0, dtype=float)
        v0 = np.zeros(dim) if init.v0 is None else np.asarray(init.v0, dtype=float)
        return lyap.value(x0, v0)
    rng = derive_stream(seed, "mu0:lyapunov")
    X = init.mean + init.scale * rng.standard_normal((mc_draws, dim))
    V = init.mean + init.scale * rng.standard_normal((mc_draws, dim))
    return float(np.mean(lyap.value_rows(X, V)))


# ---------------------------------------------------------------------------
# Contraction constants and the comparison function h
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionConstants:
    """Constants of the exponential contraction estimate for the dynamics.

    ``c_star`` is the contraction rate, ``C_star`` the prefactor; the
    auxiliary pair (Lambda_c, alpha_c) solves a two-way fixed point, and
    ``eta_c = 1 / Lambda_c`` follows from substituting L_c = beta M into the
    two displays that define alpha_c. ``log_c_star`` is kept alongside
    ``c_star`` because the rate is exponentially small in (beta + d).
    """

    c_star: float
    C_star: float
    Lambda_c: float
    alpha_c: float
    epsilon_c: float
    R_1: float
    L_c: float
    eta_c: float
    p: float
    d: int
    A_c: float
    lambda_c: float
    log_c_star: float


def _resolve_alpha_lambda(mg2: float, lam_c: float, a_c: float, d: int):
    """Damped fixed-point iteration for (alpha_c, Lambda_c) from alpha = mg2."""

    def lam_of_alpha(alpha):
        one = 1.0 + 2.0 * alpha + 2.0 * alpha * alpha
        return 2.4 * one * (d + a_c) * mg2 / (lam_c * (1.0 - 2.0 * lam_c))

    alpha = mg2
    converged = False
    for _ in range(200):
        Lam = lam_of_alpha(alpha)
        alpha_next = (1.0 + 1.0 / Lam) * mg2
        if abs(alpha_next - alpha) <= 1e-13 * abs(alpha_next):
            alpha = alpha_next
            converged = True
            break
        alpha = 0.5 * (alpha + alpha_next)
    if not converged:
        raise NumericalError("Lambda_c / alpha_c fixed point did not converge in 200 iterations")
    Lam = lam_of_alpha(alpha)
    alpha = (1.0 + 1.0 / Lam) * mg2
    return alpha, lam_of_alpha(alpha)


def _log_c_star(mg2: float, lam_c: float, Lam: float, gamma: float, p: float) -> float:
    log_terms = (
        math.log(lam_c) + math.log(mg2),
        0.5 * math.log(Lam) - Lam + math.log(mg2),
        0.5 * math.log(Lam) - Lam,
    )
    return math.log(gamma / (384.0 * p)) + min(log_terms)


def contraction_constants(
    drift: DriftConstants,
    cert: SmoothnessCertificate,
    gamma: float,
    beta: float,
    d: int,
    p: float = 2.0,
) -> ContractionConstants:
    """Resolve the (Lambda_c, alpha_c) fixed point, then the derived constants.

    alpha_c = (1 + 1/Lambda_c) M / gamma^2 and Lambda_c is an explicit
    function of alpha_c; the pair is solved by damped iteration from
    alpha_c = M / gamma^2 to relative tolerance 1e-13 (both residuals).
    """
    if not (1.0 <= p <= 2.0):
        raise ConfigurationError("contraction constants require p in [1, 2]")
    if not (math.isfinite(beta) and beta > 0):
        raise ConfigurationError("beta must be positive and finite here")
    lam_c, a_c = drift.lambda_c, drift.A_c
    mg2 = cert.M / gamma**2
    alpha, Lam = _resolve_alpha_lambda(mg2, lam_c, a_c, d)
    one = 1.0 + 2.0 * alpha + 2.0 * alpha * alpha
    log_c_star = _log_c_star(mg2, lam_c, Lam, gamma, p)
    c_star = math.exp(log_c_star)
    if c_star == 0.0:
        raise NumericalError(
            f"contraction rate underflowed (Lambda_c = {Lam:.3g}); "
            "the regime is out of floating-point range"
        )
    eps_c = 4.0 * c_star / (gamma * (d + a_c))
    eta_c = 1.0 / Lam
    L_c = beta * cert.M
    R_1 = (
        4.0
        * math.sqrt(1.2)
        * math.sqrt(one)
        * math.sqrt(d + a_c)
        / (math.sqrt(beta) * gamma * math.sqrt(lam_c - 2.0 * lam_c * lam_c))
    )
    inner = (
        4.0
        * (max(1.0, R_1 ** (p - 2.0)) / min(1.0, R_1))
        * one
        * (d + a_c)
        / (beta * gamma * c_star)
    )
    C_star = (
        2.0 ** (1.0 / p)
        * math.exp((2.0 + Lam) / p)
        * ((1.0 + gamma) / min(1.0, alpha))
        * max(1.0, inner) ** (1.0 / p)
    )
    return ContractionConstants(
        c_star=c_star,
        C_star=C_star,
        Lambda_c=Lam,
        alpha_c=alpha,
        epsilon_c=eps_c,
        R_1=R_1,
        L_c=L_c,
        eta_c=eta_c,
        p=p,
        d=d,
        A_c=a_c,
        lambda_c=lam_c,
        log_c_star=log_c_star,
    )


def _h_grid(cc: ContractionConstants, beta: float, gamma: float, r_eff: float, nodes: int):
    """Simpson grid evaluation of h on [0, r_eff]; returns (s, h(s), g(s)).

    h(r) = int_0^r phi(s) g(s) ds with g(s) = 1 - (9/4) c* gamma beta
    int_0^s Phi(u) / phi(u) du, so h' = phi g >= 0 and h'' <= 0 as long as g
    stays nonnegative; g turning negative bounds the validity radius.
    """
    n = max(2, int(nodes))
    if n % 2:
        n += 1
    s = np.linspace(0.0, r_eff, n + 1)
    a = (1.0 + cc.eta_c) * cc.L_c / 8.0 + (
        gamma**2 * beta * cc.epsilon_c * max(1.0, 1.0 / (2.0 * cc.alpha_c)) / 2.0
    )
    phi = np.exp(-a * s * s)
    Phi = cumulative_simpson(phi, x=s, initial=0.0)
    inner = cumulative_simpson(Phi / phi, x=s, initial=0.0)
    g = 1.0 - 2.25 * cc.c_star * gamma * beta * inner
    h = cumulative_simpson(phi * g, x=s, initial=0.0)
    return s, h, g


def h_function(cc: ContractionConstants, beta: float, gamma: float, r: float,
               nodes: int = 4096) -> float:
    """The concave comparison function h evaluated at r.

    h(r) = integral_0^{min(r, R_1)} phi(s) g(s) ds with a Gaussian weight phi
    and the correction factor g carrying the contraction rate; h(0) = 0,
    h'(0+) = 1, and h is constant on [R_1, inf). Composite Simpson with the
    given number of nodes. If g turns negative before min(r, R_1) the
    construction has left its validity range; that radius is reported, not
    repaired.
    """
    if r < 0:
        raise ConfigurationError("h is defined on r >= 0")
    r_eff = min(r, cc.R_1)
    if r_eff == 0.0:
        return 0.0
    s, h_vals, g = _h_grid(cc, beta, gamma, r_eff, nodes)
    if np.any(g < 0.0):
        j = int(np.argmax(g < 0.0))
        raise NumericalError(f"h correction factor went negative at r = {s[j]:.6g}")
    return float(h_vals[-1])


def h_profile(cc: ContractionConstants, beta: float, gamma: float,
              r_max: Optional[float] = None, nodes: int = 4096):
    """Vector of h over an even grid on [0, min(r_max, R_1)].

    One cumulative pass; useful when many evaluations are needed (the
    rho-distance of clouds interpolates on this profile).
    """
    r_eff = cc.R_1 if r_max is None else min(r_max, cc.R_1)
    s, h_vals, g = _h_grid(cc, beta, gamma, r_eff, nodes)
    if np.any(g < 0.0):
        j = int(np.argmax(g < 0.0))
        raise NumericalError(f"h correction factor went negative at r = {s[j]:.6g}")
    return s, h_vals


def r_semimetric(cc: ContractionConstants, state_a, state_b, gamma: float) -> float:
    """r = alpha_c |x1 - x2| + |x1 - x2 + (v1 - v2) / gamma|."""
    x1, v1 = (np.asarray(state_a[0], dtype=float), np.asarray(state_a[1], dtype=float))
    x2, v2 = (np.asarray(state_b[0], dtype=float), np.asarray(state_b[1], dtype=float))
    dx = x1 - x2
    return cc.alpha_c * float(np.linalg.norm(dx)) + float(
        np.linalg.norm(dx + (v1 - v2) / gamma)
    )


def rho_semimetric(cc: ContractionConstants, lyap: LyapunovParams,
                   state_a, state_b, nodes: int = 4096) -> float:
    """rho = h(r) (1 + eps_c V(x1,v1) + eps_c V(x2,v2))."""
    r = r_semimetric(cc, state_a, state_b, lyap.gamma)
    h = h_function(cc, lyap.beta, lyap.gamma, r, nodes=nodes)
    va = lyap.value(*state_a)
    vb = lyap.value(*state_b)
    return h * (1.0 + cc.epsilon_c * va + cc.epsilon_c * vb)


# ---------------------------------------------------------------------------
# Uniform moment bounds and the step-size cap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentBoundConstants:
    """Second-moment envelopes of the continuous (C^c) and discrete (C^a)
    dynamics, the constants K_1 / K_2 controlling the discrete drift, and the
    step-size cap under which the discrete bounds hold."""

    C_c_x: float
    C_c_v: float
    C_a_x: float
    C_a_v: float
    K_1: float
    K_2: float
    lambda_cap: float
    lyapunov_mu0_integral: float


def moment_bound_constants(
    drift: DriftConstants,
    cert: SmoothnessCertificate,
    gamma: float,
    beta: float,
    d: int,
    mu0_lyapunov_integral: float,
    delta: float = 0.0,
) -> MomentBoundConstants:
    """Evaluate the moment-bound constants for dimension d and noise level delta.

    The continuous-time envelopes use 5 (d + A_c) / lambda_c in the bracket,
    the discrete-time ones 8 (d + A_c) / lambda_c; with B = 0 the first arm
    of the step cap is vacuous (infinite).
    """
    lam_c, a_c = drift.lambda_c, drift.A_c
    M, B = cert.M, cert.B
    one = 1.0 - 2.0 * lam_c
    mu0 = float(mu0_lyapunov_integral)
    base5 = mu0 + 5.0 * (d + a_c) / lam_c
    base8 = mu0 + 8.0 * (d + a_c) / lam_c
    c_c_x = 8.0 * base5 / (one * beta * gamma**2)
    c_c_v = 4.0 * base5 / (one * beta)
    c_a_x = 8.0 * base8 / (one * beta * gamma**2)
    c_a_v = 4.0 * base8 / (one * beta)
    half_g_d = 0.5 + gamma + delta
    K1 = max(
        32.0 * M**2 * half_g_d / (one * beta * gamma**2),
        8.0 * (M / 2.0 + gamma**2 / 4.0 - gamma**2 * lam_c / 4.0 + gamma) / (beta * one),
    )
    K2 = 2.0 * B**2 * half_g_d
    cap_from_k2 = gamma * (d + a_c) / (K2 * beta) if K2 > 0 else math.inf
    lambda_cap = min(cap_from_k2, gamma * lam_c / (2.0 * K1))
    return MomentBoundConstants(
        C_c_x=c_c_x,
        C_c_v=c_c_v,
        C_a_x=c_a_x,
        C_a_v=c_a_v,
        K_1=K1,
        K_2=K2,
        lambda_cap=lambda_cap,
        lyapunov_mu0_integral=mu0,
    )


# ---------------------------------------------------------------------------
# Proof-constant chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantEntry:
    name: str
    value: float
    status: str  # "exact" | "empirical"
    formula: str


def constants_to_json(table: Mapping[str, ConstantEntry], indent: int = 2) -> str:
    return json.dumps(
        {
            k: {"value": e.value, "status": e.status, "formula_ref": e.formula}
            for k, e in table.items()
        },
        indent=indent,
    )


def proof_constants(
    cert: SmoothnessCertificate,
    moment: MomentBoundConstants,
    gamma: float,
    beta: float,
    delta: float,
    cc: ContractionConstants,
    pilot_sup_v2: Optional[float] = None,
) -> dict:
    """The c_2 ... c_18 chain and the aggregate C~.

    All entries are exact formula evaluations except ``c_18`` (which needs
    the sup over the chain of E[V^2]; supplied as ``pilot_sup_v2`` from a
    pilot run) and hence ``C_tilde``. Without pilot statistics those two
    entries are absent.
    """
    M, B = cert.M, cert.B
    cax, cav = moment.C_a_x, moment.C_a_v
    ccx, ccv = moment.C_c_x, moment.C_c_v
    root = math.sqrt(M * M * cax + B * B)
    c2 = 4.0 * math.exp(M) * root
    c3 = 2.0 * math.exp(M) * root
    c8 = 3.0 * gamma**2 * cav + 6.0 * M**2 * cax + 6.0 * B**2 + 6.0 * gamma / beta
    c9 = max(4.0 * gamma**2 * c8 + 4.0 * M**2 * cav, 2.0 * c8)
    c10 = max(4.0 * gamma**2 + 2.0, 4.0 * M**2)
    c7 = math.sqrt(2.0 * c9) * math.exp(c10 / 2.0)
    c14 = 3.0 * gamma**2 * ccv + 6.0 * M**2 * ccx + 6.0 * B**2 + 6.0 * gamma / beta
    c15 = max(2.0 * (M**2 * cax + B**2) + 4.0 * M**2 * c3**2, 4.0 * M**2 * (c2 + c7) ** 2)
    c16 = max(c2 + c7, c3, math.sqrt(c14), math.sqrt(c15))
    c17 = 3.0 * max(1.0 + cc.alpha_c, 1.0 / gamma)

    table = {
        "c_2": ConstantEntry("c_2", c2, "exact", "4 exp(M) sqrt(M^2 C_a_x + B^2)"),
        "c_3": ConstantEntry("c_3", c3, "exact", "2 exp(M) sqrt(M^2 C_a_x + B^2)"),
        "c_7": ConstantEntry("c_7", c7, "exact", "sqrt(2 c_9 exp(c_10))"),
        "c_8": ConstantEntry(
            "c_8", c8, "exact", "3 g^2 C_a_v + 6 M^2 C_a_x + 6 B^2 + 6 g / beta"
        ),
        "c_9": ConstantEntry("c_9", c9, "exact", "max(4 g^2 c_8 + 4 M^2 C_a_v, 2 c_8)"),
        "c_10": ConstantEntry("c_10", c10, "exact", "max(4 g^2 + 2, 4 M^2)"),
        "c_14": ConstantEntry(
            "c_14", c14, "exact", "3 g^2 C_c_v + 6 M^2 C_c_x + 6 B^2 + 6 g / beta"
        ),
        "c_15": ConstantEntry(
            "c_15",
            c15,
            "exact",
            "max(2 (M^2 C_a_x + B^2) + 4 M^2 c_3^2, 4 M^2 (c_2 + c_7)^2)",
        ),
        "c_16": ConstantEntry(
            "c_16", c16, "exact", "max(c_2 + c_7, c_3, sqrt(c_14), sqrt(c_15))"
        ),
        "c_17": ConstantEntry("c_17", c17, "exact", "3 max(1 + alpha_c, 1/gamma)"),
    }
    if pilot_sup_v2 is not None:
        c18 = c17 * (1.0 + 2.0 * cc.epsilon_c * math.sqrt(max(pilot_sup_v2, 0.0)))
        # e^{-c} / (1 - e^{-c}) with c tiny: use expm1 to avoid cancellation
        tail = math.exp(-cc.c_star) / (-math.expm1(-cc.c_star))
        c_tilde = 2.0 * max(
            c2, c3, c7, cc.C_star * (c18 * c16) ** (1.0 / cc.p) * tail
        )
        formula = "2 max(c_2, c_3, c_7, C* (c_18 c_16)^{1/p} e^{-c*} / (1 - e^{-c*}))"
        if not math.isfinite(c_tilde) and math.isfinite(cc.C_star):
            # the product left float range; its magnitude is still well defined
            log10 = (
                math.log10(cc.C_star)
                + math.log10(c18 * c16) / cc.p
                + math.log10(tail)
            )
            formula += f" [overflowed; log10 ~ {log10:.1f}]"
        table["c_18"] = ConstantEntry(
            "c_18",
            c18,
            "empirical",
            "c_17 (1 + 2 eps_c sqrt(sup_k E V^2)) [pilot-estimated sup]",
        )
        table["C_tilde"] = ConstantEntry("C_tilde", c_tilde, "empirical", formula)
    return table


# ---------------------------------------------------------------------------
# Risk bounds and iteration budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RiskBound:
    """The three terms bounding the expected population risk, plus an echo of
    every input that produced them."""

    B_1: float
    B_2: float
    B_3: float
    inputs: dict = field(default_factory=dict)

    def to_json(self, indent=2) -> str:
        return json.dumps(
            {"B_1": self.B_1, "B_2": self.B_2, "B_3": self.B_3, "inputs": self.inputs},
            indent=indent,
        )


def check_pq(p: float, q: int) -> None:
    """The pairing 1/p + 1/(2q) = 1 with integer q (so p = 2q / (2q - 1))."""
    if not (1.0 < p <= 2.0):
        raise ConfigurationError("p must lie in (1, 2]")
    if int(q) != q or q < 1:
        raise ConfigurationError("q must be a positive integer")
    if abs(1.0 / p + 1.0 / (2.0 * q) - 1.0) > 1e-9:
        raise ConfigurationError(f"(p, q) = ({p}, {q}) violates 1/p + 1/(2q) = 1")


def log_sobolev_constant(cert: SmoothnessCertificate, beta: float, d: int,
                         lambda_star: float) -> float:
    """c_LS from the certificate and a user-supplied uniform spectral gap."""
    if lambda_star <= 0:
        raise ConfigurationError("lambda_star must be positive")
    m, M = cert.m, cert.M
    return (2.0 * m * m + 8.0 * M * M) / (m * m * M * beta) + (
        (6.0 * M * (d + beta) / m + 2.0) / lambda_star
    )


def risk_bound(
    cc: ContractionConstants,
    proof: Mapping[str, ConstantEntry],
    cert: SmoothnessCertificate,
    gamma: float,
    beta: float,
    d: int,
    n: int,
    lam: float,
    delta: float,
    k: int,
    p: float,
    q: int,
    sigma: float,
    w_rho_init: float,
    c_ls: Optional[float] = None,
    lambda_star: Optional[float] = None,
) -> RiskBound:
    """Evaluate the three risk-bound terms.

    B_1 = (M sigma + B)(C~ (lam^{1/2p} + delta^{1/2p})
                         + C* w_rho^{1/p} exp(-c* k lam)),
    B_2 = (4 beta c_LS / n)((M^2/m)(b + d/beta) + B^2),
    B_3 = (d / 2 beta) log((e M / m)(b beta / d + 1)).

    ``c_ls`` may be supplied directly; otherwise it is computed from the
    user-supplied spectral gap ``lambda_star``. ``sigma`` is the 2q-moment
    scale and ``w_rho_init`` the rho-distance of the initial law from the
    long-run law, both supplied by the caller (typically pilot estimates).
    """
    check_pq(p, q)
    if "C_tilde" not in proof:
        raise ConfigurationError("risk_bound needs the empirical C_tilde entry")
    if c_ls is None:
        if lambda_star is None:
            raise ConfigurationError("supply either c_ls or lambda_star")
        c_ls = log_sobolev_constant(cert, beta, d, lambda_star)
    M, B, m, b = cert.M, cert.B, cert.m, cert.b
    c_tilde = proof["C_tilde"].value
    expo = 1.0 / (2.0 * p)
    b1 = (M * sigma + B) * (
        c_tilde * (lam**expo + delta**expo)
        + cc.C_star * w_rho_init ** (1.0 / p) * math.exp(-cc.c_star * k * lam)
    )
    b2 = (4.0 * beta * c_ls / n) * ((M * M / m) * (b + d / beta) + B * B)
    b3 = (d / (2.0 * beta)) * math.log((math.e * M / m) * (b * beta / d + 1.0))
    inputs = {
        "lambda": lam,
        "delta": delta,
        "k": k,
        "p": p,
        "q": q,
        "sigma": sigma,
        "w_rho_init": w_rho_init,
        "c_ls": c_ls,
        "lambda_star": lambda_star,
        "n": n,
        "d": d,
        "beta": beta,
        "gamma": gamma,
        "C_tilde": c_tilde,
        "C_star": cc.C_star,
        "c_star": cc.c_star,
    }
    return RiskBound(B_1=b1, B_2=b2, B_3=b3, inputs=inputs)


def iteration_budget(cc: ContractionConstants, c_tilde: float, eps: float,
                     p: float, w_rho_init: float):
    """Step-size/noise cap and minimum iteration count for accuracy eps.

    Returns ``(cap, k_min)`` where the run must satisfy
    lam^{1/(2p)} + delta^{1/(2p)} <= cap = eps / (2 C~) and k >= k_min.
    When the initial transient is already below eps (log argument <= 1) the
    budget is zero.
    """
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    if not math.isfinite(c_tilde):
        raise NumericalError("C_tilde is beyond float range; the budget is undefined")
    cap = eps / (2.0 * c_tilde)
    log_arg = math.log(cc.C_star) + math.log(w_rho_init) / p - math.log(eps)
    if log_arg <= 0.0:
        return cap, 0
    k_real = ((2.0 * c_tilde) ** (2.0 * p) / cc.c_star) * eps ** (-2.0 * p) * log_arg
    if math.isfinite(k_real):
        return cap, int(math.ceil(k_real))
    # the direct product can overflow while the count is still meaningful;
    # retry in log space and report the magnitude when even that is too large
    log_k = (
        2.0 * p * (math.log(2.0) + math.log(c_tilde))
        - cc.log_c_star
        - 2.0 * p * math.log(eps)
        + math.log(log_arg)
    )
    if log_k < 700.0:
        return cap, int(math.ceil(math.exp(log_k)))
    raise NumericalError(
        f"iteration budget exceeds the floating-point range "
        f"(log10 k_min ~ {log_k / math.log(10.0):.1f})"
    )


# ---------------------------------------------------------------------------
# Scaling orders across (beta, d)
# ---------------------------------------------------------------------------

ASSERTED_ORDERS = {
    "A_c": "O(beta)",
    "alpha_c": "O(1)",
    "Lambda_c": "O(beta + d)",
    "R_1": "O(sqrt(1 + d/beta))",
    "c_star": "O(sqrt(beta + d) exp(-O(beta + d)))",
}


def scaling_orders(betas: Sequence[float], ds: Sequence[int],
                   cert: SmoothnessCertificate, gamma: float, p: float = 2.0):
    """Tabulate the contraction constants over a (beta, d) grid.

    Drift constants are taken at their closed-form values (half cap for
    lambda_c, the floor for A_c) without probe verification, since no
    concrete objective is attached. Each row carries the computed values and
    the normalizations matching the asserted growth orders, so order claims
    can be read off side by side.
    """
    if not betas or not ds:
        raise ConfigurationError("scaling_orders needs nonempty ranges")
    rows = []
    lam_c = 0.5 * lambda_c_cap(cert, gamma)
    mg2 = cert.M / gamma**2
    for beta in betas:
        a_c = max(0.5 * beta * (cert.b + 2.0 * cert.B + cert.A0), _TINY)
        for d in ds:
            # log-space evaluation: the table must survive regimes where
            # c_star underflows and C_star overflows
            alpha, Lam = _resolve_alpha_lambda(mg2, lam_c, a_c, d)
            one = 1.0 + 2.0 * alpha + 2.0 * alpha * alpha
            log_c = _log_c_star(mg2, lam_c, Lam, gamma, p)
            r1 = (
                4.0 * math.sqrt(1.2) * math.sqrt(one) * math.sqrt(d + a_c)
                / (math.sqrt(beta) * gamma * math.sqrt(lam_c - 2.0 * lam_c * lam_c))
            )
            log_inner = (
                math.log(4.0)
                + math.log(max(1.0, r1 ** (p - 2.0)) / min(1.0, r1))
                + math.log(one)
                + math.log(d + a_c)
                - math.log(beta)
                - math.log(gamma)
                - log_c
            )
            log_C = (
                math.log(2.0) / p
                + (2.0 + Lam) / p
                + math.log((1.0 + gamma) / min(1.0, alpha))
                + max(0.0, log_inner) / p
            )
            rows.append(
                {
                    "beta": float(beta),
                    "d": int(d),
                    "A_c": a_c,
                    "Lambda_c": Lam,
                    "alpha_c": alpha,
                    "c_star": math.exp(log_c) if log_c > -745.0 else 0.0,
                    "log_c_star": log_c,
                    "C_star": math.exp(log_C) if log_C < 709.0 else math.inf,
                    "log_C_star": log_C,
                    "R_1": r1,
                    "A_c_over_beta": a_c / beta,
                    "Lambda_c_over_beta_plus_d": Lam / (beta + d),
                    "R_1_over_sqrt_1_plus_d_over_beta": r1 / math.sqrt(1.0 + d / beta),
                }
            )
    return {"rows": rows, "asserted_orders": dict(ASSERTED_ORDERS)}


# ---------------------------------------------------------------------------
# High-moment certificate for the Lyapunov functional
# ---------------------------------------------------------------------------

def gaussian_norm_moment(d: int, j: int) -> float:
    """E |xi|^j for a standard Gaussian in R^d (chi distribution moment)."""
    if j < 0:
        raise ConfigurationError("moment order must be >= 0")
    return float(2.0 ** (j / 2.0) * math.exp(gammaln((d + j) / 2.0) - gammaln(d / 2.0)))


def lyapunov_moment_certificate(
    drift: DriftConstants,
    cert: SmoothnessCertificate,
    gamma: float,
    beta: float,
    d: int,
    q: int,
    lam: float,
    v0_lyapunov: float,
    pilot_max_v2q: Optional[float] = None,
) -> dict:
    """Geometric-decay certificate for E[V^{2q}] along the discrete chain.

    Computes the proof constants (K_1, K_2, P_1, P_2, c_19, M~_1, M~, N~)
    with all Gaussian norm moments in closed form, and reports the implied
    bound  E[V_k^{2q}] <= (1 - lam gamma lambda_c / 4)^k V_0^{2q}
                          + 4 N~ / (gamma lambda_c).
    When a pilot empirical maximum of V^{2q} is supplied the report states
    whether it complies with the (k = 0) envelope.
    """
    if q not in (1, 2):
        raise ConfigurationError("q must be 1 or 2")
    if lam <= 0:
        raise ConfigurationError("lam must be positive")
    lam_c, a_c = drift.lambda_c, drift.A_c
    M, B = cert.M, cert.B
    one = 1.0 - 2.0 * lam_c
    phi = 1.0 - lam * gamma * lam_c / 2.0
    K1 = max(
        16.0 * M * M * (3.0 + 2.0 * gamma) / (one * gamma**2),
        8.0 * (M / 2.0 + gamma**2 / 4.0 - gamma**2 * lam_c / 4.0 + gamma) / one,
    )
    K2 = B * B * (3.0 + 2.0 * gamma)
    P1 = 2.0 * max(
        32.0 * gamma * (3.0 * gamma**2 + 10.0 * M * M) / (beta * one * gamma**2),
        16.0 * gamma * (3.0 + 2.0 * (1.0 - lam * gamma) ** 2) / (beta * one),
    )
    P2 = 20.0 * gamma * B * B / beta
    c19 = gamma * a_c + beta * K2 + gamma * d

    e2 = gaussian_norm_moment(d, 2)
    e4 = gaussian_norm_moment(d, 4)
    e2q = gaussian_norm_moment(d, 2 * q)
    # E (a + b S + gamma S^2)^{2q} with S = |xi|, expanded over chi moments
    a = gamma * a_c + beta * K2
    b = beta * math.sqrt(P2)
    coeffs = npoly.polypow([a, b, gamma], 2 * q)
    e_poly = float(sum(c * gaussian_norm_moment(d, j) for j, c in enumerate(coeffs)))

    m1 = max(
        (a * a + gamma**2 * e4 + beta**2 * d * P2) / (beta * d * P1),
        e_poly ** (1.0 / q) / (beta * P1 * e2q ** (1.0 / q)),
    )
    gl = gamma * lam_c
    m_tilde = max(
        m1,
        24.0 * c19 * q / gl,
        72.0 * q * (2 * q - 1) * 2.0 ** (2 * q - 3) * beta * d * P1 / gl,
        (12.0 * q * (2 * q - 1) * 2.0 ** (4 * q - 3) * beta**q * P1**q * e2q / gl)
        ** (1.0 / q),
    )
    n_tilde = (
        2.0 * c19 * q * m_tilde ** (2 * q - 1)
        + 6.0 * q * (2 * q - 1) * 2.0 ** (2 * q - 3) * beta * d * P1 * m_tilde ** (2 * q - 1)
        + q * (2 * q - 1) * 2.0 ** (4 * q - 3) * beta**q * P1**q * e2q * m_tilde**q
    )
    decay = 1.0 - lam * gamma * lam_c / 4.0
    bound_tail = 4.0 * n_tilde / gl
    bound_sup = v0_lyapunov ** (2 * q) + bound_tail
    report = {
        "q": q,
        "lambda": lam,
        "phi": phi,
        "K_1": K1,
        "K_2": K2,
        "P_1": P1,
        "P_2": P2,
        "c_19": c19,
        "M_tilde_1": m1,
        "M_tilde": m_tilde,
        "N_tilde": n_tilde,
        "decay_factor": decay,
        "v0_lyapunov": v0_lyapunov,
        "bound_tail": bound_tail,
        "bound_sup": bound_sup,
        "gaussian_moments": {"E|xi|^2": e2, "E|xi|^4": e4, f"E|xi|^{2*q}": e2q},
    }
    if pilot_max_v2q is not None:
        report["pilot_max_v2q"] = float(pilot_max_v2q)
        report["satisfied"] = bool(pilot_max_v2q <= bound_sup)
    return report
