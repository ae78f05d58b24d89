"""Weyl test functions u(r,s) = f(r) g(s) and the residual engine.

The radial factor is f = F h with F(r) = v(r)^{-1/2} cos(beta r), where
v is the cumulative volume of the meridian warp and h a scaled C^2
cut-off centered on the support [r_k, r_{k+4p}] between consecutive
cosine nodes r_j = (2j+1) pi / (2 beta).  The angular factor is
g(s) = H(s/delta) cos(pi s/delta) on a collar of radius
delta = c2 exp(-a r_{k+4p}).

Everything the L2 norms need is assembled in the form m * exp(x) with a
moderate factor m and an explicit exponent x, because v, psi^{n-1} and
1/delta individually overflow float range long before the *ratios* that
matter do.  Norms are accumulated per quadrature panel with the panel
maximum shifted out of the exponential, so residual ratios stay exact
even when ||u|| itself is far below the smallest positive double (the
linear norm fields then underflow to 0.0 while the log fields remain
finite).

The zero-rate path builds u on the auxiliary warp e^{alpha r} psi and
transports it back with mu(r) = exp(-(n-1) alpha r / 2); the transported
function is again a product f(r) g(s), so the same engine measures it
on the original metric, with the first-term split taken against the
original v (the split telescopes to the same total for any amplitude).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .models import ManifoldModel, eval_warp_log
from .quadrature import QuadratureError, QuadratureSpec, integrate, log_cumulative_integral
from .sampled import SampledFunction

__all__ = [
    "WeylParams", "WeylFunction", "ResidualReport", "ResidualSweep",
    "beta_of", "node_radius", "cutoff_H",
    "build_weyl", "build_weyl_zero", "residual", "lemma5_ratios",
    "disjoint_family", "closed_supports_disjoint", "residual_sweep",
    "TERM_NAMES",
]

TERM_NAMES = ("a_fgh", "b_fpgh", "fp_g_hp", "f_g_lap_h",
              "psi_s_f_gp", "cot_f_gp", "f_gpp")

_N7, _W7 = np.polynomial.legendre.leggauss(7)
_N15, _W15 = np.polynomial.legendre.leggauss(15)


def beta_of(lam: float, n: int, c: float) -> float:
    """Radial frequency sqrt(lam - (n-1)^2 c^2 / 4)."""
    bottom = (n - 1) ** 2 * c ** 2 / 4.0
    if lam < bottom * (1.0 - 1e-14) - 1e-300:
        raise ValueError(
            f"lambda={lam:g} below essential-spectrum bottom {bottom:g}")
    return math.sqrt(max(lam - bottom, 0.0))


def node_radius(k: int, beta: float) -> float:
    """k-th positive zero r_k = (2k+1) pi / (2 beta) of cos(beta r)."""
    if beta <= 0.0:
        raise ValueError("node_radius requires beta > 0")
    return (2 * k + 1) * math.pi / (2.0 * beta)


def _smoothstep(x):
    v = ((6.0 * x - 15.0) * x + 10.0) * x ** 3
    d1 = 30.0 * x ** 2 * (x - 1.0) ** 2
    d2 = 60.0 * x * (2.0 * x - 1.0) * (x - 1.0)
    return v, d1, d2


def cutoff_H(t):
    """C^2 cut-off: 1 on [-1/2, 1/2], 0 outside (-1, 1), quintic shoulders.

    Returns (H, H', H''); accepts scalars or arrays.
    """
    t_in = np.asarray(t, dtype=float)
    t_arr = np.atleast_1d(t_in)
    at = np.abs(t_arr)
    H = np.where(at <= 0.5, 1.0, 0.0)
    d1 = np.zeros_like(t_arr)
    d2 = np.zeros_like(t_arr)
    shoulder = (at > 0.5) & (at < 1.0)
    if np.any(shoulder):
        x = 2.0 * (1.0 - at[shoulder])
        v, s1, s2 = _smoothstep(x)
        H[shoulder] = v
        d1[shoulder] = -2.0 * np.sign(t_arr[shoulder]) * s1
        d2[shoulder] = 4.0 * s2
    if np.ndim(t_in) == 0:
        return float(H[0]), float(d1[0]), float(d2[0])
    return (H.reshape(t_in.shape), d1.reshape(t_in.shape), d2.reshape(t_in.shape))


@dataclass(frozen=True)
class WeylParams:
    lam: float
    n: int
    c: float = 0.0
    a: float = 0.0
    c2: float = 1.0
    k: int = 8
    m: int = 4
    alpha: float = 0.0
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension n must be >= 2")
        if self.c < 0.0 or self.a < 0.0 or self.alpha < 0.0:
            raise ValueError("c, a, alpha must be non-negative")
        if self.c2 <= 0.0 or self.c2 >= 3.1:
            raise ValueError("angular radius c2 must lie in (0, pi)")
        if self.k < 0 or self.m < 1:
            raise ValueError("need k >= 0 and m >= 1")
        if self.a > 0.0 and not self.c > self.a:
            raise ValueError(f"need c > a when a > 0 (got c={self.c:g}, a={self.a:g})")
        beta_of(self.lam, self.n, self.c)  # lambda at or above the bottom

    @property
    def p(self) -> int:
        return self.k // self.m


class WeylFunction:
    """Assembled test function with analytic component evaluators.

    The linear-scale evaluators (F, f, g, u and derivatives) are exact
    wherever their values are representable; the residual engine never
    uses them directly and works on the log decomposition instead.
    """

    def __init__(self, params: WeylParams, model: ManifoldModel, path: str,
                 beta: float, log_v: SampledFunction,
                 log_v_alpha: Optional[SampledFunction] = None):
        p = params.p
        if p < 1:
            raise ValueError(f"floor(k/m) must be >= 1 (k={params.k}, m={params.m})")
        self.params = params
        self.model = model
        self.path = path
        self.beta = beta
        self.r_lo = node_radius(params.k, beta)
        self.r_hi = node_radius(params.k + 4 * p, beta)
        self.r_center = node_radius(params.k + 2 * p, beta)
        self.width = self.r_hi - self.r_lo
        if path == "zero":
            self.log_delta = math.log(params.c2)
        else:
            self.log_delta = math.log(params.c2) - params.a * self.r_hi
        self.delta = math.exp(self.log_delta) if self.log_delta > -745.0 else 0.0
        self.log_v = log_v
        self.log_v_alpha = log_v_alpha
        self.alpha = params.alpha if path == "zero" else 0.0
        self.log_scale = 0.0
        if self.r_lo < model.r_min:
            raise ValueError(
                f"support starts at r={self.r_lo:g} below the model's "
                f"r_min={model.r_min:g}; increase k")
        # the collar fits inside the neighborhood everywhere on the support
        assert self.log_delta <= model.log_s_max(self.r_lo) + 1e-12

    # -- radial amplitude: f = exp(Lam(r)) cos(beta r) h(r) -----------------

    def _lambda_jet(self, r):
        """(Lam, Lam', Lam'') with Lam' and Lam'' from exact meridian jets."""
        r = np.asarray(r, dtype=float)
        jet0 = eval_warp_log(self.model, r, np.zeros_like(r))
        n = self.params.n
        if self.path == "zero":
            La = self.log_v_alpha(r)
            qa = np.exp((n - 1) * (jet0.log_psi + self.alpha * r) - La)
            lam_v = 0.5 * (n - 1) * self.alpha * r - 0.5 * La
            lam_d1 = 0.5 * (n - 1) * self.alpha - 0.5 * qa
            lam_d2 = -0.5 * qa * ((n - 1) * (jet0.d_r + self.alpha) - qa)
        else:
            L = self.log_v(r)
            q = np.exp((n - 1) * jet0.log_psi - L)
            lam_v = -0.5 * L
            lam_d1 = -0.5 * q
            lam_d2 = -0.5 * q * ((n - 1) * jet0.d_r - q)
        return lam_v + self.log_scale, lam_d1, lam_d2

    def scaled(self, factor: float) -> "WeylFunction":
        """The same function multiplied by a positive constant."""
        if factor <= 0.0:
            raise ValueError("scale factor must be positive")
        other = object.__new__(WeylFunction)
        other.__dict__.update(self.__dict__)
        other.log_scale = self.log_scale + math.log(factor)
        return other

    def v(self, r):
        """Cumulative meridian volume integral (overflows for huge r)."""
        return np.exp(self.log_v(r))

    def F(self, r):
        lam_v, _, _ = self._lambda_jet(r)
        return np.exp(lam_v) * np.cos(self.beta * np.asarray(r, dtype=float))

    def dF(self, r):
        lam_v, d1, _ = self._lambda_jet(r)
        br = self.beta * np.asarray(r, dtype=float)
        return np.exp(lam_v) * (d1 * np.cos(br) - self.beta * np.sin(br))

    def d2F(self, r):
        lam_v, d1, d2 = self._lambda_jet(r)
        br = self.beta * np.asarray(r, dtype=float)
        co, si = np.cos(br), np.sin(br)
        return np.exp(lam_v) * ((d2 + d1 * d1 - self.beta ** 2) * co
                                - 2.0 * self.beta * d1 * si)

    def h(self, r):
        tau = 2.0 * (np.asarray(r, dtype=float) - self.r_center) / self.width
        return cutoff_H(tau)[0]

    def dh(self, r):
        tau = 2.0 * (np.asarray(r, dtype=float) - self.r_center) / self.width
        return cutoff_H(tau)[1] * (2.0 / self.width)

    def d2h(self, r):
        tau = 2.0 * (np.asarray(r, dtype=float) - self.r_center) / self.width
        return cutoff_H(tau)[2] * (2.0 / self.width) ** 2

    def f(self, r):
        return self.F(r) * self.h(r)

    def df(self, r):
        return self.dF(r) * self.h(r) + self.F(r) * self.dh(r)

    def d2f(self, r):
        return (self.d2F(r) * self.h(r) + 2.0 * self.dF(r) * self.dh(r)
                + self.F(r) * self.d2h(r))

    # -- angular factor ------------------------------------------------------

    def _t_of_s(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        with np.errstate(divide="ignore", over="ignore"):
            t = np.where(s == 0.0, 0.0,
                         np.exp(np.log(np.where(s == 0.0, 1.0, s)) - self.log_delta))
        return np.minimum(t, 2.0)

    def g(self, s):
        t = self._t_of_s(s)
        return cutoff_H(t)[0] * np.cos(np.pi * t)

    def dg(self, s):
        t = self._t_of_s(s)
        H, H1, _ = cutoff_H(t)
        ghat = H1 * np.cos(np.pi * t) - np.pi * H * np.sin(np.pi * t)
        return np.sign(np.asarray(s, dtype=float)) * ghat * np.exp(-self.log_delta)

    def d2g(self, s):
        t = self._t_of_s(s)
        H, H1, H2 = cutoff_H(t)
        cpt, spt = np.cos(np.pi * t), np.sin(np.pi * t)
        ghat2 = H2 * cpt - 2.0 * np.pi * H1 * spt - np.pi ** 2 * H * cpt
        return ghat2 * np.exp(-2.0 * self.log_delta)

    def u(self, r, s):
        """u(r, s) = f(r) g(|s|); vanishes outside the support rectangle."""
        return self.f(r) * self.g(s)

    @property
    def support(self):
        return (self.r_lo, self.r_hi), (0.0, self.delta)

    def alpha_twin(self) -> "WeylFunction":
        """The companion function on the shifted metric (zero path only).

        mu(r, alpha) * u = u_twin pointwise, and their L2 norms agree on
        their respective metrics.
        """
        if self.path != "zero":
            raise ValueError("alpha_twin is defined for the zero path only")
        shifted = self.model.shifted(self.alpha)
        twin = object.__new__(WeylFunction)
        twin.params = self.params
        twin.model = shifted
        twin.path = "standard"
        twin.beta = self.beta
        twin.r_lo, twin.r_hi = self.r_lo, self.r_hi
        twin.r_center, twin.width = self.r_center, self.width
        twin.log_delta, twin.delta = self.log_delta, self.delta
        twin.log_v = self.log_v_alpha
        twin.log_v_alpha = None
        twin.alpha = 0.0
        twin.log_scale = self.log_scale
        return twin


def _tabulate_log_v(model: ManifoldModel, r_hi: float, panels: int = 4096) -> SampledFunction:
    """log of v(r) = integral_0^r psi^{n-1}(tau, 0) dtau on [r_min, r_hi + 1]."""
    n = model.n

    def log_f(tau):
        jets = eval_warp_log(model, np.asarray(tau, dtype=float),
                             np.zeros_like(np.asarray(tau, dtype=float)))
        return (n - 1) * np.asarray(jets.log_psi)

    head = integrate(lambda tau: np.exp(log_f(tau)), 0.0, model.r_min,
                     QuadratureSpec(1e-14, 1e-13, 40))
    if head <= 0.0:
        raise ValueError("meridian volume integral must be positive")
    return log_cumulative_integral(log_f, model.r_min, r_hi + 1.0, panels,
                                   math.log(head))


def build_weyl(params: WeylParams, model: ManifoldModel) -> WeylFunction:
    """Assemble the test function for the positive-rate construction."""
    _check_params_model(params, model)
    beta = beta_of(params.lam, params.n, params.c)
    if beta <= 0.0:
        raise ValueError("lambda sits exactly at the spectrum bottom: beta = 0 "
                         "leaves the node radii undefined")
    r_hi = node_radius(params.k + 4 * params.p, beta)
    log_v = _tabulate_log_v(model, r_hi)
    return WeylFunction(params, model, "standard", beta, log_v)


def build_weyl_zero(params: WeylParams, model: ManifoldModel) -> WeylFunction:
    """Zero-rate construction via the exponential shift of the warp.

    Builds u on the auxiliary warp e^{alpha r} psi with radial nodes of
    cos(sqrt(lam) r) and the fixed angular cut-off g(s) = H(s/c2) cos(pi s/c2),
    then returns the transported function on the original model.
    """
    _check_params_model(params, model)
    if model.a != 0.0:
        raise ValueError("the zero-rate path requires a fixed cone (model.a = 0)")
    if params.c != 0.0:
        raise ValueError("the zero-rate path uses c = 0")
    alpha, lam, n = params.alpha, params.lam, params.n
    if lam <= (n - 1) ** 2 * alpha ** 2 / 4.0:
        raise ValueError(f"alpha={alpha:g} too large: need lambda > (n-1)^2 alpha^2 / 4")
    beta = math.sqrt(lam)
    r_hi = node_radius(params.k + 4 * params.p, beta)
    log_v = _tabulate_log_v(model, r_hi)
    if alpha == 0.0:
        wf = WeylFunction(params, model, "standard", beta, log_v)
        return wf
    log_v_alpha = _tabulate_log_v(model.shifted(alpha), r_hi)
    return WeylFunction(params, model, "zero", beta, log_v, log_v_alpha)


def _check_params_model(params: WeylParams, model: ManifoldModel):
    if params.n != model.n:
        raise ValueError("params.n and model.n disagree")
    if abs(params.a - model.a) > 1e-12 or abs(params.c2 - model.c2) > 1e-12:
        raise ValueError("params (a, c2) must match the model neighborhood")


# ---------------------------------------------------------------------------
# residual engine


@dataclass(frozen=True)
class ResidualReport:
    """L2 norms of u and of the termwise-assembled Delta u + lambda u.

    norm fields are exp(log fields) and underflow to 0.0 when the true
    norm lies below float range; ratio and the log fields are always
    finite for a valid build.
    """

    lam: float
    n: int
    k: int
    p: int
    m: int
    beta: float
    path: str
    alpha: float
    support: tuple
    log_delta: float
    norm_u: float
    norm_residual: float
    ratio: float
    terms: dict
    log_norm_u: float
    log_norm_residual: float
    log_terms: dict
    quad_rel_error: float
    extras: dict = field(default_factory=dict)


_LEMMA_NAMES = ("chi_F_g", "chi_Fp_g", "psi_s_f_gp", "cot_f_gp", "f_gpp")


def _t_grid(t_panels: int):
    half = max(2, t_panels // 2)
    edges = np.concatenate([np.linspace(0.0, 0.5, half + 1),
                            np.linspace(0.5, 1.0, half + 1)[1:]])
    lo, hi = edges[:-1], edges[1:]
    mid, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + hw[:, None] * _N15[None, :]).ravel()
    weights = (hw[:, None] * _W15[None, :]).ravel()
    return nodes, weights


def _x_over_tan(x):
    """x / tan(x), stable near 0."""
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 3.0, safe / np.tan(safe))


def _panel_quantities(wf: WeylFunction, r_nodes: np.ndarray, t_nodes: np.ndarray,
                      want_lemma: bool):
    """m-factors and exponents for every tracked quantity on a node grid.

    Returns (quantities, XC) where quantities maps name -> (m, y) with the
    integrand of each squared norm equal to (m exp(XC + y))^2 against the
    r- and t-weights (the measure constant is applied by the caller).
    """
    params, model = wf.params, wf.model
    n, lam, beta = params.n, params.lam, wf.beta
    rn = r_nodes.ravel()

    lam_v, lam_d1, lam_d2 = wf._lambda_jet(rn)
    jet0 = eval_warp_log(model, rn, np.zeros_like(rn))
    q_m = np.exp((n - 1) * np.asarray(jet0.log_psi) - wf.log_v(rn))

    br = beta * rn
    co, si = np.cos(br), np.sin(br)
    tau = 2.0 * (rn - wf.r_center) / wf.width
    h, h1, h2 = cutoff_H(tau)
    h1 = h1 * (2.0 / wf.width)
    h2 = h2 * (2.0 / wf.width) ** 2

    H, H1, H2 = cutoff_H(t_nodes)
    cpt, spt = np.cos(np.pi * t_nodes), np.sin(np.pi * t_nodes)
    gt = H * cpt
    g1t = H1 * cpt - np.pi * H * spt
    g2t = H2 * cpt - 2.0 * np.pi * H1 * spt - np.pi ** 2 * H * cpt

    s_vals = wf.delta * t_nodes
    if model.s_independent:
        phi = np.asarray(jet0.log_psi)[:, None]
        phir = np.asarray(jet0.d_r)[:, None]
        phis = np.zeros((rn.size, 1))
        ones_t = np.ones_like(t_nodes)[None, :]
    else:
        R = np.repeat(rn[:, None], t_nodes.size, axis=1)
        S = np.repeat(s_vals[None, :], rn.size, axis=0)
        jets = eval_warp_log(model, R, S)
        phi = np.asarray(jets.log_psi)
        phir = np.asarray(jets.d_r)
        phis = np.asarray(jets.d_s)
        ones_t = 1.0

    x = wf.delta * t_nodes
    cotref = _x_over_tan(x) / t_nodes  # delta * cot(delta t)

    XC = (lam_v[:, None] + 0.5 * ((n - 1) * phi
                                  + (n - 2) * (wf.log_delta + np.log(t_nodes))[None, :]))
    if n > 2:
        XC = XC + 0.5 * (n - 2) * np.log(np.sinc(x / np.pi))[None, :]

    a_co = lam_d2 + lam_d1 ** 2 - beta ** 2 + lam + q_m * lam_d1
    b_si = -beta * (2.0 * lam_d1 + q_m)
    fp = lam_d1 * co - beta * si
    bb = (n - 1) * phir - q_m[:, None]

    coh = (co * h)[:, None]
    y0 = 0.0
    y_ang = -2.0 * phi - wf.log_delta
    y_gpp = -2.0 * phi - 2.0 * wf.log_delta

    quantities = {
        "u": (coh * gt[None, :] * ones_t, y0),
        "a_fgh": (((a_co * co + b_si * si) * h)[:, None] * gt[None, :] * ones_t, y0),
        "b_fpgh": (bb * (fp * h)[:, None] * gt[None, :], y0),
        "fp_g_hp": ((2.0 * fp * h1)[:, None] * gt[None, :] * ones_t, y0),
        "f_g_lap_h": ((h2[:, None] + (n - 1) * phir * h1[:, None]) * co[:, None] * gt[None, :], y0),
        "psi_s_f_gp": ((n - 3) * phis * coh * g1t[None, :], y_ang),
        "cot_f_gp": (float(n - 2) * cotref[None, :] * coh * g1t[None, :] * np.ones((rn.size, 1)), y_ang),
        "f_gpp": (coh * g2t[None, :] * ones_t, y_gpp),
    }
    if want_lemma:
        quantities["chi_F_g"] = (co[:, None] * gt[None, :] * ones_t, y0)
        quantities["chi_Fp_g"] = (fp[:, None] * gt[None, :] * ones_t, y0)
        quantities["psi_s_f_gp_raw"] = (phis * coh * g1t[None, :], y_ang)
        quantities["cot_f_gp_raw"] = (cotref[None, :] * coh * g1t[None, :] * np.ones((rn.size, 1)), y_ang)

    # pointwise residual sum with a per-point shift across term scales
    y_hat = np.maximum(0.0, np.maximum(y_ang, y_gpp))
    core = sum(np.broadcast_to(quantities[nm][0], XC.shape)
               for nm in ("a_fgh", "b_fpgh", "fp_g_hp", "f_g_lap_h"))
    ang = (np.broadcast_to(quantities["psi_s_f_gp"][0], XC.shape)
           + np.broadcast_to(quantities["cot_f_gp"][0], XC.shape))
    gpp = np.broadcast_to(quantities["f_gpp"][0], XC.shape)
    res_m = (core * np.exp(np.asarray(0.0 - y_hat))
             + ang * np.exp(y_ang - y_hat)
             + gpp * np.exp(y_gpp - y_hat))
    quantities["residual"] = (res_m, y_hat)
    return quantities, XC


def _accumulate(wf: WeylFunction, panels, t_nodes, t_weights, want_lemma: bool):
    """Per-panel (scale, gl7, gl15) triples for every tracked quantity."""
    out = {}
    n_pan = len(panels)
    lo = np.array([p[0] for p in panels])
    hi = np.array([p[1] for p in panels])
    mid, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = np.concatenate([mid[:, None] + hw[:, None] * _N7[None, :],
                            mid[:, None] + hw[:, None] * _N15[None, :]], axis=1)
    w7 = hw[:, None] * _W7[None, :]
    w15 = hw[:, None] * _W15[None, :]

    quantities, XC = _panel_quantities(wf, nodes, t_nodes, want_lemma)
    n_t = t_nodes.size
    XC = XC.reshape(n_pan, 22, n_t)

    for name, (m, y) in quantities.items():
        E = XC + (np.broadcast_to(np.asarray(y), (n_pan * 22, n_t)).reshape(n_pan, 22, n_t)
                  if np.ndim(y) else y)
        m_full = np.broadcast_to(m, (n_pan * 22, n_t)).reshape(n_pan, 22, n_t)
        scale = E.max(axis=(1, 2))
        val = m_full * m_full * np.exp(2.0 * (E - scale[:, None, None]))
        weighted = val @ t_weights
        gl7 = np.einsum("pj,pj->p", weighted[:, :7], w7)
        gl15 = np.einsum("pj,pj->p", weighted[:, 7:], w15)
        out[name] = (2.0 * scale, gl7, gl15)
    return out


def _combine(pairs):
    """(log_total, rel_error) from per-panel (scale, gl7, gl15)."""
    scale, gl7, gl15 = pairs
    ref = float(np.max(scale))
    if not np.isfinite(ref):
        return -np.inf, 0.0
    w = np.exp(scale - ref)
    total = float(np.sum(gl15 * w))
    err = float(np.sum(np.abs(gl15 - gl7) * w))
    if total <= 0.0:
        return -np.inf, 0.0
    return ref + math.log(total), err / total


def _run_engine(wf: WeylFunction, quad: QuadratureSpec, t_panels: int,
                want_lemma: bool):
    params = wf.params
    beta, r_lo, r_hi = wf.beta, wf.r_lo, wf.r_hi
    t_nodes, t_weights = _t_grid(t_panels)

    # panel edges: every cosine node, plus the cut-off shoulder radii
    p4 = 4 * params.p
    edges = [node_radius(params.k + j, beta) for j in range(p4 + 1)]
    edges += [wf.r_center - wf.width / 4.0, wf.r_center + wf.width / 4.0]
    edges = np.unique(np.clip(np.asarray(edges), r_lo, r_hi))
    base = []
    for a_e, b_e in zip(edges[:-1], edges[1:]):
        mid_e = 0.5 * (a_e + b_e)
        base += [(a_e, mid_e, 0), (mid_e, b_e, 0)]

    panels = base
    for _ in range(quad.max_depth):
        per_qty = {}
        batch = max(1, int(4.0e5 / (22 * t_nodes.size)))
        names = None
        chunks = []
        for i in range(0, len(panels), batch):
            part = _accumulate(wf, panels[i:i + batch], t_nodes, t_weights, want_lemma)
            names = list(part.keys())
            chunks.append(part)
        for nm in names:
            per_qty[nm] = tuple(np.concatenate([np.atleast_1d(ch[nm][j]) for ch in chunks])
                                for j in range(3))

        totals = {nm: _combine(per_qty[nm]) for nm in per_qty}
        worst = max(err for _, err in totals.values())
        if worst <= quad.rel_tol:
            return totals, panels, t_nodes, t_weights
        refine = set()
        lengths = np.array([hi - lo for lo, hi, _ in panels])
        for nm, (log_tot, err) in totals.items():
            if err <= quad.rel_tol or not np.isfinite(log_tot):
                continue
            scale, gl7, gl15 = per_qty[nm]
            contrib = np.abs(gl15 - gl7) * np.exp(scale - log_tot)
            budget = quad.rel_tol * np.maximum(lengths / wf.width, 0.25 / len(panels))
            refine.update(np.flatnonzero(contrib > budget).tolist())
        if not refine:
            return totals, panels, t_nodes, t_weights
        nxt = []
        failed = False
        for idx, (lo_p, hi_p, d) in enumerate(panels):
            if idx in refine:
                if d + 1 > quad.max_depth:
                    failed = True
                    nxt.append((lo_p, hi_p, d))
                else:
                    mid_p = 0.5 * (lo_p + hi_p)
                    nxt += [(lo_p, mid_p, d + 1), (mid_p, hi_p, d + 1)]
            else:
                nxt.append((lo_p, hi_p, d))
        if failed:
            raise QuadratureError(
                f"residual quadrature did not reach rel_tol={quad.rel_tol:g} "
                f"within depth {quad.max_depth}",
                estimate=float("nan"), error_bound=worst)
        panels = nxt
    raise QuadratureError(
        f"residual quadrature did not converge within {quad.max_depth} refinement rounds",
        estimate=float("nan"), error_bound=worst)


def _log_sphere_area(n: int) -> float:
    """log of the total measure of the (n-2)-sphere; n=2 gives log 2."""
    return math.log(2.0) + 0.5 * (n - 1) * math.log(math.pi) - math.lgamma(0.5 * (n - 1))


def _check_same_model(wf: WeylFunction, model: Optional[ManifoldModel]):
    if model is None or model is wf.model:
        return
    from .expr import serialize
    same = (model.n == wf.model.n and serialize(model.warp) == serialize(wf.model.warp)
            and model.a == wf.model.a and model.c2 == wf.model.c2)
    if not same:
        raise ValueError("the function was not built on this model")


def residual(wf: WeylFunction, model: Optional[ManifoldModel] = None,
             quad: QuadratureSpec = QuadratureSpec(), t_panels: int = 12) -> ResidualReport:
    """Measure ||Delta u + lambda u||_2 / ||u||_2 with a per-term breakdown."""
    _check_same_model(wf, model)
    totals, _, _, _ = _run_engine(wf, quad, t_panels, want_lemma=False)
    log_meas = _log_sphere_area(wf.params.n) + wf.log_delta

    def log_norm(nm):
        log_sq, _ = totals[nm]
        return 0.5 * (log_meas + log_sq) if np.isfinite(log_sq) else -np.inf

    ln_u = log_norm("u")
    ln_res = log_norm("residual")
    log_terms = {nm: log_norm(nm) for nm in TERM_NAMES}
    with np.errstate(over="ignore"):
        report = ResidualReport(
            lam=wf.params.lam, n=wf.params.n, k=wf.params.k, p=wf.params.p,
            m=wf.params.m, beta=wf.beta, path=wf.path, alpha=wf.alpha,
            support=(wf.r_lo, wf.r_hi), log_delta=wf.log_delta,
            norm_u=float(np.exp(ln_u)),
            norm_residual=float(np.exp(ln_res)),
            ratio=float(np.exp(ln_res - ln_u)),
            terms={nm: float(np.exp(log_terms[nm])) for nm in TERM_NAMES},
            log_norm_u=ln_u, log_norm_residual=ln_res, log_terms=log_terms,
            quad_rel_error=max(err for _, err in totals.values()),
        )
    return report


def lemma5_ratios(wf: WeylFunction, model: Optional[ManifoldModel] = None,
                  quad: QuadratureSpec = QuadratureSpec(), t_panels: int = 12,
                  min_k: int = 8):
    """Measured norm ratios of the five technical inequalities.

    Returns [(name, measured, bound-or-None), ...] where the bounds are
    the explicit constants sqrt(2) 3^{n/2} and (2 lam + 3) sqrt(2) 3^{n/2}
    for the first two ratios.
    """
    if wf.params.k < min_k:
        raise ValueError(f"lemma ratio measurement needs k >= {min_k} "
                         f"(large-radius regime); got k={wf.params.k}")
    _check_same_model(wf, model)
    totals, _, _, _ = _run_engine(wf, quad, t_panels, want_lemma=True)

    def ratio_to_u(nm):
        log_sq, _ = totals[nm]
        log_u, _ = totals["u"]
        return float(np.exp(0.5 * (log_sq - log_u))) if np.isfinite(log_sq) else 0.0

    n, lam = wf.params.n, wf.params.lam
    const_a = math.sqrt(2.0) * 3.0 ** (n / 2.0)
    return [
        ("chi_F_g", ratio_to_u("chi_F_g"), const_a),
        ("chi_Fp_g", ratio_to_u("chi_Fp_g"), (2.0 * lam + 3.0) * const_a),
        ("psi_s_f_gp", ratio_to_u("psi_s_f_gp_raw"), None),
        ("cot_f_gp", ratio_to_u("cot_f_gp_raw"), None),
        ("f_gpp", ratio_to_u("f_gpp"), None),
    ]


def disjoint_family(k0: int, p0: int, count: int, beta: float):
    """Indices k_i = k0 + i (4 p0 + 1) whose closed supports are disjoint."""
    if count < 2:
        raise ValueError("a family needs count >= 2")
    if p0 < 1 or k0 < 0:
        raise ValueError("need k0 >= 0 and p0 >= 1")
    family = []
    for i in range(count):
        ki = k0 + i * (4 * p0 + 1)
        family.append((ki, (node_radius(ki, beta), node_radius(ki + 4 * p0, beta))))
    intervals = [iv for _, iv in family]
    if not closed_supports_disjoint(intervals):
        raise AssertionError("constructed family is not pairwise disjoint")
    return family


def closed_supports_disjoint(intervals) -> bool:
    """True iff the closed intervals are pairwise disjoint (gaps > 0)."""
    ordered = sorted(intervals)
    return all(nxt[0] > prev[1] for prev, nxt in zip(ordered, ordered[1:]))


@dataclass
class ResidualSweep:
    rows: list
    epsilon: float
    path: str

    def by_lambda(self) -> dict:
        out = {}
        for rep in self.rows:
            out.setdefault(rep.lam, []).append(rep)
        for lam in out:
            out[lam].sort(key=lambda rep: rep.k)
        return out

    def summary(self) -> dict:
        out = {}
        for lam, reps in self.by_lambda().items():
            ratios = [rep.ratio for rep in reps]
            min_k = next((rep.k for rep in reps if rep.ratio <= self.epsilon), None)
            out[lam] = {
                "monotone_decreasing": all(b < a for a, b in zip(ratios, ratios[1:])),
                "min_k_below_epsilon": min_k,
                "ratios": ratios,
            }
        return out


def estimate_rate(model: ManifoldModel, r_probe: float = 48.0) -> float:
    """Limit of psi_r/psi along the ray, by 1/r-extrapolation."""
    r1 = model.r_min + r_probe
    r2 = model.r_min + 2.0 * r_probe
    d1 = eval_warp_log(model, r1, 0.0).d_r
    d2 = eval_warp_log(model, r2, 0.0).d_r
    c = 2.0 * d2 - d1
    return float(max(c, 0.0))


def residual_sweep(model: ManifoldModel, lambdas, ks, m: int,
                   quad: QuadratureSpec = QuadratureSpec(), *,
                   c: Optional[float] = None, path: str = "standard",
                   alpha: float = 0.0, epsilon: float = 0.05,
                   threads: int = 1, t_panels: int = 12) -> ResidualSweep:
    """Residual ratios over a (lambda, k) grid, in deterministic order."""
    if path not in ("standard", "zero"):
        raise ValueError("path must be 'standard' or 'zero'")
    lambdas = list(lambdas)
    ks = list(ks)
    if path == "standard" and c is None:
        c = estimate_rate(model)
        if abs(c) < 1e-8:
            c = 0.0

    def cell(lam, k):
        if path == "zero":
            params = WeylParams(lam=lam, n=model.n, c=0.0, a=model.a, c2=model.c2,
                                k=k, m=m, alpha=alpha)
            wf = build_weyl_zero(params, model)
        else:
            params = WeylParams(lam=lam, n=model.n, c=c, a=model.a, c2=model.c2,
                                k=k, m=m)
            wf = build_weyl(params, model)
        return residual(wf, quad=quad, t_panels=t_panels)

    cells = [(lam, k) for lam in lambdas for k in ks]
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda lk: cell(*lk), cells))
    else:
        rows = [cell(lam, k) for lam, k in cells]
    return ResidualSweep(rows=rows, epsilon=epsilon, path=path)
