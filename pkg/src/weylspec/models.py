"""Manifold models: a warp factor psi(r, s) on a shrinking (or fixed)
neighborhood |s| < c2 * exp(-a r) of the ray s = 0, together with the
dimension n >= 2.

``eval_warp`` returns the raw jet of psi; ``eval_warp_log`` returns the
jet of log(psi), whose slots are the ratio quantities psi_r/psi,
psi_s/psi, ... that every downstream computation actually consumes, and
which stay finite far beyond the float range of psi itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import expr as ex
from .expr import Expr, WarpEvalError, free_variables, parse_warp, serialize

__all__ = [
    "WarpJet", "LogWarpJet", "ManifoldModel",
    "eval_warp", "eval_warp_log", "builtin_model",
    "load_model", "save_model", "model_from_dict", "model_to_dict",
]


@dataclass(frozen=True)
class WarpJet:
    psi: float
    psi_r: float
    psi_s: float
    psi_rr: float
    psi_rs: float
    psi_ss: float


@dataclass(frozen=True)
class LogWarpJet:
    """Jet of log(psi): value plus first and second partials."""

    log_psi: float
    d_r: float
    d_s: float
    d_rr: float
    d_rs: float
    d_ss: float

    @property
    def psi_r_over_psi(self):
        return self.d_r

    @property
    def psi_s_over_psi(self):
        return self.d_s

    @property
    def psi_rr_over_psi(self):
        return self.d_rr + self.d_r * self.d_r


def _as_expr(warp: Union[str, Expr]) -> Expr:
    return parse_warp(warp) if isinstance(warp, str) else warp


def _shaped(x, shape):
    arr = np.asarray(x, dtype=float)
    if shape == ():
        return float(arr)
    return np.broadcast_to(arr, shape)


def eval_warp(model_or_expr, r, s) -> WarpJet:
    """Raw hyper-dual jet of psi at (r, s); output matches the input shape."""
    tree = model_or_expr.warp if isinstance(model_or_expr, ManifoldModel) else _as_expr(model_or_expr)
    hd = ex.eval_expr(tree, r, s)
    shape = np.broadcast_shapes(np.shape(r), np.shape(s))
    return WarpJet(*(_shaped(v, shape) for v in
                     (hd.value, hd.d_r, hd.d_s, hd.d_rr, hd.d_rs, hd.d_ss)))


def eval_warp_log(model_or_expr, r, s) -> LogWarpJet:
    """Jet of log(psi) at (r, s); psi must be positive there."""
    tree = model_or_expr.warp if isinstance(model_or_expr, ManifoldModel) else _as_expr(model_or_expr)
    sign, jet = ex.eval_log_expr(tree, r, s)
    if np.any(np.asarray(sign) <= 0.0):
        raise WarpEvalError("warp factor must be positive", serialize(tree))
    shape = np.broadcast_shapes(np.shape(r), np.shape(s))
    return LogWarpJet(*(_shaped(v, shape) for v in
                        (jet.value, jet.d_r, jet.d_s, jet.d_rr, jet.d_rs, jet.d_ss)))


@dataclass(frozen=True)
class ManifoldModel:
    n: int
    warp: Expr
    a: float = 0.0
    c2: float = 1.0
    r_min: float = 0.5
    label: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension n must be >= 2")
        if self.a < 0.0:
            raise ValueError("neighborhood decay rate a must be >= 0")
        if self.c2 <= 0.0:
            raise ValueError("neighborhood radius c2 must be > 0")
        if self.r_min <= 0.0:
            raise ValueError("r_min must be > 0")
        bad = free_variables(self.warp) - {"r", "s"}
        if bad:
            raise ValueError(f"warp uses unknown variables {sorted(bad)}")
        self._check_positive()

    def _check_positive(self):
        rs = np.geomspace(self.r_min, self.r_min + 64.0, 17)
        for r in rs:
            smax = self.s_max(r)
            ss = np.linspace(-smax, smax, 9) * (1.0 - 1e-9)
            eval_warp_log(self, float(r) * np.ones_like(ss), ss)  # raises if psi <= 0

    def s_max(self, r) -> float:
        """Angular radius of the neighborhood at radius r."""
        return self.c2 * np.exp(-self.a * np.asarray(r, dtype=float))

    def log_s_max(self, r):
        return np.log(self.c2) - self.a * np.asarray(r, dtype=float)

    @property
    def s_independent(self) -> bool:
        return "s" not in free_variables(self.warp)

    def shifted(self, alpha: float) -> "ManifoldModel":
        """Model with warp exp(alpha*r)*psi (same neighborhood)."""
        if alpha == 0.0:
            return self
        tree = ex.BinOp("*", ex.Call("exp", ex.BinOp("*", ex.Num(alpha), ex.Var("r"))),
                        self.warp)
        return ManifoldModel(self.n, tree, self.a, self.c2, self.r_min,
                             label=f"{self.label or 'model'}+shift({alpha:g})")


def model_to_dict(model: ManifoldModel) -> dict:
    return {
        "n": model.n,
        "warp": serialize(model.warp),
        "a": model.a,
        "c2": model.c2,
        "r_min": model.r_min,
        "label": model.label,
    }


def model_from_dict(doc: dict) -> ManifoldModel:
    try:
        return ManifoldModel(
            n=int(doc["n"]),
            warp=parse_warp(doc["warp"]),
            a=float(doc.get("a", 0.0)),
            c2=float(doc.get("c2", 1.0)),
            r_min=float(doc.get("r_min", 0.5)),
            label=str(doc.get("label", "")),
        )
    except KeyError as err:
        raise ValueError(f"model document is missing field {err}") from None


def save_model(model: ManifoldModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> ManifoldModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


_BUILTIN_CALL = re.compile(r"^\s*([a-z-]+)\s*\((.*)\)\s*$")


def builtin_model(name: str, *args, **kwargs) -> ManifoldModel:
    """Built-in models.

    euclidean-cone(n, c2)      psi = r, a = 0
    hyperbolic(n)              psi = sinh(r)
    exp-model(n, c, a, c2)     psi = exp(c r), requires c > a
    appendix-surface(a)        n = 2, psi = r exp(r^2 sin^2(s/2) + r), |s| <= exp(-a r)

    The name may carry the arguments itself, e.g. "exp-model(2, 1, 0.5, 0.5)".
    """
    m = _BUILTIN_CALL.match(name)
    if m:
        if args or kwargs:
            raise ValueError("pass arguments either in the name or separately, not both")
        name = m.group(1)
        args = tuple(float(tok) for tok in m.group(2).split(",") if tok.strip())

    if name == "euclidean-cone":
        n, c2 = _take(args, kwargs, ("n", "c2"), (None, 0.5))
        n = _int_dim(n)
        return ManifoldModel(n, parse_warp("r"), a=0.0, c2=c2,
                             r_min=kwargs.get("r_min", 0.5),
                             label=f"euclidean-cone({n}, {c2:g})")
    if name == "hyperbolic":
        (n,) = _take(args, kwargs, ("n",), (None,))
        n = _int_dim(n)
        return ManifoldModel(n, parse_warp("sinh(r)"), a=0.5,
                             c2=kwargs.get("c2", 1.0), r_min=kwargs.get("r_min", 0.5),
                             label=f"hyperbolic({n})")
    if name == "exp-model":
        n, c, a, c2 = _take(args, kwargs, ("n", "c", "a", "c2"), (None, 1.0, 0.5, 0.5))
        n = _int_dim(n)
        if c <= 0.0:
            raise ValueError("exp-model requires c > 0")
        if a >= c:
            raise ValueError(f"exp-model requires c > a (got c={c:g}, a={a:g})")
        tree = ex.Call("exp", ex.BinOp("*", ex.Num(c), ex.Var("r")))
        return ManifoldModel(n, tree, a=a, c2=c2, r_min=kwargs.get("r_min", 0.5),
                             label=f"exp-model({n}, c={c:g}, a={a:g}, c2={c2:g})")
    if name == "appendix-surface":
        (a,) = _take(args, kwargs, ("a",), (1.0,))
        return ManifoldModel(2, parse_warp("r*exp(r^2*sin(s/2)^2 + r)"),
                             a=a, c2=1.0, r_min=kwargs.get("r_min", 0.5),
                             label=f"appendix-surface(a={a:g})")
    raise ValueError(f"unknown builtin model {name!r}")


def _take(args, kwargs, names, defaults):
    vals = list(args) + [None] * (len(names) - len(args))
    if len(args) > len(names):
        raise ValueError(f"too many arguments (expected {', '.join(names)})")
    out = []
    for i, nm in enumerate(names):
        v = kwargs.get(nm, vals[i])
        if v is None:
            v = defaults[i]
        if v is None:
            raise ValueError(f"missing required model parameter {nm!r}")
        out.append(float(v))
    return out


def _int_dim(n) -> int:
    n_int = int(round(n))
    if abs(n - n_int) > 1e-9:
        raise ValueError("dimension n must be an integer")
    return n_int
