"""Second-order forward-mode AD in the two variables (r, s).

A HyperDual carries a value together with the five derivative slots
d_r, d_s, d_rr, d_rs, d_ss and propagates them exactly through
arithmetic and elementary functions.  Slots may be floats or numpy
arrays of a common shape, so whole grids evaluate in one pass.
"""

from __future__ import annotations

import numpy as np

__all__ = ["HyperDual", "UNARY_FUNCTIONS"]


class HyperDual:
    __slots__ = ("value", "d_r", "d_s", "d_rr", "d_rs", "d_ss")

    def __init__(self, value, d_r=0.0, d_s=0.0, d_rr=0.0, d_rs=0.0, d_ss=0.0):
        self.value = value
        self.d_r = d_r
        self.d_s = d_s
        self.d_rr = d_rr
        self.d_rs = d_rs
        self.d_ss = d_ss

    @classmethod
    def constant(cls, v) -> "HyperDual":
        return cls(v)

    @classmethod
    def variable_r(cls, v) -> "HyperDual":
        return cls(v, d_r=np.ones_like(np.asarray(v, dtype=float)) if np.ndim(v) else 1.0)

    @classmethod
    def variable_s(cls, v) -> "HyperDual":
        return cls(v, d_s=np.ones_like(np.asarray(v, dtype=float)) if np.ndim(v) else 1.0)

    def _lift(self, other) -> "HyperDual":
        if isinstance(other, HyperDual):
            return other
        return HyperDual(other)

    def __add__(self, other):
        o = self._lift(other)
        return HyperDual(self.value + o.value, self.d_r + o.d_r, self.d_s + o.d_s,
                         self.d_rr + o.d_rr, self.d_rs + o.d_rs, self.d_ss + o.d_ss)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.value, -self.d_r, -self.d_s,
                         -self.d_rr, -self.d_rs, -self.d_ss)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other)
        x, y = self, o
        return HyperDual(
            x.value * y.value,
            x.d_r * y.value + x.value * y.d_r,
            x.d_s * y.value + x.value * y.d_s,
            x.d_rr * y.value + 2.0 * x.d_r * y.d_r + x.value * y.d_rr,
            x.d_rs * y.value + x.d_r * y.d_s + x.d_s * y.d_r + x.value * y.d_rs,
            x.d_ss * y.value + 2.0 * x.d_s * y.d_s + x.value * y.d_ss,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        v = o.value
        return self * o.apply(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, n):
        # integer exponents only; general powers go through exp/log
        if not float(n).is_integer():
            raise ValueError("HyperDual.__pow__ supports integer exponents only")
        n = int(n)
        v = self.value
        return self.apply(v ** n, n * v ** (n - 1),
                          n * (n - 1) * v ** (n - 2) if n != 1 else 0.0 * v)

    def apply(self, f, df, d2f) -> "HyperDual":
        """Chain rule for a scalar function given f(u), f'(u), f''(u)."""
        u = self
        return HyperDual(
            f,
            df * u.d_r,
            df * u.d_s,
            d2f * u.d_r * u.d_r + df * u.d_rr,
            d2f * u.d_r * u.d_s + df * u.d_rs,
            d2f * u.d_s * u.d_s + df * u.d_ss,
        )

    def __repr__(self):
        return (f"HyperDual({self.value!r}, d_r={self.d_r!r}, d_s={self.d_s!r}, "
                f"d_rr={self.d_rr!r}, d_rs={self.d_rs!r}, d_ss={self.d_ss!r})")


def _sin(u: HyperDual) -> HyperDual:
    v = u.value
    return u.apply(np.sin(v), np.cos(v), -np.sin(v))


def _cos(u: HyperDual) -> HyperDual:
    v = u.value
    return u.apply(np.cos(v), -np.sin(v), -np.cos(v))


def _tan(u: HyperDual) -> HyperDual:
    t = np.tan(u.value)
    sec2 = 1.0 + t * t
    return u.apply(t, sec2, 2.0 * t * sec2)


def _sinh(u: HyperDual) -> HyperDual:
    v = u.value
    return u.apply(np.sinh(v), np.cosh(v), np.sinh(v))


def _cosh(u: HyperDual) -> HyperDual:
    v = u.value
    return u.apply(np.cosh(v), np.sinh(v), np.cosh(v))


def _tanh(u: HyperDual) -> HyperDual:
    t = np.tanh(u.value)
    sech2 = 1.0 - t * t
    return u.apply(t, sech2, -2.0 * t * sech2)


def _exp(u: HyperDual) -> HyperDual:
    e = np.exp(u.value)
    return u.apply(e, e, e)


def _log(u: HyperDual) -> HyperDual:
    v = u.value
    return u.apply(np.log(v), 1.0 / v, -1.0 / (v * v))


def _sqrt(u: HyperDual) -> HyperDual:
    rt = np.sqrt(u.value)
    return u.apply(rt, 0.5 / rt, -0.25 / (rt * u.value))


def _abs(u: HyperDual) -> HyperDual:
    sgn = np.sign(u.value)
    return u.apply(np.abs(u.value), sgn, 0.0 * sgn)


UNARY_FUNCTIONS = {
    "sin": _sin,
    "cos": _cos,
    "tan": _tan,
    "sinh": _sinh,
    "cosh": _cosh,
    "tanh": _tanh,
    "exp": _exp,
    "log": _log,
    "sqrt": _sqrt,
    "abs": _abs,
}
