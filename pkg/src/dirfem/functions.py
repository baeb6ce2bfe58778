"""Analytic data functions for configs: polynomials and named builtins.

Config files describe f, u_d, and manufactured solutions as strings. Two
forms are accepted: polynomial expressions in x and y (parsed with sympy,
differentiated symbolically for gradients) and a small set of named
non-polynomial builtins, currently the leading corner singularity of the
270-degree domain.
"""

from __future__ import annotations

import re

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from .fem import AnalyticFunction

__all__ = ["analytic_function", "BUILTIN_FUNCTION_NAMES"]

_X, _Y = sympy.symbols("x y")


def _singular_2_3() -> AnalyticFunction:
    """r^(2/3) sin(2 theta/3) in the 270-degree wedge with legs on the
    positive x- and negative y-axes (theta measured from the positive
    x-axis, increasing counterclockwise through the wedge).

    Harmonic, vanishes on both legs, and carries the leading corner
    singularity lambda = 2/3 of the omega270 domain. The gradient is
    unbounded at the corner; quadrature points never hit it.
    """

    def theta_prime(x, y):
        t = np.arctan2(y, x)
        return np.where(t < 0.0, t + 2.0 * np.pi, t)

    def value(x, y):
        r = np.hypot(x, y)
        return r ** (2.0 / 3.0) * np.sin((2.0 / 3.0) * theta_prime(x, y))

    def gradient(x, y):
        r = np.hypot(x, y)
        tp = theta_prime(x, y)
        dr = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin((2.0 / 3.0) * tp)
        dt = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos((2.0 / 3.0) * tp)
        ct = x / r
        st = y / r
        return dr * ct - dt * st, dr * st + dt * ct

    return AnalyticFunction(value, gradient=gradient, name="singular_2_3")


_BUILTINS = {
    "zero": lambda: AnalyticFunction.constant(0.0, name="zero"),
    "singular_2_3": _singular_2_3,
}

BUILTIN_FUNCTION_NAMES = tuple(sorted(_BUILTINS))


def analytic_function(spec) -> AnalyticFunction | None:
    """Turn a config string into an AnalyticFunction.

    Accepts a builtin name ("zero", "singular_2_3"), a polynomial expression
    in x and y such as "x + y" or "x**2 - y**2" (also "x^2 - y^2"), or a
    number. None and "zero" map to None-like zero data: "zero" returns the
    zero function, None passes through.
    """
    if spec is None:
        return None
    if isinstance(spec, AnalyticFunction):
        return spec
    if isinstance(spec, (int, float)):
        return AnalyticFunction.constant(float(spec))
    if callable(spec):
        return AnalyticFunction(spec)
    name = str(spec).strip()
    if name in _BUILTINS:
        return _BUILTINS[name]()
    return _polynomial(name)


# sympy's parser ultimately calls eval; restrict the alphabet before it
# ever sees the string, so config data cannot smuggle in arbitrary code
_POLY_CHARS = re.compile(r"^[0-9xy+\-*/^().\s]+$")


def _polynomial(text: str) -> AnalyticFunction:
    if not _POLY_CHARS.match(text):
        raise ValueError(
            f"cannot parse expression {text!r}: only digits, x, y, "
            f"+-*/^ and parentheses are allowed (or a builtin name from "
            f"{BUILTIN_FUNCTION_NAMES})"
        )
    try:
        expr = parse_expr(
            text.replace("^", "**"), local_dict={"x": _X, "y": _Y}
        )
    except Exception as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc}") from None
    extra = expr.free_symbols - {_X, _Y}
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ValueError(f"expression {text!r} uses unknown symbols: {names}")
    if not expr.is_polynomial(_X, _Y):
        raise ValueError(
            f"expression {text!r} is not a polynomial in x, y; "
            f"non-polynomial data must be one of the named builtins "
            f"{BUILTIN_FUNCTION_NAMES}"
        )
    val = sympy.lambdify((_X, _Y), expr, "numpy")
    gx = sympy.lambdify((_X, _Y), sympy.diff(expr, _X), "numpy")
    gy = sympy.lambdify((_X, _Y), sympy.diff(expr, _Y), "numpy")
    return AnalyticFunction(
        val, gradient=lambda x, y: (gx(x, y), gy(x, y)), name=text
    )
