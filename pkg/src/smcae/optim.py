"""Deterministic full-batch L-BFGS and the finite-difference gradient oracle.

The minimizer is a plain two-loop-recursion L-BFGS with a strong-Wolfe line
search. It is intentionally sequential and allocation-light so that repeated
runs with identical inputs produce bit-identical iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NonFiniteError(RuntimeError):
    """Raised when the objective or gradient turns non-finite and the line
    search cannot recover. Carries the last finite iterate."""

    def __init__(self, message, x=None, fun=None):
        super().__init__(message)
        self.x = x
        self.fun = fun


@dataclass
class LbfgsOptions:
    memory: int = 10
    max_iterations: int = 400
    tolerance: float = 1e-7        # relative objective-change stop threshold
    grad_tolerance: float = 1e-12  # sup-norm gradient stop threshold
    c1: float = 1e-4               # sufficient-decrease parameter
    c2: float = 0.9                # curvature parameter
    max_line_evals: int = 25

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ValueError("line search requires 0 < c1 < c2 < 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    trace: list      # (iteration, objective, aux); entry 0 is the initial point
    iterations: int
    converged: bool
    warning: str | None = None


def _unpack(out):
    """Objective callbacks return (f, g) or (f, g, aux)."""
    if len(out) == 2:
        f, g = out
        return float(f), np.asarray(g, dtype=float), None
    f, g, aux = out
    return float(f), np.asarray(g, dtype=float), aux


def _cubic_min(a0, f0, g0, a1, f1, g1):
    """Minimizer of the Hermite cubic through two (point, value, slope)
    samples. Exact for quadratic objectives, which is what makes the line
    search exact on quadratics."""
    d1 = g0 + g1 - 3.0 * (f0 - f1) / (a0 - a1)
    rad = d1 * d1 - g0 * g1
    if not math.isfinite(rad) or rad < 0.0:
        return None
    d2 = math.sqrt(rad)
    if a0 <= a1:
        pos = a1 - (a1 - a0) * ((g1 + d2 - d1) / (g1 - g0 + 2.0 * d2))
    else:
        pos = a0 - (a0 - a1) * ((g0 + d2 - d1) / (g0 - g1 + 2.0 * d2))
    if not math.isfinite(pos):
        return None
    return pos


class _Eval:
    """One line-search evaluation: phi(a) = f(x + a*d) plus its payload."""

    __slots__ = ("a", "phi", "dphi", "g", "aux", "x")

    def __init__(self, a, phi, dphi, g, aux, x):
        self.a = a
        self.phi = phi
        self.dphi = dphi
        self.g = g
        self.aux = aux
        self.x = x

    @property
    def finite(self):
        return math.isfinite(self.phi) and np.isfinite(self.g).all()


def _line_search(fg, x, d, f0, g0, dphi0, a_init, c1, c2, max_evals):
    """Strong-Wolfe line search (bracket + zoom with cubic interpolation).

    An accepted step whose directional derivative is still clearly nonzero is
    refined once by interpolating against the origin; on quadratics this lands
    on the exact one-dimensional minimizer.

    Returns (accepted _Eval or None, ok_flag, saw_finite_flag).
    """
    evals = 0
    saw_finite = False

    def phi(a):
        nonlocal evals, saw_finite
        xa = x + a * d
        f_a, g_a, aux = _unpack(fg(xa))
        evals += 1
        dphi = float(g_a @ d) if np.isfinite(g_a).all() else math.nan
        e = _Eval(a, f_a, dphi, g_a, aux, xa)
        saw_finite = saw_finite or e.finite
        return e

    def armijo_ok(e):
        return e.finite and e.phi <= f0 + c1 * e.a * dphi0

    def wolfe_ok(e):
        return armijo_ok(e) and abs(e.dphi) <= c2 * (-dphi0)

    def refine(e):
        # One extra interpolation toward the exact 1-D minimizer.
        if abs(e.dphi) <= 1e-9 * abs(dphi0) or evals >= max_evals:
            return e
        a_r = _cubic_min(0.0, f0, dphi0, e.a, e.phi, e.dphi)
        if a_r is None or not (0.0 < a_r) or a_r == e.a:
            return e
        r = phi(a_r)
        if wolfe_ok(r) and r.phi < e.phi:
            return r
        return e

    best = None  # best finite Armijo point seen, fallback for failures

    def note(e):
        nonlocal best
        if armijo_ok(e) and (best is None or e.phi < best.phi):
            best = e

    def zoom(lo, hi):
        span_prev = math.inf
        while evals < max_evals:
            span = abs(hi.a - lo.a)
            a_j = None
            if lo.finite and hi.finite and span > 0:
                a_j = _cubic_min(lo.a, lo.phi, lo.dphi, hi.a, hi.phi, hi.dphi)
            interior_lo = min(lo.a, hi.a) + 1e-6 * span
            interior_hi = max(lo.a, hi.a) - 1e-6 * span
            # Bisect when interpolation is unusable or the bracket stalls.
            if a_j is None or not (interior_lo <= a_j <= interior_hi) or span > 0.66 * span_prev:
                a_j = 0.5 * (lo.a + hi.a)
            span_prev = span
            e = phi(a_j)
            note(e)
            if not e.finite or e.phi > f0 + c1 * e.a * dphi0 or e.phi >= lo.phi:
                hi = e
            else:
                if abs(e.dphi) <= c2 * (-dphi0):
                    return refine(e)
                if e.dphi * (hi.a - lo.a) >= 0.0:
                    hi = lo
                lo = e
            if span <= 1e-14 * max(1.0, abs(lo.a)):
                break
        return None

    prev = _Eval(0.0, f0, dphi0, g0, None, x)
    a = a_init
    while evals < max_evals:
        e = phi(a)
        note(e)
        if not e.finite or e.phi > f0 + c1 * a * dphi0 or (prev.a > 0.0 and e.phi >= prev.phi):
            got = zoom(prev, e)
            return got if got is not None else best, got is not None, saw_finite
        if abs(e.dphi) <= c2 * (-dphi0):
            return refine(e), True, saw_finite
        if e.dphi >= 0.0:
            got = zoom(e, prev)
            return got if got is not None else best, got is not None, saw_finite
        prev = e
        a = 2.0 * a
    return best, False, saw_finite


def _two_loop(g, pairs):
    """L-BFGS two-loop recursion with sT y / yT y initial scaling."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def minimize(fg, x0, options: LbfgsOptions | None = None) -> MinimizeResult:
    """Minimize a smooth function of a flat parameter vector.

    Args:
        fg: callable returning ``(f, grad)`` or ``(f, grad, aux)`` at a point.
            The optional ``aux`` payload of each accepted point is stored in
            the trace (used by training code to log per-channel errors).
        x0: starting point, 1-D array.
        options: LbfgsOptions; defaults used when omitted.

    Returns:
        MinimizeResult. ``fun`` never exceeds the starting objective, and
        ``trace`` holds one ``(iteration, objective, aux)`` entry per accepted
        step, starting with the initial point at iteration 0.

    Raises:
        NonFiniteError: if the objective or gradient is non-finite at the
            starting point, or becomes non-finite with no recovery possible.
    """
    opts = options or LbfgsOptions()
    x = np.array(x0, dtype=float).ravel()
    f, g, aux = _unpack(fg(x))
    if not math.isfinite(f) or not np.isfinite(g).all():
        raise NonFiniteError("objective or gradient non-finite at the starting point")

    trace = [(0, f, aux)]
    pairs = []  # (s, y, 1/sTy) history, oldest first
    warning = None
    converged = False

    for k in range(1, opts.max_iterations + 1):
        if float(np.abs(g).max(initial=0.0)) <= opts.grad_tolerance:
            converged = True
            break
        d = -_two_loop(g, pairs)
        dphi0 = float(g @ d)
        if dphi0 >= 0.0:
            # Numerically corrupted curvature history; restart from steepest descent.
            pairs.clear()
            d = -g
            dphi0 = float(g @ d)
            if dphi0 >= 0.0:
                converged = True
                break
        a_init = min(1.0, 1.0 / float(np.abs(g).sum())) if k == 1 else 1.0
        e, ok, saw_finite = _line_search(fg, x, d, f, g, dphi0, a_init,
                                         opts.c1, opts.c2, opts.max_line_evals)
        if e is None:
            if not saw_finite:
                raise NonFiniteError("objective non-finite along the search direction",
                                     x=x, fun=f)
            warning = "line search failed; returning best iterate"
            break
        s = e.x - x
        y = e.g - g
        sy = float(s @ y)
        f_prev = f
        x, f, g, aux = e.x, e.phi, e.g, e.aux
        trace.append((k, f, aux))
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
            if len(pairs) > opts.memory:
                pairs.pop(0)
        if not ok:
            warning = "line search failed; returning best iterate"
            break
        if abs(f_prev - f) <= opts.tolerance * max(1.0, abs(f_prev)):
            converged = True
            break

    return MinimizeResult(x=x, fun=f, trace=trace, iterations=len(trace) - 1,
                          converged=converged, warning=warning)


def finite_diff(f, x, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f(x)
        flat[i] = orig - eps
        f_minus = f(x)
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * eps)
    return out


def check_gradient(f, g, x, eps: float = 1e-5) -> float:
    """Max symmetric relative error between an analytic gradient and central
    finite differences: ``max_i |g_i - fd_i| / max(1, |g_i| + |fd_i|)``."""
    x = np.asarray(x, dtype=float)
    ga = np.asarray(g(x), dtype=float).ravel()
    fd = finite_diff(f, x, eps=eps)
    denom = np.maximum(1.0, np.abs(ga) + np.abs(fd))
    return float(np.max(np.abs(ga - fd) / denom))
