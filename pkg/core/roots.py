"""Scalar root finding: bracket expansion, safe Newton-Raphson and bisection."""
from __future__ import annotations

from utils.errors import BracketError, SolverError

NEWTON_MAXIT = 200
BISECT_MAXIT = 400


def expand_bracket(func, lo, hi, limit, factor=2.0):
    """Grow [lo, hi] geometrically until func changes sign, staying inside [-limit, limit].

    func must be increasing; returns (lo, hi, f_lo, f_hi).
    """
    lo, hi = max(lo, -limit), min(hi, limit)
    f_lo, f_hi = func(lo), func(hi)
    while f_lo > 0.0:
        if lo <= -limit:
            raise BracketError("bracket not found", {"lo": lo, "f_lo": f_lo, "limit": limit})
        lo = max(lo * factor, -limit)
        f_lo = func(lo)
    while f_hi < 0.0:
        if hi >= limit:
            raise BracketError("bracket not found", {"hi": hi, "f_hi": f_hi, "limit": limit})
        hi = min(hi * factor, limit)
        f_hi = func(hi)
    return lo, hi, f_lo, f_hi


def safe_newton(func, dfunc, lox, hix, tol=1e-15, ftol=0.0, maxit=NEWTON_MAXIT):
    """Newton-Raphson that falls back to bisection whenever a step leaves the bracket.

    Stops when the step is below tol * (1 + |x|) or |func| <= ftol.
    """
    fl, fh = func(lox), func(hix)
    if (fl > 0.0 and fh > 0.0) or (fl < 0.0 and fh < 0.0):
        raise BracketError("root must be bracketed", {"lo": lox, "hi": hix, "f_lo": fl, "f_hi": fh})
    if fl == 0.0:
        return lox
    if fh == 0.0:
        return hix
    if fl < 0.0:
        xl, xh = lox, hix
    else:
        xl, xh = hix, lox
    rts = 0.5 * (lox + hix)
    dxold = abs(hix - lox)
    dx = dxold
    f, df = func(rts), dfunc(rts)
    for _ in range(maxit):
        if abs(f) <= ftol:
            return rts
        newton_leaves = ((rts - xh) * df - f) * ((rts - xl) * df - f) > 0.0
        if df == 0.0 or newton_leaves or abs(2.0 * f) > abs(dxold * df):
            dxold = dx
            dx = 0.5 * (xh - xl)
            rts = xl + dx
        else:
            dxold = dx
            dx = f / df
            rts -= dx
        if abs(dx) < tol * (1.0 + abs(rts)):
            return rts
        f, df = func(rts), dfunc(rts)
        if f < 0.0:
            xl = rts
        else:
            xh = rts
    raise SolverError("too many Newton iterations", {"x": rts, "f": f})


def bisect(func, lox, hix, tol=1e-14, maxit=BISECT_MAXIT):
    """Plain bisection to an absolute tolerance."""
    fl, fh = func(lox), func(hix)
    if fl * fh > 0.0:
        raise BracketError("root must be bracketed", {"lo": lox, "hi": hix})
    if fl == 0.0:
        return lox
    if fh == 0.0:
        return hix
    if fl < 0.0:
        dx, rtb = hix - lox, lox
    else:
        dx, rtb = lox - hix, hix
    for _ in range(maxit):
        dx *= 0.5
        xmid = rtb + dx
        fmid = func(xmid)
        if fmid <= 0.0:
            rtb = xmid
        if abs(dx) < tol or fmid == 0.0:
            return rtb
    raise SolverError("too many bisections", {"x": rtb})
