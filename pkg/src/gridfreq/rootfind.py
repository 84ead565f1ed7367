"""Scalar root-finding helpers for monotone decreasing maps."""

from __future__ import annotations


def bracket_decreasing(f, a: float = -1.0, b: float = 1.0,
                       max_doublings: int = 1100) -> tuple[float, float]:
    """Expand [a, b] geometrically until f(a) >= 0 >= f(b).

    Raises ValueError when a side cannot be bracketed (the map saturates with
    the wrong sign), which callers translate into a feasibility error.
    """
    for _ in range(max_doublings):
        if f(a) >= 0:
            break
        a *= 2.0
    else:
        raise ValueError("could not bracket the root from below")
    for _ in range(max_doublings):
        if f(b) <= 0:
            break
        b *= 2.0
    else:
        raise ValueError("could not bracket the root from above")
    return a, b


def bisect_decreasing(f, a: float, b: float, tol: float = 1e-12,
                      max_iter: int = 200) -> tuple[float, float, float]:
    """Bisection on a nonincreasing map; returns (root, a, b) with b - a <= tol."""
    for _ in range(max_iter):
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        r = f(mid)
        if r > 0:
            a = mid
        elif r < 0:
            b = mid
        else:
            a = b = mid
    return 0.5 * (a + b), a, b


def polish_decreasing(f, slope, nu: float, a: float, b: float,
                      tol: float = 1e-12, max_steps: int = 8) -> float:
    """Guarded Newton polish; exact on locally affine pieces, never leaves [a, b]."""
    for _ in range(max_steps):
        r = f(nu)
        s = slope(nu)
        if r == 0.0 or s >= 0.0:
            break
        candidate = nu - r / s
        if not (a - tol <= candidate <= b + tol):
            break
        if abs(f(candidate)) >= abs(r):
            break
        nu = candidate
    return nu
