"""Compiled elementwise kernels for the inner primal-dual loop.

Dual arrays are flat with ``dim`` consecutive components per node.  The 1D and
2D variants are written out separately; a generic component loop is an order
of magnitude slower.
"""
import math

from numba import njit


@njit(cache=True)
def _project_1d(lam, grad, grad_old, extrapolate, step, out):
    for i in range(lam.size):
        if extrapolate:
            x = lam[i] + step * (2.0 * grad[i] - grad_old[i])
        else:
            x = lam[i] + step * grad[i]
        if x > 1.0:
            x = 1.0
        elif x < -1.0:
            x = -1.0
        out[i] = x


@njit(cache=True)
def _project_2d(lam, grad, grad_old, extrapolate, step, out):
    for i in range(lam.size // 2):
        a = 2 * i
        b = a + 1
        if extrapolate:
            x = lam[a] + step * (2.0 * grad[a] - grad_old[a])
            y = lam[b] + step * (2.0 * grad[b] - grad_old[b])
        else:
            x = lam[a] + step * grad[a]
            y = lam[b] + step * grad[b]
        s = x * x + y * y
        if s > 1.0:
            f = 1.0 / math.sqrt(s)
            x *= f
            y *= f
        out[a] = x
        out[b] = y


@njit(cache=True)
def _residual_1d(lam_new, lam, grad_new, grad, grad_old, coef, node_weights, out):
    total = 0.0
    for i in range(lam.size):
        r = -coef * (lam_new[i] - lam[i]) - (grad_new[i] - 2.0 * grad[i] + grad_old[i])
        out[i] = r
        total += node_weights[i] * abs(r)
    return total


@njit(cache=True)
def _residual_2d(lam_new, lam, grad_new, grad, grad_old, coef, node_weights, out):
    total = 0.0
    for i in range(lam.size // 2):
        a = 2 * i
        b = a + 1
        rx = -coef * (lam_new[a] - lam[a]) - (grad_new[a] - 2.0 * grad[a] + grad_old[a])
        ry = -coef * (lam_new[b] - lam[b]) - (grad_new[b] - 2.0 * grad[b] + grad_old[b])
        out[a] = rx
        out[b] = ry
        total += node_weights[i] * math.sqrt(rx * rx + ry * ry)
    return total


def projected_dual_step(lam, grad, grad_old, extrapolate, step, dim, out):
    """``out = P(lam + step * grad_star)``, ``grad_star = 2 grad - grad_old`` when extrapolating."""
    kernel = _project_1d if dim == 1 else _project_2d
    kernel(lam, grad, grad_old, extrapolate, step, out)


def residual_and_l1(lam_new, lam, grad_new, grad, grad_old, coef, node_weights, dim, out):
    """``out = -coef (lam_new - lam) - (grad_new - 2 grad + grad_old)``; returns its weighted L1 norm."""
    kernel = _residual_1d if dim == 1 else _residual_2d
    return kernel(lam_new, lam, grad_new, grad, grad_old, coef, node_weights, out)
