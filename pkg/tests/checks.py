"""Shared test utilities: finite-difference oracles and gradient comparison."""

import numpy as np

FD_STEP = 1e-5
FD_RTOL = 1e-4


def fd_gradient(scalar_fn, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of `scalar_fn()` with respect to `x`.

    `scalar_fn` must rebuild its computation from `x` on every call; entries
    of `x` are perturbed in place and restored.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = scalar_fn()
        flat[i] = orig - step
        f_minus = scalar_fn()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def fd_coordinate(scalar_fn, x: np.ndarray, index, step: float = FD_STEP) -> float:
    """Central finite difference of `scalar_fn()` for one entry of `x`."""
    orig = x[index]
    x[index] = orig + step
    f_plus = scalar_fn()
    x[index] = orig - step
    f_minus = scalar_fn()
    x[index] = orig
    return (f_plus - f_minus) / (2.0 * step)


def assert_grads_close(analytic: np.ndarray, numeric: np.ndarray, rtol: float = FD_RTOL,
                       atol: float = 1e-8, floor: float = 1e-6):
    """Relative comparison with an absolute fallback where both grads are tiny."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.abs(analytic), np.abs(numeric))
    tiny = denom <= floor
    if tiny.any():
        np.testing.assert_allclose(analytic[tiny], numeric[tiny], rtol=0, atol=atol)
    if (~tiny).any():
        rel = np.abs(analytic - numeric)[~tiny] / denom[~tiny]
        assert rel.max() < rtol, f"max relative gradient error {rel.max():.3e} >= {rtol:g}"


def max_rel_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    denom = max(abs(analytic), abs(numeric))
    if denom <= floor:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / denom
