"""Shared test utilities: the parameter-space gradient-check harness."""

import numpy as np

from icusynth.autodiff import Tensor
from icusynth.nn import param_vector, set_param_vector
from icusynth.numerics import finite_diff_grad


def grad_vector(params: dict[str, Tensor]) -> np.ndarray:
    out = []
    for k in sorted(params):
        g = params[k].grad
        out.append((np.zeros_like(params[k].data) if g is None else g).reshape(-1))
    return np.concatenate(out)


def check_gradients(build_loss, params: dict[str, Tensor], h=1e-5, rtol=1e-4) -> float:
    """Compare analytic gradients of ``build_loss(params)`` (a scalar Tensor)
    against central finite differences over the full parameter vector.

    Returns the relative error ||g_analytic - g_fd|| / max(||g_fd||, 1e-8)
    and asserts it is below ``rtol``. The loss builder must be deterministic:
    any internal randomness has to be replayed identically on every call.
    """
    for p in params.values():
        p.grad = None
    loss = build_loss(params)
    loss.backward()
    analytic = grad_vector(params)

    x0 = param_vector(params)

    def f(vec):
        set_param_vector(params, vec)
        try:
            return build_loss(params).item()
        finally:
            set_param_vector(params, x0)

    fd = finite_diff_grad(f, x0, h=h)
    set_param_vector(params, x0)
    rel = float(np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-8))
    assert rel < rtol, f"gradient mismatch: relative error {rel:.3e} >= {rtol}"
    return rel
