"""Recurrent building blocks and the Adam optimizer used by all trained models.

Parameters live in flat ``dict[str, Tensor]`` maps keyed as ``"<prefix>.<name>"``
so a whole model serializes as one array manifest. A GRU layer owns four
arrays: ``w_x`` (D, 3H), ``w_h`` (H, 3H), ``b_x`` and ``b_h`` (3H,), with the
gate order reset | update | candidate along the last axis.
"""

from __future__ import annotations

import numpy as np

from scipy.special import expit

from .autodiff import Tensor, _accum
from .errors import InputError, NumericError
from .numerics import RngStream

__all__ = [
    "init_linear",
    "init_gru",
    "linear",
    "gru_sequence",
    "Adam",
    "param_vector",
    "set_param_vector",
]


def _uniform(rng: RngStream, shape: tuple[int, ...], scale: float) -> np.ndarray:
    return (rng.uniform(shape) * 2.0 - 1.0) * scale


def init_linear(params: dict, prefix: str, rng: RngStream, d_in: int, d_out: int) -> None:
    scale = 1.0 / np.sqrt(d_in)
    params[f"{prefix}.w"] = Tensor(_uniform(rng, (d_in, d_out), scale))
    params[f"{prefix}.b"] = Tensor(np.zeros(d_out))


def init_gru(params: dict, prefix: str, rng: RngStream, d_in: int, hidden: int) -> None:
    scale = 1.0 / np.sqrt(hidden)
    params[f"{prefix}.w_x"] = Tensor(_uniform(rng, (d_in, 3 * hidden), scale))
    params[f"{prefix}.w_h"] = Tensor(_uniform(rng, (hidden, 3 * hidden), scale))
    params[f"{prefix}.b_x"] = Tensor(np.zeros(3 * hidden))
    params[f"{prefix}.b_h"] = Tensor(np.zeros(3 * hidden))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b with a hand-derived backward (single graph node)."""
    out = Tensor(x.data @ w.data + b.data, (x, w, b))

    def _bw():
        g = out.grad
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    out._backward = _bw
    return out


def linear(params: dict, prefix: str, x: Tensor) -> Tensor:
    return affine(x, params[f"{prefix}.w"], params[f"{prefix}.b"])


def gru_cell(gx: Tensor, gh: Tensor, h_prev: Tensor, hidden: int) -> Tensor:
    """One GRU update from precomputed gate pre-activations (single node).

        r = sigm(gx_r + gh_r)        z = sigm(gx_z + gh_z)
        n = tanh(gx_n + r * gh_n)    h = (1 - z) * n + z * h_prev

    gx/gh are (B, 3H) with gate order r | z | n; the backward pass is the
    standard hand-derived GRU backprop through these four equations.
    """
    s = slice(None)
    r = expit(gx.data[s, :hidden] + gh.data[s, :hidden])
    z = expit(gx.data[s, hidden : 2 * hidden] + gh.data[s, hidden : 2 * hidden])
    gh_n = gh.data[s, 2 * hidden :]
    n = np.tanh(gx.data[s, 2 * hidden :] + r * gh_n)
    out = Tensor((1.0 - z) * n + z * h_prev.data, (gx, gh, h_prev))

    def _bw():
        dh = out.grad
        dn = dh * (1.0 - z)
        dz = dh * (h_prev.data - n)
        da_n = dn * (1.0 - n**2)
        dr = da_n * gh_n
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        dgx = np.concatenate([da_r, da_z, da_n], axis=1)
        dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
        _accum(gx, dgx)
        _accum(gh, dgh)
        _accum(h_prev, dh * z)

    out._backward = _bw
    return out


def _gru_step(params: dict, prefix: str, hidden: int, x_t: Tensor, h_prev: Tensor) -> Tensor:
    gx = affine(x_t, params[f"{prefix}.w_x"], params[f"{prefix}.b_x"])
    gh = affine(h_prev, params[f"{prefix}.w_h"], params[f"{prefix}.b_h"])
    return gru_cell(gx, gh, h_prev, hidden)


def gru_sequence(
    params: dict,
    prefix: str,
    hidden: int,
    xs: list[Tensor],
    reverse: bool = False,
) -> list[Tensor]:
    """Run a single-layer GRU over per-timestep inputs ``xs`` (each (B, D)).

    Returns the hidden state at every timestep, in the original time order
    even when ``reverse=True`` scans right-to-left.
    """
    if not xs:
        raise InputError("gru_sequence needs at least one timestep")
    batch = xs[0].shape[0]
    h = Tensor(np.zeros((batch, hidden)))
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        h = _gru_step(params, prefix, hidden, xs[t], h)
        out[t] = h
    return out  # type: ignore[return-value]


class Adam:
    """Standard Adam with bias correction; state is plain numpy, fully seeded
    by the surrounding training loop (no hidden randomness here)."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter {key!r}")
            m = self._m[key]
            v = self._v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def param_vector(params: dict[str, Tensor]) -> np.ndarray:
    """Flatten all parameters into one vector (key-sorted, stable order)."""
    return np.concatenate([params[k].data.reshape(-1) for k in sorted(params)])


def set_param_vector(params: dict[str, Tensor], vec: np.ndarray) -> None:
    """Inverse of :func:`param_vector`; writes values back in place."""
    offset = 0
    for k in sorted(params):
        size = params[k].data.size
        params[k].data = vec[offset : offset + size].reshape(params[k].data.shape).copy()
        offset += size
    if offset != vec.size:
        raise InputError(f"vector length {vec.size} does not match parameter count {offset}")
