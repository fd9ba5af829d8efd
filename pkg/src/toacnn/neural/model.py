"""Assemble a profile into a runnable network: init, forward, backward.

Parameters live in a flat list of float32 arrays in the exact order of
``profile.parameter_specs()``; gradients come back in the same order. The
forward/backward walks share one op plan so the two can never drift apart.
"""

from __future__ import annotations

import numpy as np

from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool_backward,
    maxpool_forward,
    relu_backward,
    relu_forward,
    tconv_backward,
    tconv_forward,
)
from .profile import NetworkProfile


def _plan(profile: NetworkProfile):
    ops = []
    p = 0
    for i, (_, _, pool) in enumerate(profile.encoder):
        ops.append(("conv", f"enc{i}.conv", p, None))
        p += 2
        ops.append(("relu", f"enc{i}.relu", None, None))
        ops.append(("pool", f"enc{i}.pool", None, pool))
    ops.append(("flatten", "flatten", None, None))
    ops.append(("dense", "dense0", p, None))
    p += 2
    if profile.adaptive_units > 0:
        ops.append(("relu", "dense.relu", None, None))
        ops.append(("dense", "dense1", p, None))
        p += 2
    bs = profile.bottleneck_size
    ops.append(("unflatten", "unflatten", None, (bs, bs, profile.bottleneck_channels)))
    for i, _ in enumerate(profile.decoder):
        ops.append(("tconv", f"dec{i}.tconv", p, None))
        p += 2
        ops.append(("relu", f"dec{i}.relu", None, None))
    return ops


def init_params(profile: NetworkProfile, seed: int) -> list[np.ndarray]:
    """He-uniform weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.

    One seeded generator drawn in declaration order makes the whole parameter set a
    pure function of (profile, seed).
    """
    rng = np.random.default_rng(seed)
    params = []
    for name, shape, fan_in in profile.parameter_specs():
        if name.endswith(".bias"):
            params.append(np.zeros(shape, dtype=np.float32))
        else:
            bound = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-bound, bound, size=shape).astype(np.float32))
    return params


def forward(
    profile: NetworkProfile, params: list[np.ndarray], x: np.ndarray
) -> tuple[np.ndarray, list]:
    """Run the network; returns (output, caches) for a later backward."""
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (profile.input_size, profile.input_size, 1):
        raise ValueError(
            f"expected input {(profile.input_size, profile.input_size, 1)}, got {x.shape}"
        )
    caches = []
    for kind, _, p, aux in _plan(profile):
        if kind == "conv":
            x, c = conv2d_forward(x, params[p], params[p + 1])
        elif kind == "relu":
            x, c = relu_forward(x)
        elif kind == "pool":
            x, c = maxpool_forward(x, aux)
        elif kind == "flatten":
            c = x.shape
            x = x.reshape(-1)
        elif kind == "dense":
            x, c = dense_forward(x, params[p], params[p + 1])
        elif kind == "unflatten":
            c = x.shape
            x = x.reshape(aux)
        else:
            x, c = tconv_forward(x, params[p], params[p + 1])
        caches.append(c)
    return x, caches


def backward(
    profile: NetworkProfile,
    params: list[np.ndarray],
    caches: list,
    d_out: np.ndarray,
) -> list[np.ndarray]:
    """Gradient of the scalar loss w.r.t. every parameter, given dL/d(output)."""
    grads: list[np.ndarray | None] = [None] * len(params)
    d = np.asarray(d_out, dtype=np.float32)
    for (kind, _, p, aux), cache in zip(reversed(_plan(profile)), reversed(caches)):
        if kind == "conv":
            d, grads[p], grads[p + 1] = conv2d_backward(cache, d)
        elif kind == "relu":
            d = relu_backward(cache, d)
        elif kind == "pool":
            d = maxpool_backward(cache, d)
        elif kind in ("flatten", "unflatten"):
            d = d.reshape(cache)
        elif kind == "dense":
            d, grads[p], grads[p + 1] = dense_backward(cache, d)
        else:
            d, grads[p], grads[p + 1] = tconv_backward(cache, d)
    return grads


def predict(profile: NetworkProfile, params: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Forward pass without keeping caches."""
    y, _ = forward(profile, params, x)
    return y


def first_nonfinite_layer(
    profile: NetworkProfile, params: list[np.ndarray], x: np.ndarray
) -> str | None:
    """Name of the first op whose output contains a non-finite value."""
    x = np.asarray(x, dtype=np.float32)
    if not np.all(np.isfinite(x)):
        return "input"
    for kind, name, p, aux in _plan(profile):
        if kind == "conv":
            x, _ = conv2d_forward(x, params[p], params[p + 1])
        elif kind == "relu":
            x, _ = relu_forward(x)
        elif kind == "pool":
            x, _ = maxpool_forward(x, aux)
        elif kind == "flatten":
            x = x.reshape(-1)
        elif kind == "dense":
            x, _ = dense_forward(x, params[p], params[p + 1])
        elif kind == "unflatten":
            x = x.reshape(aux)
        else:
            x, _ = tconv_forward(x, params[p], params[p + 1])
        if not np.all(np.isfinite(x)):
            return name
    return None
