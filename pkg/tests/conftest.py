import numpy as np
import pytest

from alphadimt.model import ModelConfig, init_params


@pytest.fixture
def tiny_cfg():
    return ModelConfig(src_vocab=5, tgt_vocab=5, embed_dim=3, hidden_dim=4, max_decode_len=6, init_scale=0.5, seed=3)


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg)


@pytest.fixture
def small_params():
    return init_params(ModelConfig(src_vocab=9, tgt_vocab=9, embed_dim=5, hidden_dim=6, init_scale=0.6, seed=11))


def finite_difference(loss_fn, params, h=1e-5):
    """Central differences of loss_fn() w.r.t. every parameter entry (params mutated in place)."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss_fn()
            arr[idx] = old - h
            down = loss_fn()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads
