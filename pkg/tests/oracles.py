"""Independent reference implementations used by several test modules."""

import numpy as np

from fanunet.attention import WindowAttention
from fanunet.fan import FANLayer1D, FANLayer2D
from fanunet.tensor import Tensor


def per_pixel_oracle(layer2d: FANLayer2D, x: np.ndarray) -> np.ndarray:
    """Apply an equivalent FANLayer1D independently at every pixel."""
    one_d = FANLayer1D(layer2d.c_in, layer2d.d_p, layer2d.d_g, np.random.default_rng(0), periodic_bias=True, dtype=np.float64)
    one_d.w_p.data = layer2d.conv_p.weight.data[:, :, 0, 0].T.astype(np.float64)
    one_d.b_periodic.data = layer2d.conv_p.bias.data.astype(np.float64)
    one_d.w_p_prime.data = layer2d.conv_g.weight.data[:, :, 0, 0].T.astype(np.float64)
    one_d.b_p.data = layer2d.conv_g.bias.data.astype(np.float64)
    B, _, H, W = x.shape
    out = np.zeros((B, layer2d.c_out, H, W))
    for b in range(B):
        for i in range(H):
            for j in range(W):
                out[b, :, i, j] = one_d(Tensor(x[b, :, i, j][None], dtype=np.float64)).data[0]
    return out


def dense_attention(attn: WindowAttention, tokens: np.ndarray) -> np.ndarray:
    """Loop-per-head multi-head attention over [T, C] tokens."""
    lin = lambda m, t: t @ m.weight.data + m.bias.data  # noqa: E731
    q, k, v = lin(attn.q, tokens), lin(attn.k, tokens), lin(attn.v, tokens)
    h, dh = attn.num_heads, tokens.shape[1] // attn.num_heads
    ctx = np.zeros_like(tokens)
    for i in range(h):
        sl = slice(i * dh, (i + 1) * dh)
        s = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        s = np.exp(s - s.max(axis=1, keepdims=True))
        s /= s.sum(axis=1, keepdims=True)
        ctx[:, sl] = s @ v[:, sl]
    return lin(attn.o, ctx)
