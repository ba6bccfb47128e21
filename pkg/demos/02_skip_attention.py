"""
Windowed skip attention
=======================

Queries come from a backbone skip feature, keys and values from the
previous decoder output. With both streams identical and the positional
table zeroed, the block degenerates to plain multi-head self-attention,
which makes a good sanity anchor.
"""

import numpy as np

from muster import attention, reference, windowing
from muster.rng import Rng

M, HEADS, C = 4, 2, 8
rng = Rng(42)

params = attention.init_mska_params(rng, C, M, HEADS, dtype=np.float64)
f = rng.spawn("skip").normal((M * M, C), dtype=np.float64)
kv = rng.spawn("decoder").normal((M * M, C), dtype=np.float64)

out = attention.w_mska(f, kv, params, M, HEADS)
oracle = reference.w_mska_oracle(
    f, kv, params["w_q"], params["w_k"], params["w_v"], params["w_o"],
    params["bias_table"], M, HEADS,
)
print(f"one window, {M * M} tokens, {HEADS} heads")
print(f"vectorized vs scalar-loop oracle: max |diff| = {np.abs(out - oracle).max():.3e}")

# degeneracy check: identical streams + zero positional bias = plain MSA
p0 = dict(params)
p0["bias_table"] = np.zeros_like(params["bias_table"])
msa = reference.msa_ref(f, p0["w_q"], p0["w_k"], p0["w_v"], p0["w_o"], HEADS)
print(f"degenerate (f == kv) vs plain MSA:  max |diff| = "
      f"{np.abs(attention.w_mska(f, f, p0, M, HEADS) - msa).max():.3e}")

# masked pairs are really unreachable: perturbing a blocked key leaves
# every query that cannot see it bit-identical
mask = windowing.canonical_masks(M)["corner"].astype(np.float64)
k = int(np.where(mask[0] == windowing.NEG_INF)[0][0])
kv2 = kv.copy()
kv2[k] += 100.0
a = attention.w_mska(f, kv, params, M, HEADS, mask=mask)
b = attention.w_mska(f, kv2, params, M, HEADS, mask=mask)
hidden_from = mask[:, k] != 0.0
print(f"\nkey {k} perturbed by +100 under the corner mask:")
print(f"  queries blocked from it changed: {bool((a[hidden_from] != b[hidden_from]).any())}")
print(f"  queries that see it changed:     {bool((a[~hidden_from] != b[~hidden_from]).any())}")

# the light variant drops the K/V/output projections; one shared tensor,
# depthwise-downsampled 2x per axis, serves as both keys and values
lp = attention.init_light_params(rng.spawn("light"), C, M, HEADS, dtype=np.float64)
x = rng.spawn("map").normal((8, 8, C), dtype=np.float64)
y = attention.light_attention_map(x, x, lp, M, HEADS, shifted=True)
print(f"\nlight attention over an 8x8 map: output {y.shape}, "
      f"keys per window {(M // 2) ** 2} instead of {M * M}")
