"""
Gradient checking
=================

The library carries a small reverse-mode tape: the same kernel calls work
on plain arrays or on tape variables, so the decoder needs no second
implementation for backward. Central finite differences then verify every
parameter array.
"""

import numpy as np

from muster.autodiff import Tape, finite_difference_check, ops
from muster.decoder import DecoderConfig, forward_loss, init_params, synth_backbone
from muster.rng import Rng

# a tape in five lines: d/dx of sum((x @ w)^2) checked by hand
rng = Rng(3)
x = rng.spawn("x").normal((3, 4), dtype=np.float64)
w = rng.spawn("w").normal((4, 2), dtype=np.float64)
tape = Tape()
xv = tape.var(x)
y = ops.matmul(xv, w)
loss = ops.sum_all(ops.mul(y, y))
grad = tape.backward(loss)[xv.index]
print("hand check, loss = sum((x@w)^2):")
print(f"  tape gradient vs 2*(x@w)@w.T: max |diff| = "
      f"{np.abs(grad - 2.0 * (x @ w) @ w.T).max():.3e}")

# the same machinery, but through the whole decoder; every parameter
# array is probed at a few coordinates with central differences
cfg = DecoderConfig(base_channels=16, window=4, heads=(4, 2), num_classes=3, seed=0)
feats = [f.astype(np.float64) for f in synth_backbone(96, 96, cfg)]
params = init_params(cfg)

report = finite_difference_check(
    lambda p: forward_loss(feats, cfg, p), params, eps=1e-4, max_coords=2, seed=0
)
print(f"\n2-stage decoder, {len(report.per_param)} parameter arrays:")
print(report)
print(f"\nmax relative error {report.max_rel_err:.3e} "
      f"({'passes' if report.passed(1e-3) else 'fails'} the 1e-3 gate)")
