"""
Shifted-window masks
====================

After a cyclic shift, a window can cover tokens that were not neighbors in
the original map. The mask blocks those pairs. Only four distinct masks
ever occur: interior windows need none, windows on the last row or column
mix two regions, and the bottom-right corner mixes four.
"""

import numpy as np

from muster import reference, windowing

M = 8

masks = windowing.canonical_masks(M)
print(f"window {M}x{M}, shift {M // 2}: {len(masks)} canonical masks\n")

for name in windowing.MASK_NAMES:
    mask = masks[name]
    blocked = int(np.isneginf(mask).sum())
    total = mask.size
    print(f"{name}: {blocked}/{total} query-key pairs blocked")

# the corner mask as ascii art ('#' = blocked)
print("\ncorner mask, one row per query token:")
print(windowing.render_mask(masks["corner"]))

# a full map stacks these per window; compare against brute force over
# pre-shift source coordinates
h = w = 2 * M
built = windowing.build_sw_mask(h, w, M)
oracle = reference.sw_mask_oracle(h, w, M)
print(f"\n{h}x{w} map: built mask equals brute-force oracle: "
      f"{np.array_equal(built, oracle)}")
print("window -> mask:", windowing.mask_assignment(h // M, w // M))

# the light family keys attend over a half-resolution grid, so masks are
# rectangular: M^2 queries against (M/2)^2 keys
light = windowing.canonical_light_masks(M)
print(f"\nlight corner mask is {light['corner'].shape[0]}x{light['corner'].shape[1]}:")
print(windowing.render_mask(light["corner"]))
print("\nlight map equals its oracle:",
      np.array_equal(windowing.build_light_sw_mask(h, w, M),
                     reference.light_sw_mask_oracle(h, w, M)))
