"""
Tensor files, run configs, and the command line
===============================================

Arrays travel as a small binary format (magic "MTSR", explicit dims,
float32 payload) that reads back bit-identically. Run configurations are
strict JSON. The CLI wires both to the decoder; it is also callable
in-process, which is how this script drives it.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from muster import io
from muster.cli import main
from muster.rng import Rng

work = Path(tempfile.mkdtemp(prefix="muster-demo-"))

# tensor file round trip
arr = Rng(1).normal((4, 5, 3), dtype=np.float32)
io.write_tensor(work / "t.mtsr", arr)
back = io.read_tensor(work / "t.mtsr")
print(f"tensor round trip bit-identical: {back.tobytes() == arr.tobytes()}")
print(f"file is {(work / 't.mtsr').stat().st_size} bytes "
      f"(12 header + {8 * arr.ndim} dims + {4 * arr.size} payload)\n")

# a run config: image geometry plus decoder settings, unknown keys refused
doc = {
    "image": {"h": 64, "w": 64},
    "base_channels": 16,
    "window_size": 4,
    "num_classes": 3,
    "seed": 0,
    "stages": [
        {"channels": 128, "heads": 4},
        {"channels": 64, "heads": 4},
        {"channels": 32, "heads": 4},
        {"channels": 16, "heads": 4},
    ],
}
cfg_path = work / "run.json"
cfg_path.write_text(json.dumps(doc, indent=2))
cfg, h, w = io.load_run_config(cfg_path)
print(f"parsed config: {cfg.num_stages} stages, window {cfg.window}, image {h}x{w}")

# the full pipeline through the CLI entry point
print("\n$ muster gen-features ...")
main(["gen-features", "--config", str(cfg_path), "--out", str(work / "feats")])

print("\n$ muster forward ...")
main([
    "forward",
    "--config", str(cfg_path),
    "--features", str(work / "feats"),
    "--out", str(work / "logits.mtsr"),
])

logits = io.read_tensor(work / "logits.mtsr")
print(f"\nlogits read back: {logits.shape}, dtype {logits.dtype}")

print("\n$ muster masks --window 4 ...")
main(["masks", "--window", "4", "--out", str(work / "masks")])
print("\nbottom_edge.txt:")
print((work / "masks" / "bottom_edge.txt").read_text())
