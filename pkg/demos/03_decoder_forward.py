"""
Decoder forward pass
====================

Four stages walk the feature pyramid coarsest-first. Each stage runs two
windowed skip-attention passes (plain, then shifted) with MLPs between,
fuses the result with the backbone feature, and upsamples via pixel
shuffle. Stage output channels follow [4C, 2C, C, 2C] at downsample rates
[16x, 8x, 4x, 4x].
"""

from muster.decoder import DecoderConfig, decoder_forward, init_params, synth_backbone

IMG = 128

for c, heads in ((16, (8, 8, 8, 4)), (32, (32, 16, 8, 4))):
    cfg = DecoderConfig(base_channels=c, window=12, heads=heads, num_classes=21, seed=0)
    feats = synth_backbone(IMG, IMG, cfg)
    print(f"\nbase channels C={c}, image {IMG}x{IMG}, patch grid {IMG // 4}x{IMG // 4}")
    print("backbone pyramid (coarsest first):")
    for i, f in enumerate(feats):
        print(f"  F{i}: {f.shape[0]:>3d}x{f.shape[1]:<3d} x {f.shape[2]}")

    logits, stages = decoder_forward(feats, cfg, init_params(cfg), collect_stages=True)
    print("stage outputs:")
    for name, s in stages.items():
        rate = IMG // s.shape[0]
        print(f"  {name}: {s.shape[0]:>3d}x{s.shape[1]:<3d} x {s.shape[2]:<4d} ({rate}x down)")
    print(f"logits: {logits.shape[0]}x{logits.shape[1]} x {logits.shape[2]} classes")

# the light variant shares the decoder skeleton; only the attention core
# changes, so shapes are identical
cfg = DecoderConfig(base_channels=16, window=4, heads=(4, 4, 4, 4),
                    variant="light", num_classes=21, seed=0)
feats = synth_backbone(64, 64, cfg)
logits = decoder_forward(feats, cfg, init_params(cfg))
print(f"\nlight variant at C=16: logits {logits.shape}")

# maps that do not divide the window are padded for attention and cropped
# back, so odd pyramid geometries still work
cfg = DecoderConfig(base_channels=32, window=12, heads=(8, 8, 8, 8),
                    num_classes=3, seed=1)
feats = synth_backbone(96, 96, cfg)  # stage maps 3x3 .. 24x24, none 12-divisible
logits = decoder_forward(feats, cfg, init_params(cfg))
print(f"window 12 over a 24x24 patch grid (every stage padded): logits {logits.shape}")
