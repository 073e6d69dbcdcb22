#!/usr/bin/env python3
"""Print the embedder's stage shapes and parameter budget for a preset.

Feeds one random input through the network stage by stage and tabulates
the output shape next to each named parameter row, so a preset's layout
can be eyeballed without reading the construction code.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from tdsv.resnet import PRESETS, build_network, count_parameters


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="full", choices=sorted(PRESETS))
    ap.add_argument("--speakers", type=int, default=97)
    args = ap.parse_args()

    net = build_network(args.speakers, seed=0, preset=args.preset)
    cfg = net.config
    x = np.zeros((1, cfg.input_height, cfg.input_width, 1), dtype=np.float32)

    print(f"preset '{args.preset}': input "
          f"{cfg.input_height} x {cfg.input_width} x 1, "
          f"embedding dim {cfg.embedding_dim}, {args.speakers} speakers\n")
    print(f"{'stage':<10} {'output shape':<18} {'params':>10}")

    rows = dict(count_parameters(net)[0])
    h = net.stem_conv.forward(x)
    conv_shape = "x".join(map(str, h.shape[1:]))
    h = net.stem_pool.forward(net.stem_relu.forward(h))
    pool_shape = "x".join(map(str, h.shape[1:]))
    print(f"{'stem':<10} {conv_shape:<18} {rows['stem']:>10}")
    print(f"{'maxpool':<10} {pool_shape:<18} {'':>10}")
    for i, block in enumerate(net.blocks, start=1):
        h = block.forward(h, train=True)
        name = f"block{i}"
        shape = "x".join(map(str, h.shape[1:]))
        print(f"{name:<10} {shape:<18} {rows[name]:>10}")
    pooled = net.pool.forward(h)
    logits = net.head.forward(pooled)
    print(f"{'avgpool':<10} {pooled.shape[1]:<18} {'':>10}")
    print(f"{'head':<10} {logits.shape[1]:<18} {rows['head']:>10}")

    total = count_parameters(net)[1]
    print(f"\ntotal parameters: {total} ({total / 1e6:.3f}M)")


if __name__ == "__main__":
    main()
