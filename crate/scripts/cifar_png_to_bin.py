#!/usr/bin/env python3
"""Convert the PNG-packed CIFAR-10 batches shipped in the `tfjs-cifar10` npm
package into the standard CIFAR-10 binary batch layout.

Each PNG is 1024 x 10000 RGB: one image per row, pixels row-major, channels
interleaved. Labels live in train_lables.json / test_lables.json.

usage: cifar_png_to_bin.py PACKAGE_DIR OUT_DIR
"""
import json
import os
import sys

import numpy as np
from PIL import Image


def convert(png, labels, out):
    px = np.asarray(Image.open(png).convert("RGB"), dtype=np.uint8)
    n = px.shape[0]
    planes = px.reshape(n, 1024, 3).transpose(0, 2, 1).reshape(n, 3072)
    rec = np.empty((n, 3073), dtype=np.uint8)
    rec[:, 0] = np.asarray(labels, dtype=np.uint8)
    rec[:, 1:] = planes
    with open(out, "wb") as f:
        f.write(rec.tobytes())


def main():
    src, dst = sys.argv[1], sys.argv[2]
    os.makedirs(dst, exist_ok=True)
    train = json.load(open(os.path.join(src, "train_lables.json")))
    test = json.load(open(os.path.join(src, "test_lables.json")))
    for i in range(5):
        convert(os.path.join(src, f"data_batch_{i + 1}.png"),
                train[i * 10000:(i + 1) * 10000],
                os.path.join(dst, f"data_batch_{i + 1}.bin"))
    convert(os.path.join(src, "test_batch.png"), test,
            os.path.join(dst, "test_batch.bin"))


if __name__ == "__main__":
    main()
