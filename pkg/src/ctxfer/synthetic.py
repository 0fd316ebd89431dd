"""Generated two-class texture corpus in the on-disk dataset layout.

Positive images carry horizontal stripes, negative ones vertical stripes;
period, phase, contrast and noise are drawn per image. Horizontal flips,
small shears, shifts and zooms all preserve the class, so the set stays
separable under the default augmentation.
"""

from pathlib import Path

import numpy as np
from PIL import Image


def texture_image(rng, positive, size=32, noise=0.05):
    h = w = size
    period = rng.uniform(4.0, 8.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    contrast = rng.uniform(0.25, 0.45)
    yy, xx = np.mgrid[0:h, 0:w]
    coord = yy if positive else xx
    img = 0.5 + contrast * np.sin(2 * np.pi * coord / period + phase)
    img = img + rng.normal(0.0, noise, (h, w))
    return (np.clip(img, 0.0, 1.0) * 255).round().astype(np.uint8)


def make_texture_dataset(root, n_train=200, n_val=50, size=32, seed=0, class_dirs=("COVID", "non-COVID")):
    """Write ``root/{train,val}/{pos,neg}/*.png``; splits are balanced per class."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for split, n in (("train", n_train), ("val", n_val)):
        for cls, positive in ((class_dirs[0], True), (class_dirs[1], False)):
            d = root / split / cls
            d.mkdir(parents=True, exist_ok=True)
            for i in range(n // 2):
                Image.fromarray(texture_image(rng, positive, size), mode="L").save(d / f"{cls}_{i:04d}.png")
    return root


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(description="write the synthetic texture dataset")
    parser.add_argument("root")
    parser.add_argument("--train", type=int, default=200)
    parser.add_argument("--val", type=int, default=50)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    make_texture_dataset(args.root, args.train, args.val, args.size, args.seed)
    print(f"wrote {args.train} train / {args.val} val images under {args.root}")


if __name__ == "__main__":
    main()
