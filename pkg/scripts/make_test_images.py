"""Regenerate the bundled 64x64 test images from scikit-image's sample data.

Each image is the central 64x64 crop of the full-resolution sample.
"""

from pathlib import Path

import numpy as np
from skimage import data

from lasi.imageio import ImageTensor, save_image

OUT = Path(__file__).resolve().parents[1] / "src" / "lasi" / "data"


def center_crop(arr, size=64):
    h, w = arr.shape[:2]
    r, c = h // 2 - size // 2, w // 2 - size // 2
    return arr[r : r + size, c : c + size]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    astro = center_crop(data.astronaut().astype(np.float64) / 255.0)
    camera = center_crop(data.camera().astype(np.float64) / 255.0)
    save_image(ImageTensor.from_array(astro), OUT / "astronaut64.ppm")
    save_image(ImageTensor.from_array(camera), OUT / "camera64.pgm")
    print(f"wrote test images to {OUT}")


if __name__ == "__main__":
    main()
