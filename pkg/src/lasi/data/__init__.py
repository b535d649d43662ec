"""Bundled sample images (central 64x64 crops of scikit-image samples)."""

from importlib import resources

from ..imageio import ImageTensor, load_image


def astronaut() -> ImageTensor:
    """64x64 RGB astronaut."""
    with resources.as_file(resources.files(__name__) / "astronaut64.ppm") as p:
        return load_image(p)


def camera() -> ImageTensor:
    """64x64 grayscale cameraman."""
    with resources.as_file(resources.files(__name__) / "camera64.pgm") as p:
        return load_image(p)
