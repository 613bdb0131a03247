"""Illuminant spectrum recovery from hyperspectral cubes."""

from ._specrec import (
    SpecrecError,
    csse,
    families,
    gen_illuminant,
    gradcheck,
    infer,
    infer_shapes,
    mae,
    mse,
    normalize,
    parameter_count,
    read_cube,
    roughness,
    smooth,
    write_cube,
)

__all__ = [
    "SpecrecError",
    "csse",
    "families",
    "gen_illuminant",
    "gradcheck",
    "infer",
    "infer_shapes",
    "mae",
    "mse",
    "normalize",
    "parameter_count",
    "read_cube",
    "roughness",
    "smooth",
    "write_cube",
]
