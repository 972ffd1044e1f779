"""Pyramid spatial-temporal video diffusion at desk scale."""

from ._univid import (
    ConfigError,
    DivisibilityError,
    Error,
    FormatError,
    Generator,
    IoError,
    RangeError,
    ShapeError,
    alpha_bar,
    decode_tensor,
    encode_tensor,
    first_frame_fidelity,
    gen_clip,
    psnr,
    pyramid_table,
    q_sample,
    reference_frames,
    temporal_smoothness,
)

__all__ = [
    "ConfigError",
    "DivisibilityError",
    "Error",
    "FormatError",
    "Generator",
    "IoError",
    "RangeError",
    "ShapeError",
    "alpha_bar",
    "decode_tensor",
    "encode_tensor",
    "first_frame_fidelity",
    "gen_clip",
    "psnr",
    "pyramid_table",
    "q_sample",
    "reference_frames",
    "temporal_smoothness",
]
