"""Text effects transfer: render a binary glyph mask in the style of a
reference image and blend it into a background."""
from .color import ColorTransfer, transfer_colors
from .embedding import compose, inpaint
from .exceptions import (DegenerateFeatures, DegenerateOutput, EmptyForeground, GlyphForgeError,
                         NoValidPlacement, OutOfBounds, RectTooLarge, RegionTooLarge,
                         TooManyLevels, UniformMask)
from .guidance import GuidanceExtractor, extract_guidance
from .layout import LayoutConfig, LayoutEstimator, LayoutPlacement, place
from .structure import StructureConfig, StructureTransfer, structure_transfer
from .texture import TextureConfig, TextureTransfer, stylize

__version__ = "0.1.0"

__all__ = [
    "DegenerateFeatures", "DegenerateOutput", "EmptyForeground", "GlyphForgeError",
    "NoValidPlacement", "OutOfBounds", "RectTooLarge", "RegionTooLarge", "TooManyLevels",
    "UniformMask",
    "ColorTransfer", "GuidanceExtractor", "LayoutConfig", "LayoutEstimator",
    "LayoutPlacement", "StructureConfig", "StructureTransfer", "TextureConfig",
    "TextureTransfer", "compose", "extract_guidance", "inpaint", "place",
    "structure_transfer", "stylize", "transfer_colors",
]
