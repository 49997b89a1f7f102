"""Exception hierarchy shared by every stage of the pipeline."""


class GlyphForgeError(ValueError):
    """Base class for all library errors."""


class UniformMask(GlyphForgeError):
    """A mask has no boundary (all zeros or all ones)."""


class RectTooLarge(GlyphForgeError):
    pass


class TooManyLevels(GlyphForgeError):
    pass


class DegenerateOutput(GlyphForgeError):
    pass


class DegenerateFeatures(GlyphForgeError):
    """All clustering features coincide, so no bipartition exists."""


class EmptyForeground(GlyphForgeError):
    pass


class OutOfBounds(GlyphForgeError):
    pass


class NoValidPlacement(GlyphForgeError):
    """No scale/rotation of the text rectangle fits inside the background."""


class RegionTooLarge(GlyphForgeError):
    pass
