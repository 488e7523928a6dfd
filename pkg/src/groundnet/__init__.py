"""Cross-modal graph grounding on synthetic scenes.

Builds phrase and visual scene graphs from a structured description and a
proposal set, refines both with attention message passing, and localizes
every phrase through structured assignment, trained with a two-stage schedule.
"""

from .config import Config, load_config
from .geometry import Box, OffsetVector, SoftLabelDist

__all__ = ["Config", "load_config", "Box", "OffsetVector", "SoftLabelDist"]
__version__ = "0.1.0"
