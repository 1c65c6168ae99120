"""Evacuation-response analytics from per-tower mobile connectivity."""

from .errors import EvacwatchError, InputError, RankDeficiencyError, StatisticalError, UsageError
from .timebins import Clock, Window, floor_to_bin

__all__ = [
    "Clock",
    "EvacwatchError",
    "InputError",
    "RankDeficiencyError",
    "StatisticalError",
    "UsageError",
    "Window",
    "floor_to_bin",
]
__version__ = "0.1.0"
