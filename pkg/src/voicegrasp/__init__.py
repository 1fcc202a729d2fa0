"""Voice-to-grasp planning for a dexterous hand on a 6-DoF arm."""

__version__ = "0.1.0"
