"""boundlab: quadruped bounding simulator and gait-parameter energetics toolkit."""

__version__ = "0.1.0"
