"""Robust base placement of a 6R arm for a constrained Cartesian trajectory."""

from .kinematics import Pose, RobotModel, crx10ia_l, load_model

__version__ = "0.1.0"

__all__ = ["Pose", "RobotModel", "crx10ia_l", "load_model", "__version__"]
