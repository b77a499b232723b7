"""Principal inertia components: exact correspondence analysis and a neural estimator."""

from .core import (
    DiscreteJoint,
    PicDecomposition,
    PicError,
    SamplePairs,
    validate_joint,
)

__all__ = ["DiscreteJoint", "PicDecomposition", "PicError", "SamplePairs", "validate_joint"]
__version__ = "0.1.0"
