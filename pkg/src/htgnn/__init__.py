"""Graph-based virtual sensor for bearing load prediction.

Maps windowed temperature, vibration, and rotational-speed signals from a
two-bearing test rig to axial and radial load estimates, using a
heterogeneous temporal graph neural network with a 1-D CNN baseline.
"""

from .backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
