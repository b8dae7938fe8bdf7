"""Reduced-order models and optimal control of a single spin in a qubit chain."""

__version__ = "0.1.0"

from .control import OptimizerConfig, optimize
from .exactsim import info_flow, site_trajectory
from .models import CircuitLayout, MBLParams, XYZParams, mbl_layout, xyz_layout
from .rom import ReducedOrderModel, rom_from_layout
from .sequence import ControlSequence

__all__ = [
    "CircuitLayout",
    "ControlSequence",
    "MBLParams",
    "OptimizerConfig",
    "ReducedOrderModel",
    "XYZParams",
    "info_flow",
    "mbl_layout",
    "optimize",
    "rom_from_layout",
    "site_trajectory",
    "xyz_layout",
]
