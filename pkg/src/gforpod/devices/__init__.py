"""Dynamic device models: synchronous generator and grid-forming converter."""
from .gfor import GforParams, gfor_derivatives, gfor_init_from_powerflow
from .sg import (
    Ac4aParams, Ieeeg1Params, SgParams, sg_derivatives, sg_init_from_powerflow,
)

__all__ = [
    "Ac4aParams", "GforParams", "Ieeeg1Params", "SgParams",
    "gfor_derivatives", "gfor_init_from_powerflow",
    "sg_derivatives", "sg_init_from_powerflow",
]
