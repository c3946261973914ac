"""Turing machines as robust dynamical systems, and basins of planar sinks."""

from ._core import (
    IncompleteInventory,
    IntegrationError,
    MachineFormatError,
    PlanarField,
    TuringMachine,
    basin_membership,
    choose_c,
    compute_basin,
    encode_input,
    equilibria,
    fbar,
    halting_point,
    phi_window_integral,
    run,
    run_cli,
    step,
    track,
)

__all__ = [
    "IncompleteInventory",
    "IntegrationError",
    "MachineFormatError",
    "PlanarField",
    "TuringMachine",
    "basin_membership",
    "choose_c",
    "compute_basin",
    "encode_input",
    "equilibria",
    "fbar",
    "halting_point",
    "phi_window_integral",
    "run",
    "run_cli",
    "step",
    "track",
]
