"""Cellular sheaves, sheaf convolutional networks and their neural tangent kernels."""
from .sheaf import (
    CellularSheaf,
    Coboundary,
    DiffusionOperator,
    Graph,
    SheafLaplacian,
    coboundary,
    constant_sheaf,
    diffusion_operator,
    diffusion_power,
    global_sections,
    graph_laplacian,
    harmonic_projection,
    laplacian_of,
    normalized_laplacian,
    random_sheaf,
    sheaf_laplacian,
    signed_sheaf,
)
from .ntk import (
    activation_expectation,
    gntk_reference,
    ntk_exact,
    ntk_full,
    ntk_linear,
    ntk_simple_gcn,
    reduce_kernel,
    sigma_recursion,
)
from .scn import ScnConfig, ScnParams, empirical_ntk, forward, init_params, param_gradient, readout

__version__ = "0.1.0"
