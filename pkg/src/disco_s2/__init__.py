"""Discrete-continuous (DISCO) convolutions on the sphere with numpy/scipy."""
from .autograd import ConvGradients, backward_filter, backward_input, conv_gradients, fit_filter_demo
from .conv import depthwise_separable_conv, disco_conv, disco_conv_transposed
from .equivariance import EquivarianceReport, equivariance_error, run_table6
from .filters import Filter, axisymmetric, directional, eval_filter, load_filter, save_filter, separable
from .grid import RotationZY, SampleGrid, build_grid, inverse_rotate_point
from .harmonic import EulerZYZ, harmonic_axisym_conv, rotate_harmonic, sht_forward, sht_inverse, wigner_d
from .kernel import CompressedSparseKernel, build_kernel, build_transposed_kernel, densify, get_kernel
from .profiler import CostEstimate, disco_cost, harmonic_cost, scaling_report
from .signal_io import load_signal, save_signal

__version__ = "0.1.0"
