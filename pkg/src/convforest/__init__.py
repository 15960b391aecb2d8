"""Loopy belief propagation with trimmed, lazy p-convolution trees.

Models built from tables, additive dependencies (``Y = X_1 + ... + X_n``) and
constant scalings over discrete integer variables are solved by message
passing.  The exponent ``p`` moves inference between sum-product (``p = 1``)
and max-product (``p = inf``).
"""

from .builders import (Additive, ConstantMultiplier, Likelihood, ModelSpec, TablePrior,
                       build_bethe, build_indicator, regularize, solve)
from .conv_tree import ConvTree
from .convolution import (convolve, convolve_fft, convolve_naive, max_convolve_naive,
                          p_convolve)
from .engine import InferenceGraph
from .errors import *  # noqa: F401,F403
from .pmf import LabeledPmf, SupportBox
from .scheduling import (ConvergenceConfig, ConvergenceReport, run_chain, run_fifo,
                         run_priority, run_random_subtree)

__version__ = "0.1.0"
