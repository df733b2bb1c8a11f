"""N-version differential testing engine.

Executes many generated tests against many generated versions of a code
module, records all observations in a stimulus-response matrix, and derives
oracles, kill scores, minimized test sets, discrepancy reports and ranked
recommendations from the comparative data.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
