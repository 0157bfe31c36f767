"""
`dpci`: debiased confidence intervals for demand learned in contextual dynamic pricing
"""

from .demand_model import *
from .estimator import *
from .harness import *
from .inference import *
from .linalg_kernel import *
from .pricing_env import *
from .whitening import *

__version__ = "0.1.0"
