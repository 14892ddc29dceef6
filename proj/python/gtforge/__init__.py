"""MoCap+IMU ground-truth trajectory estimation toolkit.

The compiled core lives in :mod:`gtforge._gtforge`; everything public is
re-exported here.
"""

from ._gtforge import *  # noqa: F401,F403
from ._gtforge import __doc__ as _core_doc  # noqa: F401

__version__ = "0.1.0"
