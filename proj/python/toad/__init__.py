"""Python access to the toad online action detection core."""

from ._toad import *  # noqa: F401,F403
from ._toad import __doc__  # noqa: F401
