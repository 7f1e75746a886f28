"""Skill-disentangled imitation learning from mixed demonstrations."""

try:
    from ._sdil import *  # noqa: F401,F403
    from ._sdil import __version__  # noqa: F401
except ImportError:  # build-tree layout: the extension sits next to the package
    from _sdil import *  # noqa: F401,F403
    from _sdil import __version__  # noqa: F401
