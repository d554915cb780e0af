"""Bi-band multichannel time-series classification toolkit."""

try:
    # Installed layout: the extension lives inside this package.
    from ._bbecog import *  # noqa: F401,F403
    from ._bbecog import __version__  # noqa: F401
except ImportError:
    # In-tree build: the extension directory is on sys.path.
    from _bbecog import *  # noqa: F401,F403
    from _bbecog import __version__  # noqa: F401
