"""A Laboratory for the Smilansky Model on a Finite Circle"""

from pkg_resources import get_distribution

__all__ = [
    "__version__",
]
__version__ = get_distribution(__name__).version
