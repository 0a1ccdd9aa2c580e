"""Contact networks and community dynamics from indoor positioning traces."""

__version__ = "0.1.0"
