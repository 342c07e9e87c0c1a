"""Contact-aware surface-constrained RRT for guidewire/catheter navigation."""
import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
