"""Cache-enabled cellular networks with coordinated D2D offloading."""
__version__ = "0.1.0"
