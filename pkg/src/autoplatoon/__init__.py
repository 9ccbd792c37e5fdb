"""Simulated leader-follower robot platoon with a shared perception and status service."""

__version__ = "0.1.0"
