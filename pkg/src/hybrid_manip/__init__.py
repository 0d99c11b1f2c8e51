"""Language-planned, RL-executed tabletop manipulation on a kinematic simulator."""

__version__ = "0.1.0"
