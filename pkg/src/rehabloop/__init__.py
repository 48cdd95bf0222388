"""Closed-loop adaptive middleware for rehabilitation serious games.

Sensor streams (heart rate, motion, facial affect) fuse into user-state
estimates; a rule engine turns them into game-agnostic adaptation directives;
a universal play actuator executes them and reports performance back. A
deterministic simulator kit closes the loop without any hardware.
"""

__version__ = "0.1.0"
