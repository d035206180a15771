"""Visible-light positioning: multi-lamp tracking and double-lamp geometry.

Core package behind the vlptrack service and CLI. Pure functions and
value types throughout; the only stateful objects are per-stream
``pipeline.Pipeline`` instances.
"""

__version__ = "0.1.0"
