"""Measurement toolkit for nationwide Internet shutdowns.

Three planes are covered: BGP control-plane coverage of registry-allocated
space, active TCP reachability verdicts, and passive scan host counts, plus an
AS-composition analysis of the scan data.
"""

__version__ = "0.1.0"
