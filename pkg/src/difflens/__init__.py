"""difflens: differential testing for numerical APIs.

Synthesizes cross-library counterparts through a completion gateway, extracts
path constraints from function IR (statically, with gateway inference for
conditions involving external functions), and drives solver-guided input
generation to surface output inconsistencies, incorrect rejections, and
crashes.
"""

__version__ = "0.1.0"
