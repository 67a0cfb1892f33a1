"""camolab: a desk-scale laboratory for universal camouflage attacks on a
two-stage object detector.

Pipeline: procedural scene generation -> detector training -> pattern
optimization under simulated physical transformations -> evaluation with
defenses and cross-model transfer.
"""

__version__ = "0.1.0"
