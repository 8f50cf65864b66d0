"""Broad-to-narrow overhead-imagery detection toolkit.

Library and CLI for the two-stage detect-then-classify workflow on large
rasters: chip decomposition and stitching, IoU/AP50 evaluation, KDE-envelope
score fusion, deterministic synthetic-scene compositing, representation
functions for generator-based reskinning, linear color matching, and a
seeded simulation harness that stands in for trained models.
"""

__version__ = "0.1.0"
