"""pvmap: solar PV array mapping toolkit.

Turns per-pixel solar-array confidence maps over overhead imagery into
installation-level objects with areas and capacity estimates, scores them
against ground truth, aggregates capacity over regions, and backs a
human review workflow.
"""

__version__ = "0.1.0"
