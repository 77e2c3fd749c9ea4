"""Multi-agent semantic navigation on procedurally generated 2-D scenes."""
from __future__ import annotations

__version__ = "0.1.0"
