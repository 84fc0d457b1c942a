#!/usr/bin/env python3
"""Run the certified solvers from a source checkout.

Usage:
    python scripts/auglag.py certify --spec tests/fixtures/specs/double_integrator.json
    python scripts/auglag.py solve --problem problem.json --scheme idfgm --r-d 2.0
    python scripts/auglag.py bench --sizes 10,20 --seeds 5 --out results/

Exit code 2 means a measured quantity exceeded its certified bound.
"""

from __future__ import annotations

import sys
from pathlib import Path

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from core.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
