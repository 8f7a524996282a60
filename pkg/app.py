# app.py
# Anomap entry point: phantoms, anomaly maps, threshold evaluation and sigma sweeps.
#   python app.py sweep ./data/small --out small.csv --config run.cfg

from __future__ import annotations

import sys

from anomap.cli import main

if __name__ == "__main__":
    sys.exit(main())
