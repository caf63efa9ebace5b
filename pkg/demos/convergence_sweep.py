"""
Convergence sweep
=================

The CLI ``sweep`` command trains at several base resolutions and tabulates
error orders. The same thing can be done from Python by calling the CLI
entry point, which writes convergence.csv next to the per-resolution runs.
"""

import os

from neuroboot import cli
from neuroboot.evalmetrics import read_report_csv

EPOCHS = os.environ.get("DEMO_EPOCHS", "800")
out = "sweep_demo"
cli.main(["sweep", "--config", "poisson_smooth", "--resolutions", "4", "8",
          "--epochs", EPOCHS, "--out", out])

for report in read_report_csv(os.path.join(out, "convergence.csv")):
    print(report)
