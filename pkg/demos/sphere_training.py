"""
Training on the sphere interface problem
========================================

Two sine networks, one per side of a sphere of radius 0.5, are trained so that
every grid node's stencil row is satisfied. The exact solution is known, so
the errors can be measured directly. The full criterion runs use 10,000 epochs;
this demo uses fewer so that it finishes in well under a minute.
"""

import os
from dataclasses import replace

from neuroboot.config import load_run_config
from neuroboot.evalmetrics import evaluate_errors, export_field, jump_probe
from neuroboot.training import train

EPOCHS = int(os.environ.get("DEMO_EPOCHS", "1500"))

run = load_run_config("sphere_jump")
cfg = replace(run.train, base_resolution=8, epochs=EPOCHS)


def progress(epoch, loss, seconds, pair):
    if epoch % max(1, EPOCHS // 5) == 0:
        print(f"epoch {epoch:5d}  loss {loss:.3e}  {seconds * 1e3:.1f} ms")


result = train(run.problem, cfg, callback=progress)

rmse, linf = evaluate_errors(result.pair, run.problem, run.eval.exact_minus, run.eval.exact_plus, m=32)
print(f"RMSE {rmse:.3e}  Linf {linf:.3e}")

# The networks are separate, so the jump across the interface is sharp.
measured, alpha, _ = jump_probe(result.pair, run.problem, n_probes=128)
print(f"mean |[u] - alpha| at the interface: {abs(measured - alpha).mean():.3e}")

path = export_field(result.pair, run.problem, 32, "sphere_field.vtk")
print("wrote", path)
