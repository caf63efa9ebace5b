"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (shown even without ``-s``)
before asserting. Criteria 4 and 8 train the 982-parameter pair for 10,000
epochs at N=8 and N=16 with three seeds; expect roughly 10-15 minutes on one
CPU core. Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import functools
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from neuroboot import cli, oracles
from neuroboot.config import load_run_config
from neuroboot.evalmetrics import evaluate_errors
from neuroboot.surrogate import PAPER_LAYER_SIZES, init_pair
from neuroboot.training import loss_and_grad, train

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)


def _report(capsys, number, title, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'}  criterion {number} ({title}): {detail}")


@functools.lru_cache(maxsize=None)
def _sphere_run(n, seed, levels=1):
    """Train sphere_jump on grid nodes; returns (rmse, final loss)."""
    rc = load_run_config("sphere_jump")
    cfg = replace(rc.train, base_resolution=n, seed=seed, refinement_levels=levels)
    result = train(rc.problem, cfg)
    rmse, _ = evaluate_errors(result.pair, rc.problem, rc.eval.exact_minus, rc.eval.exact_plus, rc.eval.M)
    return rmse, result.history[-1][1]


def test_criterion_1_jump_exactness(capsys):
    t0 = time.perf_counter()
    res = oracles.jump_exactness()
    elapsed = time.perf_counter() - t0
    passed = res.passed and elapsed < 1.0
    _report(capsys, 1, "jump exactness", passed, f"{res.detail}; {elapsed:.2f} s (limit 1 s)")
    assert passed


def test_criterion_2_truncation(capsys):
    rc = load_run_config("sphere_jump")
    t0 = time.perf_counter()
    res = oracles.truncation_sweep(rc.problem, rc.eval.exact_minus, rc.eval.exact_plus,
                                   resolutions=(8, 16, 32, 64), n_points=10_000)
    elapsed = time.perf_counter() - t0
    passed = res.passed and elapsed < 30.0
    _report(capsys, 2, "manufactured truncation", passed, f"{res.detail}; {elapsed:.1f} s (limit 30 s)")
    assert passed


def test_criterion_3_gradient(capsys):
    rc = load_run_config("sphere_jump")
    cfg = replace(rc.train, refinement_levels=2)
    batch = oracles.mixed_batch(rc.problem, cfg, n_crossed=4, n_uncrossed=3, n_boundary=3)
    t0 = time.perf_counter()
    res = oracles.gradient_check(rc.problem, cfg, batch)
    elapsed = time.perf_counter() - t0
    passed = res.passed and elapsed < 30.0 and res.data["n_params"] == 982 and len(batch.interior) + len(batch.boundary) == 10
    _report(capsys, 3, "gradient vs finite differences", passed, f"{res.detail}; {elapsed:.1f} s (limit 30 s)")
    assert passed


def test_criterion_4_sphere_convergence(capsys):
    r8 = [_sphere_run(8, s)[0] for s in SEEDS]
    r16 = [_sphere_run(16, s)[0] for s in SEEDS]
    m8, m16 = float(np.median(r8)), float(np.median(r16))
    ratio = m8 / m16
    passed = m16 <= 2.2e-2 and ratio >= 2.0
    detail = (f"median RMSE N=8 {m8:.3e}, N=16 {m16:.3e} (limit 2.2e-2), ratio {ratio:.2f} (min 2); "
              f"seeds N=8 {', '.join(f'{v:.2e}' for v in r8)}; N=16 {', '.join(f'{v:.2e}' for v in r16)}")
    _report(capsys, 4, "sphere_jump N=8/16", passed, detail)
    assert passed


def test_criterion_5_smooth_poisson(capsys):
    rc = load_run_config("poisson_smooth")
    cfg = replace(rc.train, base_resolution=8, epochs=2000)
    result = train(rc.problem, cfg)
    rmse, linf = evaluate_errors(result.pair, rc.problem, rc.eval.exact_minus, rc.eval.exact_plus, rc.eval.M)
    passed = rmse < 1e-2
    _report(capsys, 5, "poisson_smooth", passed, f"RMSE {rmse:.3e} (limit 1e-2), Linf {linf:.3e}")
    assert passed


def _seconds_per_epoch(problem, cfg):
    result = train(problem, cfg)
    # median over epochs, skipping the first, is robust to scheduler noise
    return float(np.median([row[2] for row in result.history[1:]]))


def test_criterion_6_point_count_scaling(capsys):
    # Judged with every compute cell evaluating its own stencil, as in the
    # method itself. The default shared-point mode is reported alongside: its
    # batch-local sharing discount is larger at N=16 (one batch) than at N=32
    # (two batches), which pushes that ratio above linear.
    rc = load_run_config("sphere_jump")
    own, shared = {}, {}
    for n in (16, 32):
        cfg = replace(rc.train, base_resolution=n, epochs=24, workers=1)
        own[n] = _seconds_per_epoch(rc.problem, replace(cfg, share_stencil_points=False))
        shared[n] = _seconds_per_epoch(rc.problem, cfg)
    ratio = own[32] / own[16]
    passed = 4.0 <= ratio <= 12.0
    _report(capsys, 6, "point-count scaling", passed,
            f"s/epoch N=16 {own[16]:.4f}, N=32 {own[32]:.4f}, ratio {ratio:.2f} (range 4-12); "
            f"shared-point mode {shared[16]:.4f} -> {shared[32]:.4f}, ratio {shared[32] / shared[16]:.2f}")
    assert passed


def test_criterion_7_determinism(capsys, tmp_path):
    args = ["solve", "--config", "sphere_jump", "--resolution", "8", "--epochs", "20", "--workers", "1"]
    assert cli.main([*args, "--out", str(tmp_path / "a")]) == 0
    assert cli.main([*args, "--out", str(tmp_path / "b")]) == 0
    identical = (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()

    rc = load_run_config("sphere_jump")
    cfg = replace(rc.train, base_resolution=8)
    batch = oracles.mixed_batch(rc.problem, cfg, n_crossed=16, n_uncrossed=24, n_boundary=20, seed=1)
    pair = init_pair(PAPER_LAYER_SIZES, 0)
    ref_loss, ref_grad = loss_and_grad(rc.problem, pair, batch, cfg)
    losses_equal, worst = True, 0.0
    for w in (2, 4):
        loss, grad = loss_and_grad(rc.problem, pair, batch, replace(cfg, workers=w))
        losses_equal &= loss == ref_loss
        worst = max(worst, float(np.linalg.norm(grad - ref_grad) / np.linalg.norm(ref_grad)))
    passed = identical and losses_equal and worst <= 1e-14
    _report(capsys, 7, "determinism", passed,
            f"history byte-identical: {identical}; losses equal over workers 1/2/4: {losses_equal}; "
            f"gradient relative difference {worst:.1e} (limit 1e-14)")
    assert passed


def test_criterion_8_multi_resolution(capsys):
    rmse1, _ = _sphere_run(8, 0, 1)
    rmse3, loss3 = _sphere_run(8, 0, 3)
    passed = math.isfinite(loss3) and rmse3 <= 1.5 * rmse1
    _report(capsys, 8, "multi-resolution L=3", passed,
            f"final loss {loss3:.3e}; RMSE L=3 {rmse3:.3e} vs L=1 {rmse1:.3e} (limit 1.5x = {1.5 * rmse1:.3e})")
    assert passed
