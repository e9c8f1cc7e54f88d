"""End-to-end acceptance checks, one per headline claim.

Each test prints a single "criterion n: PASS/FAIL" line before asserting, so
a full run reads as a checklist.  Tolerances and trial counts are fixed here
on purpose; loosening them defeats the point of the gate.
"""

import math
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from treeperc.coupling import (
    HatConfig,
    explore_hat_to_C,
    finite_coupling,
    leaf_count_Zhat,
    n_slab_leaves,
    omega_bar,
)
from treeperc.critical import asymptotics_table, qc, rho
from treeperc.percolation import (
    PercParams,
    exact_long_boundary_mean,
    explore_layers,
    long_boundary,
    make_oracle,
    short_cluster,
)
from treeperc.spectral import pf_eigen
from treeperc.tree import ROOT, TreeParams
from treeperc.window_chain import (
    build_offspring_matrix,
    chain_survival,
    child_window_dist,
    initial_window_dist,
    simulate_window_chain,
)

TP22 = TreeParams(2, 2)


@pytest.fixture
def report(capfd):
    """Emit one checklist line per criterion, visible under default capture."""

    def _report(n, ok, detail):
        with capfd.disabled():
            print(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, f"criterion {n}: {detail}"

    return _report


def test_criterion_1_exact_boundary_values(report):
    details = []
    ok = True
    for d, k in [(2, 2), (2, 3), (3, 2)]:
        t0 = time.time()
        point = qc(0.0, TreeParams(d, k))
        dt = time.time() - t0
        err = abs(point.q_c - d**-k)
        ok &= err < 1e-9 and dt < 10.0
        details.append(f"qc(0;{d},{k}) err={err:.1e} {dt:.1f}s")
    t0 = time.time()
    point = qc(0.6, TP22)
    dt = time.time() - t0
    ok &= point.q_c == 0.0 and dt < 10.0
    details.append(f"qc(0.6)={point.q_c}")
    report(1, ok, "; ".join(details))


def test_criterion_2_strict_gap(report):
    t0 = time.time()
    gaps = []
    for k in (2, 3):
        for p in (0.1, 0.2, 0.3, 0.4):
            gaps.append(qc(p, TreeParams(2, k)).gap)
    dt = time.time() - t0
    ok = all(g > 1e-4 for g in gaps) and dt < 120.0
    report(2, ok, f"min gap={min(gaps):.2e} over 8 points, {dt:.1f}s")


def test_criterion_3_two_term_asymptotics(report):
    t0 = time.time()
    rows = asymptotics_table(0.25, [2, 3, 4], 2, tol=1e-9)
    dt = time.time() - t0
    res = [r.residual for r in rows]
    lead = [abs(2**r.k * r.q_c - 0.5) for r in rows]
    ok = (
        res[0] > res[1] > res[2]
        and lead[0] > lead[1] > lead[2]
        and abs(rows[0].s_star - 0.0357142857) < 1e-9
        and dt < 600.0
    )
    report(
        3,
        ok,
        f"|s_k-s*|={res[0]:.4f}>{res[1]:.4f}>{res[2]:.4f}, "
        f"lead={lead[0]:.4f}>{lead[1]:.4f}>{lead[2]:.4f}, {dt:.0f}s",
    )


def test_criterion_4_sign_correspondence(report):
    t0 = time.time()
    point = qc(0.2, TP22)
    r_lo = rho(0.2, point.q_c - 0.02, TP22)
    r_hi = rho(0.2, point.q_c + 0.02, TP22)
    rng = np.random.default_rng(2024)
    below, _ = chain_survival(TP22, 0.2, point.q_c - 0.02, 60, 10**5, rng)
    above, se = chain_survival(TP22, 0.2, point.q_c + 0.02, 60, 10**5, rng)
    dt = time.time() - t0
    ok = r_lo < 1.0 < r_hi and below < 0.01 and above > 5 * se and dt < 120.0
    report(
        4,
        ok,
        f"rho={r_lo:.4f}/{r_hi:.4f}, surv below={below:.4f} above={above:.4f} "
        f"(5se={5 * se:.4f}), {dt:.0f}s",
    )


def test_criterion_5_representation_equivalence(report):
    t0 = time.time()
    p, q = 0.3, 0.1
    n = 10**5
    rng = np.random.default_rng(31)
    _, x = simulate_window_chain(TP22, p, q, rng, 2, trials=n)
    chain_x2 = x[:, 2]
    perc = PercParams(p, q)
    direct = np.empty(n, dtype=np.int64)
    boundary_total = 0
    for t in range(n):
        oracle = make_oracle(TP22, perc, 37, t)
        direct[t] = explore_layers(TP22, perc, oracle, 2).x[2]
        cs = short_cluster({ROOT}, oracle)
        boundary_total += len(long_boundary(cs, oracle))
    tv = 0.0
    bound = 0.0
    for v in sorted(set(chain_x2.tolist()) | set(direct.tolist())):
        f1 = float((chain_x2 == v).mean())
        f2 = float((direct == v).mean())
        tv += 0.5 * abs(f1 - f2)
        pbar = 0.5 * (f1 + f2)
        bound += 0.5 * math.sqrt(pbar * (1.0 - pbar) * 2.0 / n)
    expect = exact_long_boundary_mean(1, perc, TP22)
    mean_b = boundary_total / n
    se_b = math.sqrt(expect / n)
    dt = time.time() - t0
    ok = tv < 4 * bound and abs(mean_b - expect) < 3 * se_b and dt < 60.0
    report(
        5,
        ok,
        f"TV={tv:.4f} < {4 * bound:.4f}, E|C_l|={mean_b:.4f} vs {expect:.4f} "
        f"(3se={3 * se_b:.4f}), {dt:.0f}s",
    )


def test_criterion_6_limit_regimes(report):
    t0 = time.time()
    point = qc(0.2, TP22)
    q_sup = point.q_c + 0.1
    rho_sup = rho(0.2, q_sup, TP22)
    rng = np.random.default_rng(41)
    _, x = simulate_window_chain(TP22, 0.2, q_sup, rng, 27, trials=10**5)
    mx = x.mean(axis=0)
    ratio = mx[26] / mx[25]
    rel = abs(ratio - rho_sup) / rho_sup

    q_sub = point.q_c - 0.05
    rng = np.random.default_rng(43)
    _, x = simulate_window_chain(TP22, 0.2, q_sub, rng, 25, trials=10**5)

    def conditional(col):
        pos = col[col > 0]
        vals, cts = np.unique(pos, return_counts=True)
        return dict(zip(vals.tolist(), (cts / len(pos)).tolist()))

    p1, p2 = conditional(x[:, 15]), conditional(x[:, 25])
    tv = 0.5 * sum(abs(p1.get(i, 0.0) - p2.get(i, 0.0)) for i in set(p1) | set(p2))
    dt = time.time() - t0
    ok = rel < 0.02 and tv < 0.05 and dt < 300.0
    report(
        6,
        ok,
        f"super ratio={ratio:.4f} vs rho={rho_sup:.4f} (rel={rel:.1e}), "
        f"sub TV(15,25)={tv:.4f}, {dt:.0f}s",
    )


def test_criterion_7_slab_coupling(report):
    t0 = time.time()
    violations = 0
    for trial in range(10**4):
        cfg = HatConfig.random(TP22, 0.5, 0.5, 7, trial)
        if explore_hat_to_C(TP22, cfg).leaf_count(TP22) > leaf_count_Zhat(TP22, cfg):
            violations += 1
    bar = omega_bar(TP22)
    z_bar = explore_hat_to_C(TP22, bar).leaf_count(TP22)
    zhat_bar = leaf_count_Zhat(TP22, bar)

    rng = random.Random(99)
    worst = 0.0
    for _ in range(10**3):
        m = rng.randint(2, 6)
        base = [rng.random() + 0.05 for _ in range(m)]
        base[0] += 2.0 * m
        z = sum(base)
        p1 = {i: w / z for i, w in enumerate(base)}
        shift = [rng.uniform(-0.4, 0.4) * p1[i] for i in range(m)]
        shift[0] = -sum(shift[1:])
        p2 = {i: p1[i] + s for i, s in zip(range(m), shift)}
        table = finite_coupling(p1, p2, 0)
        e1, e2 = table.marginal_errors()
        worst = max(worst, e1, e2, table.off_support_mass())
    dt = time.time() - t0
    ok = (
        violations == 0
        and z_bar == 0
        and zhat_bar >= n_slab_leaves(TP22)
        and worst <= 1e-12
        and dt < 120.0
    )
    report(
        7,
        ok,
        f"violations={violations}/1e4, Z(omega_bar)={z_bar}, "
        f"Zhat={zhat_bar}>={n_slab_leaves(TP22)}, coupling err={worst:.1e}, {dt:.0f}s",
    )


def test_criterion_8_property_suite_and_determinism(tmp_path, report):
    t0 = time.time()
    rng = np.random.default_rng(5)
    ok = True
    notes = []
    for _ in range(20):
        n = int(rng.integers(2, 9))
        a = rng.random((n, n))
        r = pf_eigen(a, tol=1e-12)
        ok &= abs(pf_eigen(a + np.eye(n)).rho - (r.rho + 1.0)) < 1e-8
        ok &= pf_eigen(a + rng.random((n, n)) * 0.2).rho >= r.rho - 1e-9
        ok &= r.residual <= 1e-12
    notes.append("spectral invariants on 20 random matrices")
    for p, q in [(0.2, 0.25), (0.5, 0.1), (0.0, 0.7)]:
        init = initial_window_dist(TP22, p)
        ok &= abs(sum(init.values()) - 1.0) < 1e-12
        for a in (1, 3, 7):
            for i in (1, 2):
                dist = child_window_dist(a, i, p, q, TP22)
                ok &= abs(sum(dist.values()) - 1.0) < 1e-12
    notes.append("pmf normalizations")

    outputs = []
    for threads in ("1", "4"):
        env = dict(os.environ, OMP_NUM_THREADS=threads, MKL_NUM_THREADS=threads)
        path = tmp_path / f"curve_{threads}.csv"
        subprocess.run(
            [
                sys.executable, "-m", "treeperc.cli", "qc-curve",
                "--d", "2", "--k", "2", "--p-grid", "0:0.4:0.1",
                "--tol", "1e-9", "--out", str(path),
            ],
            check=True,
            env=env,
        )
        outputs.append(path.read_bytes())
    ok &= outputs[0] == outputs[1]
    notes.append("byte-identical CSV across thread counts")
    dt = time.time() - t0
    ok &= dt < 60.0
    report(8, ok, "; ".join(notes) + f", {dt:.0f}s")
