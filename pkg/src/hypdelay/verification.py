"""Cross-checks run by ``hypdelay verify``."""

from __future__ import annotations

import math

import numpy as np

from .config import RunConfig
from .measure import is_positive, total_variation
from .oracle import OracleConfig, upwind_simulate
from .simulate import SimConfig, decay_rate, lp_norm, simulate
from .spectral import certify
from .transport import transfer_H

ORACLE_REL_TOL = 0.02
DECAY_REL_TOL = 0.05
POSITIVITY_SLACK = 1e-12


def _check(name, passed, measured, threshold, **extra):
    out = {"name": name, "status": "pass" if passed else "fail", "measured": measured, "threshold": threshold}
    out.update(extra)
    return out


def _skip(name, reason):
    return {"name": name, "status": "skipped", "reason": reason}


def run_verification(cfg: RunConfig) -> dict:
    sys, m = cfg.build_system(), cfg.build_measure()
    f, phi = cfg.build_initial_state(), cfg.build_initial_history()
    exponent = cfg.sim.exponent
    checks = []

    h0 = transfer_H(sys, 0.0)
    err = float(np.abs(h0 - sys.Xi).max())
    checks.append(_check("transfer_at_zero", err == 0.0, err, 0.0))

    positive = is_positive(m)
    report = certify(sys, m, tol=cfg.spectral.tol, with_root=positive) if positive else None
    root = report.rightmost_root if report else None
    if report is None:
        checks.append(_skip("criterion_vs_root", "measure is not positive"))
    elif abs(report.r_value - 1) <= 1e-3:
        checks.append(_skip("criterion_vs_root", "certificate within 1e-3 of the stability boundary"))
    else:
        root_stable = root is None or root.real < 0
        checks.append(
            _check(
                "criterion_vs_root",
                (report.verdict == "stable") == root_stable,
                {"r": report.r_value, "root_re": None if root is None else root.real},
                "verdict agrees with sign of rightmost root",
            )
        )

    traj = simulate(sys, m, f, phi, cfg.sim_config(), exponent=exponent)

    if total_variation(m, -m.delay, 0.0) == 0:
        late = traj.times >= sys.max_tau
        worst = float(traj.norm_state[late].max()) if np.any(late) else 0.0
        checks.append(_check("nilpotency", worst == 0.0, worst, 0.0))
    else:
        checks.append(_skip("nilpotency", "measure is not zero"))

    if positive and np.all(f.values >= 0) and np.all(phi.samples >= 0):
        low = min(float(traj.trace.min()), float(traj.inputs.min()))
        checks.append(_check("positivity", low >= -POSITIVITY_SLACK, low, -POSITIVITY_SLACK))
    else:
        checks.append(_skip("positivity", "measure or initial data not nonnegative"))

    checks.append(_oracle_check(cfg, sys, m, phi, exponent))

    horizon = sys.max_tau + m.delay
    if root is None or root.real == 0:
        checks.append(_skip("decay_vs_root", "no nonzero rightmost root"))
    elif traj.t_end < 10 * horizon:
        checks.append(_skip("decay_vs_root", f"horizon {traj.t_end} shorter than 10 loop delays"))
    else:
        rate = decay_rate(traj)
        rel = abs(rate - root.real) / abs(root.real) if math.isfinite(rate) else math.inf
        checks.append(_check("decay_vs_root", rel <= DECAY_REL_TOL, {"rate": rate, "root_re": root.real, "rel": rel}, DECAY_REL_TOL))

    ok = all(c["status"] != "fail" for c in checks)
    return {"passed": ok, "exponent": exponent, "checks": checks}


def _oracle_check(cfg, sys, m, phi, exponent) -> dict:
    t_end = min(cfg.sim.t_end, 10.0)
    times = tuple(t for t in (1.0, 5.0, 10.0) if t <= t_end) or (t_end,)
    cells = cfg.oracle.cells
    nodes = cells + 1
    f = cfg.build_initial_state(nodes)
    sim_cfg = SimConfig(dt=cfg.dt, t_end=max(times), grid_nodes=nodes, p=cfg.sim.p, snapshot_times=times)
    ours = simulate(sys, m, f, phi, sim_cfg, exponent=exponent)
    fd = upwind_simulate(sys, m, f, phi, OracleConfig(cells, cfg.oracle.cfl, max(times), cfg.sim.p, times))
    dx = sys.ell / cells
    # L^1 is the transport-natural metric: jumps in the data smear over O(sqrt(dx)) without spoiling it
    scale = max([lp_norm(f.values, dx, 1.0)] + [lp_norm(ours.snapshots[t].values, dx, 1.0) for t in times])
    rel, node_rel = {}, {}
    for t in times:
        a, b = ours.snapshots[t].values, fd.snapshots[t].values
        rel[repr(t)] = lp_norm(a - b, dx, 1.0) / scale if scale > 0 else lp_norm(b, dx, 1.0)
        amp = float(np.abs(a).max())
        node_rel[repr(t)] = float(np.abs(a - b).max()) / amp if amp > 0 else float(np.abs(b).max())
    worst = max(rel.values())
    return _check(
        "oracle_agreement",
        worst <= ORACLE_REL_TOL,
        {"relative_l1": rel, "relative_max_node": node_rel},
        ORACLE_REL_TOL,
        cells=cells,
    )
