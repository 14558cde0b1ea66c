"""Batch experiment harness.

Builds potentials, runs the DP minimizer across horizons, measures terminal
velocities against the (log T)^(2/beta) bounds, exercises every numerical
lemma check, and assembles deterministic report objects (see reports.emit
for serialization).  Independent horizons and seeds may run concurrently;
reports are reduced in (T, seed) order so output bytes never depend on
scheduling.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import __version__
from .core import ModelParams
from .laxoleinik import (GridFunction, domination_defect, kernel,
                         kernel_bounds_defect, lipschitz_in_large_constant,
                         minplus_apply)
from .minimizer import (GridSpec, WindowTouchError, backtrack, comoving_window,
                        lemma_wT_margin, progression_margins, refine, solve_dp,
                        terminal_velocity, velocity_bound_lower,
                        velocity_bound_upper)
from .potentials import (PaceCurve, accelerating_potential, cosine_profile,
                         glued_potential, glued_schedule, pace_main_gap,
                         pace_residue, pace_s2_gap, periodic_potential,
                         random_potential)

__all__ = [
    "ExperimentConfig",
    "HorizonRecord",
    "ScalingReport",
    "run_scaling",
    "run_periodic_control",
    "run_glued_demo",
    "run_lemma_suite",
    "run_conjecture_probe",
    "run_experiment",
]

KINDS = ("scaling", "periodic-control", "glued-demo", "lemma-suite",
         "conjecture-probe")


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters (defaults reproduce the CI profile)."""

    kind: str = "scaling"
    beta: float = 2.0
    C: float = 1.0
    profile: str = "ci"
    horizons: Optional[list] = None
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: str = "out"
    threads: int = 1

    # grid policy
    dx_max: float = 0.05
    rt_fraction: int = 40          # dx = min(dx_max, R_T / rt_fraction)
    stencil: int = 30              # v_max * dt / dx
    margin: float = 10.0
    v_cap_factor: float = 4.0      # v_max = v_cap_factor * K2 (log T)^(2/beta)
    detach_cap_factor: float = 4.0  # window cone depth factor * (log T)^2
    refine_passes: int = 8
    n_targets: int = 5
    s_window_max: float = 0.5

    # glued-demo schedule
    glue_Tbar: float = 5.0
    glue_cap: float = 600.0
    glue_epsilon: float = 0.25
    glue_n_max: int = 2

    # periodic / random controls
    period: float = 1.0
    wavenumber: float = 1.0
    modulation: str = "cosine"
    correlation_time: float = 2.0
    n_profiles: int = 3
    periodic_targets: list = field(default_factory=lambda: [0.5, 1.5, 2.5])

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.profile not in ("ci", "large"):
            raise ValueError("profile must be 'ci' or 'large'")
        if self.horizons is None:
            if self.kind == "scaling":
                self.horizons = [50.0, 200.0, 1000.0]
                if self.profile == "large":
                    self.horizons.append(10000.0)
            elif self.kind == "periodic-control":
                self.horizons = [100.0, 316.0, 1000.0]
            elif self.kind == "conjecture-probe":
                self.horizons = [20.0, 50.0, 200.0]
            else:
                self.horizons = []
        self.horizons = [float(T) for T in self.horizons]
        if any(T <= math.e for T in self.horizons):
            raise ValueError("all horizons must exceed e (log T > 1)")
        if sorted(self.horizons) != self.horizons:
            raise ValueError("horizons must be strictly increasing")

    @property
    def params(self) -> ModelParams:
        return ModelParams(beta=self.beta, C=self.C)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HorizonRecord:
    T: float
    dx: float
    dt: float
    s_window: float
    targets: list
    speeds: list
    bracket_lo: list
    bracket_hi: list
    v: float
    lower_bound: float
    upper_bound_advisory: float
    wT_margin: float
    progression_margin: Optional[float]
    progression_pairs: int
    grid_slack: float
    boundary_warning: bool
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScalingReport:
    kind: str
    config: dict
    records: list                      # HorizonRecord dicts, sorted by (T, seed)
    fit: dict
    onset_T: Optional[float]
    flags: dict
    notes: list
    version: str = __version__
    wall_times: dict = field(default_factory=dict)   # volatile; not serialized

    def to_dict(self) -> dict:
        """Canonical (deterministic) dict; wall times stay out."""
        return {
            "kind": self.kind,
            "version": self.version,
            "config": self.config,
            "records": self.records,
            "fit": self.fit,
            "onset_T": self.onset_T,
            "flags": self.flags,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingReport":
        return cls(kind=d["kind"], config=d["config"], records=d["records"],
                   fit=d["fit"], onset_T=d["onset_T"], flags=d["flags"],
                   notes=d["notes"], version=d["version"])


def scaling_grid(cfg: ExperimentConfig, T: float, K: float,
                 x_targets: np.ndarray, margin: Optional[float] = None):
    """Grid + co-moving window for one accelerating-potential horizon."""
    p = cfg.params
    margin = cfg.margin if margin is None else margin
    curve = PaceCurve(K=K, T=T, beta=cfg.beta)
    g_total = curve.value(T)
    lb = velocity_bound_lower(T, p)
    dx = min(cfg.dx_max, lb.R_T / cfg.rt_fraction)
    v_max = max(cfg.v_cap_factor * K * math.log(T) ** (2.0 / cfg.beta),
                2.0 * (p.C * p.beta) ** (1.0 / p.beta), 2.0)
    dt = cfg.stencil * dx / v_max
    x_hi = float(max(x_targets.max() + 2 * dx, lb.R_T))
    grid = GridSpec(x_min=-g_total - margin - 2.0, x_max=x_hi, dx=dx,
                    t1=0.0, t2=T, dt=dt, v_max=v_max)
    cap = max(40.0, cfg.detach_cap_factor * math.log(T) ** 2)
    return comoving_window(curve, margin, grid, y=0.0, detach_cap=cap), curve, lb


def _measure_targets(cfg, U, grid, x_targets, s_window):
    """Solve once, then backtrack + refine + measure each terminal target."""
    p = cfg.params
    table = solve_dp(U, grid, None, p, keep_history=False)
    speeds, lows, highs = [], [], []
    wT_margins, prog_margins, prog_pairs = [], [], 0
    for xt in x_targets:
        traj = backtrack(table, float(xt))
        traj = refine(traj, U, p, passes=cfg.refine_passes)
        tv = terminal_velocity(traj, s_window, p)
        speeds.append(tv.speed)
        lows.append(tv.lo)
        highs.append(tv.hi)
        wT_margins.append(lemma_wT_margin(traj, p, grid.dx))
        if cfg.beta == 2.0:
            m, npair = progression_margins(traj, p, grid.dx)
            prog_margins.append(m)
            prog_pairs += npair
    return table, speeds, lows, highs, wT_margins, prog_margins, prog_pairs


def _scaling_record(cfg: ExperimentConfig, T: float) -> HorizonRecord:
    p = cfg.params
    K2 = (cfg.C * cfg.beta / 5.0) ** (1.0 / cfg.beta)
    lb = velocity_bound_lower(T, p)
    x_targets = np.linspace(-lb.R_T / 2.0, lb.R_T / 2.0, cfg.n_targets)
    U = accelerating_potential(y=0.0, t1=0.0, t2=T, K=K2, C=cfg.C, beta=cfg.beta)
    s_window = min(cfg.s_window_max, T / 20.0)
    # window-touch certification: move timing is degenerate in the flat
    # potential plateau, so trajectories may park below the riding band;
    # enlarge the margin and resolve when the certificate trips
    margin = cfg.margin
    for attempt in range(3):
        wgrid, curve, lb = scaling_grid(cfg, T, K2, x_targets, margin=margin)
        try:
            table, speeds, lows, highs, wT_m, prog_m, prog_n = _measure_targets(
                cfg, U, wgrid, x_targets, s_window)
            break
        except WindowTouchError:
            if attempt == 2:
                raise
            margin *= 2.0
    slack = 4.0 * wgrid.dx / s_window
    return HorizonRecord(
        T=T, dx=wgrid.dx, dt=wgrid.dt_eff, s_window=s_window,
        targets=[float(x) for x in x_targets],
        speeds=[float(v) for v in speeds],
        bracket_lo=[float(v) for v in lows],
        bracket_hi=[float(v) for v in highs],
        v=float(np.median(speeds)),
        lower_bound=float(lb.bound),
        upper_bound_advisory=float(velocity_bound_upper(T, p)),
        wT_margin=float(min(wT_m)),
        progression_margin=(float(min(prog_m)) if prog_m else None),
        progression_pairs=prog_n,
        grid_slack=float(slack),
        boundary_warning=bool(table.boundary_warning),
    )


def _fit_exponent(records) -> dict:
    """Least squares of log v against log log T; suppressed when fewer than 3
    horizons or under 1.3 decades of T are available."""
    Ts = np.array([r["T"] for r in records])
    vs = np.array([r["v"] for r in records])
    span_decades = math.log10(Ts.max() / Ts.min()) if len(Ts) > 1 else 0.0
    if len(Ts) < 3 or span_decades < 1.3:
        return {"enabled": False, "p": None, "a": None, "residual": None,
                "span_decades": span_decades}
    X = np.log(np.log(Ts))
    Y = np.log(vs)
    coef = np.polyfit(X, Y, 1)
    resid = float(np.max(np.abs(Y - np.polyval(coef, X))))
    return {"enabled": True, "p": float(coef[0]), "a": float(math.exp(coef[1])),
            "residual": resid, "span_decades": span_decades}


def _onset(records) -> Optional[float]:
    """Smallest tested T from which the lower bound holds at every larger T."""
    ok = [r["v"] >= r["lower_bound"] - r["grid_slack"] for r in records]
    onset = None
    for i in range(len(records)):
        if all(ok[i:]):
            onset = records[i]["T"]
            break
    return onset


def _map_horizons(cfg, fn):
    if cfg.threads == 1 or len(cfg.horizons) <= 1:
        results = [fn(T) for T in cfg.horizons]
    else:
        workers = cfg.threads if cfg.threads > 0 else None
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(fn, cfg.horizons))
    return results


def run_scaling(cfg: ExperimentConfig) -> ScalingReport:
    """Terminal-velocity growth under the accelerating potential.

    v(T) is the median refined terminal speed over the target set
    |x| <= R_T/2; the fit of log v against log log T estimates the growth
    exponent (expected 2/beta)."""
    if cfg.kind != "scaling":
        raise ValueError("config kind must be 'scaling'")
    walls = {}

    def one(T):
        t0 = time.monotonic()
        rec = _scaling_record(cfg, T)
        walls[str(T)] = time.monotonic() - t0
        return rec

    records = [r.to_dict() for r in sorted(_map_horizons(cfg, one),
                                           key=lambda r: r.T)]
    fit = _fit_exponent(records)
    onset = _onset(records)
    vs = [r["v"] for r in records]
    p_lo, p_hi = 0.8 * 2.0 / cfg.beta, 1.2 * 2.0 / cfg.beta
    flags = {
        "monotone_v": all(b > a for a, b in zip(vs, vs[1:])),
        "onset_found": onset is not None,
        "lower_bound_from_onset": onset is not None,
        "fit_in_range": (bool(fit["enabled"]) and p_lo <= fit["p"] <= p_hi)
                        if fit["enabled"] else None,
        "upper_advisory_ok": all(r["v"] <= r["upper_bound_advisory"] for r in records),
        "wT_lemma_ok": all(r["wT_margin"] >= 0.0 for r in records),
        "progression_ok": all(r["progression_margin"] is None
                              or r["progression_margin"] >= 0.0 for r in records),
    }
    notes = ["v(T) is the median over terminal targets; per-target speeds "
             "and sandwich brackets are in the records",
             "upper bound is advisory: the proof constant omits a "
             "non-constructive threshold term"]
    return ScalingReport(kind="scaling", config=cfg.to_dict(), records=records,
                         fit=fit, onset_T=onset, flags=flags, notes=notes,
                         wall_times=walls)


def _periodic_grid(cfg: ExperimentConfig, T: float):
    p = cfg.params
    x_targets = np.array(cfg.periodic_targets, dtype=float)
    halo = 4.0 * math.pi / cfg.wavenumber + 2.0
    v_env = (p.alpha * p.C) ** (1.0 / p.beta)
    v_max = max(4.0 * v_env, 2.0)
    dx = cfg.dx_max
    dt = cfg.stencil * dx / v_max
    grid = GridSpec(x_min=float(x_targets.min() - halo),
                    x_max=float(x_targets.max() + halo),
                    dx=dx, t1=0.0, t2=T, dt=dt, v_max=v_max)
    return grid, x_targets


def run_periodic_control(cfg: ExperimentConfig) -> ScalingReport:
    """No-blow-up control with a time-periodic certified potential, plus the
    iterated-operator regularity suite (domination and Lipschitz-in-the-large
    preserved over 20 period steps)."""
    if cfg.kind != "periodic-control":
        raise ValueError("config kind must be 'periodic-control'")
    p = cfg.params
    profile = cosine_profile(cfg.C, cfg.wavenumber)
    U = periodic_potential(profile, cfg.period, cfg.modulation, beta=cfg.beta)
    walls = {}

    def one(T):
        t0 = time.monotonic()
        grid, x_targets = _periodic_grid(cfg, T)
        s_window = min(cfg.s_window_max, T / 20.0)
        table, speeds, lows, highs, wT_m, prog_m, prog_n = _measure_targets(
            cfg, U, grid, x_targets, s_window)
        rec = HorizonRecord(
            T=T, dx=grid.dx, dt=grid.dt_eff, s_window=s_window,
            targets=[float(x) for x in x_targets],
            speeds=[float(v) for v in speeds],
            bracket_lo=[float(v) for v in lows],
            bracket_hi=[float(v) for v in highs],
            v=float(np.median(speeds)),
            lower_bound=0.0,
            upper_bound_advisory=float(velocity_bound_upper(T, p)),
            wT_margin=float(min(wT_m)),
            progression_margin=(float(min(prog_m)) if prog_m else None),
            progression_pairs=prog_n,
            grid_slack=4.0 * grid.dx / s_window,
            boundary_warning=bool(table.boundary_warning),
        )
        walls[str(T)] = time.monotonic() - t0
        return rec

    records = [r.to_dict() for r in sorted(_map_horizons(cfg, one),
                                           key=lambda r: r.T)]
    # no-growth statistic: max over tested terminal x per horizon
    vmax = [max(r["speeds"]) for r in records]
    ratio = vmax[-1] / vmax[-2] if len(vmax) >= 2 and vmax[-2] > 0 else float("nan")
    monotone_growth = all(b > a for a, b in zip(vmax, vmax[1:]))

    suite = _operator_regularity_suite(cfg, U)
    flags = {
        "ratio_within_10pct": bool(0.9 <= ratio <= 1.1),
        "no_monotone_growth": not monotone_growth,
        "domination_preserved": suite["domination_ok"],
        "liplarge_bounded": suite["liplarge_ok"],
        "wT_lemma_ok": all(r["wT_margin"] >= 0.0 for r in records),
    }
    fit = {"enabled": False, "p": None, "a": None, "residual": None,
           "span_decades": math.log10(cfg.horizons[-1] / cfg.horizons[0])}
    notes = [f"largest-two-horizon max-speed ratio: {ratio:.6f}",
             "operator suite: " + suite["summary"]]
    return ScalingReport(kind="periodic-control", config=cfg.to_dict(),
                         records=records + [suite["record"]], fit=fit,
                         onset_T=None, flags=flags, notes=notes,
                         wall_times=walls)


def _operator_regularity_suite(cfg: ExperimentConfig, U, n_steps: int = 20):
    """Iterate the period-1 solution operator from S = 0 and track the
    domination defect and Lipschitz-in-the-large constant."""
    p = cfg.params
    halo = 4.0 * math.pi / cfg.wavenumber + 2.0
    v_max = 4.0 * (p.alpha * p.C) ** (1.0 / p.beta)
    dx = 2 * cfg.dx_max
    grid = GridSpec(x_min=-halo, x_max=halo, dx=dx, t1=0.0, t2=cfg.period,
                    dt=cfg.stencil * dx / v_max, v_max=v_max)
    kern = kernel(U, 0.0, cfg.period, grid, p)
    S = GridFunction(kern.source_nodes, np.zeros(len(kern.source_nodes)))
    defects, consts = [], []
    for _ in range(n_steps):
        defects.append(domination_defect(S, kern, p.C))
        consts.append(lipschitz_in_large_constant(S))
        S, _ = minplus_apply(kern, S)
    lip_bound = 1.0 / (p.beta * cfg.period ** (p.beta - 1.0)) + p.C * cfg.period
    ok_dom = all(d <= 1e-9 for d in defects)
    ok_lip = all(c <= lip_bound + 1e-9 for c in consts)
    lo, up = kernel_bounds_defect(kern, p)
    record = {
        "T": float("nan"), "suite": "operator-regularity",
        "domination_defects": [float(d) for d in defects],
        "liplarge_constants": [float(c) for c in consts],
        "liplarge_bound": float(lip_bound),
        "kernel_lower_violation": lo, "kernel_upper_violation": up,
        "steps": n_steps,
    }
    return {"domination_ok": ok_dom, "liplarge_ok": ok_lip, "record": record,
            "summary": (f"max domination defect {max(defects):.3g}, "
                        f"max L-constant {max(consts):.4f} <= {lip_bound:.4f}")}


def run_glued_demo(cfg: ExperimentConfig) -> ScalingReport:
    """Capped-schedule gluing demonstration.

    Solves on [-S_n, 0] for n = 1..n_max and records terminal speeds; the
    capped schedule shows the mechanism (a long early stage dominating a
    short coda), explicitly not the super-exponential asymptotics.
    """
    if cfg.kind != "glued-demo":
        raise ValueError("config kind must be 'glued-demo'")
    p = cfg.params
    K2 = (cfg.C * cfg.beta / 5.0) ** (1.0 / cfg.beta)
    full = glued_schedule(cfg.glue_epsilon, cfg.glue_Tbar, K2, cfg.C, cfg.beta,
                          cfg.glue_n_max, cap=cfg.glue_cap)
    records = []
    walls = {}
    continuity_max = 0.0
    rng = np.random.default_rng(0)
    for n in range(1, cfg.glue_n_max + 1):
        t0 = time.monotonic()
        sched = glued_schedule(cfg.glue_epsilon, cfg.glue_Tbar, K2, cfg.C,
                               cfg.beta, n, cap=cfg.glue_cap)
        U = glued_potential(sched)
        T_top = sched.stages[-1][0]
        S_n = sched.S_final
        lbtop = velocity_bound_lower(max(T_top, 2.72), p)
        x_targets = np.linspace(-lbtop.R_T / 2.0, lbtop.R_T / 2.0, cfg.n_targets)

        def edge_offset(s):
            # distance the combined front has retreated at time-from-end s
            return _glued_edge(sched, np.asarray(s, dtype=float))

        g_total = float(edge_offset(np.array([S_n]))[0])
        dx = cfg.dx_max
        v_max = max(cfg.v_cap_factor * K2 * math.log(max(T_top, 3.0)) ** (2.0 / cfg.beta),
                    2.0 * (p.C * p.beta) ** (1.0 / p.beta), 2.0)
        dt = cfg.stencil * dx / v_max
        grid = GridSpec(x_min=-g_total - cfg.margin - 2.0,
                        x_max=float(max(x_targets.max() + 2 * dx, lbtop.R_T)),
                        dx=dx, t1=-S_n, t2=0.0, dt=dt, v_max=v_max)
        cap = max(40.0, cfg.detach_cap_factor * math.log(max(T_top, 3.0)) ** 2)
        wgrid = comoving_window(edge_offset, cfg.margin, grid, y=0.0,
                                detach_cap=cap)
        s_window = min(cfg.s_window_max, sched.stages[0][0] / 10.0)
        table, speeds, lows, highs, wT_m, prog_m, prog_n = _measure_targets(
            cfg, U, wgrid, x_targets, s_window)

        # stage-boundary continuity certified in situ (+-1e-12 probes keep the
        # field's own O(eps log eps) time variation below the 1e-10 budget)
        for (_, S_b, _) in sched.stages[:-1]:
            xs = rng.uniform(grid.x_min, grid.x_max, 100)
            lft = np.asarray(U.value(xs, -S_b - 1e-12))
            rgt = np.asarray(U.value(xs, -S_b + 1e-12))
            continuity_max = max(continuity_max, float(np.max(np.abs(lft - rgt))))

        records.append(HorizonRecord(
            T=float(S_n), dx=grid.dx, dt=grid.dt_eff, s_window=s_window,
            targets=[float(x) for x in x_targets],
            speeds=[float(v) for v in speeds],
            bracket_lo=[float(v) for v in lows],
            bracket_hi=[float(v) for v in highs],
            v=float(np.median(speeds)),
            lower_bound=0.0,
            upper_bound_advisory=float(velocity_bound_upper(max(S_n, 1.01), p)),
            wT_margin=float(min(wT_m)),
            progression_margin=(float(min(prog_m)) if prog_m else None),
            progression_pairs=prog_n,
            grid_slack=4.0 * grid.dx / s_window,
            boundary_warning=bool(table.boundary_warning),
            extra={"stage": n, "T_stage": float(T_top),
                   "stages": [list(map(float, st)) for st in sched.stages],
                   "capped": bool(sched.capped)},
        ).to_dict())
        walls[f"stage{n}"] = time.monotonic() - t0

    vs = [r["v"] for r in records]
    flags = {
        "per_stage_increase": all(b > a for a, b in zip(vs, vs[1:])),
        "continuity_ok": continuity_max <= 1e-10,
        "capped": bool(full.capped),
    }
    notes = ["capped schedule - mechanism demonstration, not asymptotics",
             f"stage-boundary continuity max defect {continuity_max:.3e}",
             f"schedule stages (T_n, S_n, X_n): "
             f"{[list(map(float, st)) for st in full.stages]}"]
    return ScalingReport(kind="glued-demo", config=cfg.to_dict(),
                         records=records,
                         fit={"enabled": False, "p": None, "a": None,
                              "residual": None, "span_decades": 0.0},
                         onset_T=None, flags=flags, notes=notes,
                         wall_times=walls)


def _glued_edge(sched, s):
    """Total front retreat of the glued potential at time-from-end s >= 0."""
    S = np.array([st[1] for st in sched.stages])
    S_prev = np.concatenate(([0.0], S[:-1]))
    X_prev = np.concatenate(([0.0], [st[2] for st in sched.stages[:-1]]))
    s = np.clip(np.asarray(s, dtype=float), 0.0, S[-1])
    idx = np.minimum(np.searchsorted(S, s, side="right"), len(S) - 1)
    out = np.empty_like(s)
    for n in np.unique(idx):
        mask = idx == n
        T_n = sched.stages[n][0]
        curve = PaceCurve(K=sched.K, T=T_n, beta=sched.beta)
        out[mask] = X_prev[n] + curve.value(np.clip(s[mask] - S_prev[n], 0.0, T_n))
    return out


def run_lemma_suite(cfg: ExperimentConfig) -> ScalingReport:
    """Numerical verification table for all closed-form lemma checks."""
    if cfg.kind != "lemma-suite":
        raise ValueError("config kind must be 'lemma-suite'")
    p = cfg.params
    rows = []

    def add(check, params, margin, passed):
        rows.append({"check": check, "params": params,
                     "margin": float(margin), "passed": bool(passed)})

    # closed form of the energy integral vs adaptive quadrature
    for beta in (1.5, 2.0, 3.0):
        for st in (0.01, 0.1, 0.5, 1.0):
            for T in (1e2, 1e4):
                cv = PaceCurve(K=1.0, T=T, beta=beta)
                s = st * T
                closed = cv.energy_closed(s)
                quad = cv.energy_quad(s)
                rel = abs(closed - quad) / abs(quad)
                add("energy-closed-vs-quadrature",
                    {"beta": beta, "s_over_T": st, "T": T}, rel, rel <= 1e-8)

    # remainder of the pace expansion
    for beta in (1.5, 3.0):
        for st in (0.01, 0.1, 0.5):
            for T in (1e2, 1e4):
                cv = PaceCurve(K=1.0, T=T, beta=beta)
                s = st * T
                _, r = pace_residue(s, cv)
                z = math.log(T / s)
                ok = -1e-12 <= r <= z ** -2 + 1e-10
                add("residue-remainder-range",
                    {"beta": beta, "s_over_T": st, "T": T}, z ** -2 - r, ok)

    # energy-vs-Jensen gap window
    for beta in (1.5, 2.0, 3.0):
        for st in (0.01, 0.1, 0.5, 1.0):
            for T in (1e2, 1e4):
                cv = PaceCurve(K=1.0, T=T, beta=beta)
                s = st * T
                gap = pace_main_gap(s, cv)
                cap = 4.0 * s / beta
                ok = -1e-9 <= gap < cap
                add("main-gap-window", {"beta": beta, "s_over_T": st, "T": T},
                    cap - gap, ok)

    # two-point pace inequality: calibrated margin, stable in T
    ratios = {}
    for T in (1e3, 1e4, 1e5):
        cv = PaceCurve(K=1.0, T=T, beta=cfg.beta)
        s = math.log(T) ** 2
        ratios[T] = pace_s2_gap(s, cv) / (math.log(T) ** 2)
    mbar_obs = max(max(ratios.values()), 0.0)
    mbar = max(2.0 * mbar_obs, 1.0)   # paper asserts a positive constant
    vals = [ratios[T] for T in sorted(ratios)]
    nonincreasing = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    add("s2-gap-ratio-nonincreasing",
        {"T0": 1e3, "Mbar": mbar, "ratios": {str(k): v for k, v in ratios.items()}},
        vals[0] - vals[-1], nonincreasing and all(v <= mbar for v in vals))

    # full-span average velocity lemma over random certified potentials
    rng = np.random.default_rng(11)
    worst = math.inf
    prog_worst = math.inf
    trajs = []
    for i in range(50):
        profiles = [cosine_profile(1.0, rng.uniform(0.3, 2.0), rng.uniform(0, 6.28))
                    for _ in range(2)]
        U = random_potential(int(rng.integers(1 << 30)), profiles,
                             cfg.correlation_time, t_min=-20.0, t_max=0.0,
                             C=cfg.C, beta=cfg.beta)
        v_max = 6.0
        grid = GridSpec(x_min=-10.0, x_max=10.0, dx=0.1, t1=-20.0, t2=0.0,
                        dt=cfg.stencil * 0.1 / v_max, v_max=v_max)
        table = solve_dp(U, grid, None, p, keep_history=False)
        traj = backtrack(table, float(rng.uniform(-3, 3)))
        worst = min(worst, lemma_wT_margin(traj, p, grid.dx))
        trajs.append(traj)
    add("wT-lemma-random-potentials", {"count": 50}, worst, worst >= 0.0)

    # geometric-progression inequality on a subsample (beta = 2 only)
    if cfg.beta == 2.0:
        for traj in trajs[:10]:
            m, npair = progression_margins(traj, p, 0.1, n_samples=40)
            if npair:
                prog_worst = min(prog_worst, m)
        add("beta2-progression-random", {"count": 10}, prog_worst,
            prog_worst >= 0.0)

    # DP optimality oracle on toy instances
    from .minimizer import enumerate_paths
    from .core import PotentialField as _PF
    oracle_ok = True
    for _ in range(5):
        n_x = int(rng.integers(3, 6))
        n_steps = int(rng.integers(2, 6))
        g = GridSpec(x_min=0.0, x_max=0.5 * (n_x - 1), dx=0.5, t1=0.0,
                     t2=0.25 * n_steps, dt=0.25, v_max=float(rng.uniform(2.2, 6.0)))
        vals = rng.uniform(0, 1, size=(n_steps + 2, n_x))

        def ev(x, t, vals=vals, g=g, n_steps=n_steps):
            xi = np.clip(np.round(np.asarray(x) / g.dx).astype(int), 0, g.n_x - 1)
            ti = np.clip(np.asarray(t) / g.dt_eff, 0, n_steps + 1).astype(int)
            return vals[ti, xi]

        U = _PF(eval_fn=ev, grad_fn=lambda x, t: 0.0 * np.asarray(x), bound=1.0)
        tab = solve_dp(U, g, None, p)
        ev_vals, _ = enumerate_paths(U, g, None, p)
        oracle_ok &= bool(np.array_equal(tab.final_values, ev_vals))
    add("dp-enumeration-oracle", {"count": 5}, 0.0, oracle_ok)

    # kernel sandwich equality branches and tropical associativity
    from .core import constant_potential, zero_potential
    from .laxoleinik import minplus_compose
    gk = GridSpec(x_min=0.0, x_max=3.0, dx=0.15, t1=0.0, t2=0.75, dt=0.25,
                  v_max=5.0)
    grid_tol = 2.0 * gk.dx * (3.0 / 0.75)   # 2 dx * max slope
    # zero potential saturates the upper branch (violation = lattice error);
    # its lower violation vanishes exactly, and vice versa for U = C
    k0 = kernel(zero_potential(), 0.0, 0.75, gk, p)
    lo0, up0 = kernel_bounds_defect(k0, p)
    add("kernel-sandwich-zero-potential", {"potential": "zero"},
        grid_tol - up0, lo0 <= 1e-9 and up0 <= grid_tol)
    kc = kernel(constant_potential(cfg.C), 0.0, 0.75, gk, p)
    loc, upc = kernel_bounds_defect(kc, p)
    add("kernel-sandwich-constant-potential", {"potential": "constant"},
        grid_tol - loc, upc <= 1e-9 and loc <= grid_tol)
    ka = kernel(zero_potential(), 0.0, 0.25, gk, p)
    kb = kernel(zero_potential(), 0.25, 0.5, gk, p)
    kc2 = kernel(zero_potential(), 0.5, 0.75, gk, p)
    left = minplus_compose(minplus_compose(ka, kb), kc2)
    right = minplus_compose(ka, minplus_compose(kb, kc2))
    fin = np.isfinite(left.entries) & np.isfinite(right.entries)
    assoc = float(np.max(np.abs(left.entries - right.entries)[fin]))
    add("tropical-associativity", {}, assoc, assoc <= 1e-12)

    flags = {"all_passed": all(r["passed"] for r in rows),
             "checks": len(rows)}
    return ScalingReport(kind="lemma-suite", config=cfg.to_dict(), records=rows,
                         fit={"enabled": False, "p": None, "a": None,
                              "residual": None, "span_decades": 0.0},
                         onset_T=None, flags=flags,
                         notes=[f"calibrated s2 margin constant: {mbar}"],
                         wall_times={})


def run_conjecture_probe(cfg: ExperimentConfig) -> ScalingReport:
    """Random-potential probe: growth vs plateau of v(T); exploratory only."""
    if cfg.kind != "conjecture-probe":
        raise ValueError("config kind must be 'conjecture-probe'")
    if len(cfg.seeds) < 5:
        raise ValueError("conjecture probe needs at least 5 seeds")
    p = cfg.params
    T_max = max(cfg.horizons)
    walls = {}
    records = []
    for seed in sorted(cfg.seeds):
        t0 = time.monotonic()
        rng = np.random.default_rng(seed)
        profiles = [cosine_profile(1.0, rng.uniform(0.3, 2.0), rng.uniform(0, 6.28))
                    for _ in range(cfg.n_profiles)]
        U = random_potential(seed, profiles, cfg.correlation_time,
                             t_min=-T_max, t_max=0.0, C=cfg.C, beta=cfg.beta)
        x_targets = np.array([0.0, 1.0, 2.0])
        for T in cfg.horizons:
            v_max = 6.0
            dx = cfg.dx_max * 2
            grid = GridSpec(x_min=-14.0, x_max=14.0, dx=dx, t1=-T, t2=0.0,
                            dt=cfg.stencil * dx / v_max, v_max=v_max)
            s_window = min(cfg.s_window_max, T / 20.0)
            table, speeds, lows, highs, wT_m, prog_m, prog_n = _measure_targets(
                cfg, U, grid, x_targets, s_window)
            records.append(HorizonRecord(
                T=T, dx=grid.dx, dt=grid.dt_eff, s_window=s_window,
                targets=[float(x) for x in x_targets],
                speeds=[float(v) for v in speeds],
                bracket_lo=[float(v) for v in lows],
                bracket_hi=[float(v) for v in highs],
                v=float(np.median(speeds)),
                lower_bound=0.0,
                upper_bound_advisory=float(velocity_bound_upper(T, p)),
                wT_margin=float(min(wT_m)),
                progression_margin=(float(min(prog_m)) if prog_m else None),
                progression_pairs=prog_n,
                grid_slack=4.0 * grid.dx / s_window,
                boundary_warning=bool(table.boundary_warning),
                seed=seed,
            ).to_dict())
        walls[str(seed)] = time.monotonic() - t0

    records.sort(key=lambda r: (r["T"], r["seed"]))
    # plateau statistic per seed: v at the largest horizon over v at the smallest
    plateau = {}
    T_lo = min(cfg.horizons)
    for seed in sorted(cfg.seeds):
        v_hi = next(r["v"] for r in records
                    if r["seed"] == seed and r["T"] == T_max)
        v_lo = next(r["v"] for r in records
                    if r["seed"] == seed and r["T"] == T_lo)
        plateau[str(seed)] = float(v_hi / v_lo) if v_lo > 0 else float("nan")
    flags = {"exploratory": True,
             "plateau_statistic": plateau}
    return ScalingReport(kind="conjecture-probe", config=cfg.to_dict(),
                         records=records, fit={"enabled": False, "p": None,
                                               "a": None, "residual": None,
                                               "span_decades": 0.0},
                         onset_T=None, flags=flags,
                         notes=["exploratory probe: no pass/fail; plateau "
                                "statistic is v(T_max)/v(T_min) per seed"],
                         wall_times=walls)


def run_experiment(cfg: ExperimentConfig) -> ScalingReport:
    runner = {
        "scaling": run_scaling,
        "periodic-control": run_periodic_control,
        "glued-demo": run_glued_demo,
        "lemma-suite": run_lemma_suite,
        "conjecture-probe": run_conjecture_probe,
    }[cfg.kind]
    return runner(cfg)
