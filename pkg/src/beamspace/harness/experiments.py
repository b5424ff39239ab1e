"""Experiment runners. Each returns result rows, plus a trace where one exists."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..channel import (
    BeamPair,
    PathGeometry,
    link_rate_bps,
    main_lobe_gain,
    sinr_db,
)
from ..power import (
    BeamwidthBounds,
    PowerBudget,
    apa_allocate,
    compare_policies,
    grid_slack_bps,
    oracle_allocate,
    ppa_allocate,
    prop1_link_optimum,
)
from ..simkernel import EventTrace, TraceRecord, rng_stream
from ..sync import RateChange, SyncConfig, run_sync
from ..tracking import (
    TrackingConfig,
    TrackingScenario,
    attempt_orders,
    max_concurrent_trackers,
    random_scenario,
    run_tracking,
)
from ..training import (
    CandidateSet,
    Candidate,
    Scenario,
    SectorGrid,
    Side,
    beam_combining,
    combining_test_count,
    plan_sweep,
    run_training,
)
from .config import ExperimentConfig
from .outage import outage_analytic, outage_monte_carlo

CSV_HEADER = ("experiment", "x_name", "x_value", "metric", "value", "units")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    x_name: str
    x_value: str
    metric: str
    value: float
    units: str

    def __post_init__(self):
        if not self.units:
            raise ValueError(f"row {self} has no units")
        if not math.isfinite(self.value):
            raise ValueError(f"row {self} has a non-finite value")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 12)) if not x.is_integer() else str(int(x))
    return str(x)


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow((r.experiment, r.x_name, r.x_value, r.metric, repr(float(r.value)), r.units))
    return buf.getvalue()


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, optionally over worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# -- rate map -----------------------------------------------------------------

def _rate_map_point(args) -> list[ResultRow]:
    cfg, tt, tr = args
    k = cfg.constants()
    xt, xr = math.radians(cfg.xi_t_deg), math.radians(cfg.xi_r_deg)
    los = BeamPair(0, PathGeometry.los(cfg.r_los_m), xt, xr)
    nlos = BeamPair(1, PathGeometry.nlos_deg(tt, tr, cfg.r_los_m), xt, xr)
    active = [(los, cfg.p_max_dbm), (nlos, cfg.p_max_dbm)]
    x = f"{_fmt(tt)}:{_fmt(tr)}"
    out = []
    for tag, pair in (("los", los), ("nlos", nlos)):
        s = sinr_db(pair, active, k)
        out.append(ResultRow("rate_map", "theta_t_deg:theta_r_deg", x, f"sinr_{tag}", s, "dB"))
        out.append(ResultRow("rate_map", "theta_t_deg:theta_r_deg", x, f"rate_{tag}",
                             link_rate_bps(k.bandwidth_hz, s) / 1e6, "Mbps"))
    return out


def run_fig8(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """SINR and rate of the LOS link and one NLOS link over an angle grid.

    Both links transmit at ``p_max`` with the sectored pattern, so each sees
    the other's side-lobe leakage. Points with ``theta_t + theta_r >= 180``
    have no reflection geometry and are skipped.
    """
    pts = [(cfg, tt, tr) for tt in cfg.rate_map_theta_t_deg for tr in cfg.rate_map_theta_r_deg
           if 0 < tt and 0 < tr and tt + tr < 180]
    return [r for chunk in _map(_rate_map_point, pts, jobs) for r in chunk]


# -- rate versus threshold ------------------------------------------------------

def _rate_vs_eta_point(args) -> list[ResultRow]:
    cfg, eta = args
    k = cfg.constants().with_z(0.0)
    bounds = cfg.bounds()
    budget = cfg.budget(eta)
    pairs = cfg.beam_pairs()
    nlos = [p for p in pairs if p.id != 0]
    x = _fmt(float(eta))
    out = []

    def row(metric, value, units="Mbps"):
        out.append(ResultRow("rate_vs_eta", "eta_db", x, metric, value, units))

    siso = prop1_link_optimum(pairs[0], budget, bounds, k)
    row("rate_siso", siso.rate_bps / 1e6 if siso.snr_db >= eta else 0.0)
    # single-beam transmission rides the LOS pair only, so losing it loses everything
    row("rate_siso_no_los", 0.0)
    policies = ("PPA", "APA") if cfg.policy == "both" else (cfg.policy,)
    for pol in policies:
        alloc_fn = ppa_allocate if pol == "PPA" else apa_allocate
        a = alloc_fn(pairs, budget, bounds, k)
        b = alloc_fn(nlos, budget, bounds, k)
        tag = pol.lower()
        row(f"rate_{tag}", a.rate_bps / 1e6)
        row(f"links_{tag}", float(a.n), "count")
        row(f"rate_{tag}_no_los", b.rate_bps / 1e6)
    return out


def run_fig9_10(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """Aggregate pencil-beam rate against the admission threshold.

    One beam pair per configured path; the LOS pair is added implicitly.
    Reports single-pair (best pair at ``p_max``), PPA and APA rates, and both
    policies with the LOS pair removed.
    """
    return [r for chunk in _map(_rate_vs_eta_point, [(cfg, e) for e in cfg.eta_db], jobs)
            for r in chunk]


def rate_table(rows: Iterable[ResultRow], metric: str) -> dict[float, float]:
    return {float(r.x_value): r.value for r in rows if r.metric == metric}


# -- outage -------------------------------------------------------------------------

def _outage_point(args) -> list[ResultRow]:
    cfg, p, n = args
    exact = outage_analytic([p] * n)
    mc = outage_monte_carlo(p, n, max(cfg.trials, 1000), cfg.seed)
    x = _fmt(float(p))
    return [
        ResultRow("outage", "p", x, f"analytic_n{n}", exact, "probability"),
        ResultRow("outage", "p", x, f"monte_carlo_n{n}", mc.estimate, "probability"),
        ResultRow("outage", "p", x, f"half_width_n{n}", mc.half_width, "probability"),
    ]


def run_outage(cfg: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    pts = [(cfg, p, n) for p in cfg.p for n in cfg.n_list]
    return [r for chunk in _map(_outage_point, pts, jobs) for r in chunk]


# -- training ---------------------------------------------------------------------------

def _synthetic_sets(n_tx: int, n_rx: int) -> tuple[CandidateSet, CandidateSet, dict]:
    """Candidate sets whose pairwise SNRs all clear any threshold below 10 dB."""
    tx = CandidateSet.ranked([Candidate(i, i, 30.0 - i) for i in range(n_tx)], Side.MTX)
    rx = CandidateSet.ranked([Candidate(j, j, 30.0 - j) for j in range(n_rx)], Side.MRX)
    table = {(i, j): 20.0 + 5.0 * (i == j) - 0.1 * abs(i - j) for i in range(n_tx) for j in range(n_rx)}
    return tx, rx, table


def run_training_demo(cfg: ExperimentConfig) -> tuple[list[ResultRow], EventTrace]:
    rows: list[ResultRow] = []
    trace = EventTrace()
    for m in cfg.sectors:
        multi = plan_sweep(m, cfg.n_cap)
        single = plan_sweep(m, 1)
        rows.append(ResultRow("train", "sectors", str(m), "rounds_multi", multi.rounds, "count"))
        rows.append(ResultRow("train", "sectors", str(m), "rounds_single", single.rounds, "count"))
    for n_tx, n_rx in cfg.combining_sizes:
        tx, rx, table = _synthetic_sets(n_tx, n_rx)
        measured = beam_combining(tx, rx, 10.0, table).tests
        x = f"{n_tx}x{n_rx}"
        rows.append(ResultRow("train", "n_tx x n_rx", x, "tests_measured", measured, "count"))
        rows.append(ResultRow("train", "n_tx x n_rx", x, "tests_closed_form",
                              combining_test_count(n_tx, n_rx), "count"))
        rows.append(ResultRow("train", "n_tx x n_rx", x, "tests_conventional", n_tx * n_rx, "count"))

    # sweep the configured deployment on both sides
    sc = Scenario.from_degrees(cfg.theta_t_deg, cfg.theta_r_deg, cfg.r_los_m,
                               constants=cfg.constants(), n1=cfg.n_cap, n2=cfg.n_cap,
                               xi_t=math.radians(cfg.xi_t_deg), xi_r=math.radians(cfg.xi_r_deg),
                               pt_dbm=cfg.p_max_dbm)
    m = max(1, round(360.0 / cfg.sector_span_deg))
    t = 0
    for side in (Side.MTX, Side.MRX):
        grid = SectorGrid.degrees(m, cfg.sector_span_deg, side)
        cands = run_training(sc, side, grid)
        found = [c for c in cands if c.snr_db > -math.inf]
        for r, sectors in enumerate(plan_sweep(m, cfg.n_cap).layout):
            trace.append(t, side.value, "SWEEP_ROUND", f"round={r} sectors={','.join(map(str, sectors))}")
            t += 1
        trace.append(t, side.value, "CANDIDATES",
                     " ".join(f"{c.sector}:{c.snr_db:.2f}" for c in found))
        rows.append(ResultRow("train", "side", side.value, "candidates", len(found), "count"))
        rows.append(ResultRow("train", "side", side.value, "rounds", cands.rounds, "count"))
    return rows, trace


# -- tracking -------------------------------------------------------------------------------

TRACKING_SCRIPTS = ("fig6", "ncpair2", "candidates-blocked", "all-links-blocked", "ncpair0",
                    "none", "refine", "refine-escalate")

_FOREVER = 10**9


def tracking_script(name: str, config: TrackingConfig = TrackingConfig(),
                    horizon: int = 40_000) -> TrackingScenario:
    """Hand-written scenarios with known outcomes.

    Links 1-3 start on pairs 1-3; pairs 4 and 5 are spare candidates. Pair 3
    is the strongest, so link 3 helps whenever it is Active. Blockage starts
    at 2 ms and never ends unless stated.
    """
    eta = config.eta_db
    snr = {1: eta + 10, 2: eta + 12, 3: eta + 15, 4: eta + 8, 5: eta + 6.5}
    ops = (1, 2, 3)
    blk: dict[int, list] = {}
    degs: tuple = ()
    if name == "fig6":
        blk = {1: [(2_000, _FOREVER)]}
    elif name == "ncpair2":
        blk = {1: [(2_000, _FOREVER)], 4: [(2_000, _FOREVER)]}
    elif name == "candidates-blocked":
        blk = {p: [(2_000, _FOREVER)] for p in (1, 4, 5)}
    elif name == "all-links-blocked":
        blk = {p: [(2_000, _FOREVER)] for p in snr}
    elif name == "ncpair0":
        snr = {1: eta + 10, 2: eta + 12, 3: eta + 15}
        blk = {1: [(2_000, 25_000)]}
    elif name == "none":
        pass
    elif name == "refine":
        degs = ((3_000, 2, 8.0),)
    elif name == "refine-escalate":
        degs = ((3_000, 2, 8.0),)
        blk = {2: [(3_120, _FOREVER)]}
    else:
        raise ValueError(f"unknown tracking script {name!r}; choose from {', '.join(TRACKING_SCRIPTS)}")
    return TrackingScenario(snr, ops, blk, degs, config, horizon)


def run_tracking_scenario(cfg: ExperimentConfig, script: str | None = None
                          ) -> tuple[list[ResultRow], EventTrace]:
    name = script or cfg.tracking_script
    tcfg = cfg.tracking_config()
    if name == "random":
        rows: list[ResultRow] = []
        traces = []
        for run in range(cfg.tracking_runs):
            tr = run_tracking(random_scenario(cfg.seed, run, config=tcfg))
            traces.append(tr)
            x = str(run)
            rows.append(ResultRow("track", "run", x, "max_concurrent_trackers",
                                  max_concurrent_trackers(tr), "count"))
            rows.append(ResultRow("track", "run", x, "restorations",
                                  len(tr.filter("RESTORED")), "count"))
            rows.append(ResultRow("track", "run", x, "grants", len(tr.filter("GRANT")), "count"))
        # runs are independent timelines; interleave them by time, run order on ties
        recs = [TraceRecord(r.ticks, r.actor, r.kind, f"run={run} {r.details}".strip())
                for run, tr in enumerate(traces) for r in tr]
        recs.sort(key=lambda r: r.ticks)
        return rows, EventTrace(recs)
    trace = run_tracking(tracking_script(name, tcfg))
    orders = attempt_orders(trace)
    rows = [
        ResultRow("track", "script", name, "max_concurrent_trackers",
                  max_concurrent_trackers(trace), "count"),
        ResultRow("track", "script", name, "restorations", len(trace.filter("RESTORED")), "count"),
        ResultRow("track", "script", name, "switch_attempts",
                  sum(1 for o in orders for m in o if m > 0), "count"),
        ResultRow("track", "script", name, "probes",
                  len([r for r in trace.filter("QOSNULL")]), "count"),
    ]
    return rows, trace


# -- sync ---------------------------------------------------------------------------------

def run_sync_demo(cfg: ExperimentConfig) -> tuple[list[ResultRow], EventTrace]:
    """Synchronization cycles; link 1's rate halves halfway through cycle 0."""
    rates = cfg.sync_rates_bps
    total = cfg.sync_total_bytes
    plan_t = math.ceil(total * 8e6 / sum(rates))
    script = [[RateChange(plan_t // 2, 0, rates[0] / 2)]]
    outcomes, plans, trace = run_sync(total, cfg.sync_snr_linear, rates, SyncConfig(),
                                      cfg.sync_cycles, script)
    rows = []
    for c, (out, plan) in enumerate(zip(outcomes, plans)):
        for i, share in enumerate(plan.shares):
            rows.append(ResultRow("sync", "cycle", str(c), f"share_{i + 1}", share, "bytes"))
            rows.append(ResultRow("sync", "cycle", str(c), f"remainder_{i + 1}",
                                  out.remainders[i], "bytes"))
        rows.append(ResultRow("sync", "cycle", str(c), "duration", out.end - out.start, "us"))
    return rows, trace


# -- validation --------------------------------------------------------------------------

def _random_instance(rng: np.random.Generator):
    n = int(rng.integers(1, 7))
    r_los = float(rng.uniform(2.0, 10.0))
    geos = [PathGeometry.los(r_los)]
    while len(geos) < n:
        tt = float(rng.uniform(5, 85))
        tr = float(rng.uniform(5, 85))
        geos.append(PathGeometry.nlos_deg(tt, tr, r_los))
    pairs = [BeamPair(i, g) for i, g in enumerate(geos)]
    p_dbm = float(rng.uniform(-5, 10))
    P_dbm = p_dbm + float(rng.uniform(0, 9))
    budget = PowerBudget(p_dbm, P_dbm, int(rng.integers(1, 8)), float(rng.uniform(0, 30)))
    bounds = BeamwidthBounds.from_degrees(float(rng.uniform(5, 30)), float(rng.uniform(5, 30)))
    return pairs, budget, bounds


@dataclass(frozen=True)
class ValidationResult:
    name: str
    checked: int
    failures: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failures == 0


def validate(cfg: ExperimentConfig, instances: int = 200) -> list[ValidationResult]:
    """Closed forms against the brute-force oracle and analytic outage against sampling."""
    k = cfg.constants().with_z(0.0)
    rng = rng_stream(cfg.seed, "validate/instances")
    bad_oracle, bad_regime, worst = 0, 0, ""
    for _ in range(instances):
        pairs, budget, bounds = _random_instance(rng)
        cmp = compare_policies(pairs, budget, bounds, k)
        orc = oracle_allocate(pairs, budget, bounds, k)
        slack = grid_slack_bps(budget, k, max(cmp.ppa.n, cmp.apa.n, 1))
        if orc.rate_bps < max(cmp.rate_ppa, cmp.rate_apa) - slack:
            bad_oracle += 1
            worst = f"oracle {orc.rate_bps:.6g} < closed form {max(cmp.rate_ppa, cmp.rate_apa):.6g}"
        if cmp.equal_regime and not (orc.chosen == cmp.ppa.chosen and
                                     math.isclose(orc.rate_bps, cmp.rate_ppa, rel_tol=1e-12)):
            bad_regime += 1
    results = [
        ValidationResult("oracle_dominates_closed_forms", instances, bad_oracle, worst),
        ValidationResult("equal_regime_oracle_identity", instances, bad_regime),
    ]

    xs = rng_stream(cfg.seed, "validate/pattern")
    xi = xs.uniform(1e-3, 2 * math.pi, 10_000)
    z = xs.uniform(0.0, 0.999, 10_000)
    err = max(abs(main_lobe_gain(a, b) * a + b * (2 * math.pi - a) - 2 * math.pi)
              for a, b in zip(xi, z))
    results.append(ValidationResult("pattern_conservation", 10_000, int(err > 1e-12), f"max_err={err:.3g}"))

    bad_mc = 0
    checked = 0
    for p in cfg.p:
        for n in cfg.n_list:
            checked += 1
            est = outage_monte_carlo(p, n, max(cfg.trials, 1000), cfg.seed)
            if not est.covers(outage_analytic([p] * n)):
                bad_mc += 1
    results.append(ValidationResult("outage_monte_carlo_agreement", checked, bad_mc))
    return results


def validation_rows(results: Sequence[ValidationResult]) -> list[ResultRow]:
    rows = []
    for r in results:
        rows.append(ResultRow("validate", "check", r.name, "checked", r.checked, "count"))
        rows.append(ResultRow("validate", "check", r.name, "failures", r.failures, "count"))
    return rows


__all__ = [
    "CSV_HEADER",
    "ResultRow",
    "rows_to_csv",
    "rate_table",
    "run_fig8",
    "run_fig9_10",
    "run_outage",
    "run_training_demo",
    "tracking_script",
    "TRACKING_SCRIPTS",
    "run_tracking_scenario",
    "run_sync_demo",
    "validate",
    "validation_rows",
    "ValidationResult",
]
