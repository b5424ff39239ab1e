import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamspace.training import (
    Candidate,
    CandidateSet,
    EnumerationCapError,
    Pair,
    PairSet,
    Scenario,
    SectorGrid,
    Side,
    beam_combining,
    combining_test_count,
    pair_measurements,
    plan_sweep,
    run_training,
    select_combination,
)

FIG9_T = (10, 20, 30, 40, 50, 60, 70, 80)
FIG9_R = (20, 30, 40, 40, 60, 70, 80, 80)


@pytest.mark.parametrize("m,cap,n,rounds", [(32, 10, 10, 4), (3, 10, 3, 1), (9, 3, 3, 3), (1, 1, 1, 1)])
def test_plan_sweep_examples(m, cap, n, rounds):
    plan = plan_sweep(m, cap)
    assert (plan.n, plan.rounds) == (n, rounds)


def test_layout_spreads_concurrent_beams():
    assert plan_sweep(9, 3).layout == ((0, 3, 6), (1, 4, 7), (2, 5, 8))


@given(st.integers(1, 128), st.integers(1, 16))
def test_sweep_completeness_and_advantage(m, cap):
    plan = plan_sweep(m, cap)
    flat = [s for r in plan.layout for s in r]
    assert sorted(flat) == list(range(m))
    assert plan.rounds == -(-m // plan.n) == len(plan.layout)
    assert all(len(r) <= plan.n for r in plan.layout)
    assert plan.rounds <= m
    assert (plan.rounds == m) == (plan.n == 1 or m == 1)
    if plan.n < m:
        for r in plan.layout:
            assert all(b - a > 1 for a, b in zip(r, r[1:]))


def test_plan_sweep_rejects_bad_input():
    with pytest.raises(ValueError):
        plan_sweep(0, 3)
    with pytest.raises(ValueError):
        plan_sweep(3, 0)


def test_sector_binning_and_boundaries():
    g = SectorGrid.degrees(36, 10.0)
    assert g.sector_of(0.0) == 0
    assert g.sector_of(math.radians(10)) == 1
    # boundary angle 5 deg belongs to the lower sector
    assert g.sector_of(math.radians(5)) == 0
    assert g.sector_of(math.radians(5.0001)) == 1
    narrow = SectorGrid.degrees(4, 10.0, origin_deg=0.0)
    assert narrow.sector_of(math.radians(45)) is None
    assert narrow.sector_of(math.radians(-1)) is None


def test_single_los_path_gives_one_candidate():
    sc = Scenario.from_degrees([], [])
    cands = run_training(sc, Side.MTX, SectorGrid.degrees(36, 10.0))
    found = [c for c in cands if c.snr_db > -math.inf]
    assert [c.sector for c in found] == [0]
    assert cands.rounds == plan_sweep(36, 10).rounds


def test_fig9_scenario_has_nine_transmit_candidates():
    sc = Scenario.from_degrees(FIG9_T, FIG9_R)
    grid = SectorGrid.degrees(36, 10.0)
    cands = run_training(sc, Side.MTX, grid, eta_db=-50.0)
    # oracle: direct binning of the configured departure angles
    expected = {0} | {round(t / 10) for t in FIG9_T}
    assert {c.sector for c in cands} == expected
    assert len(cands) == 9


def test_threshold_above_best_snr_gives_empty_set():
    sc = Scenario.from_degrees(FIG9_T, FIG9_R)
    assert len(run_training(sc, Side.MRX, SectorGrid.degrees(36, 10.0), eta_db=200.0)) == 0


def test_training_uses_quasi_omni_counterpart():
    sc = Scenario.from_degrees([], [])
    tx = run_training(sc, Side.MTX, SectorGrid.degrees(36, 10.0))
    from beamspace.channel import main_lobe_gain
    assert tx.entries[0].snr_db == pytest.approx(
        sc.path_snr_db(0, main_lobe_gain(sc.xi_t, sc.constants.z), 1.0))


def test_candidate_set_invariants():
    with pytest.raises(ValueError):
        CandidateSet((Candidate(1, 1, 5.0), Candidate(2, 2, 9.0)))
    with pytest.raises(ValueError):
        CandidateSet((Candidate(1, 1, 9.0), Candidate(1, 2, 5.0)))


def test_pair_set_invariants():
    with pytest.raises(ValueError):
        PairSet((Pair(0, 0, 10.0), Pair(0, 1, 10.0)))
    with pytest.raises(ValueError):
        PairSet((Pair(0, 0, 1.0),), eta_db=5.0)


def _ranked(ids_snr, side):
    return CandidateSet.ranked([Candidate(i, i, s) for i, s in ids_snr], side)


def test_combining_three_by_three_permutation():
    tx = _ranked([(0, 30), (1, 29), (2, 28)], Side.MTX)
    rx = _ranked([(0, 30), (1, 29), (2, 28)], Side.MRX)
    truth = {0: 2, 1: 0, 2: 1}
    table = {(i, j): 25.0 if truth[i] == j else 5.0 for i in range(3) for j in range(3)}
    ps = beam_combining(tx, rx, 0.0, table)
    assert [(p.tx, p.rx) for p in ps] == [(0, 2), (1, 0), (2, 1)]
    assert ps.tests == 6 == combining_test_count(3, 3)
    assert combining_test_count(3, 3, all_pass=False) == 9


def test_combining_single_pair():
    ps = beam_combining(_ranked([(4, 20)], Side.MTX), _ranked([(7, 20)], Side.MRX), 10.0,
                        {(4, 7): 18.0})
    assert [(p.tx, p.rx, p.snr_db) for p in ps] == [(4, 7, 18.0)]


def test_beam_below_threshold_is_skipped_without_consuming_rx():
    tx = _ranked([(0, 30), (1, 29), (2, 28)], Side.MTX)
    rx = _ranked([(0, 30), (1, 29)], Side.MRX)
    table = {(0, 0): 20, (0, 1): 3, (1, 0): 4, (1, 1): 4, (2, 0): 2, (2, 1): 15}
    ps = beam_combining(tx, rx, 10.0, table)
    assert [(p.tx, p.rx) for p in ps] == [(0, 0), (2, 1)]
    assert ps.tests == 2 + 1 + 1


@pytest.mark.parametrize("n_tx,n_rx,count", [(3, 3, 6), (2, 5, 9), (1, 7, 7), (5, 2, 3), (4, 4, 10)])
def test_combining_count_formula(n_tx, n_rx, count):
    assert combining_test_count(n_tx, n_rx) == count


def test_combining_count_asymptotics():
    # n_tx >= n_rx grows like n_rx^2 / 2, otherwise like n_tx n_rx - n_tx^2 / 2
    n = 10_000
    assert combining_test_count(n, n) / (n * n) == pytest.approx(0.5, rel=1e-3)
    assert combining_test_count(2 * n, n) / (n * n) == pytest.approx(0.5, rel=1e-3)
    assert combining_test_count(n, 3 * n) / (3 * n * n - n * n / 2) == pytest.approx(1.0, rel=1e-3)


def _table(draw, n_tx, n_rx, lo, hi):
    vals = draw(st.lists(st.floats(lo, hi), min_size=n_tx * n_rx, max_size=n_tx * n_rx))
    return {(i, j): vals[i * n_rx + j] for i in range(n_tx) for j in range(n_rx)}


@st.composite
def combining_case(draw, all_pass):
    n_tx, n_rx = draw(st.integers(0, 8)), draw(st.integers(0, 8))
    lo = 10.0 if all_pass else -10.0
    table = _table(draw, n_tx, n_rx, lo, 40.0)
    tx = _ranked([(i, 40 - i) for i in range(n_tx)], Side.MTX)
    rx = _ranked([(j, 40 - j) for j in range(n_rx)], Side.MRX)
    return tx, rx, table


@given(combining_case(all_pass=True))
def test_measured_tests_equal_formula_when_all_pass(case):
    tx, rx, table = case
    ps = beam_combining(tx, rx, 10.0, table)
    assert ps.tests == combining_test_count(len(tx), len(rx))
    assert len(ps) == min(len(tx), len(rx))


@given(combining_case(all_pass=False))
def test_combining_properties(case):
    tx, rx, table = case
    ps = beam_combining(tx, rx, 10.0, table)
    assert ps.tests <= combining_test_count(len(tx), len(rx), all_pass=False)
    assert all(p.snr_db >= 10.0 for p in ps)
    assert len({p.tx for p in ps}) == len(ps) == len({p.rx for p in ps})
    if len(tx) and len(rx):
        best = max(table.values())
        if table[(tx.ids[0], max(rx.ids, key=lambda j: (table[(tx.ids[0], j)], -j)))] >= 10.0:
            # greedy dominance over the first transmit beam's row
            assert ps.pairs[0].snr_db == max(table[(tx.ids[0], j)] for j in rx.ids)
        assert all(p.snr_db <= best for p in ps)


def test_pair_measurements_fig9():
    sc = Scenario.from_degrees(FIG9_T, FIG9_R)
    table = pair_measurements(sc, SectorGrid.degrees(36, 10.0, Side.MTX),
                              SectorGrid.degrees(36, 10.0, Side.MRX))
    assert len(table) == 9
    assert (0, 0) in table and (4, 4) in table and (3, 4) in table


# -- combination selection -------------------------------------------------------


class P:
    def __init__(self, id, w):
        self.id, self.w = id, w

    def __repr__(self):
        return f"P({self.id})"


def _oracle_best(pairs, n_max, metric):
    best = None
    for k in range(1, min(len(pairs), n_max) + 1):
        for c in itertools.combinations(sorted(pairs, key=lambda p: p.id), k):
            key = (metric(c), k, tuple(-p.id for p in c))
            if best is None or key > best[0]:
                best = (key, c)
    return best[1]


def test_single_pair_selected():
    p = P(3, 1.0)
    assert select_combination([p], 4, lambda c: 1.0) == (p,)


def test_tight_budget_picks_subset_with_strongest():
    pairs = [P(0, 100.0), P(1, 2.0), P(2, 1.5)]

    def rate(c):
        # a fixed total power split equally: adding weak links dilutes the strong one
        pw = 1.0 / len(c)
        return sum(math.log2(1 + p.w * pw) for p in c)

    best = select_combination(pairs, 2, rate)
    assert len(best) == 2 and pairs[0] in best
    assert best == _oracle_best(pairs, 2, rate)


def test_interference_free_ample_power_takes_all():
    pairs = [P(i, w) for i, w in enumerate([50, 20, 9, 3])]
    best = select_combination(pairs, 3, lambda c: sum(math.log2(1 + p.w) for p in c))
    assert [p.id for p in best] == [0, 1, 2]


def test_ties_prefer_larger_subsets():
    pairs = [P(0, 1), P(1, 1)]
    assert len(select_combination(pairs, 2, lambda c: 1.0)) == 2


@settings(max_examples=60)
@given(st.lists(st.floats(0.1, 100.0), min_size=1, max_size=7), st.integers(1, 7),
       st.randoms(use_true_random=False))
def test_selection_matches_oracle_and_ignores_input_order(ws, n_max, rnd):
    pairs = [P(i, w) for i, w in enumerate(ws)]

    def metric(c):
        pw = 2.0 / len(c)
        return sum(math.log2(1 + p.w * min(pw, 1.0)) for p in c)

    got = select_combination(pairs, n_max, metric)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    assert select_combination(shuffled, n_max, metric) == got
    assert metric(got) == metric(_oracle_best(pairs, n_max, metric))


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError, match="cap of 15"):
        select_combination([P(i, 1) for i in range(16)], 3, lambda c: 0.0)
    with pytest.raises(ValueError):
        select_combination([], 3, lambda c: 0.0)
