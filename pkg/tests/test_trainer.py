"""Candidate ranking, subset fitting, and the greedy per-node trainer."""

import numpy as np
import pytest

from peersign.graph import DatasetSplit, split_dataset
from peersign.opinion import NodePredictor, OpinionVariant, PeerPolicy
from peersign.planted import PlantedParams, generate_planted
from peersign.qubo import TabuParams
from peersign.trainer import (
    TrainConfig,
    fit_subset,
    individual_errors,
    merge_trusted,
    predictor_error,
    train_all,
    train_node,
)
from peersign.errors import ConfigError

from conftest import make_graph

PQ = OpinionVariant.STANDARD_PQ
POLICY = PeerPolicy(PQ, p=0, q=0)


def _config(**kw):
    defaults = dict(policy=POLICY, d=10, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


# -- individual errors ---------------------------------------------------------


def test_individual_errors_perfect_positive_peer():
    g = make_graph([(1, 10, 1), (1, 11, -1), (1, 12, 1)], n=13)
    td = [(10, 1), (11, -1), (12, 1)]
    ranking = individual_errors(g, 0, td, np.array([1]), PQ)
    errors = {(v, r): e for v, r, e in ranking.entries}
    assert errors[(1, 1)] == 0
    assert errors[(1, -1)] == len(td)


def test_individual_errors_unlinked_peer_counts_both_ways():
    g = make_graph([(0, 10, 1)], n=13)
    td = [(10, 1), (11, -1)]
    ranking = individual_errors(g, 0, td, np.array([5]), PQ)
    errors = {(v, r): e for v, r, e in ranking.entries}
    assert errors[(5, 1)] == 2
    assert errors[(5, -1)] == 2


def test_individual_errors_three_target_hand_case():
    # signs (+1, -1, +1); peer opinions (+1, +1, 0)
    g = make_graph([(1, 10, 1), (1, 11, 1)], n=13)
    td = [(10, 1), (11, -1), (12, 1)]
    ranking = individual_errors(g, 0, td, np.array([1]), PQ)
    errors = {(v, r): e for v, r, e in ranking.entries}
    assert errors[(1, 1)] == 2   # wrong at targets 11 and 12
    assert errors[(1, -1)] == 2  # wrong at targets 10 and 12


def test_ranking_order_and_ties():
    # two peers with identical rows -> tie broken by id, then + before -
    g = make_graph([(1, 10, 1), (2, 10, 1)], n=12)
    td = [(10, 1)]
    ranking = individual_errors(g, 0, td, np.array([2, 1]), PQ)
    assert ranking.entries == [(1, 1, 0), (2, 1, 0), (1, -1, 1), (2, -1, 1)]


def test_ranking_simple_variant_single_entries():
    g = make_graph([(1, 10, 1)], n=12)
    ranking = individual_errors(g, 0, [(10, 1)], np.array([1]),
                                OpinionVariant.SIMPLE_ADJACENT)
    assert ranking.entries == [(1, 1, 0)]


# -- fit_subset ------------------------------------------------------------------


def test_fit_subset_single_perfect_candidate():
    g = make_graph([(1, 10, 1), (1, 11, -1)], n=12)
    td = [(10, 1), (11, -1)]
    vd = [(10, 1)]
    entries = individual_errors(g, 0, td, np.array([1]), PQ).entries
    fit = fit_subset(g, 0, entries, td, vd, _config())
    assert fit.trusted == [(1, 1)]
    assert fit.validation_error == 0
    assert not fit.used_training_error
    assert fit.chosen_lambda == pytest.approx(0.1)  # ties prefer smaller lambda


def test_fit_subset_no_signal_returns_empty_set():
    # candidates unlinked to every target: optimum at lambda>0 is empty
    g = make_graph([(0, 10, 1), (0, 11, -1), (0, 12, -1)], n=15)
    td = [(10, 1), (11, -1)]
    vd = [(10, 1), (11, -1), (12, -1)]
    entries = [(5, 1, 2), (5, -1, 2), (6, 1, 2), (6, -1, 2)]
    fit = fit_subset(g, 0, entries, td, vd, _config())
    assert fit.trusted == []
    # empty predictor says +1 everywhere -> errs exactly on negative edges
    assert fit.validation_error == 2


def test_fit_subset_rewards_anticorrelated_pair():
    g = make_graph([(1, 10, 1), (1, 12, -1), (2, 11, 1), (2, 13, -1)], n=14)
    td = [(10, 1), (11, 1), (12, -1), (13, -1)]
    vd = list(td)
    entries = individual_errors(g, 0, td, np.array([1, 2]), PQ).entries
    assert [e[2] for e in entries[:2]] == [2, 2]  # each alone errs
    fit = fit_subset(g, 0, entries, td, vd, _config())
    assert fit.trusted == [(1, 1), (2, 1)]
    assert fit.validation_error == 0


def test_fit_subset_validation_error_matches_recompute():
    rng = np.random.default_rng(83)
    triples = [(v, 10 + t, int(s)) for v in range(1, 6) for t, s in
               enumerate(np.where(rng.random(6) < 0.5, 1, -1)) if rng.random() < 0.7]
    g = make_graph(triples, n=20)
    td = [(10 + t, 1 if rng.random() < 0.6 else -1) for t in range(6)]
    vd = [(10 + t, 1 if rng.random() < 0.6 else -1) for t in range(6)]
    entries = individual_errors(g, 0, td, np.arange(1, 6), PQ).entries[:8]
    fit = fit_subset(g, 0, entries, td, vd, _config())
    targets = np.array([y for y, _ in vd])
    signs = np.array([s for _, s in vd])
    assert fit.validation_error == predictor_error(g, fit.trusted, targets, signs)


def test_fit_subset_huge_lambda_selects_nothing():
    g = make_graph([(1, 10, 1), (1, 11, -1)], n=12)
    td = [(10, 1), (11, -1)]
    # any set bit costs more than it can possibly save
    big = 2 * len(td) / 1.0 + len(td) / 1.0 + 1
    cfg = _config(lambda_min=big, lambda_max=big, lambda_step=1.0, n_scale=1.0)
    entries = individual_errors(g, 0, td, np.array([1]), PQ).entries
    fit = fit_subset(g, 0, entries, td, td, cfg)
    assert fit.trusted == []


def test_fit_subset_empty_vd_falls_back_to_training_error():
    g = make_graph([(1, 10, 1)], n=12)
    td = [(10, 1)]
    entries = individual_errors(g, 0, td, np.array([1]), PQ).entries
    fit = fit_subset(g, 0, entries, td, [], _config())
    assert fit.used_training_error
    assert fit.validation_error == 0


def test_fit_subset_with_tabu_solver_matches_exact():
    g = make_graph([(1, 10, 1), (1, 12, -1), (2, 11, 1), (2, 13, -1)], n=14)
    td = [(10, 1), (11, 1), (12, -1), (13, -1)]
    entries = individual_errors(g, 0, td, np.array([1, 2]), PQ).entries
    exact = fit_subset(g, 0, entries, td, td, _config())
    tabu = fit_subset(g, 0, entries, td, td, _config(
        solver="tabu", tabu=TabuParams(max_iterations=2000, time_limit=None)))
    assert tabu.trusted == exact.trusted
    assert tabu.validation_error == exact.validation_error


# -- merge ----------------------------------------------------------------------


def test_merge_trusted_cancels_conflicting_influences():
    assert merge_trusted([(1, 1), (2, -1)], [(1, -1), (3, 1)]) == [(2, -1), (3, 1)]
    assert merge_trusted([], [(4, 1)]) == [(4, 1)]
    assert merge_trusted([(4, 1)], [(4, 1)]) == [(4, 1)]


# -- train_node --------------------------------------------------------------------


def test_train_node_empty_td_gives_empty_predictor():
    g = make_graph([(1, 2, 1)], n=3)
    pred, logrec = train_node(g, 0, [], [(2, 1)], _config())
    assert pred.is_empty
    assert "empty-td" in logrec.flags


def test_train_node_early_stop_after_perfect_slice():
    # 1 is a perfect peer; 2..4 are noise candidates filling later slices
    triples = [(1, 10, 1), (1, 11, -1), (1, 12, 1), (1, 13, -1)]
    triples += [(v, 10, -1) for v in (2, 3, 4)]
    g = make_graph(triples, n=14)
    td = [(10, 1), (11, -1)]
    vd = [(12, 1), (13, -1)]  # empty predictor errs on the negative edge
    cfg = _config(d=2)
    pred, logrec = train_node(g, 0, td, vd, cfg, peers=np.array([1, 2, 3, 4]))
    assert logrec.final_error == 0
    assert logrec.slices_accepted == 1
    # reached 0 after the first slice, so at most one more was attempted
    assert logrec.slices_fitted <= 2 < 4
    assert (1, 1) in pred.trusted


def test_train_node_short_candidate_list_is_single_fit():
    g = make_graph([(1, 10, 1), (1, 11, -1), (2, 10, 1)], n=12)
    td = [(10, 1), (11, -1)]
    vd = [(11, -1)]  # empty predictor errs here, so a good fit is accepted
    cfg = _config(d=20)  # far above the 3 candidate entries
    pred, logrec = train_node(g, 0, td, vd, cfg, peers=np.array([1, 2]))
    entries = individual_errors(g, 0, td, np.array([1, 2]), PQ).entries
    fit = fit_subset(g, 0, entries, td, vd, cfg, seed_key=(0,))
    assert logrec.slices_fitted == 1
    assert pred.trusted == fit.trusted


def test_train_node_greedy_error_strictly_decreases():
    # d=1: peer 1 fixes target 11, peer 2 then fixes target 13, then stop
    g = make_graph([(1, 10, 1), (1, 11, -1), (2, 13, -1)], n=14)
    td = [(10, 1), (11, -1), (13, -1)]
    vd = [(11, -1), (13, -1)]
    cfg = _config(d=1)
    pred, logrec = train_node(g, 0, td, vd, cfg, peers=np.array([1, 2]))
    assert pred.trusted == [(1, 1), (2, 1)]
    assert logrec.slices_accepted == 2
    assert logrec.final_error == 0
    ev_t = np.array([y for y, _ in vd])
    ev_s = np.array([s for _, s in vd])
    # replay the accepted prefix: each extension strictly improved
    e0 = predictor_error(g, [], ev_t, ev_s)
    e1 = predictor_error(g, [(1, 1)], ev_t, ev_s)
    e2 = predictor_error(g, pred.trusted, ev_t, ev_s)
    assert e0 > e1 > e2 == logrec.final_error


def test_train_node_planted_recovery():
    params = PlantedParams(n=80, anchors=12, peers_per_node=3,
                           target_fraction=0.7, out_degree=25, seed=5)
    g, model = generate_planted(params)
    split = split_dataset(g, 0.2, seed=1)
    policy = PeerPolicy(PQ, p=5, q=0)
    cfg = _config(policy=policy)
    td = [(v, s) for u, v, s in split.train if u == 30]
    vd = [(v, s) for u, v, s in split.validation if u == 30]
    pred, logrec = train_node(g, 30, td, vd, cfg)
    test = [(v, s) for u, v, s in split.test if u == 30]
    if test:
        t = np.array([y for y, _ in test])
        s = np.array([sg for _, sg in test])
        assert predictor_error(g, pred.trusted, t, s) <= max(1, len(test) // 10)


# -- train_all ---------------------------------------------------------------------


def _tiny_split(g, frac=0.34, seed=0):
    return split_dataset(g, frac, seed)


def test_train_all_single_source():
    g = make_graph([(0, 10, 1), (0, 11, -1), (0, 12, -1), (1, 10, 1),
                    (1, 11, -1), (1, 12, -1)], n=13)
    split = DatasetSplit(train=[(0, 10, 1), (0, 11, -1)],
                         validation=[(0, 12, -1)], test=[], seed=0)
    preds, logs = train_all(g, split, _config(), workers=1)
    assert set(preds) == {0}
    assert len(logs) == 1
    assert not preds[0].is_empty


def test_train_all_independent_sources_match_solo_runs():
    triples = [(0, 10, 1), (0, 11, -1), (2, 10, 1), (2, 11, -1),
               (5, 12, 1), (5, 13, -1), (6, 12, 1), (6, 13, -1)]
    g = make_graph(triples, n=14)
    split = DatasetSplit(
        train=[(0, 10, 1), (0, 11, -1), (5, 12, 1), (5, 13, -1)],
        validation=[(0, 10, 1), (5, 12, 1)],
        test=[], seed=0)
    cfg = _config()
    preds, _ = train_all(g, split, cfg, workers=1)

    solo0, _ = train_node(g, 0, [(10, 1), (11, -1)], [(10, 1)], cfg)
    solo5, _ = train_node(g, 5, [(12, 1), (13, -1)], [(12, 1)], cfg)
    assert preds[0].trusted == solo0.trusted
    assert preds[5].trusted == solo5.trusted


def test_train_all_per_node_independence():
    # removing the other source's training rows leaves x's predictor unchanged
    triples = [(0, 10, 1), (0, 11, -1), (3, 10, -1), (3, 11, 1),
               (1, 10, 1), (1, 11, -1), (2, 10, -1), (2, 11, 1)]
    g = make_graph(triples, n=12)
    full = DatasetSplit(
        train=[(0, 10, 1), (0, 11, -1), (3, 10, -1), (3, 11, 1)],
        validation=[(0, 10, 1), (3, 11, 1)], test=[], seed=0)
    only_x = DatasetSplit(
        train=[(0, 10, 1), (0, 11, -1)],
        validation=[(0, 10, 1)], test=[], seed=0)
    cfg = _config()
    preds_full, _ = train_all(g, full, cfg, workers=1)
    preds_solo, _ = train_all(g, only_x, cfg, workers=1)
    assert preds_full[0].trusted == preds_solo[0].trusted


def test_train_all_deterministic_and_parallel_consistent():
    params = PlantedParams(n=60, anchors=10, peers_per_node=3,
                           target_fraction=0.6, out_degree=15, seed=9)
    g, _ = generate_planted(params)
    split = split_dataset(g, 0.2, seed=2)
    cfg = _config(policy=PeerPolicy(PQ, p=3, q=0), seed=7)
    a, _ = train_all(g, split, cfg, workers=1)
    b, _ = train_all(g, split, cfg, workers=1)
    assert {k: v.trusted for k, v in a.items()} == {k: v.trusted for k, v in b.items()}
    c, _ = train_all(g, split, cfg, workers=2)
    assert {k: v.trusted for k, v in a.items()} == {k: v.trusted for k, v in c.items()}


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(d=0)
    with pytest.raises(ConfigError):
        TrainConfig(lambda_min=0.5, lambda_max=0.1)
    with pytest.raises(ConfigError):
        TrainConfig(lambda_step=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(solver="exact", d=30)
    TrainConfig(solver="tabu", d=30)  # tabu has no size guard


def test_lambda_grid_default_has_six_points():
    grid = TrainConfig().lambda_grid()
    assert grid == pytest.approx([0.1, 0.15, 0.2, 0.25, 0.3, 0.35])
