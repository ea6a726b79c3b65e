import itertools
import json

import numpy as np
import pytest

from delchan.adversary import (
    AdversaryParams,
    CompressedRecord,
    Matcher,
    RepFamily,
    build_adversary,
    compress,
    derive_G_Q,
    family_bound,
    kbar_bound,
    simulate_query,
    structural_distance,
)
from delchan.codeword import Code
from delchan.delpat import NO_DELETION, LayeredPattern, apply, sample_instance, total_corruption_bound
from delchan.errors import BudgetExceeded, NoMatch, QTooLarge
from delchan.harness import ab_string, block_string
from delchan.querydist import ERR, mc_output_dist, tv_distance

SMALL = AdversaryParams(kappa=2, m=6, rho=0.2)


def test_params_validation():
    with pytest.raises(ValueError):
        AdversaryParams(preliminary_fraction=0.0)
    with pytest.raises(ValueError):
        AdversaryParams(grid=1)
    with pytest.raises(ValueError):
        AdversaryParams(window=0)
    p = AdversaryParams()
    assert AdversaryParams.from_json(json.loads(json.dumps(p.__dict__))) == p
    assert p.resolved()["stride"] == 4**4


def test_constant_code_has_no_events():
    rep = build_adversary(["0" * 64], SMALL)
    assert rep.events == []
    assert rep.F[1] == [()]
    # phase 1 only: every list over the seed set
    seed_set = sorted({d for diffs in rep.F[2] for d in diffs})
    assert len(rep.F[3]) == len(seed_set) ** 2
    assert total_corruption_bound(rep.pattern) <= SMALL.budget


def test_block_string_triggers_block_scale():
    z = ("0" * 8 + "1" * 8) * 4
    rep = build_adversary([z], SMALL)
    assert any(e["layer"] == 4 for e in rep.events)
    assert rep.pattern.f_del[3] == SMALL.significant_fraction


def test_budget_exceeded():
    params = AdversaryParams(kappa=2, m=6, preliminary_fraction=0.09, top_fraction=0.05)
    with pytest.raises(BudgetExceeded):
        build_adversary(["0" * 64], params)


def test_budget_on_random_codes():
    for seed in range(3):
        code = Code("random", 4, params={"length": 64, "seed": seed})
        for rho in (0.1, 0.2):
            rep = build_adversary(code, AdversaryParams(kappa=2, m=6, rho=rho))
            assert total_corruption_bound(rep.pattern) <= 0.1


def test_family_sizes_within_bound():
    rep = build_adversary([block_string(64)], SMALL)
    bound = family_bound(rep.F, SMALL)
    for r, lists in rep.F.items():
        assert len(lists) <= bound[r]
        assert all(len(d) == r - 1 for d in lists)


def test_rejects_wrong_length():
    with pytest.raises(ValueError):
        build_adversary(["0" * 32], SMALL)


def test_derive_examples():
    G, Q = derive_G_Q({1: [()], 2: [(1,)]}, k=1, stride=4, M=8)
    assert G == [1, 4, 8] and Q == [(1,), (4,), (8,)]
    G, Q = derive_G_Q({1: [()]}, k=2, stride=4, M=8)
    assert G == [4, 8] and Q == [(4, 8)]
    with pytest.raises(QTooLarge):
        derive_G_Q({1: [()]}, k=2, stride=1, M=64, max_q=10)


def test_q_lists_in_range_and_increasing():
    rep = build_adversary([block_string(64)], SMALL)
    for q in rep.Q:
        assert len(q) == SMALL.k and q[-1] <= 64
        assert all(a < b for a, b in zip(q, q[1:]))
    assert len(rep.Q) * SMALL.k <= rep.kbar


def test_kbar_depends_on_params_only():
    a = build_adversary(Code("random", 4, params={"length": 64, "seed": 1}), SMALL)
    b = build_adversary(Code("random", 8, params={"length": 64, "seed": 2}), SMALL)
    assert a.kbar == b.kbar == kbar_bound(SMALL)


def test_json_roundtrip():
    rep = build_adversary([block_string(64)], SMALL)
    back = RepFamily.from_json(json.loads(json.dumps(rep.to_json())))
    assert back.Q == rep.Q and back.pattern == rep.pattern and back.F == rep.F and back.kbar == rep.kbar


def _identity_rep(Q, M=64):
    params = AdversaryParams(kappa=2, m=6)
    return RepFamily({1: [()]}, [], Q, LayeredPattern(2, (0.0,) * 6), params)


def test_compress_no_deletion_reads_directly():
    z = block_string(64)
    rep = _identity_rep([(1, 9), (3, 40), (60, 64)])
    rec = compress(z, rep, seed=0)
    assert rec.values == {q: z[q[0] - 1] + z[q[1] - 1] for q in rep.Q}
    assert rec.values[(1, 9)] == "01"


def test_compress_constant_and_keys():
    rep = build_adversary([block_string(64)], SMALL)
    rec = compress("0" * 64, rep, seed=5)
    assert set(rec.values) == set(rep.Q)
    assert all(v == ERR or set(v) == {"0"} for v in rec.values.values())
    assert compress("0" * 64, rep, seed=5) == rec


def test_compress_matches_single_draw():
    z = block_string(64)
    rep = build_adversary([z], SMALL)
    for seed in range(5):
        rec = compress(z, rep, seed)
        out, _ = apply(z, sample_instance(rep.pattern, 64, seed))
        for q, v in rec.values.items():
            assert v == (ERR if q[-1] > len(out) else "".join(out[i - 1] for i in q))


def test_simulate_self_match_and_nomatch():
    z = block_string(64)
    rep = build_adversary([z], SMALL)
    rec = compress(z, rep, seed=2)
    for q in rep.Q[:20]:
        assert simulate_query(rec, q, rep) == rec.values[q]
        assert simulate_query(rec, q, rep, "empirical", image=[z], samples=200) == rec.values[q]
    empty = _identity_rep([])
    with pytest.raises(NoMatch):
        simulate_query(CompressedRecord({}, 2, 0, 0), (1, 2), empty)


def test_structural_distance():
    assert structural_distance((4, 8), (4, 8)) == 0
    assert structural_distance((4, 8), (8, 12)) == 1
    assert structural_distance((2, 4), (2, 6)) == 1


def _worst_tv(z, params):
    rep = build_adversary([z], params)
    stride = params.resolved()["stride"]
    Q = set(rep.Q)
    tests = [(a, b + 1) for a, b in rep.Q if b - a < stride and a >= stride and (a, b + 1) not in Q]
    tests = tests[:: max(1, len(tests) // 25)]
    matcher = Matcher(rep, "empirical", [z], seed=1)
    worst = 0.0
    for qs in tests:
        direct = mc_output_dist(z, qs, rep.pattern, 10_000, seed=7)
        simulated = mc_output_dist(z, matcher.match(qs), rep.pattern, 10_000, seed=8)
        worst = max(worst, tv_distance(direct, simulated))
    return worst, len(tests)


def test_fidelity_block_string():
    worst, n = _worst_tv(block_string(4096), AdversaryParams(kappa=4, m=6))
    assert n >= 20 and worst < 0.1


def test_fidelity_ab_string():
    # every gap up to kappa^3 kept exactly, and one deletion coin per 16 symbols
    params = AdversaryParams(kappa=4, m=6, small_cap=64, preliminary_fraction=0.0625, budget=0.2)
    worst, n = _worst_tv(ab_string(4096, 2, 6), params)
    assert n >= 20 and worst < 0.1
