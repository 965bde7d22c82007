import numpy as np
import pytest

from pkgc.errors import CandidateSpaceTooLarge, DataError
from pkgc.kg import NO_CLASS, ClassDict, FactSet, pack
from pkgc.mining import (
    MiningConfig,
    QueryPlan,
    SemanticValidityFilter,
    build_svf,
    mine,
    mine_naive,
    mine_random,
    valid_queries,
)
from pkgc.models import EmbeddingModel
from tests.test_models import make_model


# ---------------------------------------------------------------- oracles


def query_valid(svf, q, r_aug, n_rel):
    if svf is None:
        return True
    c = int(svf.class_of[q])
    if c == NO_CLASS:
        return True
    if r_aug < n_rel:
        return (c, r_aug) in svf.head_pairs
    return (r_aug - n_rel, c) in svf.tail_pairs


def candidate_valid(svf, e, r_aug, n_rel, svf_tails):
    if svf is None or not svf_tails:
        return True
    c = int(svf.class_of[e])
    if c == NO_CLASS:
        return True
    if r_aug < n_rel:
        return (r_aug, c) in svf.tail_pairs
    return (c, r_aug - n_rel) in svf.head_pairs


def brute_mine(model, visited, n_c, svf=None, svf_tails=True):
    """Triple-loop oracle over scalar scores, independent of the miners."""
    view = model.mining_view()
    best = {}
    n_rel = model.n_relations
    for r_aug in range(2 * n_rel):
        for q in range(model.n_entities):
            if not query_valid(svf, q, r_aug, n_rel):
                continue
            for e in range(model.n_entities):
                if not candidate_valid(svf, e, r_aug, n_rel, svf_tails):
                    continue
                if r_aug < n_rel:
                    p = pack(q, r_aug, e)
                else:
                    p = pack(e, r_aug - n_rel, q)
                if p in visited:
                    continue
                s = view.score(q, r_aug, e)
                if p not in best or s > best[p]:
                    best[p] = s
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return [p for p, _ in ranked[:n_c]]


def random_instance(seed, n_e=8, n_r=2, family="complex", with_classes=False):
    rng = np.random.default_rng(seed)
    model = make_model(family, dim=4, n_e=n_e, n_r=n_r, seed=seed)
    known = FactSet.from_triples(
        {
            (int(rng.integers(n_e)), int(rng.integers(n_r)), int(rng.integers(n_e)))
            for _ in range(3 * n_e)
        }
    )
    visited = known.copy()
    extra_h = rng.integers(0, n_e, n_e)
    extra_r = rng.integers(0, n_r, n_e)
    extra_t = rng.integers(0, n_e, n_e)
    visited.update(pack(int(h), int(r), int(t)) for h, r, t in zip(extra_h, extra_r, extra_t))
    svf = None
    if with_classes:
        class_of = rng.integers(0, 3, n_e).astype(np.int32)
        class_of[rng.random(n_e) < 0.25] = NO_CLASS  # some entities classless
        classes = ClassDict(class_of, ["c0", "c1", "c2"])
        svf = build_svf(known, classes, n_e)
    return model, known, visited, svf


# ---------------------------------------------------------------- SVF


def test_svf_example_city_relation():
    # known: (cityA, isCityOf, countryB); classes: city/country; humanC is a human
    known = FactSet.from_triples([(0, 0, 1)])
    classes = ClassDict(np.array([0, 1, 2], np.int32), ["city", "country", "human"])
    svf = build_svf(known, classes, 3)
    assert (0, 0) in svf.head_pairs  # (city, isCityOf)
    assert (0, 1) in svf.tail_pairs  # (isCityOf, country)
    assert svf.head_mask(0, 3).tolist() == [True, False, False]
    assert not query_valid(svf, 2, 0, 1)  # (humanC, isCityOf) pruned


def test_svf_empty_known_passes_classless():
    classes = ClassDict.empty(4)
    svf = build_svf(FactSet(), classes, 4)
    assert svf.head_mask(0, 4).all()  # classless entities never constrained
    plan = QueryPlan.build(4, 2, svf)
    assert plan.total_queries == 4 * 4


def test_svf_known_facts_always_pass():
    model, known, visited, svf = random_instance(3, with_classes=True)
    for p in known:
        h = (p >> 21) & ((1 << 21) - 1)
        r = p >> 42
        t = p & ((1 << 21) - 1)
        assert query_valid(svf, h, r, model.n_relations)
        assert candidate_valid(svf, t, r, model.n_relations, True)


def test_svf_cover_rate_full_when_schema_closed():
    model, known, visited, svf = random_instance(5, with_classes=True)
    assert svf.cover_rate(known, model.n_relations, model.n_entities) == 1.0


# ---------------------------------------------------------------- queries


def test_valid_queries_full_cross_product_when_disabled():
    plan = valid_queries(FactSet(), None, 5, 3)
    assert plan.total_queries == 5 * 2 * 3
    pairs = list(plan.pairs())
    assert pairs[:6] == [(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (0, 1)]
    assert pairs == sorted(pairs, key=lambda hr: (hr[1], hr[0]))


def test_valid_queries_matches_bruteforce_filter():
    model, known, visited, svf = random_instance(7, with_classes=True)
    plan = valid_queries(known, svf, model.n_entities, model.n_relations)
    expected = [
        (q, r_aug)
        for r_aug in range(2 * model.n_relations)
        for q in range(model.n_entities)
        if query_valid(svf, q, r_aug, model.n_relations)
    ]
    assert list(plan.pairs()) == expected


def test_segments_cover_everything_once():
    plan = valid_queries(FactSet(), None, 7, 2)
    seen = []
    start = 0
    sizes = [1, 2, 4, 8, 8, 8]
    for size in sizes:
        for r_aug, lo, hi in plan.segments(start, size):
            seen.extend((int(q), r_aug) for q in plan.heads[r_aug][lo:hi])
        start += size
        if start >= plan.total_queries:
            break
    assert seen == list(plan.pairs())


# ---------------------------------------------------------------- miners


def test_mine_naive_matches_bruteforce_oracle():
    for seed in range(6):
        model, known, visited, svf = random_instance(seed, with_classes=seed % 2 == 0)
        expected = brute_mine(model, visited, 5, svf=svf)
        got = mine_naive(model, known, visited, 5, svf=svf)
        assert sorted(got.facts) == sorted(expected)
        assert [p for p, _ in got.ranked] == expected


def test_mine_naive_nc_zero_and_all():
    model, known, visited, svf = random_instance(11)
    assert len(mine_naive(model, known, visited, 0).facts) == 0
    space = model.n_entities**2 * model.n_relations
    everything = mine_naive(model, known, visited, space)
    assert len(everything.facts) == space - len(visited)
    assert everything.stats.shortfall


def test_mine_naive_guard():
    model, known, visited, _ = random_instance(2)
    with pytest.raises(CandidateSpaceTooLarge):
        mine_naive(model, known, visited, 3, guard=10)


TOGGLES = [(False, False), (True, False), (False, True), (True, True)]


@pytest.mark.parametrize("root_filter,warm_up", TOGGLES)
def test_mine_equals_naive_all_toggles(root_filter, warm_up):
    for seed in range(8):
        model, known, visited, _ = random_instance(seed, n_e=12, n_r=3)
        cfg = MiningConfig(n_c=6, b_m_max=5, warm_up=warm_up, root_filter=root_filter, svf=False)
        got = mine(model, known, visited, None, cfg)
        want = mine_naive(model, known, visited, 6)
        assert got.facts == want.facts
        assert got.ranked == want.ranked


def test_mine_with_svf_equals_restricted_oracle():
    for seed in range(8):
        model, known, visited, svf = random_instance(seed, n_e=10, n_r=2, with_classes=True)
        cfg = MiningConfig(n_c=5, b_m_max=7)
        got = mine(model, known, visited, svf, cfg)
        want = mine_naive(model, known, visited, 5, svf=svf)
        assert got.facts == want.facts
        assert got.ranked == want.ranked


def test_mine_never_returns_visited():
    model, known, visited, _ = random_instance(13)
    cfg = MiningConfig(n_c=20, b_m_max=16)
    got = mine(model, known, visited, None, cfg)
    assert got.facts.isdisjoint(visited)


def test_mine_requires_visited_superset_of_known():
    model, known, visited, _ = random_instance(1)
    with pytest.raises(DataError):
        mine(model, known, FactSet(), None, MiningConfig(n_c=3))


def test_warmup_batch_size_schedule():
    model, known, visited, _ = random_instance(4, n_e=10, n_r=2)
    cfg = MiningConfig(n_c=4, b_m_max=8, warm_up=True, svf=False)
    got = mine(model, known, visited, None, cfg)
    sizes = [b.batch_size for b in got.stats.batches]
    assert sizes[:4] == [1, 2, 4, 8]
    assert all(s == 8 for s in sizes[4:-1])


def test_warmup_off_uses_fixed_batches():
    model, known, visited, _ = random_instance(4, n_e=10, n_r=2)
    cfg = MiningConfig(n_c=4, b_m_max=8, warm_up=False, svf=False)
    got = mine(model, known, visited, None, cfg)
    assert all(b.batch_size == 8 for b in got.stats.batches[:-1])


def test_first_batch_passes_everything():
    # all-dummy heap: -inf root filters nothing
    model, known, visited, _ = random_instance(9, n_e=10, n_r=2)
    cfg = MiningConfig(n_c=3, b_m_max=4, svf=False)
    got = mine(model, known, visited, None, cfg)
    assert got.stats.batches[0].pass_rate == 1.0


def test_warmup_is_schedule_only():
    # warm-up on its own never changes the mined set
    model, known, visited, _ = random_instance(6, n_e=12, n_r=2)
    a = mine(model, known, visited, None, MiningConfig(n_c=5, b_m_max=6, warm_up=True, root_filter=False, svf=False))
    b = mine(model, known, visited, None, MiningConfig(n_c=5, b_m_max=6, warm_up=False, root_filter=False, svf=False))
    assert a.facts == b.facts and a.ranked == b.ranked


def test_shortfall_counted_not_error():
    model, known, visited, _ = random_instance(3, n_e=4, n_r=1)
    space = 4 * 4 * 1
    cfg = MiningConfig(n_c=space + 5, b_m_max=4, svf=False)
    got = mine(model, known, visited, None, cfg)
    assert got.stats.shortfall
    assert len(got.facts) == space - len(visited)


def test_pass_rate_declines_within_run():
    model, known, visited, _ = random_instance(21, n_e=30, n_r=3)
    cfg = MiningConfig(n_c=10, b_m_max=32, svf=False)
    got = mine(model, known, visited, None, cfg)
    rates = [b.pass_rate for b in got.stats.batches if b.candidates]
    quartile = max(1, len(rates) // 4)
    assert np.mean(rates[-quartile:]) <= np.mean(rates[:quartile])


def test_mine_random_baseline():
    visited = FactSet.from_triples([(0, 0, 1)])
    picked = mine_random(5, 2, visited, 10, np.random.default_rng(0))
    assert len(picked) == 10
    assert picked.isdisjoint(visited)
