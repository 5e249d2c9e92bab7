import numpy as np
import pytest

from hmglearn.kg import (
    EmptyFile,
    KINDS,
    MalformedLine,
    DimensionMismatch,
    UnknownEntityAtLookup,
    load_embeddings,
    load_triples,
    save_embeddings,
    train_transe,
    transe_energy,
    two_hop_edges,
    KnowledgeGraph,
    EmbeddingTable,
)
from hmglearn.rng import stream


def write_triples(tmp_path, lines, name="kg.tsv"):
    path = tmp_path / name
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


def test_load_example_from_hierarchy(tmp_path):
    path = write_triples(tmp_path, [
        "C\tisPartOf\tAcetal",
        "C\thasWeight\tWeight2",
        "O\tisInPeriod\tPeriod2",
    ])
    kg = load_triples(path)
    assert len(kg.entity_names) == 5
    assert len(kg.relation_names) == 3
    assert len(kg.triples) == 3
    assert kg.kind_of(kg.entity_id("C")) == "element"
    assert kg.kind_of(kg.entity_id("O")) == "element"


def test_empty_file_rejected(tmp_path):
    path = write_triples(tmp_path, ["# only a comment"])
    with pytest.raises(EmptyFile):
        load_triples(path)


def test_duplicates_dropped_and_counted(tmp_path):
    path = write_triples(tmp_path, ["A\tr\tB", "A\tr\tB"])
    kg = load_triples(path)
    assert len(kg.triples) == 1
    assert kg.duplicates_dropped == 1


def test_malformed_line(tmp_path):
    path = write_triples(tmp_path, ["A\tr"])
    with pytest.raises(MalformedLine):
        load_triples(path)


def test_kind_conventions(tmp_path):
    path = write_triples(tmp_path, [
        "Acetal\thasSmarts\tO[CH1][OX2H0]",
        "C\tisPartOf\tAcetal",
        "Nonmetals\tkindIs\tclass",
        "DB001\tkindIs\tdrug",
        "DB001\ttargets\tGeneX",
    ])
    kg = load_triples(path)
    assert kg.kind_of(kg.entity_id("Acetal")) == "functional_group"
    assert kg.kind_of(kg.entity_id("O[CH1][OX2H0]")) == "property"
    assert kg.kind_of(kg.entity_id("Nonmetals")) == "class"
    assert kg.kind_of(kg.entity_id("DB001")) == "drug"
    assert kg.group_patterns == {"Acetal": "O[CH1][OX2H0]"}
    # kindIs pseudo-triples are consumed, not stored.
    assert all(kg.relation_names[r] != "kindIs" for _, r, _ in kg.triples)


def test_shared_property_gives_two_hop_edge(tmp_path):
    path = write_triples(tmp_path, ["C\thasWeight\tW2", "O\thasWeight\tW2"])
    kg = load_triples(path)
    edges = two_hop_edges(kg, ("element", "element"))
    assert len(edges) == 1
    a, b = edges[0].endpoints
    assert {kg.entity_names[a], kg.entity_names[b]} == {"C", "O"}
    feat = edges[0].hop_feature()
    assert feat.sum() == 3.0  # kind one-hot + two relation buckets


def test_no_shared_intermediate_no_edges(tmp_path):
    path = write_triples(tmp_path, ["C\thasWeight\tW2", "O\thasWeight\tW3"])
    kg = load_triples(path)
    assert two_hop_edges(kg, ("element", "element")) == []


def test_parallel_edge_multiplicity(tmp_path):
    # Two shared intermediates, one with two relation combinations.
    path = write_triples(tmp_path, [
        "C\thasWeight\tW2",
        "O\thasWeight\tW2",
        "O\tgroupedWith\tW2",
        "C\tisInPeriod\tP2",
        "O\tisInPeriod\tP2",
    ])
    kg = load_triples(path)
    edges = two_hop_edges(kg, ("element", "element"))
    # Via W2: (hasWeight, hasWeight) and (hasWeight, groupedWith); via P2: one.
    assert len(edges) == 3
    assert len({e.multiplicity_key for e in edges}) == 3


def brute_force_two_hop(kg, kind_pair):
    """Oracle: endpoint-pair-centric enumeration over all entity pairs."""
    kind_a, kind_b = kind_pair
    found = []
    n = len(kg.entity_names)

    def rels_between(x, y):
        out = set()
        for h, r, t in kg.triples:
            if (h == x and t == y) or (h == y and t == x):
                out.add(r)
        return out

    for a in range(n):
        if kg.entity_kinds[a] != kind_a:
            continue
        for b in range(n):
            if kg.entity_kinds[b] != kind_b or a == b:
                continue
            if kind_a == kind_b and a > b:
                continue
            for mid in range(n):
                if mid in (a, b):
                    continue
                for ra in rels_between(a, mid):
                    for rb in rels_between(mid, b):
                        found.append((a, b, mid, ra, rb))
    return sorted(found)


@pytest.mark.parametrize("seed", range(100))
def test_two_hop_matches_brute_force_on_random_kgs(seed):
    rng = stream(seed, "kg-fuzz")
    n_entities = int(rng.integers(5, 31))
    n_rel = int(rng.integers(1, 5))
    kg = KnowledgeGraph()
    for i in range(n_entities):
        kg.entity_id(f"e{i}")
        kg.entity_kinds[i] = KINDS[int(rng.integers(len(KINDS)))]
    for r in range(n_rel):
        kg.relation_id(f"r{r}")
    for _ in range(60):
        h = int(rng.integers(n_entities))
        t = int(rng.integers(n_entities))
        if h == t:
            continue
        kg.add_triple(f"e{h}", f"r{int(rng.integers(n_rel))}", f"e{t}")
    for pair in [("element", "element"), ("functional_group", "functional_group"),
                 ("element", "functional_group")]:
        edges = two_hop_edges(kg, pair)
        got = sorted(
            (e.endpoints[0], e.endpoints[1], e.multiplicity_key[0],
             e.multiplicity_key[1][0], e.multiplicity_key[1][1])
            for e in edges
        )
        assert got == brute_force_two_hop(kg, pair)


@pytest.fixture(scope="module")
def toy_kg(tmp_path_factory):
    path = tmp_path_factory.mktemp("kg") / "toy.tsv"
    lines = [
        "d1\ttargets\tg1",
        "d2\ttargets\tg1",
        "d3\ttargets\tg2",
        "d1\ttreats\ts1",
        "d3\ttreats\ts1",
    ]
    path.write_text("".join(x + "\n" for x in lines), encoding="utf-8")
    return load_triples(path)


def test_transe_separates_true_from_corrupted(toy_kg):
    table = train_transe(toy_kg, dim=8, epochs=200, seed=3)
    rng = stream(3, "transe-test-negatives")
    true_energy = np.mean([transe_energy(table, toy_kg, t) for t in toy_kg.triple_order])
    corrupted = []
    for h, r, t in toy_kg.triple_order:
        bad = (h, r, int(rng.integers(len(toy_kg.entity_names))))
        if bad in toy_kg.triples:
            bad = (int(rng.integers(len(toy_kg.entity_names))), r, t)
        corrupted.append(transe_energy(table, toy_kg, bad))
    assert true_energy < np.mean(corrupted)


def test_transe_loss_decreases_over_first_50_epochs(toy_kg):
    trace = []
    train_transe(toy_kg, dim=8, epochs=50, step_size=0.01, seed=0, loss_trace=trace)
    assert trace[-1] < trace[0]


def test_transe_deterministic(toy_kg):
    a = train_transe(toy_kg, dim=6, epochs=30, seed=11)
    b = train_transe(toy_kg, dim=6, epochs=30, seed=11)
    for name in a.vectors:
        assert np.array_equal(a.vectors[name], b.vectors[name])


def test_margin_hinge_is_zero_when_separated():
    pos_d, neg_d, margin = 0.1, 2.0, 1.0
    assert max(0.0, margin + pos_d - neg_d) == 0.0


def test_embeddings_round_trip(tmp_path):
    table = EmbeddingTable(dim=4, vectors={
        "a": np.array([0.1, -0.25, 1.0, 3.5]),
        "b": np.array([0.0, 0.5, -1.5, 2.25]),
    })
    path = tmp_path / "emb.tsv"
    save_embeddings(path, table)
    loaded = load_embeddings(path)
    assert loaded.dim == 4
    for name in table.vectors:
        assert np.array_equal(loaded.vectors[name], table.vectors[name])
    with pytest.raises(UnknownEntityAtLookup):
        loaded.lookup("missing")


def test_ragged_embeddings_rejected(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\t1.0\t2.0\nb\t1.0\n", encoding="utf-8")
    with pytest.raises(DimensionMismatch):
        load_embeddings(path)
