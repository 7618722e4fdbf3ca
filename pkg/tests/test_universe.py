import json
import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftsearch.errors import MissingPackage
from driftsearch.universe import (
    KnowledgeBase,
    PackageIndex,
    SnippetManifest,
    extract_imports,
    generate_candidates,
    install_order,
    resolve_direct_dependencies,
    transitive_closure,
)


def index_of(graph: dict[str, list[str]], versions=("1.0.0",)) -> PackageIndex:
    return PackageIndex.from_json(
        {"packages": {p: {"releases": [{"version": v, "deps": [{"name": d} for d in deps]} for v in versions]}
                      for p, deps in graph.items()}}
    )


KB = KnowledgeBase(
    {
        "theano": frozenset({"Theano"}),
        "lasagne": frozenset({"Lasagne"}),
        "sklearn": frozenset({"scikit-learn"}),
        "keras": frozenset({"Keras"}),
        "yaml": frozenset({"PyYAML", "ruamel.yaml"}),
    },
    frozenset({"math", "os", "sys", "functools"}),
)


@pytest.mark.parametrize(
    "source, expected",
    [
        ("from sphinx import addnodes", ["sphinx.addnodes", "sphinx"]),
        ("import math", ["math"]),
        ("import os.path as osp, sys", ["os.path", "sys"]),
        ("from a.b import (c,\n    d as e)\n", ["a.b.c", "a.b", "a.b.d"]),
        ("from x import *", ["x"]),
        ("print 'hi'\nfrom . import rel\nimport math\nimport math", ["math"]),
    ],
)
def test_extract_imports(source, expected):
    assert extract_imports(source) == expected


def test_extract_fig1_fragment():
    src = "import math\nfrom theano import tensor\nfrom theano.sandbox.rng_mrg import MRG_RandomStreams\nfrom lasagne import init\n"
    found = extract_imports(src)
    assert {"theano.tensor", "theano.sandbox.rng_mrg", "lasagne.init"} <= set(found)


@pytest.mark.parametrize(
    "imports, expected",
    [
        (["math", "theano.tensor", "lasagne.init"], {"Theano", "Lasagne"}),
        (["os", "sys"], set()),
        (["sklearn.cross_validation", "keras.models"], {"scikit-learn", "Keras"}),
        (["yaml"], {"PyYAML", "ruamel.yaml"}),
        (["nowhere.to.be.found"], set()),
    ],
)
def test_direct_dependencies(imports, expected):
    assert resolve_direct_dependencies(imports, KB) == expected


def test_longest_prefix_wins():
    kb = KnowledgeBase({"google": frozenset({"protobuf"}), "google.cloud": frozenset({"google-cloud"})})
    assert kb.lookup("google.cloud.storage") == {"google-cloud"}
    assert kb.lookup("google.api") == {"protobuf"}


def test_stdlib_wins_over_module_map():
    kb = KnowledgeBase({"os": frozenset({"os-shadow"})}, frozenset({"os"}))
    assert resolve_direct_dependencies(["os.path"], kb) == set()


def test_closure_examples():
    idx = index_of({"Lasagne": ["Theano"], "Theano": []})
    assert transitive_closure({"Lasagne"}, idx) == {"Lasagne", "Theano"}
    assert transitive_closure(set(), idx) == set()
    diamond = index_of({"A": ["B", "C"], "B": ["D"], "C": ["D"], "D": []})
    assert transitive_closure({"A"}, diamond) == {"A", "B", "C", "D"}


def test_closure_reports_missing_package():
    idx = index_of({"A": ["ghost"]})
    with pytest.raises(MissingPackage):
        transitive_closure({"A"}, idx)


def test_closure_follows_pinned_version():
    idx = PackageIndex.from_json({"packages": {
        "A": {"releases": [{"version": "1.0", "deps": [{"name": "B"}]}, {"version": "2.0", "deps": []}]},
        "B": {"releases": [{"version": "1.0"}]},
    }})
    assert transitive_closure({"A"}, idx) == {"A"}
    assert transitive_closure({"A"}, idx, {"A": idx.history("A").releases[0]}) == {"A", "B"}


def test_install_order_examples():
    assert install_order({"Lasagne", "Theano"}, index_of({"Lasagne": ["Theano"], "Theano": []})).packages == [
        "Theano", "Lasagne"]
    assert install_order({"A"}, index_of({"A": []})).packages == ["A"]


def test_two_cycle_is_broken_at_smallest_package():
    res = install_order({"A", "B"}, index_of({"A": ["B"], "B": ["A"]}))
    assert res.packages == ["A", "B"]
    # A's dependency on B is the constraint that had to go
    assert res.broken_edges == [("A", "B")]


def test_cycle_behind_another_cycle_terminates():
    # {a, b} waits on the {x, y} cycle; a naive victim choice would spin on a
    g = {"a": ["b", "x"], "b": ["a"], "x": ["y"], "y": ["x"]}
    res = install_order(set(g), index_of(g))
    assert sorted(res.packages) == sorted(g)
    assert res.packages.index("x") < res.packages.index("a")


def test_self_loop_recorded():
    res = install_order({"A"}, index_of({"A": ["A"]}))
    assert res.packages == ["A"] and res.broken_edges == [("A", "A")]


def random_graph(rng, n, p, acyclic):
    names = [f"p{i:02d}" for i in range(n)]
    rng.shuffle(names)
    g = {}
    for i, a in enumerate(names):
        pool = names[i + 1:] if acyclic else [b for b in names if b != a]
        g[a] = [b for b in pool if rng.random() < p]
    return g


@pytest.mark.parametrize("seed", range(40))
def test_dag_order_respects_every_edge(seed):
    rng = random.Random(seed)
    g = random_graph(rng, rng.randint(1, 20), rng.random() * 0.4, acyclic=True)
    res = install_order(set(g), index_of(g))
    assert sorted(res.packages) == sorted(g)
    assert res.broken_edges == []
    pos = {p: i for i, p in enumerate(res.packages)}
    for a, deps in g.items():
        for b in deps:
            assert pos[b] < pos[a]
    # same answer as networkx's lexicographic topological sort on dependency-first edges
    dg = nx.DiGraph()
    dg.add_nodes_from(g)
    dg.add_edges_from((b, a) for a, deps in g.items() for b in deps)
    assert res.packages == list(nx.lexicographical_topological_sort(dg))


@pytest.mark.parametrize("seed", range(40))
def test_cyclic_order_respects_all_unbroken_edges(seed):
    rng = random.Random(1000 + seed)
    g = random_graph(rng, rng.randint(2, 12), rng.random() * 0.3, acyclic=False)
    res = install_order(set(g), index_of(g))
    assert sorted(res.packages) == sorted(g)
    broken = set(res.broken_edges)
    pos = {p: i for i, p in enumerate(res.packages)}
    for a, deps in g.items():
        for b in deps:
            if (a, b) not in broken:
                assert pos[b] < pos[a], (a, b)
    for a, b in broken:
        assert nx.has_path(nx.DiGraph([(x, y) for x, ys in g.items() for y in ys]), b, a)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=15))
def test_install_order_is_a_permutation(edges):
    g = {f"n{i}": [] for i in range(7)}
    for a, b in edges:
        g[f"n{a}"].append(f"n{b}")
    assert sorted(install_order(set(g), index_of(g)).packages) == sorted(g)


def test_generate_candidates():
    idx = index_of({"Theano": [], "Lasagne": ["Theano"]}, versions=("0.9.0", "1.0.4"))
    m = SnippetManifest("fig1", imports=("math", "theano.tensor", "lasagne.init"), runtime_candidates=("3",))
    (c,) = generate_candidates(m, KB, idx)
    assert c.runtime == "3"
    assert [(n, str(v)) for n, v in c.deps] == [("Theano", "1.0.4"), ("Lasagne", "1.0.4")]

    both = generate_candidates(SnippetManifest("x", imports=("theano",), runtime_candidates=("2", "3")), KB, idx)
    assert [c.runtime for c in both] == ["2", "3"]
    assert both[0].deps == both[1].deps
    assert generate_candidates(SnippetManifest("e"), KB, idx)[0].deps == ()


def test_manifest_validation():
    with pytest.raises(ValueError):
        SnippetManifest("s", kind="script", cell_count=2)
    with pytest.raises(ValueError):
        SnippetManifest("s", runtime_candidates=())
    m = SnippetManifest("nb", kind="notebook", cell_count=3, runtime_candidates=("3", "2"))
    assert SnippetManifest.from_json(json.loads(json.dumps(m.to_json()))) == m


def test_index_round_trip():
    idx = index_of({"A": ["B"], "B": []}, versions=("0.1", "1.0.0"))
    assert PackageIndex.from_json(idx.to_json()).to_json() == idx.to_json()
    assert index_of({"A": ["ghost"]}).missing_edges() == [("A", "ghost")]
