import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import assert_counting_sums, random_model, random_tree_model
from regionpursuit.factor_graph import build_factor_graph, gen_fully_connected, gen_grid
from regionpursuit.pursuit import cycle_region
from regionpursuit.region_graph import (
    Region,
    RegionGraph,
    RegionGraphError,
    add_outer_region,
    ancestors,
    bethe_region_graph,
    check_validity,
    compute_counting_numbers,
    descendants,
    direct_subregions,
    from_parts,
    is_extendable,
    parse_region_graph,
    read_region_graph,
    write_region_graph,
)


def chain_rg():
    regions = {0: Region.of([0, 1, 2], [0, 1]), 1: Region.of([0, 1], [0]), 2: Region.of([1])}
    return from_parts(regions, [(0, 1), (1, 2)])


def square_on_2x2():
    fg = gen_grid(2, 2, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    ins = add_outer_region(rg, cycle_region(fg, (0, 1, 3, 2)), fg)
    return fg, rg, ins


def test_single_region_counts_one():
    rg = from_parts({0: Region.of([0, 1], [0])}, [])
    assert compute_counting_numbers(rg) == {0: 1}


def test_bethe_counting_is_one_minus_degree():
    fg = gen_grid(3, 3, 1.0, 0.5, 1)
    rg = bethe_region_graph(fg)
    for r, reg in rg.regions.items():
        parents = rg.parents(r)
        assert rg.counting[r] == (1 if not parents else 1 - len(parents))
    assert_counting_sums(rg, fg)


def test_fc3_bethe_layout():
    fg = gen_fully_connected(3, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    outer = rg.outer_regions()
    assert len(outer) == 3 and all(len(rg.regions[r].vars) == 2 for r in outer)
    assert all(rg.counting[r] == 1 for r in outer)
    inner = [r for r in rg.regions if r not in outer]
    assert len(inner) == 3 and all(rg.counting[r] == -1 for r in inner)


def test_single_unary_model():
    fg = build_factor_graph([2], [((0,), [1, 2])])
    rg = bethe_region_graph(fg)
    assert len(rg.regions) == 2
    (outer,) = rg.outer_regions()
    inner = next(r for r in rg.regions if r != outer)
    assert rg.counting[inner] == 0
    assert_counting_sums(rg, fg)


def test_unary_factors_are_carried_by_edge_and_variable_regions():
    fg = gen_grid(2, 2, 1.0, 0.5, 0)  # unaries 0..3, pairs 4..7
    rg = bethe_region_graph(fg)
    edge01 = rg.find(Region.of([0, 1], [0, 1, 4]))
    var0 = rg.find(Region.of([0], [0]))
    assert edge01 is not None and var0 is not None
    assert (edge01, var0) in rg.edges


def test_square_makes_old_regions_zero():
    fg, rg, ins = square_on_2x2()
    new = ins.rg
    for r in rg.regions:
        assert new.counting[r] == 0
    assert new.counting[ins.region_id] == 1
    assert_counting_sums(new, fg)
    assert ins.extendable


def test_validity_of_bethe_for_random_models():
    for seed in range(10):
        fg = random_model(6, seed)
        rg = bethe_region_graph(fg)
        assert_counting_sums(rg, fg)
        assert is_extendable(rg, fg) == (True, None)


def test_missing_factor_breaks_c2():
    fg = gen_grid(2, 2, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    rid = rg.find(Region.of([0, 1], [0, 1, 4]))
    rg.regions[rid] = Region.of([0, 1], [0, 1])
    report = check_validity(rg, fg)
    assert not report.c2_ok
    assert any("factor 4" in v for v in report.violations)


def test_disconnected_variable_subgraph_breaks_c1():
    fg = build_factor_graph([2, 2], [((0, 1), np.ones(4))])
    regions = {0: Region.of([0, 1], [0]), 1: Region.of([0]), 2: Region.of([0]), 3: Region.of([1])}
    # two unconnected chains through variable 0
    rg = from_parts(regions, [(0, 1), (0, 3)])
    rg.regions[2] = Region.of([0, 1])
    rg = from_parts(rg.regions, [(0, 1), (0, 3)])
    report = check_validity(rg, fg)
    assert not report.c1_ok


def test_ancestors_and_descendants():
    rg = chain_rg()
    assert ancestors(rg, 0) == set()
    assert descendants(rg, 0) == {1, 2}
    assert ancestors(rg, 2) == {0, 1}
    with pytest.raises(RegionGraphError):
        descendants(rg, 99)
    fg = gen_grid(2, 2, 1.0, 0.5, 0)
    bethe = bethe_region_graph(fg)
    v = bethe.find(Region.of([0], [0]))
    assert ancestors(bethe, v) == set(bethe.parents(v))


def test_cycle_detected():
    with pytest.raises(RegionGraphError, match="cycle"):
        from_parts({0: Region.of([0]), 1: Region.of([0])}, [(0, 1), (1, 0)])


def test_extendability_witness():
    fg = build_factor_graph([2, 2, 2], [((0, 1), np.ones(4)), ((0, 2), np.ones(4))])
    regions = {0: Region.of([0, 1], [0]), 1: Region.of([0, 2], [1]), 2: Region.of([0]), 3: Region.of([0]), 4: Region.of([1]), 5: Region.of([2])}
    rg = RegionGraph(regions, {(0, 2), (1, 3), (0, 4), (1, 5)})
    ok, witness = is_extendable(rg, fg)
    assert not ok and witness == ("variable", 0)


def test_single_region_graph_is_extendable():
    fg = gen_fully_connected(3, 1.0, 0.5, 0)
    rg = from_parts({0: Region.of(range(3), range(fg.num_factors))}, [])
    assert is_extendable(rg, fg) == (True, None)
    assert check_validity(rg, fg).ok


def test_direct_subregions_examples():
    fg = gen_grid(2, 2, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    kids = direct_subregions(rg, cycle_region(fg, (0, 1, 3, 2)))
    assert sorted(len(rg.regions[k].vars) for k in kids) == [2, 2, 2, 2]
    one = direct_subregions(rg, Region.of([0, 1, 2], [0, 1, 4]))
    assert one == {rg.find(Region.of([0, 1], [0, 1, 4]))}
    assert direct_subregions(rg, Region.of([7, 8])) == set()
    with pytest.raises(RegionGraphError, match="duplicate"):
        direct_subregions(rg, Region.of([0], [0]))


def test_add_triangle_to_fc3_covers_all_factors():
    fg = gen_fully_connected(3, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    ins = add_outer_region(rg, cycle_region(fg, (0, 1, 2)), fg)
    assert_counting_sums(ins.rg, fg)
    assert set(ins.rg.regions[ins.region_id].factors) == set(range(fg.num_factors))


def test_add_outer_region_errors():
    fg, rg, ins = square_on_2x2()
    with pytest.raises(RegionGraphError, match="duplicate"):
        add_outer_region(ins.rg, ins.rg.regions[ins.region_id], fg)
    with pytest.raises(RegionGraphError, match="not in the region graph"):
        add_outer_region(rg, Region.of([0, 1], [99]))
    with pytest.raises(RegionGraphError, match="no variables"):
        add_outer_region(rg, Region.of([]))


def test_add_outer_region_rejects_uncovered_factor_set():
    fg = gen_grid(2, 2, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    # the pair factor without the unary factors carried alongside it
    with pytest.raises(RegionGraphError, match="not covered"):
        add_outer_region(rg, Region.of([0, 1, 3, 2], [4, 5, 6, 7]))


def test_add_outer_region_rejects_non_extendable_base():
    fg = build_factor_graph([2, 2, 2], [((0, 1), np.ones(4)), ((0, 2), np.ones(4))])
    regions = {0: Region.of([0, 1], [0]), 1: Region.of([0, 2], [1]), 2: Region.of([0]), 3: Region.of([0]), 4: Region.of([1]), 5: Region.of([2])}
    rg = RegionGraph(regions, {(0, 2), (1, 3), (0, 4), (1, 5)})
    with pytest.raises(RegionGraphError, match="extendable"):
        add_outer_region(rg, Region.of([0, 1, 2], [0, 1]), fg)


def test_insertion_leaves_non_descendants_untouched():
    fg = gen_grid(3, 3, 1.0, 0.5, 0)
    rg = bethe_region_graph(fg)
    ins = add_outer_region(rg, cycle_region(fg, (0, 1, 4, 3)), fg)
    dec = descendants(ins.rg, ins.region_id)
    for r in rg.regions:
        if r not in dec:
            assert ins.rg.counting[r] == rg.counting[r]


def test_text_round_trip(tmp_path):
    fg, _, ins = square_on_2x2()
    path = tmp_path / "rg.txt"
    write_region_graph(ins.rg, path)
    back = read_region_graph(path)
    assert back.regions == ins.rg.regions
    assert back.edges == ins.rg.edges
    assert back.counting == ins.rg.counting


def test_parse_ignores_counting_lines_and_rejects_junk():
    rg = parse_region_graph("R 0 vars: 0 1 factors: 0\nR 1 vars: 0 factors:\nE 0 1\nC 0 7\n")
    assert rg.counting == {0: 1, 1: 0}
    with pytest.raises(RegionGraphError):
        parse_region_graph("X nonsense\n")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_pursuit_style_insertions_stay_valid(seed):
    fg = gen_grid(3, 3, 1.0, 0.5, seed)
    rg = bethe_region_graph(fg)
    squares = [(0, 1, 4, 3), (1, 2, 5, 4), (3, 4, 7, 6), (4, 5, 8, 7)]
    order = np.random.default_rng(seed).permutation(4)
    for k in order:
        ins = add_outer_region(rg, cycle_region(fg, squares[k]), fg)
        rg = ins.rg
        assert_counting_sums(rg, fg)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 9))
def test_bethe_on_trees_valid(seed, n):
    fg = random_tree_model(n, seed)
    assert_counting_sums(bethe_region_graph(fg), fg)
