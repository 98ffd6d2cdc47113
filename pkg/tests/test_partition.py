import numpy as np
import pytest

from skgsim import auto_delta, build_partition, largest_classes
from skgsim.csvio import read_partition_csv, write_partition_csv
from conftest import gain_map_from_values


def test_constant_map_single_class():
    gm = gain_map_from_values(np.full(12, 3.7))
    part = build_partition(gm, 0.5)
    assert part.num_classes == 1
    assert part.classes[0].size == 12
    assert abs(float(gm.m[0]) - part.class_gains[0]) <= 0.25


def test_two_level_map_splits():
    m = np.array([1.0, 5.0, 1.0, 5.0, 5.0])
    part = build_partition(gain_map_from_values(m), 1.0)
    assert part.num_classes == 2
    assert list(part.classes[0]) == [0, 2]
    assert list(part.classes[1]) == [1, 3, 4]
    assert part.class_gains[0] < part.class_gains[1]


def test_partition_invariants_brute_force(desk_scenario):
    eve_map = desk_scenario.eve_map
    delta = auto_delta(eve_map, desk_scenario.bob_map)
    part = build_partition(eve_map, delta)
    # disjoint cover of all positions
    all_idx = np.concatenate(part.classes)
    assert all_idx.size == eve_map.grid.size
    assert np.array_equal(np.sort(all_idx), np.arange(eve_map.grid.size))
    # every member within half a bin of its class gain; re-scan every position
    for l, members in enumerate(part.classes):
        assert members.size > 0
        assert np.all(np.abs(eve_map.m[members] - part.class_gains[l]) <= delta / 2 + 1e-15)
    for i in range(eve_map.grid.size):
        owners = [l for l, mem in enumerate(part.classes) if i in mem]
        assert len(owners) == 1


def test_within_class_spread_bounded(desk_scenario):
    eve_map = desk_scenario.eve_map
    part = build_partition(eve_map, 0.05)
    for members in part.classes:
        vals = eve_map.m[members]
        assert vals.max() - vals.min() <= 0.05


def test_halving_delta_refines(desk_scenario):
    eve_map = desk_scenario.eve_map
    coarse = build_partition(eve_map, 0.2)
    fine = build_partition(eve_map, 0.1)
    coarse_owner = np.empty(eve_map.grid.size, dtype=int)
    for l, members in enumerate(coarse.classes):
        coarse_owner[members] = l
    for members in fine.classes:
        assert np.unique(coarse_owner[members]).size == 1


def test_delta_must_be_positive(desk_scenario):
    with pytest.raises(ValueError):
        build_partition(desk_scenario.eve_map, 0.0)


class TestLargestClasses:
    def _partition_with_sizes(self):
        # sizes 5, 3, 3, 1 across gain levels 1, 3, 5, 7
        m = np.concatenate([
            np.full(5, 1.0), np.full(3, 3.0), np.full(3, 5.0), np.full(1, 7.0)
        ])
        return build_partition(gain_map_from_values(m), 1.0)

    def test_single_class(self):
        part = build_partition(gain_map_from_values(np.full(4, 2.0)), 1.0)
        assert largest_classes(part, 3) == [0]

    def test_tie_breaks_to_lower_index(self):
        part = self._partition_with_sizes()
        assert list(part.sizes) == [5, 3, 3, 1]
        assert largest_classes(part, 2) == [0, 1]

    def test_k_exceeding_class_count_returns_all(self):
        part = self._partition_with_sizes()
        assert largest_classes(part, 99) == [0, 1, 2, 3]

    def test_k_equal_l_gives_size_order(self):
        part = self._partition_with_sizes()
        assert largest_classes(part, 4) == [0, 1, 2, 3]

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            largest_classes(self._partition_with_sizes(), 0)


def test_auto_delta_fallback_constant_map():
    gm = gain_map_from_values(np.full(6, 2.5))
    delta = auto_delta(gm)
    part = build_partition(gm, delta)
    assert delta > 0
    assert part.num_classes == 1


def test_auto_delta_range_fallback():
    gm = gain_map_from_values(np.linspace(1.0, 2.0, 64))
    assert auto_delta(gm) == pytest.approx((gm.m.max() - gm.m.min()) / 256)


def test_auto_delta_kappa_invariant_partition(desk_scenario):
    # same shadowing, different kappa: identical class memberships
    from skgsim import ChannelParams, build_gain_map

    scen = desk_scenario
    parts = []
    for kappa in (50.0, 5000.0):
        bob = build_gain_map(scen.grid, scen.bob, scen.bob_field, scen.pathloss,
                             ChannelParams(kappa, 0.0))
        eve = build_gain_map(scen.grid, scen.eve, scen.eve_field, scen.pathloss,
                             ChannelParams(kappa, 0.0))
        parts.append(build_partition(eve, auto_delta(eve, bob)))
    a, b = parts
    assert a.num_classes == b.num_classes
    for ca, cb in zip(a.classes, b.classes):
        assert np.array_equal(ca, cb)


def test_partition_csv_round_trip(tmp_path, desk_scenario):
    part = desk_scenario.partition()
    path = tmp_path / "partition.csv"
    write_partition_csv(path, part, "# manifest")
    manifest, classes, gains = read_partition_csv(path)
    assert manifest == "# manifest"
    assert len(classes) == part.num_classes
    for got, want in zip(classes, part.classes):
        assert np.array_equal(got, want)
    assert np.allclose(gains, part.class_gains, rtol=1e-11)
