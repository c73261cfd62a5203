"""Configuration-space tests: counting, enumeration order, sampling, defaults."""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from kltune.expr import evaluate_bool, parse
from kltune.presets import stencil3d_space
from kltune.space import ConfigSpace, RejectionLimitError, TunableParam

from conftest import grid_space


class TestTunableParam:
    def test_rejects_empty_values(self):
        with pytest.raises(ValueError, match="no values"):
            TunableParam("x", (), 1)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            TunableParam("x", (1, 2, 1), 1)

    def test_rejects_mixed_types(self):
        with pytest.raises(ValueError, match="mixes"):
            TunableParam("x", (1, "two"), 1)
        # bool is not int for our purposes
        with pytest.raises(ValueError, match="mixes"):
            TunableParam("x", (1, True), 1)

    def test_default_must_be_member(self):
        with pytest.raises(ValueError, match="default"):
            TunableParam("x", (1, 2), 3)


class TestConfigSpace:
    def test_duplicate_names_rejected(self):
        p = TunableParam("x", (1, 2), 1)
        with pytest.raises(ValueError, match="duplicate parameter names"):
            ConfigSpace([p, p])

    def test_restriction_must_name_parameters(self):
        with pytest.raises(ValueError, match="unknown parameters"):
            ConfigSpace([TunableParam("x", (1, 2), 1)], ["x < y"])


class TestCardinality:
    def test_bundled_space_is_7776000(self):
        assert stencil3d_space(block_limit=False).cardinality() == 7_776_000
        # restrictions are ignored by the raw count
        assert stencil3d_space(block_limit=True).cardinality() == 7_776_000

    def test_single_point_space(self):
        space = ConfigSpace([TunableParam("x", (7,), 7)])
        assert space.cardinality() == 1
        assert space.valid_cardinality() == 1

    def test_always_false_restriction(self):
        space = ConfigSpace(
            [TunableParam(n, (2, 3, 4), 2) for n in "abc"], ["a < 0"]
        )
        assert space.cardinality() == 27
        assert space.valid_cardinality() == 0


class TestEnumerate:
    def test_defined_order(self, small_space):
        got = [(c["a"], c["b"]) for c in small_space.enumerate_configs()]
        assert got == [(1, 10), (1, 20), (2, 10), (2, 20)]

    def test_restriction_filter_matches_brute_force(self, small_space):
        space = ConfigSpace(small_space.params, ["a * b > 15"])
        got = [(c["a"], c["b"]) for c in space.enumerate_configs()]
        assert got == [(1, 20), (2, 10), (2, 20)]

    def test_bundled_space_count_matches_nested_loop_oracle(self):
        # independent oracle: plain nested loops over value indices
        space = stencil3d_space(block_limit=True)
        values = [p.values for p in space.params]
        bx, by, bz = values[0], values[1], values[2]
        rest = 1
        for vs in values[3:]:
            rest *= len(vs)
        oracle = sum(
            rest
            for x, y, z in itertools.product(bx, by, bz)
            if x * y * z <= 1024
        )
        # counting only: enumerate a reduced space with the same restriction
        reduced = ConfigSpace(space.params[:3], ["block_x * block_y * block_z <= 1024"])
        assert reduced.valid_cardinality() * rest == oracle

    def test_enumerate_length_equals_valid_cardinality(self):
        space = grid_space(3, 4, ["p0 + p1 >= p2"])
        assert len(list(space.enumerate_configs())) == space.valid_cardinality()

    def test_empty_stream_when_nothing_valid(self):
        space = ConfigSpace([TunableParam("x", (1,), 1)], ["x > 5"])
        assert list(space.enumerate_configs()) == []


class TestSampling:
    def test_n_zero(self, small_space):
        assert small_space.sample_random(seed=1, n=0) == []

    def test_determinism(self, small_space):
        a = small_space.sample_random(seed=42, n=5)
        b = small_space.sample_random(seed=42, n=5)
        assert a == b

    def test_different_seeds_differ(self):
        space = grid_space(4, 10)
        assert space.sample_random(seed=1, n=10) != space.sample_random(seed=2, n=10)

    def test_rejection_limit(self):
        space = ConfigSpace([TunableParam("x", (1, 2), 1)], ["x > 5"])
        with pytest.raises(RejectionLimitError):
            space.sample_random(seed=0, n=1)

    def test_samples_satisfy_restrictions(self):
        space = grid_space(3, 5, ["p0 * p1 % 2 == 0", "p2 < 4"])
        for cfg in space.sample_random(seed=7, n=200):
            assert space.is_valid(cfg)


class TestDefaults:
    def test_bundled_space_defaults(self):
        cfg, ok = stencil3d_space().default_config()
        assert ok
        assert cfg == {
            "block_x": 256,
            "block_y": 1,
            "block_z": 1,
            "tile_x": 1,
            "tile_y": 1,
            "tile_z": 1,
            "unroll_x": False,
            "unroll_y": False,
            "unroll_z": False,
            "contiguous_x": False,
            "contiguous_y": False,
            "contiguous_z": False,
            "unravel": "XYZ",
            "min_blocks": 1,
        }

    def test_single_param(self):
        cfg, ok = ConfigSpace([TunableParam("x", (7,), 7)]).default_config()
        assert cfg == {"x": 7} and ok

    def test_violating_default_is_flagged_not_rejected(self):
        space = ConfigSpace(
            [TunableParam("block_x", (64, 256), 256)], ["block_x <= 128"]
        )
        cfg, ok = space.default_config()
        assert cfg == {"block_x": 256}
        assert ok is False
        # oracle: evaluate the restriction under the defaults directly
        assert evaluate_bool(parse("block_x <= 128"), cfg) is False


class TestEncoding:
    def test_normalized_indices(self):
        space = grid_space(2, 5)
        assert space.normalized_encoding({"p0": 0, "p1": 4}) == [0.0, 1.0]
        assert space.normalized_encoding({"p0": 2, "p1": 1}) == [0.5, 0.25]

    def test_single_value_param_maps_to_zero(self):
        space = ConfigSpace([TunableParam("x", (9,), 9)])
        assert space.normalized_encoding({"x": 9}) == [0.0]

    def test_fingerprint_changes_with_space(self):
        assert grid_space(2, 3).fingerprint() != grid_space(2, 4).fingerprint()
        assert grid_space(2, 3).fingerprint() == grid_space(2, 3).fingerprint()


# ---------------------------------------------------------------------------
# Properties


@st.composite
def _small_spaces(draw):
    n_params = draw(st.integers(1, 3))
    params = []
    for i in range(n_params):
        n_values = draw(st.integers(1, 4))
        params.append(TunableParam(f"p{i}", tuple(range(n_values)), 0))
    restriction = draw(
        st.sampled_from([None, "p0 % 2 == 0", "p0 >= 0", "p0 > 0"])
    )
    return ConfigSpace(params, [restriction] if restriction else [])


@given(_small_spaces())
@settings(max_examples=50)
def test_every_enumerated_config_is_valid(space):
    configs = list(space.enumerate_configs())
    assert len(configs) == space.valid_cardinality()
    for cfg in configs:
        for r in space.restrictions:
            assert evaluate_bool(r, cfg)


@given(_small_spaces(), st.integers(0, 2**32))
@settings(max_examples=50)
def test_sampled_configs_are_valid_and_deterministic(space, seed):
    if space.valid_cardinality() == 0:
        with pytest.raises(RejectionLimitError):
            space.sample_random(seed, 1)
        return
    configs = space.sample_random(seed, 8)
    assert configs == space.sample_random(seed, 8)
    for cfg in configs:
        assert space.is_valid(cfg)
