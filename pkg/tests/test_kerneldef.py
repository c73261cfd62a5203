"""Kernel definition tests: problem-size/geometry derivation, compile
requests, builder API, and the declarative JSON file."""

import math

import pytest
from hypothesis import given, strategies as st

from kltune.expr import EvalError
from kltune.kerneldef import (
    DefinitionError,
    KernelBuilder,
    KernelDefinition,
    LaunchGeometry,
)
from kltune.presets import stencil3d_definition, vector_add_definition
from kltune.space import ConfigSpace, TunableParam


@pytest.fixture
def vec_def():
    return vector_add_definition()


@pytest.fixture
def grid_def():
    return stencil3d_definition()


class TestProblemSize:
    def test_vector_add_uses_arg3(self, vec_def):
        assert vec_def.derive_problem_size({"arg3": 10_000_000}) == (10_000_000,)

    def test_three_dimensional(self, grid_def):
        args = {"arg2": 256, "arg3": 256, "arg4": 256}
        assert grid_def.derive_problem_size(args) == (256, 256, 256)

    def test_zero_component_rejected(self, vec_def):
        with pytest.raises(DefinitionError, match="non-positive"):
            vec_def.derive_problem_size({"arg3": 0})

    def test_unbound_argument(self, vec_def):
        with pytest.raises(EvalError, match="unbound"):
            vec_def.derive_problem_size({})

    def test_problem_size_may_not_use_parameters(self):
        space = ConfigSpace([TunableParam("bs", (32, 64), 32)])
        with pytest.raises(DefinitionError, match="only argN"):
            KernelDefinition("k", space, source_text="", problem_size=("bs",))


class TestGeometry:
    def test_default_grid_rule(self, vec_def):
        geo = vec_def.derive_geometry({"block_size": 256}, (1000,))
        assert geo.block == (256, 1, 1)
        assert geo.grid == (4, 1, 1)  # ceil(1000/256) = 4, by hand
        assert geo.shared_mem_bytes == 0

    def test_tile_aware_grid(self, grid_def):
        config = {
            "block_x": 32, "block_y": 4, "block_z": 2,
            "tile_x": 2, "tile_y": 1, "tile_z": 1,
            "unroll_x": False, "unroll_y": False, "unroll_z": False,
            "contiguous_x": False, "contiguous_y": False, "contiguous_z": False,
            "unravel": "XYZ", "min_blocks": 1,
        }
        geo = grid_def.derive_geometry(config, (256, 256, 256))
        # component-wise: ceil(256/(32*2)), ceil(256/(4*1)), ceil(256/(2*1))
        assert geo.block == (32, 4, 2)
        assert geo.grid == (4, 64, 128)

    def test_zero_block_extent_rejected(self):
        space = ConfigSpace([TunableParam("bs", (0, 32), 32)])
        d = KernelDefinition(
            "k", space, source_text="", problem_size=("arg0",), block=("bs", 1, 1)
        )
        with pytest.raises(DefinitionError, match="block.x"):
            d.derive_geometry({"bs": 0}, (100,))

    def test_default_geometry_of_bundled_space(self, grid_def):
        config, _ = grid_def.space.default_config()
        for problem in [(64, 64, 64), (1000, 3, 17), (256, 256, 256)]:
            geo = grid_def.derive_geometry(config, problem)
            assert geo.block == (256, 1, 1)

    @given(
        st.integers(1, 10**6),
        st.sampled_from([32, 64, 128, 256, 1024]),
    )
    def test_grid_covers_problem_exactly(self, n, bs):
        d = vector_add_definition()
        geo = d.derive_geometry({"block_size": bs}, (n,))
        gx, bx = geo.grid[0], geo.block[0]
        assert gx * bx >= n
        assert (gx - 1) * bx < n

    def test_geometry_invariants(self):
        with pytest.raises(DefinitionError):
            LaunchGeometry((0, 1, 1), (1, 1, 1))
        with pytest.raises(DefinitionError):
            LaunchGeometry((1, 1, 1), (1, 0, 1))
        with pytest.raises(DefinitionError):
            LaunchGeometry((1, 1, 1), (1, 1, 1), shared_mem_bytes=-1)


class TestCompileRequest:
    def test_template_substitution(self, vec_def):
        req = vec_def.render_compile_request({"block_size": 128})
        assert req.entry == "vector_add<128>"

    def test_no_templates_no_defines(self):
        space = ConfigSpace([TunableParam("x", (1, 2), 1)])
        d = KernelDefinition("plain_kernel", space, source_text="src", problem_size=("arg0",))
        req = d.render_compile_request({"x": 1})
        assert req.entry == "plain_kernel"
        assert req.defines == ()

    def test_define_evaluation(self):
        space = ConfigSpace([TunableParam(f"tile_{a}", (1, 2, 4), 1) for a in "xyz"])
        d = KernelDefinition(
            "k",
            space,
            source_text="",
            problem_size=("arg0",),
            defines=[("tile_total", "tile_x * tile_y * tile_z")],
        )
        req = d.render_compile_request({"tile_x": 2, "tile_y": 4, "tile_z": 1})
        assert req.defines == ("-D tile_total=8",)

    def test_defines_keep_declaration_order(self):
        space = ConfigSpace([TunableParam("x", (1, 2), 1)])
        d = KernelDefinition(
            "k", space, source_text="", problem_size=("arg0",),
            defines=[("zz", "x"), ("aa", "x + 1")],
        )
        req = d.render_compile_request({"x": 2})
        assert req.defines == ("-D zz=2", "-D aa=3")

    def test_bool_and_string_values_printed(self):
        space = ConfigSpace(
            [TunableParam("unroll", (True, False), False),
             TunableParam("order", ("XYZ", "ZYX"), "XYZ")]
        )
        d = KernelDefinition(
            "k", space, source_text="", problem_size=("arg0",),
            defines=[("UNROLL", "unroll"), ("ORDER", "order")],
        )
        req = d.render_compile_request({"unroll": True, "order": "ZYX"})
        assert req.defines == ("-D UNROLL=true", "-D ORDER=ZYX")

    def test_deterministic(self, grid_def):
        config, _ = grid_def.space.default_config()
        assert grid_def.render_compile_request(config) == grid_def.render_compile_request(config)


class TestBuilder:
    def test_mirrors_programmatic_shape(self):
        b = KernelBuilder("vector_add", source_text="...")
        bs = b.tune("block_size", [32, 64, 128, 256, 1024], default=128)
        d = b.problem_size("arg3").template_args(bs).block(bs).build()
        assert d.name == "vector_add"
        assert d.space.param_names == ["block_size"]
        geo = d.derive_geometry({"block_size": 64}, (100,))
        assert geo.block == (64, 1, 1)
        assert geo.grid == (2, 1, 1)

    def test_requires_problem_size(self):
        b = KernelBuilder("k", source_text="")
        b.tune("x", [1, 2])
        with pytest.raises(DefinitionError, match="problem_size"):
            b.build()

    def test_restriction_and_flags(self):
        b = KernelBuilder("k", source_text="")
        b.tune("bx", [16, 32], default=16)
        b.tune("by", [16, 32], default=16)
        d = (
            b.restriction("bx * by <= 512")
            .problem_size("arg0", "arg1")
            .block("bx", "by")
            .compiler_flags("-O3")
            .build()
        )
        assert not d.space.is_valid({"bx": 32, "by": 32})
        assert d.flags == ("-O3",)


class TestDefinitionFile:
    def test_round_trip(self, tmp_path, grid_def):
        path = tmp_path / "grid3d.json"
        grid_def.save(path)
        loaded = KernelDefinition.load(path)
        assert loaded.to_json_obj() == grid_def.to_json_obj()
        # behavior survives the round trip
        config, _ = loaded.space.default_config()
        assert loaded.derive_geometry(config, (256, 256, 256)) == grid_def.derive_geometry(
            config, (256, 256, 256)
        )

    def test_canonical_on_disk(self, tmp_path, vec_def):
        path = tmp_path / "v.json"
        vec_def.save(path)
        blob = path.read_text()
        import json

        assert json.dumps(json.loads(blob), sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n" == blob

    def test_source_file_reference(self, tmp_path):
        src = tmp_path / "k.cu"
        src.write_text("__global__ void k();")
        space = ConfigSpace([TunableParam("x", (1,), 1)])
        d = KernelDefinition("k", space, source_file=str(src), problem_size=("arg0",))
        assert d.resolve_source() == "__global__ void k();"
        req = d.render_compile_request({"x": 1})
        assert req.source == "__global__ void k();"

    def test_exactly_one_source(self):
        space = ConfigSpace([TunableParam("x", (1,), 1)])
        with pytest.raises(DefinitionError, match="exactly one"):
            KernelDefinition("k", space, problem_size=("arg0",))
        with pytest.raises(DefinitionError, match="exactly one"):
            KernelDefinition(
                "k", space, source_text="a", source_file="b", problem_size=("arg0",)
            )

    def test_unknown_identifier_rejected(self):
        space = ConfigSpace([TunableParam("x", (1,), 1)])
        with pytest.raises(DefinitionError, match="not a parameter"):
            KernelDefinition(
                "k", space, source_text="", problem_size=("arg0",), block=("mystery", 1, 1)
            )

    def test_kernel_key_tracks_space(self, vec_def):
        key = vec_def.kernel_key()
        assert key.startswith("vector_add-")
        changed = KernelBuilder("vector_add", source_text="...")
        changed.tune("block_size", [32, 64], default=32)
        other = changed.problem_size("arg3").build()
        assert other.kernel_key() != key
