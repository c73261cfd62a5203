"""Bundled example spaces and kernel definitions.

``stencil3d_space`` is the canonical 3-D grid-kernel search space used
throughout the tests and docs: thread-block extents, per-thread tile factors,
loop-unroll flags, tile-stride flags, the block-index unravel permutation,
and a min-blocks-per-SM residency hint. Its unrestricted cardinality is
5*5*5 * 3*3*3 * 2^6 * 6 * 6 = 7,776,000 configurations.
"""

from __future__ import annotations

from .kerneldef import KernelBuilder, KernelDefinition
from .space import ConfigSpace, TunableParam

BLOCK_LIMIT_RESTRICTION = "block_x * block_y * block_z <= 1024"

_STENCIL3D_SOURCE = """\
template<int TILE_TOTAL>
__global__ void grid3d(float *out, const float *in, int nx, int ny, int nz);
"""

_VECTOR_ADD_SOURCE = """\
template<int block_size>
__global__ void vector_add(float *c, const float *a, const float *b, int n);
"""


def stencil3d_space(block_limit: bool = True) -> ConfigSpace:
    """The 14-parameter 3-D kernel space (7,776,000 raw configurations).

    ``block_limit`` adds the usual max-threads-per-block restriction; pass
    False for the fully unconstrained product space.
    """
    params = [
        TunableParam("block_x", (16, 32, 64, 128, 256), 256),
        TunableParam("block_y", (1, 2, 4, 8, 16), 1),
        TunableParam("block_z", (1, 2, 4, 8, 16), 1),
        TunableParam("tile_x", (1, 2, 4), 1),
        TunableParam("tile_y", (1, 2, 4), 1),
        TunableParam("tile_z", (1, 2, 4), 1),
        TunableParam("unroll_x", (True, False), False),
        TunableParam("unroll_y", (True, False), False),
        TunableParam("unroll_z", (True, False), False),
        TunableParam("contiguous_x", (True, False), False),
        TunableParam("contiguous_y", (True, False), False),
        TunableParam("contiguous_z", (True, False), False),
        TunableParam("unravel", ("XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"), "XYZ"),
        TunableParam("min_blocks", (1, 2, 3, 4, 5, 6), 1),
    ]
    restrictions = [BLOCK_LIMIT_RESTRICTION] if block_limit else []
    return ConfigSpace(params, restrictions)


def stencil3d_definition(block_limit: bool = True) -> KernelDefinition:
    """A 3-D grid kernel over ``stencil3d_space``.

    Arguments: (out, in, nx, ny, nz); the problem size is the grid extent
    and the grid is divided by block * tile along each axis, since each
    thread covers a whole tile.
    """
    space = stencil3d_space(block_limit)
    return KernelDefinition(
        "grid3d",
        space,
        source_text=_STENCIL3D_SOURCE,
        problem_size=("arg2", "arg3", "arg4"),
        block=("block_x", "block_y", "block_z"),
        grid=(
            "ceil_div(problem_x, block_x * tile_x)",
            "ceil_div(problem_y, block_y * tile_y)",
            "ceil_div(problem_z, block_z * tile_z)",
        ),
        defines=[("TILE_TOTAL", "tile_x * tile_y * tile_z")],
        template_args=("tile_x * tile_y * tile_z",),
        flags=("-std=c++17",),
    )


def vector_add_definition() -> KernelDefinition:
    """The classic one-knob example: a templated vector add whose block size
    is both the launch block width and a template argument."""
    b = KernelBuilder("vector_add", source_text=_VECTOR_ADD_SOURCE)
    block_size = b.tune("block_size", [32, 64, 128, 256, 1024], default=128)
    return (
        b.problem_size("arg3")
        .template_args(block_size)
        .block(block_size)
        .build()
    )
