"""Skeleton builders shared across the test modules.

Each helper returns a freshly built structure so tests can mutate or probe
without interfering with each other.  The geometries are small enough to
solve quickly but exercise the interesting topologies: a single clamped rod,
an L of two rods, a T with an interior contact, a closed triangle reached
through a stub, and an H whose junctions sit close enough to violate the
thin-rod admissibility checks at a chosen thickness.
"""

import numpy as np

from rodlimit.skeleton import build_skeleton

ROOT3 = float(np.sqrt(3.0))


def cantilever(length=1.0, clamped=("rod:start",)):
    """One straight rod along e1, clamped at its start by default."""
    return build_skeleton(
        [{"name": "rod", "endpoints": [[0.0, 0.0, 0.0], [length, 0.0, 0.0]]}],
        clamped=clamped,
    )


def lframe(clamped=("arm:start",)):
    """Two unit rods meeting at a right angle; one knot, two extremities."""
    return build_skeleton(
        [
            {"name": "arm", "endpoints": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]},
            {"name": "post", "endpoints": [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]},
        ],
        clamped=clamped,
    )


def tframe(clamped=("beam:start",)):
    """A beam with a post touching its interior point (a non-corner knot)."""
    return build_skeleton(
        [
            {"name": "beam", "endpoints": [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]},
            {"name": "post", "endpoints": [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]},
        ],
        clamped=clamped,
    )


def triangle_stub(clamped=("stub:end",)):
    """A closed triangle (one cycle) reached through a clamped stub."""
    top = [0.5, 0.5 * ROOT3, 0.0]
    return build_skeleton(
        [
            {"name": "base", "endpoints": [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]},
            {"name": "rise", "endpoints": [[1.0, 0.0, 0.0], top]},
            {"name": "fall", "endpoints": [top, [0.0, 0.0, 0.0]]},
            {"name": "stub", "endpoints": [[0.0, 0.0, 0.0], [0.0, -0.6, 0.0]]},
        ],
        clamped=clamped,
    )


def hframe(gap=0.3, clamped=("left:start",)):
    """Two parallel rails joined by a short crossbar of length ``gap``.

    The two knots are only ``gap`` apart, so validating at a thickness above
    ``0.25 * gap / rho0`` must report admissibility violations.
    """
    return build_skeleton(
        [
            {"name": "left", "endpoints": [[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]},
            {"name": "right", "endpoints": [[gap, 0.0, 0.0], [gap, 2.0, 0.0]]},
            {"name": "bar", "endpoints": [[0.0, 1.0, 0.0], [gap, 1.0, 0.0]]},
        ],
        clamped=clamped,
    )
