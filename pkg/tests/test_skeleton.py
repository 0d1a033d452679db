"""Skeleton construction: frames, knot detection, topology, admissibility."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rodlimit.skeleton import build_skeleton, default_frame, validate_junctions
from structures import cantilever, hframe, lframe, tframe, triangle_stub


def assert_right_handed_frame(t, n, b):
    F = np.column_stack([t, n, b])
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-12)
    assert np.linalg.det(F) == pytest.approx(1.0, abs=1e-12)


class TestDefaultFrame:
    @settings(max_examples=60, deadline=None)
    @given(
        st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
            lambda v: np.linalg.norm(v) > 1e-2
        )
    )
    def test_frame_is_orthonormal_and_right_handed(self, v):
        t = np.array(v) / np.linalg.norm(v)
        n, b = default_frame(t)
        assert_right_handed_frame(t, n, b)

    def test_axis_aligned_tangent_switches_reference(self):
        # a tangent along e3 cannot use the e3 reference; the frame must
        # still come out orthonormal
        n, b = default_frame(np.array([0.0, 0.0, 1.0]))
        assert_right_handed_frame(np.array([0.0, 0.0, 1.0]), n, b)

    def test_generic_tangent_uses_vertical_reference(self):
        t = np.array([1.0, 0.0, 0.0])
        n, b = default_frame(t)
        np.testing.assert_allclose(n, [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(b, [0.0, 0.0, 1.0], atol=1e-15)

    def test_non_unit_input_is_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            default_frame(np.array([2.0, 0.0, 0.0]))


class TestSegmentSpecs:
    def test_endpoints_and_origin_direction_length_agree(self):
        a = build_skeleton(
            [{"name": "rod", "endpoints": [[0, 0, 0], [0, 0, 2]]}],
            clamped=("rod:start",),
        )
        b = build_skeleton(
            [
                {
                    "name": "rod",
                    "origin": [0, 0, 0],
                    "direction": [0, 0, 1],
                    "length": 2.0,
                }
            ],
            clamped=("rod:start",),
        )
        sa, sb = a.segments[0], b.segments[0]
        np.testing.assert_allclose(sa.direction, sb.direction)
        assert sa.length == sb.length

    def test_segment_frames_are_orthonormal(self):
        sk = triangle_stub()
        for seg in sk.segments:
            assert_right_handed_frame(seg.direction, seg.normal, seg.binormal)

    def test_explicit_normal_is_respected(self):
        sk = build_skeleton(
            [
                {
                    "name": "rod",
                    "endpoints": [[0, 0, 0], [1, 0, 0]],
                    "normal": [0, 0, 1],
                }
            ],
            clamped=("rod:start",),
        )
        np.testing.assert_allclose(sk.segments[0].normal, [0, 0, 1])
        np.testing.assert_allclose(sk.segments[0].binormal, [0, -1, 0], atol=1e-15)

    def test_bad_normal_is_rejected(self):
        with pytest.raises(ValueError, match="normal"):
            build_skeleton(
                [
                    {
                        "name": "rod",
                        "endpoints": [[0, 0, 0], [1, 0, 0]],
                        "normal": [1, 0, 0],
                    }
                ],
                clamped=("rod:start",),
            )

    def test_duplicate_names_are_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            build_skeleton(
                [
                    {"name": "rod", "endpoints": [[0, 0, 0], [1, 0, 0]]},
                    {"name": "rod", "endpoints": [[1, 0, 0], [1, 1, 0]]},
                ],
                clamped=("rod:start",),
            )

    def test_coincident_endpoints_are_rejected(self):
        with pytest.raises(ValueError, match="coincident"):
            build_skeleton(
                [{"name": "dot", "endpoints": [[0, 0, 0], [0, 0, 0]]}],
                clamped=(),
            )


class TestKnotDetection:
    def test_corner_knot_of_the_l_frame(self):
        sk = lframe()
        assert len(sk.knots) == 1
        np.testing.assert_allclose(sk.position("knot:0"), [1.0, 0.0, 0.0])
        assert sk.knots[0].is_corner
        assert sorted(i for i, _ in sk.knots[0].incidence) == [0, 1]

    def test_interior_contact_is_not_a_corner(self):
        sk = tframe()
        assert len(sk.knots) == 1
        assert not sk.knots[0].is_corner
        np.testing.assert_allclose(sk.position("knot:0"), [1.0, 0.0, 0.0])

    def test_extremities_of_the_t_frame(self):
        sk = tframe()
        assert sorted(sk.extremity_keys) == ["beam:end", "beam:start", "post:end"]

    def test_segment_reordering_does_not_change_the_graph(self):
        specs = [
            {"name": "base", "endpoints": [[0, 0, 0], [1, 0, 0]]},
            {"name": "rise", "endpoints": [[1, 0, 0], [0.5, 0.5 * np.sqrt(3), 0]]},
            {"name": "fall", "endpoints": [[0.5, 0.5 * np.sqrt(3), 0], [0, 0, 0]]},
            {"name": "stub", "endpoints": [[0, 0, 0], [0, -0.6, 0]]},
        ]
        sk1 = build_skeleton(specs, clamped=("stub:end",))
        sk2 = build_skeleton(specs[::-1], clamped=("stub:end",))
        pos1 = sorted(tuple(np.round(k.position, 12)) for k in sk1.knots)
        pos2 = sorted(tuple(np.round(k.position, 12)) for k in sk2.knots)
        assert pos1 == pos2
        assert sk1.cycle_count() == sk2.cycle_count()
        assert len(sk1.edges) == len(sk2.edges)

    def test_collinear_overlap_is_rejected(self):
        with pytest.raises(ValueError, match="collinear"):
            build_skeleton(
                [
                    {"name": "a", "endpoints": [[0, 0, 0], [1, 0, 0]]},
                    {"name": "b", "endpoints": [[0.5, 0, 0], [1.5, 0, 0]]},
                ],
                clamped=("a:start",),
            )

    def test_collinear_segments_sharing_one_point_are_fine(self):
        sk = build_skeleton(
            [
                {"name": "a", "endpoints": [[0, 0, 0], [1, 0, 0]]},
                {"name": "b", "endpoints": [[1, 0, 0], [2, 0, 0]]},
                {"name": "c", "endpoints": [[1, 0, 0], [1, 1, 0]]},
            ],
            clamped=("a:start",),
        )
        assert len(sk.knots) == 1

    def test_disconnected_structures_are_rejected(self):
        with pytest.raises(ValueError, match="disconnected"):
            build_skeleton(
                [
                    {"name": "a", "endpoints": [[0, 0, 0], [1, 0, 0]]},
                    {"name": "b", "endpoints": [[0, 5, 0], [1, 5, 0]]},
                ],
                clamped=("a:start",),
            )


class TestTopology:
    def test_cycle_counts(self):
        assert cantilever().cycle_count() == 0
        assert lframe().cycle_count() == 0
        assert tframe().cycle_count() == 0
        assert triangle_stub().cycle_count() == 1

    def test_t_frame_edge_split(self):
        sk = tframe()
        # the beam is split at the interior knot: two edges plus the post
        assert len(sk.edges) == 3
        lengths = sorted(e.length for e in sk.edges)
        np.testing.assert_allclose(lengths, [1.0, 1.0, 1.0])

    def test_clamped_must_name_a_vertex(self):
        with pytest.raises(ValueError, match="does not name a vertex"):
            cantilever(clamped=("rod:middle",))

    def test_clamped_must_be_an_extremity(self):
        with pytest.raises(ValueError, match="knot"):
            lframe(clamped=("knot:0",))

    def test_rho0_below_one_is_rejected(self):
        with pytest.raises(ValueError, match="rho0"):
            build_skeleton(
                [{"name": "rod", "endpoints": [[0, 0, 0], [1, 0, 0]]}],
                clamped=("rod:start",),
                rho0=0.5,
            )


class TestAdmissibility:
    def test_default_thickness_bound_from_edge_length(self):
        # one knot: the minimum knot distance falls back to the shortest edge
        sk = lframe()
        assert sk.delta0 == pytest.approx(0.25 * 1.0 / sk.rho0)

    def test_default_thickness_bound_from_knot_distance(self):
        sk = hframe(gap=0.3)
        assert sk.min_knot_distance() == pytest.approx(0.3)
        assert sk.delta0 == pytest.approx(0.25 * 0.3 / sk.rho0)

    def test_well_separated_structure_validates(self):
        sk = lframe()
        report = validate_junctions(sk, 0.05)
        assert report.ok
        assert report.violations == []
        assert report.delta == 0.05
        assert sum(report.checks.values()) > 0

    def test_close_junctions_report_violations(self):
        sk = hframe(gap=0.3)
        report = validate_junctions(sk, 0.06)
        assert not report.ok
        kinds = {v["check"] for v in report.violations}
        assert "thickness" in kinds
        assert kinds & {"disjointness", "decomposition", "diameter"}

    def test_nonpositive_delta_is_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            validate_junctions(lframe(), 0.0)

    def test_summary_lists_the_parts(self):
        sk = triangle_stub()
        doc = sk.summary_dict()
        assert len(doc["segments"]) == 4
        assert len(doc["knots"]) == 3
        assert doc["cycles"] == 1
        assert doc["clamped"] == ["stub:end"]
