import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from b2n.geodata import (AffineGeoTransform, AnnotationSet, ClassHierarchy,
                         GeoBox, SingularTransform, UnknownLabel, iou,
                         relabel_broad)

NORTH_UP = AffineGeoTransform(100.0, 0.3, 0.0, 200.0, 0.0, -0.3)


def test_origin_maps_to_offset():
    assert NORTH_UP.pixel_to_world(0, 0) == (100.0, 200.0)


def test_scaled_point():
    assert NORTH_UP.pixel_to_world(10, 10) == (103.0, 197.0)


def test_world_to_pixel_inverts():
    col, row = NORTH_UP.world_to_pixel(103.0, 197.0)
    assert (col, row) == pytest.approx((10.0, 10.0), abs=1e-9)


def test_identity_transform_leaves_points():
    ident = AffineGeoTransform(0, 1, 0, 0, 0, 1)
    assert ident.pixel_to_world(7.5, -3.25) == (7.5, -3.25)
    assert ident.world_to_pixel(7.5, -3.25) == (7.5, -3.25)


def test_singular_transform_rejected():
    with pytest.raises(SingularTransform):
        AffineGeoTransform(0, 1, 1, 0, 2, 2)


coeff = st.floats(-50, 50, allow_nan=False)
offset = st.floats(-1e4, 1e4, allow_nan=False)


@st.composite
def invertible_transforms(draw):
    b, c, e, f = (draw(coeff) for _ in range(4))
    assume(abs(b * f - c * e) > 1e-3)
    return AffineGeoTransform(draw(offset), b, c, draw(offset), e, f)


@settings(max_examples=100)
@given(invertible_transforms(), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_round_trip_within_tolerance(gt, col, row):
    x, y = gt.pixel_to_world(col, row)
    col2, row2 = gt.world_to_pixel(x, y)
    assert math.dist((col, row), (col2, row2)) < 1e-9 * max(1.0, abs(col), abs(row))


def test_iou_partial_overlap():
    a = GeoBox(0, 0, 10, 10)
    b = GeoBox(5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3)


def test_iou_identity_and_disjoint():
    a = GeoBox(0, 0, 1, 1)
    assert iou(a, a) == 1.0
    assert iou(a, GeoBox(2, 2, 3, 3)) == 0.0
    # boundary contact only
    assert iou(a, GeoBox(1, 0, 2, 1)) == 0.0


boxes = st.builds(
    lambda x, y, w, h: GeoBox(x, y, x + w, y + h),
    st.floats(-100, 100), st.floats(-100, 100),
    st.floats(0.1, 50), st.floats(0.1, 50))


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        GeoBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        GeoBox(0, 2, 1, 1)


RAIL = ClassHierarchy({c: "rail" for c in
                       ("cargo", "flat", "general", "high speed",
                        "locomotive", "passenger", "tanker")})


def test_relabel_broad_maps_subclasses():
    anns = AnnotationSet("img", (GeoBox(0, 0, 1, 1, "passenger"),
                                 GeoBox(2, 0, 3, 1, "tanker")))
    out = relabel_broad(anns, RAIL)
    assert [b.class_label for b in out.gt] == ["rail", "rail"]
    assert [(b.xmin, b.ymin, b.xmax, b.ymax) for b in out.gt] == \
        [(0, 0, 1, 1), (2, 0, 3, 1)]


def test_relabel_broad_empty():
    out = relabel_broad(AnnotationSet("img"), RAIL)
    assert out.gt == ()


def test_relabel_broad_unknown_label():
    anns = AnnotationSet("img", (GeoBox(0, 0, 1, 1, "zeppelin"),))
    with pytest.raises(UnknownLabel):
        relabel_broad(anns, RAIL)


def test_geo_sidecar_round_trip(tmp_path):
    path = tmp_path / "img.geo.json"
    NORTH_UP.to_json(path)
    assert AffineGeoTransform.from_json(path) == NORTH_UP
