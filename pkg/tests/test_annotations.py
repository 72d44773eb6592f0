import json

import pytest

from toolseg.annotations import (
    AnnotatedImage,
    PolygonRegion,
    RectRegion,
    class_counts,
    parse_via_annotations,
    read_manifest,
    write_manifest,
)
from toolseg.errors import DataError
from toolseg.taxonomy import default_taxonomy

from conftest import make_via_document

# per-class image counts of the photographic dataset (27 classes, 1660 total)
DATASET_CLASS_COUNTS = {
    "Adson Forceps": 44,
    "Allis Clamp": 81,
    "Army Navy Retractor": 42,
    "Bayonet Forceps": 61,
    "Bone Curette": 60,
    "Bovie Cautery": 80,
    "Clip Applier": 70,
    "Cobb Retractor": 47,
    "Debakey Forceps": 25,
    "Gerald Forceps": 35,
    "Irrigation Bulb": 36,
    "Kerrison Rongeur": 99,
    "Leksell Rongeurs": 43,
    "Metzenbaum Scissors": 62,
    "Mosquito Clamp": 26,
    "Needle Driver": 59,
    "Neuro Pattie Sponges": 24,
    "Periosteal Elevator": 93,
    "Raney Clip Applier": 43,
    "Raytec Sponge": 11,
    "Right Angle Forceps": 72,
    "Scalpel": 99,
    "Sponge Stick": 64,
    "Suction": 91,
    "Syringe": 141,
    "Tonsil Forceps": 83,
    "Weitlaner Retractor": 69,
}


def full_scale_document():
    records = []
    for class_name, count in DATASET_CLASS_COUNTS.items():
        slug = class_name.lower().replace(" ", "_")
        for i in range(count):
            records.append((f"{slug}_{i:03d}.jpg", class_name, 64, 48, (8, 8, 24, 16)))
    return make_via_document(records)


def test_parse_single_rect_record():
    tax = default_taxonomy()
    doc = make_via_document([("img0.png", "Scalpel", 100, 80, (10, 20, 30, 40))])
    images = parse_via_annotations(doc, tax)
    assert len(images) == 1
    img = images[0]
    assert img.truth_class == tax.resolve("Scalpel")
    assert len(img.regions) == 1
    region = img.regions[0]
    assert (region.x, region.y, region.width, region.height) == (10, 20, 30, 40)


def test_parse_unknown_class_names_record():
    tax = default_taxonomy()
    doc = make_via_document([("weird.png", "Laser", 100, 80, (10, 20, 30, 40))])
    with pytest.raises(DataError, match=r"weird\.png.*Laser"):
        parse_via_annotations(doc, tax)


def test_parse_full_scale_export_counts():
    tax = default_taxonomy()
    images = parse_via_annotations(full_scale_document(), tax)
    assert len(images) == 1660
    counts = class_counts(images, tax)
    assert counts == DATASET_CLASS_COUNTS
    assert counts["Syringe"] == 141
    assert counts["Raytec Sponge"] == 11


def test_parse_malformed_json_reports_byte_offset():
    tax = default_taxonomy()
    with pytest.raises(DataError, match=r"byte \d+"):
        parse_via_annotations('{"a": {', tax)


def test_parse_clamps_region_to_bounds():
    tax = default_taxonomy()
    doc = make_via_document([("img.png", "Scalpel", 50, 40, (-10, 30, 30, 30))])
    img = parse_via_annotations(doc, tax)[0]
    region = img.regions[0]
    assert region.x == 0 and region.y == 30
    assert region.width == 20 and region.height == 10


def test_parse_region_fully_outside_raises():
    tax = default_taxonomy()
    doc = make_via_document([("img.png", "Scalpel", 50, 40, (60, 10, 20, 20))])
    with pytest.raises(DataError, match="img.png"):
        parse_via_annotations(doc, tax)


def test_parse_via_project_wrapper():
    tax = default_taxonomy()
    inner = json.loads(make_via_document([("a.png", "Suction", 10, 10, (1, 1, 3, 3))]))
    doc = json.dumps({"_via_settings": {}, "_via_img_metadata": inner, "_via_attributes": {}})
    assert len(parse_via_annotations(doc, tax)) == 1


def test_parse_polygon_region():
    tax = default_taxonomy()
    doc = json.dumps(
        {
            "p.png": {
                "filename": "p.png",
                "regions": [
                    {
                        "shape_attributes": {
                            "name": "polygon",
                            "all_points_x": [0, 8, 0],
                            "all_points_y": [0, 0, 8],
                        },
                        "region_attributes": {"label": "Scalpel"},
                    }
                ],
                "file_attributes": {"width": 8, "height": 8},
            }
        }
    )
    img = parse_via_annotations(doc, tax)[0]
    assert isinstance(img.regions[0], PolygonRegion)
    assert len(img.regions[0].points) == 3


def test_parse_mixed_classes_in_one_record_raises():
    tax = default_taxonomy()
    doc = json.dumps(
        {
            "m.png": {
                "filename": "m.png",
                "regions": [
                    {
                        "shape_attributes": {"name": "rect", "x": 0, "y": 0, "width": 4, "height": 4},
                        "region_attributes": {"class": "Scalpel"},
                    },
                    {
                        "shape_attributes": {"name": "rect", "x": 5, "y": 5, "width": 4, "height": 4},
                        "region_attributes": {"class": "Suction"},
                    },
                ],
                "file_attributes": {"width": 16, "height": 16},
            }
        }
    )
    with pytest.raises(DataError, match="single-instrument"):
        parse_via_annotations(doc, tax)


def test_parse_record_without_regions_raises():
    tax = default_taxonomy()
    doc = json.dumps(
        {"e.png": {"filename": "e.png", "regions": [], "file_attributes": {"width": 8, "height": 8}}}
    )
    with pytest.raises(DataError, match="e.png"):
        parse_via_annotations(doc, tax)


def test_annotated_image_rejects_region_class_mismatch():
    with pytest.raises(DataError):
        AnnotatedImage(
            image_id="x",
            path="x.png",
            width=10,
            height=10,
            regions=(RectRegion(0, 0, 2, 2, 3),),
            truth_class=4,
        )


def test_manifest_roundtrip(tmp_path):
    tax = default_taxonomy()
    doc = make_via_document(
        [
            ("a.png", "Scalpel", 32, 32, (1, 1, 8, 8)),
            ("b.png", "Suction", 32, 32, (2, 2, 6, 6)),
        ]
    )
    images = parse_via_annotations(doc, tax)
    manifest = tmp_path / "manifest.tsv"
    write_manifest(images, tax, manifest)
    rows = read_manifest(manifest)
    assert [r["id"] for r in rows] == ["a.png", "b.png"]
    assert rows[0]["class"] == "Scalpel"
    assert len(rows[0]["region_digest"]) == 12


def test_manifest_digest_tracks_regions():
    tax = default_taxonomy()
    a = parse_via_annotations(make_via_document([("a.png", "Scalpel", 32, 32, (1, 1, 8, 8))]), tax)[0]
    b = parse_via_annotations(make_via_document([("a.png", "Scalpel", 32, 32, (1, 1, 8, 9))]), tax)[0]
    assert a.region_digest() != b.region_digest()
