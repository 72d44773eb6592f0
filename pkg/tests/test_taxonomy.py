import pytest

from toolseg.errors import ConfigError, DataError
from toolseg.taxonomy import ClassTaxonomy, NEURO_INSTRUMENTS, default_taxonomy


def test_default_taxonomy_has_27_instruments_and_28_channels():
    tax = default_taxonomy()
    assert len(tax.classes) == 27
    assert tax.num_channels == 28
    assert tax.background_id == 27


def test_background_distinct_from_instruments():
    tax = default_taxonomy()
    assert tax.background_id not in tax.instrument_ids
    assert tax.name_of(tax.background_id) == "not a tool"


def test_resolve_case_insensitive_and_trimmed():
    tax = default_taxonomy()
    assert tax.resolve("Scalpel") == tax.resolve("  scalpel  ") == tax.resolve("SCALPEL")
    assert tax.name_of(tax.resolve("syringe")) == "Syringe"


def test_resolve_unknown_class_raises():
    tax = default_taxonomy()
    with pytest.raises(DataError, match="Laser"):
        tax.resolve("Laser")


def test_aliases_resolve_before_direct_match():
    tax = default_taxonomy({"scalpel blade": "Scalpel"})
    assert tax.resolve("Scalpel Blade") == tax.resolve("Scalpel")


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        ClassTaxonomy(("Bar", "bar"))


def test_empty_name_rejected():
    with pytest.raises(ConfigError):
        ClassTaxonomy(("Bar", "  "))


def test_background_collision_rejected():
    with pytest.raises(ConfigError, match="collides"):
        ClassTaxonomy(("Bar", "Not a Tool"))


def test_from_file_roundtrip(tmp_path):
    path = tmp_path / "classes.txt"
    path.write_text("# comment\nBar\nDisk\n\nRing\n")
    tax = ClassTaxonomy.from_file(path)
    assert tax.classes == ("Bar", "Disk", "Ring")


def test_all_neuro_instruments_unique():
    assert len(set(n.lower() for n in NEURO_INSTRUMENTS)) == 27
