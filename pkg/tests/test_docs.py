from pathlib import Path

import pytest

from survae.docs import HEADER, CatalogError, catalog_sections, main, render_catalog
from survae.layers import REGISTRY

ROOT = Path(__file__).resolve().parents[1]


def test_empty_registry_is_header_only():
    assert render_catalog({}) == HEADER


def test_full_registry_sections():
    sections = catalog_sections()
    assert len(sections) >= 14
    kinds = {k for k, _, _ in sections}
    for kind in ("abs", "max", "sort", "slice", "round", "relu", "stochastic_permutation", "vae", "ppca"):
        assert kind in kinds
    assert sum(len(cls.orientations) for cls in REGISTRY.values()) == len(sections)


def test_missing_entry_names_layer():
    class Bare:
        orientations = ("inference",)
        catalog = {}

    with pytest.raises(CatalogError, match="'bare'"):
        catalog_sections({"bare": Bare})

    class Partial:
        orientations = ("generative",)
        catalog = {"generative": {"forward": "x = f(z)", "inverse": "z = g(x)"}}

    with pytest.raises(CatalogError, match="contribution, oracle"):
        catalog_sections({"partial": Partial})


def test_committed_catalog_in_sync():
    assert (ROOT / "docs" / "LAYERS.md").read_text(encoding="utf-8") == render_catalog()


def test_main_writes_file(tmp_path):
    out = tmp_path / "layers.md"
    assert main([str(out)]) == 0
    assert out.read_text(encoding="utf-8") == render_catalog()
