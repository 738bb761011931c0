"""Generate the layer catalog from the registry.

Run ``python -m survae.docs [out.md]`` to regenerate docs/LAYERS.md.
"""

from __future__ import annotations

import sys

from .layers import REGISTRY

FIELDS = ("forward", "inverse", "contribution", "oracle")
HEADER = "# Layer catalog\n\nGenerated from the layer registry; one section per kind and orientation.\n"


class CatalogError(ValueError):
    pass


def catalog_sections(registry=None) -> list:
    """(kind, orientation, entry) triples, checked for completeness."""
    registry = REGISTRY if registry is None else registry
    out = []
    for kind in sorted(registry):
        cls = registry[kind]
        for orientation in cls.orientations:
            entry = (getattr(cls, "catalog", None) or {}).get(orientation)
            if not entry:
                raise CatalogError(f"layer {kind!r} has no catalog entry for orientation {orientation!r}")
            missing = [f for f in FIELDS if not entry.get(f)]
            if missing:
                raise CatalogError(f"layer {kind!r} ({orientation}) catalog entry lacks {', '.join(missing)}")
            out.append((kind, orientation, entry))
    return out


def render_catalog(registry=None) -> str:
    parts = [HEADER]
    for kind, orientation, entry in catalog_sections(registry):
        parts.append(f"\n## {kind} ({orientation})\n\n")
        parts.append(f"- generative pass (z to x): `{entry['forward']}`\n")
        parts.append(f"- inference pass (x to z): `{entry['inverse']}`\n")
        parts.append(f"- V(x, z): `{entry['contribution']}`\n")
        parts.append(f"- certified by: {entry['oracle']}\n")
    return "".join(parts)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    text = render_catalog()
    if argv:
        with open(argv[0], "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
