from __future__ import annotations

from .node import Parameter


class Module:
    """Anything that owns parameters, directly or through child modules.

    Parameter names are dotted attribute paths, discovered in attribute
    insertion order so they are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> dict:
        out: dict = {}
        for key, val in vars(self).items():
            if isinstance(val, Parameter):
                out[prefix + key] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(f"{prefix}{key}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{prefix}{key}.{i}."))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())
