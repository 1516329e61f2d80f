"""A minimal registry for named, swappable components.

Used for the success criteria of each task family, the ablation edits and the
policies the evaluation harness can drive. Components are registered with a
decorator and looked up by name.
"""

from __future__ import annotations

from dataclasses import dataclass
import typing as t


P = t.ParamSpec("P")
R = t.TypeVar("R")


@dataclass
class ComponentDescriptor:
    name: str
    func: t.Callable
    description: str


class Registry:
    """An instance-based registry of named callables.

    Each subsystem owns its own instance so names never collide across
    concerns (a task family and an ablation may share a name).
    """

    def __init__(self, kind: str) -> None:
        self.kind = kind
        self._registry: dict[str, ComponentDescriptor] = {}

    def register(
        self,
        name: str | None = None,
        description: str | None = None,
    ):
        """Decorator registering ``func`` under ``name`` (default: its __name__)."""

        def decorator(
            func: t.Callable[P, R],
        ) -> t.Callable[P, R]:
            component_name = name or func.__name__
            if component_name in self._registry:
                raise ValueError(
                    f"{self.kind} already registered: {component_name}"
                )
            desc = description or (func.__doc__ or "").strip().splitlines()[0:1]
            if isinstance(desc, list):
                desc = desc[0] if desc else ""
            self._registry[component_name] = ComponentDescriptor(
                name=component_name,
                func=func,
                description=desc,
            )
            return func

        return decorator

    def names(self) -> list[str]:
        return list(self._registry.keys())

    def __contains__(self, name: object) -> bool:
        return name in self._registry

    def get(self, name: str) -> ComponentDescriptor:
        descriptor = self._registry.get(name)
        if descriptor is None:
            raise KeyError(f"{self.kind} not found: {name}")
        return descriptor

    def describe_all(self) -> list[dict[str, str]]:
        return [
            {"name": d.name, "description": d.description}
            for d in self._registry.values()
        ]

    def call(self, name: str, /, *args, **kwargs):
        return self.get(name).func(*args, **kwargs)
