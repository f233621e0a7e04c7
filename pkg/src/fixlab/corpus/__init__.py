"""Bundled test corpus: toy programs, handwritten systems, seeded synthetic systems."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from fixlab.eqsys import EquationSystem, parse_system
from fixlab.synthetic import generate_synthetic

N_SYNTHETIC = 50


@dataclass(frozen=True)
class CorpusItem:
    name: str
    kind: str  # "toy" | "eqs" | "synthetic"
    text: str = ""
    params: dict = field(default_factory=dict)

    def system(self, strategy: str = "threads") -> EquationSystem:
        if self.kind == "toy":
            from fixlab.frontend import build_equations, parse_program

            return build_equations(parse_program(self.text), strategy)
        if self.kind == "eqs":
            return parse_system(self.text)
        return generate_synthetic(**self.params)

    @property
    def has_transfer(self) -> bool:
        return self.kind == "toy"


def _read_dir(sub: str, suffix: str, kind: str) -> list[CorpusItem]:
    root = resources.files(__name__) / sub
    items = [
        CorpusItem(p.name[: -len(suffix)], kind, p.read_text(encoding="utf-8"))
        for p in root.iterdir()
        if p.name.endswith(suffix)
    ]
    return sorted(items, key=lambda i: i.name)


def toy_programs() -> list[CorpusItem]:
    return _read_dir("programs", ".toy", "toy")


def eqs_systems() -> list[CorpusItem]:
    return _read_dir("systems", ".eqs", "eqs")


def synthetic_params(seed: int) -> dict:
    """Small systems; parameters cycle so every shape appears several times."""
    return dict(
        seed=seed,
        components=1 + seed % 4,
        chain_length=5 + (seed * 7) % 36,
        globals_per_component=seed % 3,
        work_factor=1 + seed % 5,
    )


def synthetic_systems(n: int = N_SYNTHETIC) -> list[CorpusItem]:
    return [CorpusItem(f"synthetic-{s:02d}", "synthetic", params=synthetic_params(s)) for s in range(n)]


def corpus(n_synthetic: int = N_SYNTHETIC) -> list[CorpusItem]:
    return toy_programs() + eqs_systems() + synthetic_systems(n_synthetic)


def program_text(name: str) -> str:
    return (resources.files(__name__) / "programs" / f"{name}.toy").read_text(encoding="utf-8")
