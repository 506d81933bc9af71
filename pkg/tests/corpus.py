"""Loader for the shipped program corpus."""

from __future__ import annotations

from pathlib import Path

from dynthreads.lang import Comp, desugar, parse_program

PROGRAMS_DIR = Path(__file__).resolve().parent.parent / "programs"


def corpus_names() -> list[str]:
    return sorted(p.stem for p in PROGRAMS_DIR.glob("*.prog"))


def load_surface(name: str) -> Comp:
    text = (PROGRAMS_DIR / f"{name}.prog").read_text()
    world, comp = parse_program(text)
    assert not world, f"{name}: corpus programs live in the empty world"
    return comp


def load_core(name: str) -> Comp:
    return desugar(load_surface(name))
