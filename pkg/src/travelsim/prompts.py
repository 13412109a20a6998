"""Versioned prompt templates shipped in ``travelsim/prompts``."""
from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: str
    text: str

    def render(self, **values) -> str:
        return string.Template(self.text).substitute(**values)


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    raw = resources.files("travelsim").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")
    version = "0"
    lines = raw.splitlines()
    if lines and lines[0].startswith("# version:"):
        version = lines[0].split(":", 1)[1].strip()
        lines = lines[1:]
    return PromptTemplate(name, version, "\n".join(lines).strip() + "\n")


def template_versions() -> dict[str, str]:
    names = sorted(p.name[:-4] for p in resources.files("travelsim").joinpath("prompts").iterdir() if p.name.endswith(".txt"))
    return {n: load_template(n).version for n in names}
