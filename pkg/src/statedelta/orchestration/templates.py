"""Prompt templates as editable text files with ``{name}`` slots.

Only slots the caller supplies are substituted, so literal braces such as
``\\boxed{answer}`` in a template survive rendering untouched.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "assets" / "templates"

_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    name: str
    text: str

    @property
    def slots(self) -> tuple[str, ...]:
        seen = []
        for m in _SLOT.finditer(self.text):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)

    def split(self, values: Mapping[str, object]) -> list[tuple[str, object]]:
        """Alternating ``("text", str)`` and ``("slot", value)`` pieces."""
        missing = [s for s in values if s not in self.slots]
        if missing:
            raise TemplateError(f"template {self.name!r} has no slot(s) {missing}")
        out: list[tuple[str, object]] = []
        pos = 0
        for m in _SLOT.finditer(self.text):
            if m.group(1) not in values:
                continue
            if m.start() > pos:
                out.append(("text", self.text[pos : m.start()]))
            out.append(("slot", values[m.group(1)]))
            pos = m.end()
        if pos < len(self.text):
            out.append(("text", self.text[pos:]))
        return out

    def fill(self, **values: str) -> str:
        return "".join(v if kind == "text" else str(v) for kind, v in self.split(values))


def load_template(name: str, directory: Path | str | None = None) -> Template:
    path = Path(directory or TEMPLATE_DIR) / f"{name}.txt"
    if not path.is_file():
        raise TemplateError(f"no template {name!r} in {path.parent}")
    text = path.read_text(encoding="utf-8")
    # editors add a trailing newline; templates are joined explicitly
    if text.endswith("\n"):
        text = text[:-1]
    return Template(name, text)


@dataclass(frozen=True)
class TurnSyntax:
    """How chat turns are rendered around their content."""

    open: str = "<{role}>\n"
    close: str = "\n</{role}>\n"

    def opening(self, role: str) -> str:
        return self.open.format(role=role)

    def closing(self, role: str) -> str:
        return self.close.format(role=role)
