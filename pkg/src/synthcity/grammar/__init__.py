"""Shape-grammar language: parser, split arithmetic and derivation."""

from .ast import Program, Rule
from .interpreter import derive, roof_surfaces
from .parser import format_program, link, parse_grammar
from .split import SPLIT_RTOL, Rel, apply_split

__all__ = ["Program", "Rule", "derive", "roof_surfaces", "format_program", "link",
           "parse_grammar", "SPLIT_RTOL", "Rel", "apply_split"]
