"""Addition-instruction rendering from a template bank.

The bank is a static data file (one `style<TAB>pattern` per line) so runs
are deterministic and offline. Patterns carry `[obj]`, `[count] [obj]`, or
`[obj_1]`/`[obj_2]` placeholders.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

from .errors import ArityMismatchError, EmptyBankError, ParseError
from .seeding import derive_rng

STYLES = ("imperative", "declarative", "interrogative")

# vowel spellings that take "a", consonant spellings that take "an"
_A_EXCEPTIONS = {"unicorn", "unicycle", "uniform", "user", "utensil", "one", "european", "ukulele"}
_AN_EXCEPTIONS = {"hour", "honest", "heir", "honor"}

_IRREGULAR_PLURALS = {
    "person": "people",
    "sheep": "sheep",
    "mouse": "mice",
    "goose": "geese",
    "child": "children",
    "foot": "feet",
    "tooth": "teeth",
    "deer": "deer",
    "scissors": "scissors",
    "skis": "skis",
}

_NUMBER_WORDS = {
    1: "one", 2: "two", 3: "three", 4: "four", 5: "five",
    6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten",
}


@dataclass(frozen=True)
class InstructionTemplate:
    pattern: str
    style: str

    @property
    def kind(self) -> str:
        if "[obj_1]" in self.pattern:
            return "pair"
        if "[count]" in self.pattern:
            return "count"
        return "single"


@dataclass(frozen=True)
class ObjectPhrase:
    category: str
    attributes: str | None = None
    relation: str | None = None
    count: int = 1


def indefinite_article(phrase: str) -> str:
    word = phrase.split()[0].lower()
    if word in _A_EXCEPTIONS:
        return "a"
    if word in _AN_EXCEPTIONS:
        return "an"
    return "an" if word[:1] in "aeiou" else "a"


def pluralize(noun: str) -> str:
    head = noun.split()[-1]
    rest = noun[: len(noun) - len(head)]
    low = head.lower()
    if low in _IRREGULAR_PLURALS:
        plural = _IRREGULAR_PLURALS[low]
    elif low.endswith(("s", "x", "z", "ch", "sh")):
        plural = head + "es"
    elif low.endswith("y") and len(low) > 1 and low[-2] not in "aeiou":
        plural = head[:-1] + "ies"
    else:
        plural = head + "s"
    return rest + plural


def count_word(n: int) -> str:
    return _NUMBER_WORDS.get(n, str(n))


def _bare_phrase(obj: ObjectPhrase, plural: bool) -> str:
    noun = pluralize(obj.category) if plural else obj.category
    parts = []
    if obj.attributes:
        parts.append(obj.attributes)
    parts.append(noun)
    if obj.relation:
        parts.append(obj.relation)
    return " ".join(parts)


def _counted_phrase(obj: ObjectPhrase) -> str:
    """Self-contained noun phrase: "a dog", "an apple", "two sheep"."""
    if obj.count == 1:
        bare = _bare_phrase(obj, plural=False)
        return f"{indefinite_article(bare)} {bare}"
    return f"{count_word(obj.count)} {_bare_phrase(obj, plural=True)}"


def parse_template(line: str) -> InstructionTemplate:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 2:
        raise ParseError(f"template line needs style<TAB>pattern: {line!r}")
    style, pattern = parts[0].strip(), parts[1].strip()
    if style not in STYLES:
        raise ParseError(f"unknown template style {style!r}")
    _validate_pattern(pattern)
    return InstructionTemplate(pattern=pattern, style=style)


def _validate_pattern(pattern: str) -> None:
    has_pair = "[obj_1]" in pattern and "[obj_2]" in pattern
    has_single = "[obj]" in pattern
    if not (has_pair or has_single):
        raise ParseError(f"pattern has no object placeholder: {pattern!r}")
    if has_pair and has_single:
        raise ParseError(f"pattern mixes [obj] with [obj_1]/[obj_2]: {pattern!r}")
    if "[count]" in pattern and not has_single:
        raise ParseError(f"[count] requires a matching [obj]: {pattern!r}")
    leftover = pattern
    for ph in ("[obj_1]", "[obj_2]", "[count]", "[obj]"):
        leftover = leftover.replace(ph, "")
    if "[" in leftover or "]" in leftover:
        raise ParseError(f"malformed placeholder in pattern: {pattern!r}")


def load_template_bank(path=None) -> list[InstructionTemplate]:
    """Load a bank file; defaults to the shipped bank."""
    if path is None:
        text = (
            importlib.resources.files("addpipe").joinpath("data/template_bank.tsv").read_text()
        )
    else:
        text = Path(path).read_text()
    templates = []
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        templates.append(parse_template(line))
    if not templates:
        raise EmptyBankError("template bank has no templates")
    return templates


def compatible(template: InstructionTemplate, objects: list[ObjectPhrase]) -> bool:
    kind = template.kind
    if kind == "pair":
        return len(objects) >= 2
    if kind == "count":
        return len(objects) == 1
    return len(objects) == 1 and objects[0].count == 1


def render_instruction(objects: list[ObjectPhrase], template: InstructionTemplate) -> str:
    """Substitute object phrases into the template.

    Raises ArityMismatch when the placeholder shape cannot host the phrases
    (for instance a bare "a [obj]" pattern given two categories).
    """
    if not objects:
        raise ArityMismatchError("no object phrases given")
    if any(o.count < 1 or not o.category for o in objects):
        raise ArityMismatchError("object phrases need a category and count >= 1")
    if not compatible(template, objects):
        raise ArityMismatchError(
            f"template {template.pattern!r} incompatible with {len(objects)} phrase(s)"
        )
    kind = template.kind
    if kind == "pair":
        first = _counted_phrase(objects[0])
        second = " and ".join(_counted_phrase(o) for o in objects[1:])
        return template.pattern.replace("[obj_1]", first).replace("[obj_2]", second)
    if kind == "count":
        obj = objects[0]
        noun = _bare_phrase(obj, plural=obj.count >= 2)
        out = template.pattern.replace("[count]", count_word(obj.count))
        return out.replace("[obj]", noun)
    return _render_single(template.pattern, objects[0])


def _render_single(pattern: str, obj: ObjectPhrase) -> str:
    bare = _bare_phrase(obj, plural=False)
    # rewrite an indefinite article immediately before the placeholder
    for article in ("a", "an", "A", "An"):
        marker = f"{article} [obj]"
        if marker in pattern:
            chosen = indefinite_article(bare)
            if article[0].isupper():
                chosen = chosen.capitalize()
            return pattern.replace(marker, f"{chosen} {bare}")
    return pattern.replace("[obj]", bare)


def render_from_bank(objects: list[ObjectPhrase], bank: list[InstructionTemplate], seed) -> str:
    """Deterministically pick a compatible template and render it."""
    if not bank:
        raise EmptyBankError("template bank has no templates")
    options = [t for t in bank if compatible(t, objects)]
    if not options:
        raise ArityMismatchError(f"no bank template fits {len(objects)} phrase(s)")
    rng = derive_rng(seed, "template")
    template = options[int(rng.integers(len(options)))]
    return render_instruction(objects, template)


def phrases_from_categories(names: list[str]) -> list[ObjectPhrase]:
    """Collapse repeated category names into counted phrases, order-preserving."""
    counts: dict[str, int] = {}
    for name in names:
        counts[name] = counts.get(name, 0) + 1
    return [ObjectPhrase(category=name, count=n) for name, n in counts.items()]
