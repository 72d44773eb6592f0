"""Class taxonomy: the ordered instrument classes plus one background class.

Instrument classes occupy channels ``0 .. len(classes)-1`` and the
reserved background class ("not a tool") is always the last channel, so
``num_channels == len(classes) + 1``. Name lookups are case-insensitive
and whitespace-trimmed, with an optional alias map for absorbing label
vocabulary drift in annotation exports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError, DataError

# The 27-instrument neurosurgical set used by the bundled default taxonomy.
NEURO_INSTRUMENTS: tuple[str, ...] = (
    "Adson Forceps",
    "Allis Clamp",
    "Army Navy Retractor",
    "Bayonet Forceps",
    "Bone Curette",
    "Bovie Cautery",
    "Clip Applier",
    "Cobb Retractor",
    "Debakey Forceps",
    "Gerald Forceps",
    "Irrigation Bulb",
    "Kerrison Rongeur",
    "Leksell Rongeurs",
    "Metzenbaum Scissors",
    "Mosquito Clamp",
    "Needle Driver",
    "Neuro Pattie Sponges",
    "Periosteal Elevator",
    "Raney Clip Applier",
    "Raytec Sponge",
    "Right Angle Forceps",
    "Scalpel",
    "Sponge Stick",
    "Suction",
    "Syringe",
    "Tonsil Forceps",
    "Weitlaner Retractor",
)

BACKGROUND_NAME = "not a tool"


def _canon(name: str) -> str:
    return name.strip().lower()


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered instrument class names plus the reserved background class."""

    classes: tuple[str, ...]
    background_name: str = BACKGROUND_NAME
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ConfigError("taxonomy needs at least one instrument class")
        canon = [_canon(c) for c in self.classes]
        if any(not c for c in canon):
            raise ConfigError("taxonomy class names must be nonempty")
        if len(set(canon)) != len(canon):
            dupes = sorted({c for c in canon if canon.count(c) > 1})
            raise ConfigError(f"duplicate taxonomy class names: {dupes}")
        if _canon(self.background_name) in canon:
            raise ConfigError(
                f"background name {self.background_name!r} collides with an instrument class"
            )
        object.__setattr__(
            self, "aliases", {_canon(k): v for k, v in dict(self.aliases).items()}
        )

    @property
    def background_id(self) -> int:
        return len(self.classes)

    @property
    def num_channels(self) -> int:
        return len(self.classes) + 1

    @property
    def instrument_ids(self) -> range:
        return range(len(self.classes))

    def name_of(self, class_id: int) -> str:
        if class_id == self.background_id:
            return self.background_name
        if 0 <= class_id < len(self.classes):
            return self.classes[class_id]
        raise ConfigError(f"class id {class_id} outside taxonomy (0..{self.background_id})")

    def resolve(self, name: str) -> int:
        """Map an annotation label to a class id.

        Matching trims whitespace and ignores case; the alias map is
        consulted first so exports with divergent label strings can be
        ingested without editing the annotation file.
        """
        key = _canon(name)
        key = _canon(self.aliases.get(key, key))
        if key == _canon(self.background_name):
            return self.background_id
        for i, cls in enumerate(self.classes):
            if _canon(cls) == key:
                return i
        raise DataError(f"unknown class name {name!r}: not in taxonomy")

    def with_aliases(self, aliases: Mapping[str, str]) -> "ClassTaxonomy":
        merged = dict(self.aliases)
        merged.update({_canon(k): v for k, v in aliases.items()})
        return ClassTaxonomy(self.classes, self.background_name, merged)

    @classmethod
    def from_file(cls, path: str | Path, aliases: Mapping[str, str] | None = None) -> "ClassTaxonomy":
        """Load instrument class names from a text file, one per line.

        Blank lines and lines starting with ``#`` are ignored.
        """
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read taxonomy file {path}: {exc}") from exc
        names = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
        if not names:
            raise DataError(f"taxonomy file {path} lists no classes")
        return cls(tuple(names), aliases=aliases or {})


def default_taxonomy(aliases: Mapping[str, str] | None = None) -> ClassTaxonomy:
    """The bundled 27-instrument taxonomy (28 channels with background)."""
    return ClassTaxonomy(NEURO_INSTRUMENTS, aliases=aliases or {})


def counts_by_class(class_ids: Iterable[int], taxonomy: ClassTaxonomy) -> dict[str, int]:
    counts: dict[str, int] = {}
    for cid in class_ids:
        name = taxonomy.name_of(cid)
        counts[name] = counts.get(name, 0) + 1
    return counts
