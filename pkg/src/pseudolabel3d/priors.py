"""Per-class size priors (width, length, height) and class-name handling."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

SIZE_PRIORS_VERSION = 1


def canonical_class_name(name: str) -> str:
    """``"Construction vehicle"`` -> ``"construction_vehicle"``."""
    return re.sub(r"[\s\-]+", "_", name.strip()).lower()


@dataclass(frozen=True)
class SizePrior:
    class_name: str
    width: float
    length: float
    height: float
    display_name: Optional[str] = None

    def __post_init__(self):
        if not (self.width > 0 and self.length > 0 and self.height > 0):
            raise ValueError(f"prior {self.class_name} has non-positive dimensions")

    @property
    def dims(self) -> tuple[float, float, float]:
        return (self.width, self.length, self.height)


def parse_size_priors(doc: dict) -> list[SizePrior]:
    version = doc.get("format_version")
    if version != SIZE_PRIORS_VERSION:
        raise ValueError(f"unsupported size-prior format version {version!r}")
    priors = [
        SizePrior(
            canonical_class_name(p["class_name"]),
            float(p["width"]),
            float(p["length"]),
            float(p["height"]),
            p.get("display_name"),
        )
        for p in doc["priors"]
    ]
    names = [p.class_name for p in priors]
    if len(set(names)) != len(names):
        raise ValueError("duplicate class in size-prior table")
    return priors


def load_size_priors(path: Union[str, Path, None] = None) -> list[SizePrior]:
    """Load a size-prior table; without ``path`` the bundled default is used."""
    if path is None:
        text = resources.files("pseudolabel3d").joinpath("data/size_priors.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_size_priors(json.loads(text))


def size_priors_document(priors: Sequence[SizePrior]) -> dict:
    return {
        "format_version": SIZE_PRIORS_VERSION,
        "units": "m",
        "priors": [
            {
                "class_name": p.class_name,
                "display_name": p.display_name,
                "width": p.width,
                "length": p.length,
                "height": p.height,
            }
            for p in priors
        ],
    }


DEFAULT_SIZE_PRIORS = tuple(load_size_priors())
