"""Known speculative attack variants and the variant space around them.

Templates and the delay x source compatibility matrix live in a versioned
JSON data file (``data/catalog.json``); ``SPECDEP_CATALOG`` points at an
alternative file with the same schema.
"""

from __future__ import annotations

import fnmatch
import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

from .builder import (
    READ_KINDS,
    AccessPattern,
    AuthPattern,
    Channel,
    DelayMechanism,
    MicroOpKind,
    ThreatModel,
)
from .ir import TargetClass

__all__ = [
    "CATALOG_ENV",
    "CatalogError",
    "AttackVariantTemplate",
    "VariantMatch",
    "VariantRow",
    "Catalog",
    "load_catalog",
    "builtin_catalog",
    "match_finding",
    "match_patterns",
    "enumerate_variants",
    "find_templates",
    "preset_threat_model",
    "PRESETS",
]

CATALOG_ENV = "SPECDEP_CATALOG"
SCHEMA_VERSION = 1


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class AttackVariantTemplate:
    name: str
    preset: str
    cve: str | None
    authorization: str  # wording of the authorization column
    access: str  # wording of the illegal-access column
    delay: DelayMechanism
    auth_kind: str
    auth_host: str
    access_ops: tuple[str, ...]
    sources: tuple[MicroOpKind, ...]
    targets: tuple[TargetClass, ...] | None  # None: any protection domain
    channels: tuple[Channel, ...]
    family: str

    def matches_authorization(self, p: AuthPattern) -> bool:
        return p.kind == self.auth_kind and p.host == self.auth_host

    def matches_access(self, p: AccessPattern) -> bool:
        return (
            p.op in self.access_ops
            and p.source in self.sources
            and (self.targets is None or p.target in self.targets)
        )

    def threat_model(self) -> ThreatModel:
        return ThreatModel(frozenset({self.delay}), frozenset(self.sources), frozenset(self.channels))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "preset": self.preset,
            "cve": self.cve,
            "authorization": self.authorization,
            "access": self.access,
            "delay": self.delay.value,
            "auth_kind": self.auth_kind,
            "auth_host": self.auth_host,
            "access_ops": list(self.access_ops),
            "sources": [s.value for s in self.sources],
            "targets": None if self.targets is None else [t.value for t in self.targets],
            "channels": [c.value for c in self.channels],
            "family": self.family,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackVariantTemplate":
        try:
            return cls(
                name=d["name"],
                preset=d["preset"],
                cve=d.get("cve"),
                authorization=d["authorization"],
                access=d["access"],
                delay=DelayMechanism(d["delay"]),
                auth_kind=d["auth_kind"],
                auth_host=d["auth_host"],
                access_ops=tuple(d["access_ops"]),
                sources=tuple(MicroOpKind(s) for s in d["sources"]),
                targets=None if d.get("targets") is None else tuple(TargetClass(t) for t in d["targets"]),
                channels=tuple(Channel(c) for c in d["channels"]),
                family=d["family"],
            )
        except (KeyError, ValueError) as e:
            raise CatalogError(f"bad template {d.get('name', '?')!r}: {e}") from None


@dataclass(frozen=True)
class VariantMatch:
    finding: object  # the RaceFinding matched
    template: str
    match_quality: str  # "exact" or "partial"


@dataclass(frozen=True)
class VariantRow:
    delay: DelayMechanism
    source: MicroOpKind
    channel: Channel
    known: tuple[str, ...]
    status: str  # "known" or "speculative combination"

    @property
    def novel(self) -> bool:
        return not self.known

    def to_dict(self) -> dict:
        return {
            "delay": self.delay.value,
            "source": self.source.value,
            "channel": self.channel.value,
            "known": list(self.known),
            "status": self.status,
        }


@dataclass(frozen=True)
class Catalog:
    version: int
    templates: tuple[AttackVariantTemplate, ...]
    families: dict
    cells: dict  # (delay, source) -> (allowed, reason)
    default_allowed: bool
    unmodeled: tuple[dict, ...]

    def __iter__(self):
        return iter(self.templates)

    def __len__(self):
        return len(self.templates)

    def get(self, name: str) -> AttackVariantTemplate:
        for t in self.templates:
            if t.name == name:
                return t
        raise KeyError(name)

    def compatible(self, delay: DelayMechanism, source: MicroOpKind) -> tuple[bool, str]:
        return self.cells.get((delay, source), (self.default_allowed, "not listed"))


def _default_path():
    return resources.files("specdep").joinpath("data/catalog.json")


def load_catalog(path: str | os.PathLike | None = None) -> Catalog:
    """Load the catalog file (``path``, else ``$SPECDEP_CATALOG``, else the bundled one)."""
    path = path or os.environ.get(CATALOG_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = json.loads(_default_path().read_text(encoding="utf-8"))
    if raw.get("version") != SCHEMA_VERSION:
        raise CatalogError(f"unsupported catalog version {raw.get('version')!r}")
    templates = tuple(AttackVariantTemplate.from_dict(t) for t in raw["templates"])
    names = [t.name for t in templates]
    if len(set(names)) != len(names):
        raise CatalogError("duplicate template names")
    families = raw.get("families", {})
    for t in templates:
        if t.family not in families:
            raise CatalogError(f"{t.name}: unknown family {t.family!r}")
    comp = raw.get("compatibility", {})
    cells = {}
    for c in comp.get("cells", []):
        key = (DelayMechanism(c["delay"]), MicroOpKind(c["source"]))
        cells[key] = (bool(c["allowed"]), c.get("reason", ""))
    return Catalog(
        SCHEMA_VERSION,
        templates,
        families,
        cells,
        bool(comp.get("default_allowed", True)),
        tuple(raw.get("unmodeled", ())),
    )


def builtin_catalog() -> list[AttackVariantTemplate]:
    return list(load_catalog().templates)


def find_templates(pattern: str, catalog: Iterable[AttackVariantTemplate] | None = None):
    """Templates whose name matches a shell-style pattern."""
    catalog = builtin_catalog() if catalog is None else catalog
    return [t for t in catalog if fnmatch.fnmatchcase(t.name, pattern)]


def match_patterns(
    auth: AuthPattern,
    accesses: Sequence[AccessPattern],
    catalog: Iterable[AttackVariantTemplate],
) -> list[tuple[str, str]]:
    """(template name, quality) pairs; partial ones only when nothing is exact."""
    catalog = list(catalog)
    exact = [
        t.name
        for t in catalog
        if t.matches_authorization(auth) and any(t.matches_access(a) for a in accesses)
    ]
    if exact:
        return [(n, "exact") for n in exact]
    return [(t.name, "partial") for t in catalog if t.matches_authorization(auth)]


def match_finding(f, catalog: Iterable[AttackVariantTemplate] | None = None) -> list[VariantMatch]:
    """Classify a race finding against the catalog, exact matches first."""
    catalog = builtin_catalog() if catalog is None else catalog
    return [
        VariantMatch(f, name, quality)
        for name, quality in match_patterns(f.auth_pattern, f.access_patterns, catalog)
    ]


def enumerate_variants(
    tm_space: ThreatModel | None = None, catalog: Catalog | None = None
) -> list[VariantRow]:
    """Compatible (delay, source, channel) combinations, each tagged known or novel."""
    tm_space = ThreatModel.full() if tm_space is None else tm_space
    catalog = load_catalog() if catalog is None else catalog
    rows = []
    for d in DelayMechanism:
        if d not in tm_space.delay_mechanisms:
            continue
        for s in READ_KINDS:
            if s not in tm_space.secret_sources:
                continue
            allowed, _ = catalog.compatible(d, s)
            if not allowed:
                continue
            for c in Channel:
                if c not in tm_space.channels:
                    continue
                known = tuple(
                    t.name for t in catalog if t.delay is d and s in t.sources and c in t.channels
                )
                rows.append(VariantRow(d, s, c, known, "known" if known else "speculative combination"))
    return rows


PRESETS = {
    "mds": ThreatModel(
        frozenset({DelayMechanism.DELAYED_EXCEPTION}),
        frozenset(
            {
                MicroOpKind.READ_LINE_FILL_BUFFER,
                MicroOpKind.READ_STORE_BUFFER,
                MicroOpKind.READ_LOAD_PORT,
            }
        ),
        frozenset({Channel.FLUSH_RELOAD}),
    ),
    "full": ThreatModel.full(),
}


def preset_threat_model(name: str, catalog: Catalog | None = None) -> ThreatModel:
    if name in PRESETS:
        return PRESETS[name]
    catalog = load_catalog() if catalog is None else catalog
    for t in catalog:
        if t.preset == name:
            return t.threat_model()
    raise KeyError(name)
