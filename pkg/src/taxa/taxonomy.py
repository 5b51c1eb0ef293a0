"""The taxonomic hierarchy: paths, trees, prefixes, siblings.

Levels are indexed 0..6 = Kingdom..Species. Truncated names join the first
i+1 level names with a single "-" (no spaces); names are whitespace-trimmed
but otherwise case-sensitive, so truncated names are stable hash inputs.
A tree may be built over a contiguous top-k subset of levels (depth <= 7).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DuplicateSpeciesError, MissingLevelError, UnknownPathError

LEVEL_NAMES = ("Kingdom", "Phylum", "Class", "Order", "Family", "Genus", "Species")
SEPARATOR = "-"
MAX_DEPTH = len(LEVEL_NAMES)


def level_name(i: int) -> str:
    return LEVEL_NAMES[i]


@dataclass(frozen=True)
class TaxonPath:
    """One name per level, Kingdom -> deepest; all entries non-empty."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not (1 <= len(self.names) <= MAX_DEPTH):
            raise ValueError(f"path must have 1..{MAX_DEPTH} levels, got {len(self.names)}")
        cleaned = tuple(n.strip() for n in self.names)
        if any(not n for n in cleaned):
            raise ValueError(f"empty level name in {self.names!r}")
        object.__setattr__(self, "names", cleaned)

    @property
    def depth(self) -> int:
        return len(self.names)

    def prefix(self, i: int) -> str:
        """Truncated name through level i; prefix(depth-1) is the full name."""
        if not (0 <= i < self.depth):
            raise ValueError(f"level {i} outside path depth {self.depth}")
        return SEPARATOR.join(self.names[: i + 1])

    @property
    def full(self) -> str:
        return self.prefix(self.depth - 1)

    @property
    def species(self) -> str:
        return self.names[-1]

    def __str__(self) -> str:
        return self.full


def prefix(path: TaxonPath, i: int) -> str:
    return path.prefix(i)


@dataclass
class _Node:
    children: set = field(default_factory=set)  # child name strings
    leaf_count: int = 0     # species leaves under this node
    sample_count: int = 0   # images under this node


class TaxonomyTree:
    """Immutable after build(); nodes keyed by (level, truncated name)."""

    def __init__(self, depth: int = MAX_DEPTH):
        if not (1 <= depth <= MAX_DEPTH):
            raise ValueError(f"depth must be 1..{MAX_DEPTH}")
        self.depth = depth
        self._nodes: dict[tuple[int, str], _Node] = {}
        self._leaves: dict[str, tuple[TaxonPath, int]] = {}  # full name -> (path, samples)
        self._species_ancestry: dict[str, str] = {}          # species name -> full name

    def add(self, path: TaxonPath, samples: int = 1, record_id="<record>") -> None:
        if path.depth != self.depth:
            missing = LEVEL_NAMES[min(path.depth, self.depth - 1)]
            raise MissingLevelError(record_id, missing)
        seen = self._species_ancestry.get(path.species)
        if seen is not None and seen != path.full:
            raise DuplicateSpeciesError(
                f"species {path.species!r} appears under {seen!r} and {path.full!r}")
        self._species_ancestry[path.species] = path.full

        new_leaf = path.full not in self._leaves
        if new_leaf:
            self._leaves[path.full] = (path, samples)
        else:
            p, s = self._leaves[path.full]
            self._leaves[path.full] = (p, s + samples)
        for i in range(self.depth):
            node = self._nodes.setdefault((i, path.prefix(i)), _Node())
            node.sample_count += samples
            if new_leaf:
                node.leaf_count += 1
            if i + 1 < self.depth:
                node.children.add(path.names[i + 1])

    # ---- queries ------------------------------------------------------

    @property
    def n_species(self) -> int:
        return len(self._leaves)

    def species_paths(self) -> list[TaxonPath]:
        return [p for p, _ in (self._leaves[k] for k in sorted(self._leaves))]

    def sample_count(self, path: TaxonPath) -> int:
        try:
            return self._leaves[path.full][1]
        except KeyError:
            raise UnknownPathError(f"unknown path {path.full!r}")

    def contains(self, path: TaxonPath) -> bool:
        return path.full in self._leaves

    def level_vocabulary(self, i: int) -> list[str]:
        """Sorted, duplicate-free truncated names present at level i."""
        if not (0 <= i < self.depth):
            raise ValueError(f"level {i} outside depth {self.depth}")
        return sorted(name for (lvl, name) in self._nodes if lvl == i)

    def siblings(self, path: TaxonPath, i: int) -> list[TaxonPath]:
        """Species sharing path's level-i prefix, including path itself."""
        if path.full not in self._leaves:
            raise UnknownPathError(f"unknown path {path.full!r}")
        want = path.prefix(i)
        return [p for p in self.species_paths() if p.prefix(i) == want]

    def node(self, i: int, truncated: str) -> _Node:
        return self._nodes[(i, truncated)]

    def dump_text(self) -> str:
        """Plain-text summary for the CLI inspect command."""
        lines = [f"taxonomy: depth={self.depth} species={self.n_species}"]
        vocab_sizes = ",".join(str(len(self.level_vocabulary(i))) for i in range(self.depth))
        lines.append(f"level vocabulary sizes: {vocab_sizes}")
        for i in range(self.depth):
            lines.append(f"[{i}] {LEVEL_NAMES[i]}: {len(self.level_vocabulary(i))} categories")
        return "\n".join(lines)

    def __eq__(self, other) -> bool:
        return (isinstance(other, TaxonomyTree)
                and self.depth == other.depth
                and self._leaves == other._leaves)


def parse_labels(records, depth: int = MAX_DEPTH) -> TaxonomyTree:
    """Build a tree from (record_id, TaxonPath) pairs, one per image.

    Records with missing levels are rejected (MissingLevelError); a species
    name reappearing under a different ancestry raises DuplicateSpeciesError.
    """
    tree = TaxonomyTree(depth)
    for record_id, path in records:
        tree.add(path, samples=1, record_id=record_id)
    return tree
