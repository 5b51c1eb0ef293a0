import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxa.errors import DuplicateSpeciesError, MissingLevelError, UnknownPathError
from taxa.taxonomy import LEVEL_NAMES, TaxonomyTree, TaxonPath, parse_labels

CAT = TaxonPath(("Animalia", "Chordata", "Mammalia", "Carnivora", "Felidae", "Felis", "Catus"))
LION = TaxonPath(("Animalia", "Chordata", "Mammalia", "Carnivora", "Felidae", "Panthera", "Leo"))
HYENA = TaxonPath(("Animalia", "Chordata", "Mammalia", "Carnivora", "Hyaenidae", "Crocuta", "Crocuta"))


def small_tree():
    tree = TaxonomyTree()
    for p in (CAT, LION, HYENA):
        tree.add(p)
    return tree


def synthetic_tree(branching=(1, 1, 2, 2, 2, 2, 3)):
    """Enumerate a full product taxonomy with the given per-level child counts."""
    tree = TaxonomyTree(depth=len(branching))
    letters = "KPCOFGS"
    paths = [()]
    counters = [0] * len(branching)
    for lvl, width in enumerate(branching):
        nxt = []
        for p in paths:
            for _ in range(width):
                nxt.append(p + (f"{letters[lvl]}{counters[lvl]}",))
                counters[lvl] += 1
        paths = nxt
    for p in paths:
        tree.add(TaxonPath(p))
    return tree, [TaxonPath(p) for p in paths]


def test_seven_levels_canonical():
    assert LEVEL_NAMES == ("Kingdom", "Phylum", "Class", "Order", "Family", "Genus", "Species")


def test_parse_cat_single_leaf_under_felidae():
    tree = parse_labels([("r0", CAT)])
    assert tree.n_species == 1
    assert tree.node(4, CAT.prefix(4)).leaf_count == 1


def test_parse_empty_manifest():
    tree = parse_labels([])
    assert tree.n_species == 0


def test_parse_aggregates_duplicate_records():
    tree = parse_labels([("r0", CAT), ("r1", CAT)])
    assert tree.n_species == 1
    assert tree.sample_count(CAT) == 2


def test_missing_level_rejected():
    with pytest.raises(MissingLevelError) as e:
        parse_labels([("r9", TaxonPath(CAT.names[:6]))])
    assert "Species" in str(e.value) and "r9" in str(e.value)


def test_duplicate_species_conflict():
    other = TaxonPath(("Animalia", "Chordata", "Mammalia", "Carnivora", "Canidae", "Canis", "Catus"))
    tree = TaxonomyTree()
    tree.add(CAT)
    with pytest.raises(DuplicateSpeciesError):
        tree.add(other)


def test_prefix_lion_hyena_shared_through_order():
    assert LION.prefix(3) == HYENA.prefix(3) == "Animalia-Chordata-Mammalia-Carnivora"
    assert LION.prefix(4) != HYENA.prefix(4)


def test_prefix_level_zero_and_full():
    assert CAT.prefix(0) == "Animalia"
    assert CAT.prefix(6) == CAT.full == "Animalia-Chordata-Mammalia-Carnivora-Felidae-Felis-Catus"


def test_prefix_monotone_truncation():
    for i in range(6):
        assert CAT.prefix(i + 1).startswith(CAT.prefix(i))


def test_names_trimmed_but_case_sensitive():
    p = TaxonPath((" Animalia ", "Chordata", "Mammalia", "Carnivora", "Felidae", "Felis", "catus"))
    assert p.names[0] == "Animalia"
    assert p.names[6] == "catus" != "Catus"


def test_empty_name_rejected():
    with pytest.raises(ValueError):
        TaxonPath(("Animalia", " ", "Mammalia", "Carnivora", "Felidae", "Felis", "Catus"))


def test_level_vocabulary_sizes():
    tree, _ = synthetic_tree()
    sizes = [len(tree.level_vocabulary(i)) for i in range(7)]
    assert sizes == [1, 1, 2, 4, 8, 16, 48]


def test_vocabulary_single_kingdom():
    tree = small_tree()
    assert tree.level_vocabulary(0) == ["Animalia"]


def test_vocabulary_nondecreasing():
    tree, _ = synthetic_tree()
    sizes = [len(tree.level_vocabulary(i)) for i in range(7)]
    assert sizes == sorted(sizes)


def test_siblings_at_species_is_self():
    tree = small_tree()
    assert tree.siblings(CAT, 6) == [CAT]


def test_siblings_at_kingdom_is_everything():
    tree = small_tree()
    assert set(p.full for p in tree.siblings(CAT, 0)) == {CAT.full, LION.full, HYENA.full}


def test_siblings_rare_species_still_has_genus_siblings():
    tree = TaxonomyTree()
    rare = TaxonPath(("A", "B", "C", "D", "E", "G", "S1"))
    common = TaxonPath(("A", "B", "C", "D", "E", "G", "S2"))
    tree.add(rare, samples=1)
    tree.add(common, samples=50)
    sibs = tree.siblings(rare, 5)
    assert {p.species for p in sibs} == {"S1", "S2"}


def test_siblings_unknown_path():
    tree = small_tree()
    with pytest.raises(UnknownPathError):
        tree.siblings(TaxonPath(("X",) * 7), 3)


def test_siblings_nested():
    tree = small_tree()
    for i in range(6):
        outer = {p.full for p in tree.siblings(CAT, i)}
        inner = {p.full for p in tree.siblings(CAT, i + 1)}
        assert inner <= outer


def test_sample_counts_sum_over_children():
    tree, paths = synthetic_tree()
    for i in range(7):
        total = sum(tree.node(i, v).sample_count for v in tree.level_vocabulary(i))
        assert total == len(paths)


def test_roundtrip_rebuild_identical():
    tree, paths = synthetic_tree()
    rebuilt = TaxonomyTree(depth=7)
    for p in tree.species_paths():
        rebuilt.add(p, samples=tree.sample_count(p))
    assert rebuilt == tree


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=5))
def test_refinement_property(branching):
    """Level i+1 prefixes partition each level-i prefix class."""
    tree, paths = synthetic_tree(tuple(branching))
    depth = len(branching)
    for i in range(depth - 1):
        groups: dict[str, set] = {}
        for p in paths:
            groups.setdefault(p.prefix(i + 1), set()).add(p.prefix(i))
        for coarse in groups.values():
            assert len(coarse) == 1
