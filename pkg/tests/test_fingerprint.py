import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemeval.fingerprint import (
    DEFAULT_PARAMS,
    Fingerprint,
    FingerprintParams,
    GoldInvalid,
    InvalidParameter,
    ParameterMismatch,
    environment_ids,
    fingerprint,
    fnv1a_64,
    similarity_of_smiles,
    tanimoto,
)
from chemeval.smiles import parse, permute, write
from molgen import molecules
from oracles import enumerate_environments, fnv1a64, tanimoto_sets


@pytest.mark.parametrize(
    "data, expected",
    [
        (b"", 0xCBF29CE484222325),
        (b"a", 0xAF63DC4C8601EC8C),
        (b"foobar", 0x85944171F73967E8),
    ],
)
def test_fnv_reference_vectors(data, expected):
    assert fnv1a_64(data) == expected == fnv1a64(data)


def test_defaults():
    assert (DEFAULT_PARAMS.radius, DEFAULT_PARAMS.width) == (2, 2048)
    fp = fingerprint(parse("CCO"))
    assert (fp.radius, fp.width) == (2, 2048)


@pytest.mark.parametrize("width", [0, -64, 100, 63, 32])
def test_bad_width(width):
    with pytest.raises(InvalidParameter):
        fingerprint(parse("C"), width=width)
    with pytest.raises(InvalidParameter):
        FingerprintParams(width=width)


@pytest.mark.parametrize("radius", [-1, 17])
def test_bad_radius(radius):
    with pytest.raises(InvalidParameter):
        fingerprint(parse("C"), radius=radius)


def test_identical_molecules():
    a = fingerprint(parse("CCO"))
    assert tanimoto(a, fingerprint(parse("OCC"))) == 1.0
    assert tanimoto(a, a) == 1.0


def test_ethanol_vs_ethylamine():
    # shared: C(H3) and C(H2) atoms at radius 0, the methyl environment at radius 1.
    # 9 environments each, union 15, intersection 3.
    assert tanimoto(fingerprint(parse("CCO")), fingerprint(parse("CCN"))) == pytest.approx(0.2)


def test_similarity_is_symmetric_example():
    a, b = fingerprint(parse("c1ccccc1")), fingerprint(parse("c1ccncc1"))
    assert tanimoto(a, b) == tanimoto(b, a) == pytest.approx(1 / 3)


def test_empty_fingerprints():
    empty = Fingerprint(0, 2048, 2)
    assert tanimoto(empty, empty) == 1.0
    assert tanimoto(empty, fingerprint(parse("C"))) == 0.0


def test_mismatched_params():
    with pytest.raises(ParameterMismatch):
        tanimoto(fingerprint(parse("C"), width=1024), fingerprint(parse("C")))
    with pytest.raises(ParameterMismatch):
        tanimoto(fingerprint(parse("C"), radius=1), fingerprint(parse("C")))


def test_on_bits_and_count():
    fp = fingerprint(parse("CCO"), width=64)
    assert fp.n_set == len(fp.on_bits())
    assert all(0 <= b < 64 for b in fp.on_bits())


def test_radius_zero_is_atom_types():
    fp = fingerprint(parse("CCCC"), radius=0)
    assert fp.n_set == 2  # CH3 and CH2


def test_multi_component_union():
    both = fingerprint(parse("CCO.c1ccccc1"))
    left, right = fingerprint(parse("CCO")), fingerprint(parse("c1ccccc1"))
    assert both.bits == left.bits | right.bits


@pytest.mark.parametrize(
    "smiles",
    ["CCO", "c1ccccc1", "CC(=O)Nc1ccc(O)cc1", "[NH4+].[Cl-]", "C1CC1", "N#Cc1ccccc1", "[13CH3]O"],
)
@pytest.mark.parametrize("radius", [0, 1, 2, 3])
def test_identifiers_match_unfolding_oracle(smiles, radius):
    mol = parse(smiles)
    trees, oracle_ids = enumerate_environments(mol, radius)
    ids = {i for layer in environment_ids(mol, radius) for i in layer}
    assert ids == oracle_ids
    assert len(ids) == len(trees)
    assert fingerprint(mol, radius).bits == sum(1 << b for b in {i % 2048 for i in ids})


@given(molecules(max_atoms=10), st.integers(0, 3))
def test_oracle_property(mol, radius):
    _, oracle_ids = enumerate_environments(mol, radius)
    assert {i for layer in environment_ids(mol, radius) for i in layer} == oracle_ids


@settings(max_examples=60)
@given(molecules(), st.randoms(use_true_random=False))
def test_permutation_invariance(mol, rnd):
    order = list(range(len(mol)))
    rnd.shuffle(order)
    assert fingerprint(permute(mol, order)) == fingerprint(mol)
    assert fingerprint(parse(write(mol))) == fingerprint(mol)


@given(molecules(), molecules())
def test_axioms(m1, m2):
    a, b = fingerprint(m1), fingerprint(m2)
    t = tanimoto(a, b)
    assert 0.0 <= t <= 1.0
    assert t == tanimoto(b, a)
    assert tanimoto(a, a) == 1.0


def test_folded_oracle_on_corpus_pairs(corpus):
    rng = random.Random(11)
    for _ in range(50):
        s1, s2 = rng.choice(corpus), rng.choice(corpus)
        sets = []
        for s in (s1, s2):
            _, ids = enumerate_environments(parse(s), 2)
            sets.append({i % 2048 for i in ids})
        got = tanimoto(fingerprint(parse(s1)), fingerprint(parse(s2)))
        assert got == pytest.approx(tanimoto_sets(*sets)), (s1, s2)


# --- similarity_of_smiles -------------------------------------------------------


def test_similarity_of_smiles_rules():
    assert similarity_of_smiles("OCC", "CCO") == 1.0
    assert similarity_of_smiles("CCN", "CCO") == pytest.approx(0.2)
    assert similarity_of_smiles("C1CC", "CCO") == 0.0
    assert similarity_of_smiles(None, "CCO") == 0.0
    assert similarity_of_smiles("", "CCO") == 0.0


def test_similarity_of_smiles_bad_gold():
    with pytest.raises(GoldInvalid) as err:
        similarity_of_smiles("CCO", "C1CC")
    assert "unmatched ring closure" in str(err.value)


def test_similarity_custom_params():
    p = FingerprintParams(radius=1, width=1024)
    assert 0.0 < similarity_of_smiles("CCN", "CCO", p) < 1.0
