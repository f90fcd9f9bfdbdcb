import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wehlerlab import geometry as geo
from wehlerlab.group import (
    Word,
    apply_word,
    group_classify,
    mobius_classify,
    verify_non_elementary,
    walk_arr,
)


def test_word_conventions():
    w = Word.parse("123")
    assert w.actions == (2, 1, 0)  # the last letter acts first
    assert str(w.inverse()) == "321"
    assert str(Word.parse("1223").reduced()) == "13"
    assert str(Word.parse("12") ** 2) == "1212"
    with pytest.raises(ValueError):
        Word((4,))


def test_word_application_composes(generic, rng):
    P = geo.random_surface_points(generic.a, 20, rng)
    step = geo.involute_arr(generic.a, 2, P)
    step = geo.involute_arr(generic.a, 0, step)
    assert np.max(geo.fs_distance_arr(walk_arr(generic.a, Word.parse("13").actions, P), step)) < 1e-12


def test_word_times_inverse_is_identity(generic):
    p = geo.random_point(generic, seed=4)
    w = Word.parse("12312")
    q = apply_word(generic, w.inverse() * w, p)
    assert geo.fs_distance(p, q) < 1e-9


@pytest.mark.parametrize(
    "m, kind",
    [
        (np.eye(2), "identity"),
        ([[1, 1], [0, 1]], "parabolic"),
        ([[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]], "elliptic"),
        ([[2, 1], [1, 1]], "loxodromic"),
        ([[2, 0], [0, 0.5j]], "loxodromic"),
    ],
)
def test_mobius_kinds(m, kind):
    assert mobius_classify(m).kind == kind


def test_loxodromic_fixed_points_are_eigenvectors():
    info = mobius_classify([[2, 1], [1, 1]])
    m = np.array([[2, 1], [1, 1]], dtype=complex)
    for p in info.fixed_points:
        assert geo.chordal(geo.normalize_pairs(m @ p), p) < 1e-12


def test_classify_free_group_is_non_elementary():
    gc = group_classify([[[1, 2], [0, 1]], [[1, 0], [2, 1]]], seed=0)
    assert gc.kind == "non_elementary"
    assert verify_non_elementary(gc)


def test_classify_diagonal_group():
    gc = group_classify([np.diag([2, 0.5]), np.diag([3, 1 / 3])], seed=0)
    assert gc.kind == "reducible_two_lines"


def test_classify_strictly_triangular():
    gc = group_classify([[[2, 1], [0, 0.5]], [[3, 0], [0, 1 / 3]]], seed=0)
    assert gc.kind == "strictly_triangular"


def test_classify_swapped_lines():
    gc = group_classify([np.diag([2, 0.5]), [[0, 1], [1, 0]]], seed=0)
    assert gc.kind == "reducible_two_lines_swapped"


def test_classify_compact_group_is_bounded():
    r = lambda t: [[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]]
    gc = group_classify([r(0.4), r(1.1)], seed=0)
    assert gc.kind == "bounded" and gc.heuristic


def test_classify_parabolic_group():
    gc = group_classify([[[1, 1], [0, 1]], [[1, 3], [0, 1]]], seed=0)
    assert gc.kind == "reducible_one_line"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_classification_invariant_under_conjugation(seed):
    rng = np.random.default_rng(seed)
    gens = [rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(2)]
    h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    conj = [h @ g @ np.linalg.inv(h) for g in gens]
    assert group_classify(gens, seed=1).kind == group_classify(conj, seed=1).kind
