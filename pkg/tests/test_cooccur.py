"""
Co-occurrence Matrix Tests
~~~~~~~~~~~~~~~~~~~~~~~~~~
"""
import numpy as np
import pytest

from cologic import cooccur
from cologic.constants import Branch, ConstraintMode
from cologic.exceptions import (
    BoundsError,
    ConfigError,
    DimensionMismatch,
    EmptyMask,
    InvalidConstraintSet,
    ParseError,
    VocabMismatch,
)
from cologic.formula import And, Atom, Not, logic_loss, semantic_loss

from .base import assignment, write_vocab


def vocab(verbs, nouns):
    return cooccur.Vocabulary.anonymous(verbs, nouns)


def negated_pair(i, j):
    return Not(And(Atom(Branch.VERB, i), Atom(Branch.NOUN, j)))


#
# Building
#


def test_build_from_annotations_counts():
    matrix = cooccur.build_from_annotations(
        [(0, 1), (0, 1), (2, 3), (1, 0)], vocab(3, 4)
    )
    assert matrix.counts[0, 1] == 2
    assert matrix.counts[2, 3] == 1
    assert matrix.total() == 4
    assert matrix.counts.sum() == 4


def test_build_accepts_annotation_records():
    records = [cooccur.Annotation("a", 1, 1), cooccur.Annotation("b", 1, 1)]
    matrix = cooccur.build_from_annotations(records, vocab(2, 2))
    assert matrix.counts.tolist() == [[0, 0], [0, 2]]


def test_build_empty_annotations():
    matrix = cooccur.build_from_annotations([], vocab(2, 3))
    assert matrix.total() == 0
    with pytest.raises(EmptyMask):
        cooccur.binarize(matrix)


def test_build_reports_first_out_of_range_record():
    with pytest.raises(BoundsError) as excinfo:
        cooccur.build_from_annotations([(0, 0), (1, 5), (4, 0)], vocab(3, 4))
    assert excinfo.value.record == 1


def test_matrix_is_read_only():
    matrix = cooccur.build_from_annotations([(0, 0)], vocab(1, 1))
    with pytest.raises(ValueError):
        matrix.counts[0, 0] = 7


def test_matrix_vocab_mismatch():
    with pytest.raises(DimensionMismatch):
        cooccur.CooccurrenceMatrix(np.zeros((2, 2)), vocab(2, 3))


def test_vocabulary_validation(tmp_path):
    with pytest.raises(ConfigError):
        cooccur.Vocabulary(("a", "a"), ("x",))
    with pytest.raises(ConfigError):
        cooccur.Vocabulary((), ("x",))
    loaded = cooccur.Vocabulary.load(write_vocab(tmp_path / "vocab.json", 2, 3))
    assert loaded.shape == (2, 3)
    assert loaded.verbs == ("verb0", "verb1")


def test_vocabulary_load_malformed(tmp_path):
    path = tmp_path / "vocab.json"
    path.write_text('{"verbs": ["a"]}', encoding="utf-8")
    with pytest.raises(ParseError):
        cooccur.Vocabulary.load(str(path))
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        cooccur.Vocabulary.load(str(path))


#
# Masks
#


def test_binarize_threshold():
    matrix = cooccur.CooccurrenceMatrix([[0, 1, 3], [2, 0, 0]])
    assert cooccur.binarize(matrix).valid.tolist() == [
        [False, True, True],
        [True, False, False],
    ]
    assert cooccur.binarize(matrix, 2).valid.tolist() == [
        [False, False, True],
        [True, False, False],
    ]
    with pytest.raises(EmptyMask):
        cooccur.binarize(matrix, 4)
    with pytest.raises(ConfigError):
        cooccur.binarize(matrix, 0)


def test_union_is_or():
    first = cooccur.ValidityMask([[1, 0], [0, 0]])
    second = cooccur.ValidityMask([[0, 0], [0, 1]])
    assert cooccur.union(first, second).valid.tolist() == [[True, False], [False, True]]
    with pytest.raises(DimensionMismatch):
        cooccur.union(first, cooccur.ValidityMask([[1, 0, 0], [0, 0, 0]]))


def test_mask_stats():
    stats = cooccur.mask_stats(cooccur.ValidityMask([[1, 0, 0], [1, 1, 0]]))
    assert stats == (3, 6, 0.5)
    assert stats.valid == 3


def test_empty_mask_rejected():
    with pytest.raises(EmptyMask):
        cooccur.ValidityMask(np.zeros((2, 2), dtype=bool))


#
# Constraint generation
#


def test_to_constraints_invalid_negations():
    mask = cooccur.ValidityMask([[1, 0], [0, 1]])
    constraints = cooccur.to_constraints(mask, ConstraintMode.INVALID_NEGATIONS)
    assert constraints.formulas == (negated_pair(0, 1), negated_pair(1, 0))
    assert (constraints.verbs, constraints.nouns) == (2, 2)


def test_to_constraints_valid_disjunction():
    mask = cooccur.ValidityMask([[1, 0, 1], [0, 0, 1]])
    constraints = cooccur.to_constraints(mask, ConstraintMode.VALID_DISJUNCTION)
    assert len(constraints) == 1
    assert constraints.valid_pairs() == ((0, 0), (0, 2), (1, 2))


def test_to_constraints_all_valid():
    mask = cooccur.ValidityMask(np.ones((2, 2), dtype=bool))
    with pytest.raises(InvalidConstraintSet):
        cooccur.to_constraints(mask, ConstraintMode.INVALID_NEGATIONS)
    assert len(cooccur.to_constraints(mask, ConstraintMode.VALID_DISJUNCTION)) == 1


def test_constraint_modes_agree_on_satisfaction():
    rng = np.random.default_rng(21)
    valid = rng.random((4, 5)) < 0.4
    valid[1, 1] = True
    valid[0, 0] = False
    mask = cooccur.ValidityMask(valid)
    negations = cooccur.to_constraints(mask, ConstraintMode.INVALID_NEGATIONS)
    disjunction = cooccur.to_constraints(mask, ConstraintMode.VALID_DISJUNCTION)

    satisfied = assignment(np.eye(4)[1], np.eye(5)[1])
    assert logic_loss(negations, satisfied) == 0.0
    assert logic_loss(disjunction, satisfied) == 0.0

    violated = assignment(np.eye(4)[0], np.eye(5)[0])
    assert logic_loss(negations, violated) > 0.0
    assert logic_loss(disjunction, violated) == pytest.approx(
        semantic_loss(mask, violated)
    )


#
# Refinement
#


def test_refine_action_scores_renormalizes():
    mask = cooccur.ValidityMask([[1, 0], [0, 1]])
    t = assignment([0.6, 0.4], [0.5, 0.5])
    refined = cooccur.refine_action_scores(mask, t)
    assert not refined.fallback
    assert refined.scores[0, 1] == 0.0 and refined.scores[1, 0] == 0.0
    assert refined.scores.sum() == pytest.approx(1.0)
    assert refined.scores[0, 0] == pytest.approx(0.6)
    assert refined.scores[1, 1] == pytest.approx(0.4)


def test_refine_action_scores_fallback():
    mask = cooccur.ValidityMask([[1, 0], [0, 0]])
    t = assignment([0.0, 1.0], [0.5, 0.5])
    refined = cooccur.refine_action_scores(mask, t)
    assert refined.fallback
    assert np.allclose(refined.scores, np.outer(t.verb_probs, t.noun_probs))


def test_refine_batch_matches_single():
    rng = np.random.default_rng(22)
    valid = rng.random((3, 4)) < 0.5
    valid[0, 0] = True
    mask = cooccur.ValidityMask(valid)
    verb_probs = rng.dirichlet(np.ones(3), size=5)
    noun_probs = rng.dirichlet(np.ones(4), size=5)
    scores, fallback = cooccur.refine_batch(mask, verb_probs, noun_probs)
    assert scores.shape == (5, 3, 4)
    for k in range(5):
        single = cooccur.refine_action_scores(
            mask, assignment(verb_probs[k], noun_probs[k])
        )
        assert np.allclose(scores[k], single.scores)
        assert fallback[k] == single.fallback


def test_refine_scores_two_dimensional():
    refined, fallback = cooccur.refine_scores(
        np.array([[True, False]]), np.array([[0.25, 0.75]])
    )
    assert refined.tolist() == [[1.0, 0.0]]
    assert not fallback
    with pytest.raises(DimensionMismatch):
        cooccur.refine_scores(np.ones((2, 2), dtype=bool), np.ones((2, 3)))


#
# Files
#


def test_matrix_csv_round_trip(tmp_path):
    matrix = cooccur.CooccurrenceMatrix([[0, 3, 1], [5, 0, 0]])
    path = str(tmp_path / "matrix.csv")
    cooccur.save_csv(matrix, path)
    assert (tmp_path / "matrix.csv").read_text().splitlines() == [
        "verbs=2,nouns=3",
        "0,3,1",
        "5,0,0",
    ]
    assert cooccur.load_csv(path) == matrix


def test_load_csv_vocab_mismatch(tmp_path):
    path = str(tmp_path / "matrix.csv")
    cooccur.save_csv(cooccur.CooccurrenceMatrix([[1, 2]]), path)
    with pytest.raises(VocabMismatch):
        cooccur.load_csv(path, vocab(2, 2))


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("rows=1,cols=2\n1,2\n", 1),
        ("verbs=1,nouns=2\n1\n", 2),
        ("verbs=1,nouns=2\n1,x\n", 2),
        ("verbs=2,nouns=2\n1,0\n0,-1\n", 3),
    ],
)
def test_load_csv_malformed(tmp_path, text, line):
    path = tmp_path / "matrix.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ParseError) as excinfo:
        cooccur.load_csv(str(path))
    assert excinfo.value.line == line


def test_mask_file_round_trip(tmp_path):
    mask = cooccur.ValidityMask([[1, 0], [1, 1]])
    path = str(tmp_path / "mask.csv")
    cooccur.save_mask(mask, path)
    assert cooccur.load_mask(path) == mask


def test_mask_file_rejects_counts(tmp_path):
    path = tmp_path / "mask.csv"
    path.write_text("verbs=1,nouns=2\n1,2\n", encoding="utf-8")
    with pytest.raises(ParseError):
        cooccur.load_mask(str(path))


def test_annotations_round_trip(tmp_path):
    records = [cooccur.Annotation("P01_0", 3, 7), cooccur.Annotation("P01_1", 0, 2)]
    path = str(tmp_path / "labels.csv")
    cooccur.write_annotations(records, path)
    assert cooccur.read_annotations(path) == records


def test_read_annotations_errors(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("uid,verb\na,1\n", encoding="utf-8")
    with pytest.raises(ParseError):
        cooccur.read_annotations(str(path))
    path.write_text("uid,verb_id,noun_id\na,1,2\nb,one,2\n", encoding="utf-8")
    with pytest.raises(ParseError) as excinfo:
        cooccur.read_annotations(str(path))
    assert excinfo.value.line == 3


#
# Heatmap
#


def test_render_heatmap_pgm():
    matrix = cooccur.CooccurrenceMatrix([[0, 1, 10], [100, 0, 0]])
    image = cooccur.render_heatmap(matrix, [0, 1], [0, 2], block=2)
    header, pixels = image[: len(b"P5\n4 4\n255\n")], image[len(b"P5\n4 4\n255\n") :]
    assert header == b"P5\n4 4\n255\n"
    grid = np.frombuffer(pixels, dtype=np.uint8).reshape(4, 4)
    assert grid[0, 0] == 0
    assert grid[2, 0] == 255
    assert 0 < grid[0, 2] < 255
    assert (grid[:2, :2] == grid[0, 0]).all()


def test_render_heatmap_small_counts_stay_visible():
    counts = np.zeros((1, 2), dtype=np.int64)
    counts[0, 0] = 1
    counts[0, 1] = 10**9
    image = cooccur.render_heatmap(cooccur.CooccurrenceMatrix(counts), [0], [0, 1], 1)
    assert 0 < image[-2] < 255
    assert image[-1] == 255


def test_render_heatmap_bounds():
    matrix = cooccur.CooccurrenceMatrix([[1, 2]])
    with pytest.raises(BoundsError):
        cooccur.render_heatmap(matrix, [1], [0])
    with pytest.raises(BoundsError):
        cooccur.render_heatmap(matrix, [], [0])
    with pytest.raises(ConfigError):
        cooccur.render_heatmap(matrix, [0], [0], block=0)


def test_save_heatmap(tmp_path):
    path = tmp_path / "map.pgm"
    cooccur.save_heatmap(cooccur.CooccurrenceMatrix([[3]]), [0], [0], str(path), 3)
    assert path.read_bytes() == b"P5\n3 3\n255\n" + bytes([255] * 9)
