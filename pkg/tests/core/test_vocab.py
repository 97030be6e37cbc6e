import numpy as np
import pytest

from app.chem.smiles import parse_smiles
from app.core.vocab import (
    EMPTY,
    MASK,
    UNK,
    Vocabulary,
    build_text_vocab,
    decode_graph,
    encode_graph_only,
    encode_instance,
    encode_text_only,
    tokenize,
)
from app.errors import EmptyCorpus, NoAtoms, ResidualMask, TargetTooLong, VocabularyFormatError
from app.models import EDGE_MASK_INDEX, BondKind, SegmentTag


def test_tokenize_splits_words_and_punctuation() -> None:
    assert tokenize("A ring, of size Six!") == ["a", "ring", ",", "of", "size", "six", "!"]


def test_vocabulary_layout(vocab) -> None:
    assert vocab.text_tokens[UNK] == 0
    assert vocab.text_tokens["carbon"] == 1
    assert vocab.mask_id != vocab.empty_id
    assert vocab.node_category_ids[-1] == vocab.empty_id
    assert vocab.edge_mask_index == EDGE_MASK_INDEX
    assert vocab.num_edge_categories == 6
    ids = sorted(list(vocab.text_tokens.values()) + list(vocab.node_tokens.values()) + list(vocab.special.values()))
    assert ids == list(range(vocab.size))


def test_unknown_words_map_to_unk(vocab) -> None:
    assert vocab.encode_text("a zwitterion") == [vocab.text_tokens["a"], vocab.unk_id]


def test_min_count_drops_rare_words() -> None:
    vocab = build_text_vocab(["a b", "a c"], min_count=2)
    assert set(vocab.text_tokens) == {UNK, "a"}


def test_empty_corpus() -> None:
    with pytest.raises(EmptyCorpus):
        build_text_vocab([])


def test_save_load_round_trip(vocab, tmp_path) -> None:
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded == vocab
    assert loaded.digest == vocab.digest


def test_digest_changes_with_contents(vocab) -> None:
    other = build_text_vocab(["something else entirely"])
    assert other.digest != vocab.digest


def test_bad_vocabulary_file(tmp_path) -> None:
    path = tmp_path / "vocab.json"
    path.write_text('{"version": 99}')
    with pytest.raises(VocabularyFormatError):
        Vocabulary.load(path)


def test_training_instance_layout(vocab) -> None:
    seq = encode_instance(vocab, "a primary alcohol", 5, target=parse_smiles("CCO"))
    n_text = len(tokenize("a primary alcohol")) + 1
    assert seq.length == n_text + 5
    assert seq.token_ids[n_text - 1] == vocab.sep_id
    assert list(seq.segment_tags[:n_text]) == [SegmentTag.TEXT] * n_text
    assert list(seq.segment_tags[n_text:]) == [SegmentTag.TARGET_GRAPH] * 5
    assert [vocab.token(int(t)) for t in seq.target_nodes] == ["C", "C", "O", EMPTY, EMPTY]
    assert seq.tgt_edges[0, 1] == BondKind.SINGLE.index
    assert seq.tgt_edges[3, 4] == BondKind.NONE.index
    assert np.array_equal(seq.position_ids, np.arange(seq.length))


def test_sampling_instance_is_fully_masked(vocab) -> None:
    seq = encode_instance(vocab, "a ring", 4)
    assert all(vocab.token(int(t)) == MASK for t in seq.target_nodes)
    off_diagonal = ~np.eye(4, dtype=bool)
    assert np.all(seq.tgt_edges[off_diagonal] == vocab.edge_mask_index)
    assert np.all(np.diag(seq.tgt_edges) == BondKind.NONE.index)


def test_editing_instance_has_source_segment(vocab) -> None:
    seq = encode_instance(vocab, "a ring", 3, source=parse_smiles("CO"), target=parse_smiles("CCO"))
    assert seq.num_source == 2
    tags = seq.segment_tags[seq.source_slice]
    assert list(tags) == [SegmentTag.SOURCE_GRAPH] * 2
    assert seq.src_edges[0, 1] == BondKind.SINGLE.index


def test_target_too_long(vocab) -> None:
    with pytest.raises(TargetTooLong):
        encode_instance(vocab, "a ring", 2, target=parse_smiles("CCO"))


def test_single_modal_entries(vocab) -> None:
    text_only = encode_text_only(vocab, "a ring")
    assert text_only.num_target == 0
    graph_only = encode_graph_only(vocab, parse_smiles("CCO"))
    assert graph_only.num_text == 1
    assert graph_only.num_target == 3


def test_edge_category_matrix_masks_cross_segment_pairs(vocab) -> None:
    seq = encode_instance(vocab, "a", 3, source=parse_smiles("CO"), target=parse_smiles("CC"))
    categories, mask = seq.edge_category_matrix()
    src, tgt = seq.source_slice, seq.target_slice
    assert mask[src, src].all() and mask[tgt, tgt].all()
    assert not mask[src, tgt].any()
    assert not mask[: seq.num_text].any()
    assert categories[src, src][0, 1] == BondKind.SINGLE.index


def test_decode_drops_empty_slots(vocab) -> None:
    seq = encode_instance(vocab, "a", 5, target=parse_smiles("CC=O"))
    g = decode_graph(vocab, seq.target_nodes, seq.tgt_edges)
    assert g.symbols == ["C", "C", "O"]
    assert g.bond(1, 2) is BondKind.DOUBLE


def test_decode_errors(vocab) -> None:
    masked = encode_instance(vocab, "a", 3)
    with pytest.raises(ResidualMask):
        decode_graph(vocab, masked.target_nodes, masked.tgt_edges)
    empty = [vocab.empty_id] * 3
    with pytest.raises(NoAtoms):
        decode_graph(vocab, empty, np.zeros((3, 3), dtype=np.int64))


def test_permuted_target_moves_everything_jointly(vocab) -> None:
    seq = encode_instance(vocab, "a", 3, target=parse_smiles("CCO"))
    permuted = seq.permuted_target([2, 0, 1])
    t = seq.target_slice
    assert list(permuted.token_ids[t]) == [seq.token_ids[t][2], seq.token_ids[t][0], seq.token_ids[t][1]]
    assert permuted.tgt_edges[0, 2] == seq.tgt_edges[2, 1]
    assert list(permuted.position_ids[t]) == [seq.position_ids[t][k] for k in (2, 0, 1)]


def test_special_tokens_reserve_pad_without_using_it(vocab) -> None:
    assert set(vocab.special) == {"[MASK]", "[EMPTY]", "[PAD]", "[SEP]"}
    seq = encode_instance(vocab, "a primary alcohol with two carbon atoms", 4)
    assert vocab.special["[PAD]"] not in seq.token_ids
