import json
import re
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcl.corpus import (
    PAD,
    UNK,
    DatasetError,
    DatasetLayout,
    Document,
    DomainSplit,
    MultiDomainDataset,
    Vocabulary,
    batch_iter,
    build_vocab,
    encode_batch,
    load_dataset,
    split,
    tokenize,
)


def _write_layout(root, domains, docs_per_domain=4, num_labels=2, extra=None):
    (root / "dataset.json").write_text(json.dumps({"domains": domains, "num_labels": num_labels}))
    for dom in domains:
        (root / dom).mkdir()
        lines = [json.dumps({"text": f"{dom} doc {i}", "label": i % num_labels}) for i in range(docs_per_domain)]
        (root / dom / "train.jsonl").write_text("\n".join(lines) + "\n")
    for rel, text in (extra or {}).items():
        (root / rel).write_text(text)
    return root


# -- loading ------------------------------------------------------------------


def test_load_two_domains_four_docs(tmp_path):
    ds = load_dataset(_write_layout(tmp_path, ["books", "dvd"]))
    assert ds.num_domains == 2
    assert [len(ds.train(d)) for d in ds.domains] == [4, 4]


def test_empty_unlabeled_file_is_fine(tmp_path):
    ds = load_dataset(_write_layout(tmp_path, ["books"], extra={"books/unlabeled.jsonl": ""}))
    assert ds.unlabeled("books") == ()


def test_fixture_matches_manifest(fixture_dataset, manifest):
    assert list(fixture_dataset.domains) == manifest["domains"]
    total = 0
    for dom in fixture_dataset.domains:
        for part in ("train", "test", "unlabeled"):
            docs = getattr(fixture_dataset, part)(dom)
            assert len(docs) == manifest["counts"][dom][part]
            total += len(docs)
        for part in ("train", "test"):
            hist = Counter(str(d.label) for d in getattr(fixture_dataset, part)(dom))
            assert dict(hist) == manifest["labels"][dom][part]
    assert total == manifest["total"]


def test_domain_order_follows_layout_then_lexicographic(tmp_path):
    root = _write_layout(tmp_path, ["zeta", "alpha"])
    assert load_dataset(root).domains == ("zeta", "alpha")
    assert load_dataset(root, DatasetLayout(domains=("alpha", "zeta"))).domains == ("alpha", "zeta")
    (root / "dataset.json").write_text(json.dumps({"num_labels": 2}))
    assert load_dataset(root).domains == ("alpha", "zeta")


def test_missing_directory_named(tmp_path):
    with pytest.raises(DatasetError, match="nowhere"):
        load_dataset(tmp_path / "nowhere")


def test_malformed_line_reports_file_and_line(tmp_path):
    root = _write_layout(tmp_path, ["books"])
    with open(root / "books" / "train.jsonl", "a") as f:
        f.write("{not json\n")
    with pytest.raises(DatasetError, match=r"train\.jsonl:5"):
        load_dataset(root)


def test_label_out_of_range(tmp_path):
    root = _write_layout(tmp_path, ["books"])
    (root / "books" / "test.jsonl").write_text('{"text": "x", "label": 7}\n')
    with pytest.raises(DatasetError, match="label"):
        load_dataset(root)


def test_document_invariants():
    with pytest.raises(ValueError):
        Document("x", "", 0)
    with pytest.raises(DatasetError):
        MultiDomainDataset(("a",), {"a": DomainSplit((Document("x", "a", 3, "a/1"),))}, 2)


# -- tokenizer ----------------------------------------------------------------


def test_tokenize_examples():
    assert tokenize("The idea is infantile.") == ["the", "idea", "is", "infantile"]
    assert tokenize("") == []


def test_tokenizer_counts_match_independent_counter(fixture_root, fixture_dataset):
    # independent one-pass counter straight over the raw files
    oracle = Counter()
    for f in sorted(fixture_root.glob("*/*.jsonl")):
        for line in f.read_text().splitlines():
            text = json.loads(line)["text"].lower()
            word = ""
            for ch in text + " ":
                if ch.isalnum():
                    word += ch
                elif word:
                    oracle[word] += 1
                    word = ""
    ours = Counter()
    for dom in fixture_dataset.domains:
        for part in ("train", "test", "unlabeled"):
            for d in getattr(fixture_dataset, part)(dom):
                ours.update(tokenize(d.text))
    assert ours == oracle


@given(st.text(max_size=80))
def test_tokenize_idempotent_and_nonempty(text):
    toks = tokenize(text)
    assert all(toks)
    assert tokenize(" ".join(toks)) == toks


# -- vocabulary ---------------------------------------------------------------


def _ds(texts, test_texts=()):
    train = tuple(Document(t, "a", 0, f"a/train/{i}") for i, t in enumerate(texts))
    test = tuple(Document(t, "a", 0, f"a/test/{i}") for i, t in enumerate(test_texts))
    return MultiDomainDataset(("a",), {"a": DomainSplit(train, test)}, 1)


def test_vocab_min_freq_excludes_singletons():
    v = build_vocab(_ds(["alpha beta gamma"]), min_freq=2)
    assert v.itos == ["<pad>", "<unk>"]


def test_vocab_frequency_then_lexicographic():
    v = build_vocab(_ds(["a a b"]))
    assert (v.stoi["<pad>"], v.stoi["<unk>"], v.stoi["a"], v.stoi["b"]) == (PAD, UNK, 2, 3)


def test_vocab_top48_matches_brute_force(fixture_dataset):
    v = build_vocab(fixture_dataset, max_size=50)
    assert len(v) == 50
    counts = {}
    for dom in fixture_dataset.domains:
        for d in fixture_dataset.train(dom) + fixture_dataset.unlabeled(dom):
            for t in re.findall(r"[^\W_]+", d.text.lower()):
                counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    assert set(v.itos[2:]) == {t for t, _ in ranked[:48]}


def test_vocab_never_sees_test_text():
    v = build_vocab(_ds(["shared words"], test_texts=["leakage shared"]))
    assert "leakage" not in v
    assert "shared" in v


def test_vocab_empty_corpus_error():
    empty = MultiDomainDataset(("a",), {"a": DomainSplit()}, 2)
    with pytest.raises(DatasetError):
        build_vocab(empty)


# -- split --------------------------------------------------------------------


def _bulk(n, domains=("a", "b")):
    splits = {d: DomainSplit(tuple(Document(f"{d} {i}", d, i % 2, f"{d}/train/{i}") for i in range(n)))
              for d in domains}
    return MultiDomainDataset(domains, splits, 2)


def test_split_4_to_1():
    out = split(_bulk(1000), 0.8, seed=0)
    assert [len(out.train(d)) for d in out.domains] == [800, 800]
    assert [len(out.test(d)) for d in out.domains] == [200, 200]


def test_split_deterministic():
    a, b = split(_bulk(50), 0.8, 3), split(_bulk(50), 0.8, 3)
    assert a.splits == b.splits


@pytest.mark.parametrize("seed", range(10))
def test_split_disjoint_and_complete(seed):
    ds = _bulk(37)
    out = split(ds, 0.8, seed)
    for d in ds.domains:
        tr = {x.doc_id for x in out.train(d)}
        te = {x.doc_id for x in out.test(d)}
        assert not tr & te
        assert tr | te == {x.doc_id for x in ds.train(d)}
        assert len(tr) == int(np.floor(0.8 * 37))


def test_split_keeps_premade_test(fixture_dataset):
    assert split(fixture_dataset, 0.5, 1).splits == fixture_dataset.splits


def test_split_needs_two_docs():
    with pytest.raises(DatasetError):
        split(_bulk(1), 0.8, 0)


# -- batching -----------------------------------------------------------------


def _docs(n):
    return [Document(" ".join(["w"] * (i + 1)), "a", i % 2, f"a/train/{i}") for i in range(n)]


VOCAB = Vocabulary(["<pad>", "<unk>", "w"])


def test_batch_sizes_4_4_2():
    sizes = [b.size for b in batch_iter(_docs(10), 4, 0, 0, VOCAB)]
    assert sizes == [4, 4, 2]


def test_batch_same_seed_epoch_identical():
    a = [b.doc_ids for b in batch_iter(_docs(10), 3, 5, 2, VOCAB)]
    b = [b.doc_ids for b in batch_iter(_docs(10), 3, 5, 2, VOCAB)]
    c = [b.doc_ids for b in batch_iter(_docs(10), 3, 5, 3, VOCAB)]
    assert a == b
    assert a != c


@given(n=st.integers(1, 40), bs=st.integers(1, 12), seed=st.integers(0, 2**16), epoch=st.integers(0, 5))
@settings(max_examples=50, deadline=None)
def test_epoch_covers_each_doc_once(n, bs, seed, epoch):
    docs = _docs(n)
    seen = Counter(i for b in batch_iter(docs, bs, seed, epoch, VOCAB) for i in b.doc_ids)
    assert seen == Counter(d.doc_id for d in docs)


def test_padding_and_truncation():
    b = encode_batch(_docs(3), VOCAB, 0, max_len=2)
    assert b.ids.shape == (3, 2)
    assert b.lengths.tolist() == [1, 2, 2]
    assert b.ids[0, 1] == PAD
    wide = encode_batch(_docs(1), VOCAB, 0, min_len=5)
    assert wide.ids.shape == (1, 5) and wide.lengths.tolist() == [1]


def test_empty_batch_iter_warns():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert list(batch_iter([], 4, 0, 0, VOCAB)) == []
    assert caught


def test_unknown_tokens_map_to_unk():
    b = encode_batch([Document("w zzz", "a", 0, "a/1")], VOCAB, 0)
    assert b.ids.tolist() == [[2, UNK]]
