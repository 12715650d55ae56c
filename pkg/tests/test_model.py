import math

import numpy as np
import pytest

from kcl.autodiff import ops
from kcl.autodiff.tensor import Tensor, backward
from kcl.model import (
    ModelConfig,
    ModelError,
    PrecomputedSharedExtractor,
    classify,
    discriminate,
    forward_losses,
    load_bundle,
    loss_dd,
    loss_fs,
    loss_fsi,
    loss_tc,
    save_bundle,
    shared_forward,
)
from kcl.corpus import TokenizedBatch
from helpers import shared_gradient_gap, grads, isolation_violations, random_batch, tiny_bundle
from oracles import conv1d_loops


def scripted_bank(emb, lengths, convs, kernel_sizes):
    """Masked conv -> relu -> max pool with numpy and the loop convolution."""
    cols = []
    width = emb.shape[1]
    for k, (w, b) in zip(kernel_sizes, convs):
        h = np.maximum(conv1d_loops(emb, w.data, b.data), 0.0)
        for r, n in enumerate(lengths):
            last = max(n - k, 0)
            h[r, last + 1:] = -np.inf
        cols.append(h.max(axis=1))
    return np.concatenate(cols, axis=1)


def scripted_mlp(x, mlp):
    h = np.maximum(x @ mlp.w1.data.T + mlp.b1.data, 0.0)
    return h @ mlp.w2.data.T + mlp.b2.data


# -- forward paths ------------------------------------------------------------


def test_zero_embeddings_give_constant_rows():
    b = tiny_bundle()
    b.embedding.data[:] = 0.0
    out = shared_forward(b, random_batch(np.random.default_rng(0), 0, size=4)).data
    assert np.all(out == out[0])
    expected = np.concatenate([np.maximum(bias.data, 0) for _, bias in b.shared.convs])
    np.testing.assert_array_equal(out[0], expected)


def test_single_token_batches_shape():
    b = tiny_bundle()
    ids = np.array([[5, 0, 0], [7, 0, 0]])
    batch = TokenizedBatch(ids, np.array([1, 1]), 0, np.array([0, 1]), ("a", "b"))
    assert shared_forward(b, batch).shape == (2, b.config.feature_dim)
    narrow = TokenizedBatch(ids[:, :1], np.array([1, 1]), 0, None, ("a", "b"))
    with pytest.raises(ModelError):
        shared_forward(b, narrow)


def test_features_do_not_depend_on_padding_width():
    b = tiny_bundle()
    batch = random_batch(np.random.default_rng(1), 0, size=3, width=5)
    wider = TokenizedBatch(np.pad(batch.ids, ((0, 0), (0, 4))), batch.lengths, 0, batch.labels, batch.doc_ids)
    np.testing.assert_array_equal(shared_forward(b, batch).data, shared_forward(b, wider).data)


@pytest.mark.parametrize("seed", range(3))
def test_forward_matches_composition_oracle(seed):
    rng = np.random.default_rng(seed)
    b = tiny_bundle(seed)
    batch = random_batch(rng, 1, size=4, width=7)
    emb = b.embedding.data[batch.ids].copy()
    emb[batch.ids == 0] = 0.0
    fs = scripted_bank(emb, batch.lengths, b.shared.convs, b.shared.kernel_sizes)
    fp = scripted_bank(emb, batch.lengths, b.private[1].convs, b.private[1].kernel_sizes)
    np.testing.assert_allclose(shared_forward(b, batch).data, fs, atol=1e-12, rtol=0)
    np.testing.assert_allclose(discriminate(b, batch).data, scripted_mlp(fs, b.discriminator), atol=1e-12, rtol=0)
    logits = scripted_mlp(np.concatenate([fs, fp], axis=1), b.classifier)
    np.testing.assert_allclose(classify(b, 1, batch).data, logits, atol=1e-12, rtol=0)


def test_zeroed_classifier_head_is_uniform():
    b = tiny_bundle(num_labels=3)
    b.classifier.w2.data[:] = 0.0
    b.classifier.b2.data[:] = 0.0
    logits = classify(b, 0, random_batch(np.random.default_rng(0), 0, num_labels=3))
    assert logits.shape == (3, 3)
    np.testing.assert_allclose(ops.softmax(logits).data, 1 / 3, atol=1e-15)
    with pytest.raises(ModelError):
        classify(b, 2, random_batch(np.random.default_rng(0), 0))


def test_shapes_and_path_isolation():
    b = tiny_bundle(num_domains=3)
    batch = random_batch(np.random.default_rng(2), 0)
    assert discriminate(b, batch).shape == (3, 3)
    before_cls, before_disc = classify(b, 0, batch).data, discriminate(b, batch).data
    for i in (1, 2):
        for p in b.private_params(i):
            p.data += 1.0
    np.testing.assert_array_equal(classify(b, 0, batch).data, before_cls)
    for p in b.private_params(0):
        p.data += 1.0
    np.testing.assert_array_equal(discriminate(b, batch).data, before_disc)


# -- objectives ---------------------------------------------------------------


def test_loss_dd_uniform_is_ln2():
    b = tiny_bundle()
    b.discriminator.w2.data[:] = 0.0
    b.discriminator.b2.data[:] = 0.0
    batch = random_batch(np.random.default_rng(0), 1, size=1)
    assert loss_dd(b, [batch]).item() == pytest.approx(math.log(2), abs=1e-15)


def test_loss_dd_perfect_discriminator_tends_to_zero():
    b = tiny_bundle()
    b.discriminator.w2.data[:] = 0.0
    b.discriminator.b2.data[:] = [0.0, 60.0]
    assert loss_dd(b, [random_batch(np.random.default_rng(0), 1)]).item() < 1e-20


def test_loss_dd_scripted_three_domains():
    b = tiny_bundle(num_domains=3)
    rng = np.random.default_rng(4)
    batches = [random_batch(rng, i, size=2) for i in range(3)]
    total = 0.0
    for batch in batches:
        z = discriminate(b, batch).data
        for row in z:
            total -= row[batch.domain] - math.log(sum(math.exp(v) for v in row))
    assert loss_dd(b, batches, "sum").item() == pytest.approx(total, abs=1e-12)


def test_loss_tc_scripted_and_uniform():
    b = tiny_bundle()
    rng = np.random.default_rng(5)
    batches = [random_batch(rng, 0), random_batch(rng, 1)]
    total = 0.0
    for batch in batches:
        z = classify(b, batch.domain, batch).data
        for row, y in zip(z, batch.labels):
            total -= row[y] - math.log(sum(math.exp(v) for v in row))
    assert loss_tc(b, batches, "sum").item() == pytest.approx(total, abs=1e-12)
    b.classifier.w2.data[:] = 0.0
    b.classifier.b2.data[:] = 0.0
    assert loss_tc(b, batches[:1], "sum").item() == pytest.approx(3 * math.log(2), abs=1e-12)


def test_unlabeled_batch_rejected_by_tc():
    b = tiny_bundle()
    with pytest.raises(ModelError):
        loss_tc(b, [random_batch(np.random.default_rng(0), 0, labeled=False)])


def test_loss_fsi_slice_and_mismatch():
    b = tiny_bundle()
    rng = np.random.default_rng(6)
    b0, b1 = random_batch(rng, 0), random_batch(rng, 1)
    total = loss_tc(b, [b0, b1], "sum").item()
    parts = loss_fsi(b, 0, b0, "sum").item() + loss_fsi(b, 1, b1, "sum").item()
    assert total == pytest.approx(parts, abs=1e-12)
    with pytest.raises(ModelError):
        loss_fsi(b, 1, b0)
    single = tiny_bundle(num_domains=1)
    b0 = random_batch(rng, 0)
    assert loss_fsi(single, 0, b0).item() == loss_tc(single, [b0]).item()
    assert forward_losses(single, [b0]).j_dd.item() == 0.0


def test_perfect_classifier_fsi_near_zero():
    b = tiny_bundle()
    b.classifier.w2.data[:] = 0.0
    batch = random_batch(np.random.default_rng(0), 0)
    batch = TokenizedBatch(batch.ids, batch.lengths, 0, np.zeros(3, dtype=np.int64), batch.doc_ids)
    b.classifier.b2.data[:] = [60.0, 0.0]
    assert loss_fsi(b, 0, batch).item() < 1e-20


def test_loss_fs_arithmetic_and_lambda_guard():
    assert 1.0 - 0.1 * 0.5 == pytest.approx(0.95)
    b = tiny_bundle(lam=0.1)
    rng = np.random.default_rng(7)
    batches = [random_batch(rng, 0), random_batch(rng, 1)]
    t = forward_losses(b, batches)
    assert t.j_fs.item() == pytest.approx(t.j_tc.item() - 0.1 * t.j_dd.item(), abs=1e-15)
    assert loss_fs(b, batches).item() == t.j_fs.item()
    with pytest.raises(ModelError):
        ModelConfig(10, 2, 2, lam=0.0)


def test_unlabeled_batches_only_feed_dd():
    b = tiny_bundle()
    rng = np.random.default_rng(8)
    lab, unl = random_batch(rng, 0), random_batch(rng, 1, labeled=False)
    t = forward_losses(b, [lab, unl])
    assert set(t.tc_slices) == {0}
    assert set(t.dd_slices) == {0, 1}


@pytest.mark.parametrize("seed", range(10))
def test_shared_gradient_is_tc_minus_lambda_dd(seed):
    assert shared_gradient_gap(seed) <= 1e-10


def test_adversarial_coefficient_decreases_with_lambda():
    rng = np.random.default_rng(9)
    batches = [random_batch(rng, 0), random_batch(rng, 1)]
    coeffs = []
    for lam in (0.05, 0.5, 2.0):
        b = tiny_bundle(3, lam=lam)
        b.zero_grad()
        backward(forward_losses(b, batches).j_fs)
        g_fs = grads(b.shared_params())
        b.zero_grad()
        backward(forward_losses(b, batches).j_tc)
        g_tc = grads(b.shared_params())
        b.zero_grad()
        backward(forward_losses(b, batches).j_dd)
        g_dd = grads(b.shared_params())
        b.zero_grad()
        num = sum(float(np.sum((g_fs[k] - g_tc[k]) * g_dd[k])) for k in g_fs)
        den = sum(float(np.sum(g_dd[k] ** 2)) for k in g_fs)
        coeffs.append(num / den)
    assert coeffs == pytest.approx([-0.05, -0.5, -2.0], abs=1e-9)
    assert coeffs[0] > coeffs[1] > coeffs[2]


@pytest.mark.parametrize("seed", range(5))
def test_isolation_exact_zeros(seed):
    assert isolation_violations(seed) == 0.0


def test_losses_nonnegative_and_finite():
    b = tiny_bundle()
    rng = np.random.default_rng(10)
    t = forward_losses(b, [random_batch(rng, 0), random_batch(rng, 1)])
    assert t.j_tc.item() >= 0 and t.j_dd.item() >= 0
    assert math.isfinite(t.j_fs.item())


# -- persistence and frontends -----------------------------------------------


def test_bundle_roundtrip(tmp_path):
    b = tiny_bundle(4)
    save_bundle(b, tmp_path / "ck", {"note": "x"})
    back = load_bundle(tmp_path / "ck")
    assert back.domains == b.domains
    for k, v in b.state_dict().items():
        assert back.state_dict()[k].tobytes() == v.tobytes()
    batch = random_batch(np.random.default_rng(0), 1)
    np.testing.assert_array_equal(classify(back, 1, batch).data, classify(b, 1, batch).data)


def test_bundle_vocab_hash_checked(tmp_path):
    save_bundle(tiny_bundle(), tmp_path)
    (tmp_path / "vocab.json").write_text('["<pad>", "<unk>", "changed"]\n')
    with pytest.raises(ModelError, match="hash"):
        load_bundle(tmp_path)


def test_precomputed_frontend(tmp_path):
    rng = np.random.default_rng(0)
    ids = np.array(["dom0/0", "dom0/1", "dom0/2"])
    np.savez(tmp_path / "f.npz", doc_ids=ids, features=rng.normal(size=(3, 7)))
    ext = PrecomputedSharedExtractor.from_file(rng, tmp_path / "f.npz", 6)
    b = tiny_bundle()
    from kcl.model import ModelBundle
    b2 = ModelBundle.create(b.config, 0, b.vocab, b.domains, ext)
    batch = random_batch(rng, 0)
    assert shared_forward(b2, batch).shape == (3, 6)
    b2.zero_grad()
    backward(forward_losses(b2, [batch]).j_fs)
    assert np.any(ext.w.grad != 0)
    missing = TokenizedBatch(batch.ids, batch.lengths, 0, batch.labels, ("nope",) * 3)
    with pytest.raises(ModelError):
        shared_forward(b2, missing)
