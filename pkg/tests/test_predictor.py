import numpy as np
import pytest

from fbn.encoder import EncoderConfig
from fbn.graphgen import LossWeights
from fbn.model import GraphModel, TimeSeriesModel
from fbn.nn import Mlp, load_checkpoint, save_checkpoint
from fbn.numerics import Prng, Tensor, relu
from fbn.predictor import GcnPredictor, PredictorConfig, total_loss
from fbn.selftest import check_end_to_end


def _predictor(f=5, seed=0, **kw):
    return GcnPredictor(f, 2, PredictorConfig(**kw), Prng(seed))


def _inputs(batch=4, v=5, f=5, seed=1):
    r = np.random.default_rng(seed)
    A = r.uniform(size=(batch, v, v))
    A = (A + A.transpose(0, 2, 1)) / 2
    return A, r.normal(size=(batch, v, f))


def test_logits_shape():
    A, F = _inputs()
    assert _predictor()(A, F).shape == (4, 2)


def test_node_permutation_invariance():
    pred = _predictor()
    A, F = _inputs()
    P = np.eye(5)[[3, 0, 4, 1, 2]]
    a = pred(A, F, "eval").data
    b = pred(P @ A @ P.T, P @ F, "eval").data
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_zero_graph_depends_only_on_bias_terms():
    pred = _predictor()
    _, F = _inputs()
    out1 = pred(np.zeros((4, 5, 5)), F, "eval").data
    out2 = pred(np.zeros((4, 5, 5)), 10 * F, "eval").data
    np.testing.assert_array_equal(out1, out2)
    np.testing.assert_allclose(out1, np.broadcast_to(out1[0], out1.shape))


def test_single_node_hand_chain():
    pred = _predictor(f=3, layers=2, hidden=2)
    F = np.random.default_rng(2).normal(size=(2, 1, 3))
    A = np.ones((2, 1, 1))
    W1, W2 = pred.params["W1"].data, pred.params["W2"].data
    expected = np.maximum(np.maximum(F[:, 0] @ W1, 0) @ W2, 0)
    np.testing.assert_allclose(pred.embed(A, F).data, expected, atol=1e-14)


def test_dimension_errors():
    pred = _predictor()
    A, F = _inputs()
    with pytest.raises(ValueError):
        pred(A[:, :4, :4], F)
    with pytest.raises(ValueError):
        pred(A, F[..., :3])


def test_eval_is_batch_independent():
    pred = _predictor()
    A, F = _inputs(batch=6)
    pred(A, F, "train")  # move the running stats off their initial values
    full = pred(A, F, "eval").data
    for i in range(6):
        np.testing.assert_allclose(pred(A[i : i + 1], F[i : i + 1], "eval").data[0], full[i], atol=1e-12)


def test_total_loss_bookkeeping():
    pred = _predictor()
    A, F = _inputs()
    labels = np.array([0, 1, 1, 0])
    logits = pred(A, F)
    w = LossWeights(0.3, 0.2, 0.1)
    parts = total_loss(logits, labels, Tensor(A), w)
    d = parts.as_dict()
    recomputed = d["L_ce"] + 0.3 * d["L_inner"] + 0.2 * d["L_intra"] + 0.1 * d["L_sparsity"]
    assert d["total"] == pytest.approx(recomputed, abs=1e-12)
    zero = total_loss(logits, labels, Tensor(A), LossWeights(0, 0, 0))
    assert zero.total.item() == zero.ce.item()


def test_total_loss_single_class_batch():
    pred = _predictor()
    A, F = _inputs()
    parts = total_loss(pred(A, F), [1, 1, 1, 1], Tensor(A), LossWeights())
    assert parts.intra.item() == 0.0


@pytest.mark.parametrize("variant", ["cnn", "gru"])
def test_end_to_end_gradient(variant):
    check = check_end_to_end(variant)
    assert check.ok, check.line()


def test_fixed_graph_model_excludes_encoder():
    rng = Prng(0)
    m = GraphModel(4, 32, 4, 2, EncoderConfig(channels=(2, 2, 2), kernel=5), PredictorConfig(), "uniform", rng)
    ids = {id(p) for p in m.trainable_parameters()}
    assert not ids & {id(p) for p in m.encoder.parameters()}
    with pytest.raises(ValueError):
        m.graphs(np.zeros((1, 4, 32)))


def test_model_pipeline_permutation_invariance():
    rng = Prng(3)
    m = GraphModel(5, 32, 5, 2, EncoderConfig(channels=(2, 2, 2), kernel=5), PredictorConfig(), "learnable", rng)
    X = np.random.default_rng(0).normal(size=(3, 5, 32))
    F = np.random.default_rng(1).normal(size=(3, 5, 5))
    perm = [2, 4, 0, 1, 3]
    a, _ = m(X, F, mode="eval")
    b, _ = m(X[:, perm], F[:, perm], mode="eval")
    np.testing.assert_allclose(a.data, b.data, atol=1e-9)


def test_timeseries_baseline_shares_encoder_stage():
    cfg = EncoderConfig(channels=(2, 2, 2), kernel=5)
    ts = TimeSeriesModel(4, 32, 3, cfg, Prng(5))
    gm = GraphModel(4, 32, 4, 3, cfg, PredictorConfig(), "learnable", Prng(5))
    x = np.random.default_rng(0).normal(size=(4, 32))
    np.testing.assert_array_equal(ts.encoder(x).data, gm.encoder(x).data)
    logits, graphs = ts(x[None])
    assert logits.shape == (1, 3) and graphs is None


def test_checkpoint_roundtrip(tmp_path):
    pred = _predictor()
    A, F = _inputs()
    pred(A, F, "train")
    before = pred(A, F, "eval").data
    save_checkpoint(pred, tmp_path)
    other = _predictor(seed=99)
    load_checkpoint(other, tmp_path)
    np.testing.assert_array_equal(other(A, F, "eval").data, before)
    assert (tmp_path / "shapes.json").exists()


def test_mlp_hand_values():
    mlp = Mlp([2, 3, 1], Prng(0))
    x = np.array([[0.5, -1.0]])
    W0, b0 = mlp.params["0.weight"].data, mlp.params["0.bias"].data
    W1, b1 = mlp.params["1.weight"].data, mlp.params["1.bias"].data
    np.testing.assert_allclose(mlp(Tensor(x)).data, np.maximum(x @ W0 + b0, 0) @ W1 + b1, atol=1e-15)
    assert relu(Tensor(np.array([-1.0, 2.0]))).data.tolist() == [0.0, 2.0]
