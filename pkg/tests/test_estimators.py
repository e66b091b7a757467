import numpy as np
import pytest
from sklearn.base import clone

from pamlab import datasets
from pamlab import pa_tensor as pt
from pamlab.estimators import PAMLPClassifier, PATransformerTagger


def test_params_and_clone():
    est = PAMLPClassifier(hidden=(8,), epochs=3, lr=0.02, matmul="standard", mantissa_bits=23)
    params = est.get_params()
    assert params["hidden"] == (8,) and params["lr"] == 0.02
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(epochs=5)
    assert est.epochs == 5


def test_invalid_params_raise_on_fit():
    X, y = datasets.spirals(20, seed=0)
    with pytest.raises(ValueError):
        PAMLPClassifier(matmul="fast").fit(X, y)
    with pytest.raises(ValueError):
        PAMLPClassifier(mantissa_bits=0).fit(X, y)
    with pytest.raises(ValueError):
        PAMLPClassifier(deriv_loss="maybe").fit(X, y)


def test_mlp_standard_learns_spirals():
    X, y = datasets.spirals(300, seed=0)
    Xt, yt = datasets.spirals(200, seed=1)
    est = PAMLPClassifier(matmul="standard", softmax_pa=False, layernorm_pa=False, loss_pa=False,
                          optimizer_pa=False, epochs=60, random_state=0).fit(X, y)
    assert est.score(Xt, yt) >= 0.97
    assert est.predict_proba(Xt[:5]).shape == (5, 2)
    np.testing.assert_allclose(est.predict_proba(Xt[:5]).sum(axis=1), 1.0, atol=1e-5)


def test_mlp_pa_short_run_is_multiplication_free():
    X, y = datasets.spirals(100, seed=0)
    est = PAMLPClassifier(hidden=(16, 16), epochs=3, random_state=0).fit(X, y, eval_set=datasets.spirals(50, seed=1))
    assert len(est.history_) == 3
    assert all(row["native_ops_train"] == 0 for row in est.history_)
    assert est.history_[0]["native_ops_setup"] > 0
    assert 0 <= est.history_[-1]["eval_metric"] <= 1


def test_fit_is_reproducible():
    X, y = datasets.spirals(60, seed=0)
    a = PAMLPClassifier(hidden=(8,), epochs=2, random_state=3).fit(X, y)
    b = PAMLPClassifier(hidden=(8,), epochs=2, random_state=3).fit(X, y)
    for k in a.model_.params:
        assert np.array_equal(a.model_.params[k].view(np.uint32), b.model_.params[k].view(np.uint32))


def test_transformer_tagger_runs_and_saves(tmp_path):
    X, Y = datasets.reversal(64, seq_len=4, vocab_size=4, seed=0)
    est = PATransformerTagger(layers=1, heads=1, embed_dim=8, ff_dim=8, vocab_size=4, max_len=4, epochs=1,
                              random_state=0).fit(X, Y)
    pred = est.predict(X[:3])
    assert pred.shape == (3, 4)
    assert 0 <= est.score(X, Y) <= 1
    est.save(tmp_path / "ck.bin")
    table = pt.load_checkpoint(tmp_path / "ck.bin")
    assert "head.weight" in table and any(k.startswith("opt.") for k in table)


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        PAMLPClassifier().predict(np.zeros((1, 2)))
