"""scikit-learn style estimators wrapping the reference models.

``fit`` runs the full training loop (forward, backward, AdamW) under the
configured arithmetic; ``history_`` holds one row of metrics per epoch,
including the native-op counts attributed to training.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import instrument, native
from . import pa_autodiff as ad
from . import pa_nn as nn
from . import pa_optim as po
from . import pa_scalar as ps
from . import pa_tensor as pt
from .float_codec import PAFormat


class TrainingDiverged(FloatingPointError):
    pass


def _mode(name: str) -> ad.Mode:
    try:
        return ad.Mode(name)
    except ValueError:
        raise ValueError(f"derivative mode must be 'exact' or 'approx', got {name!r}") from None


class _PABase(BaseEstimator):
    """Training loop shared by the concrete estimators."""

    def _numerics(self) -> nn.Numerics:
        bits = int(self.mantissa_bits)
        if not 1 <= bits <= 23:
            raise ValueError("mantissa_bits must be in [1, 23]")
        if self.matmul == "standard":
            if bits != 23:
                raise ValueError("mantissa_bits applies to PA matmuls only")
            mm = pt.STANDARD
        elif self.matmul == "pam":
            mm = pt.PAM if bits == 23 else pt.MatmulMode.quantized(PAFormat(mantissa_bits=bits))
        else:
            raise ValueError(f"matmul must be 'pam' or 'standard', got {self.matmul!r}")
        return nn.Numerics(mm, bool(self.softmax_pa), bool(self.layernorm_pa), bool(self.loss_pa))

    def _derivatives(self) -> ad.DerivativeModes:
        return ad.DerivativeModes(_mode(self.deriv_matmul), _mode(self.deriv_softmax),
                                  _mode(self.deriv_layernorm), _mode(self.deriv_loss),
                                  _mode(self.deriv_default))

    def _layer_config(self) -> nn.LayerConfig:
        return nn.LayerConfig(self._derivatives(), float(self.layernorm_eps),
                              float(self.label_smoothing), float(self.dropout))

    def _opt_config(self) -> po.AdamWConfig:
        return po.AdamWConfig(float(self.lr), float(self.beta1), float(self.beta2), float(self.eps),
                              float(self.weight_decay))

    def _fit_arrays(self, X, Y, spec, eval_set=None):
        if int(self.epochs) < 1 or int(self.batch_size) < 1:
            raise ValueError("epochs and batch_size must be positive")
        numerics = self._numerics()
        lcfg = self._layer_config()
        ocfg = self._opt_config()
        rng = np.random.default_rng(self.random_state)
        n = len(X)
        bs = min(int(self.batch_size), n)
        steps_per_epoch = -(-n // bs)
        total = math.prod((steps_per_epoch, int(self.epochs)))

        self.history_ = []
        baseline = instrument.snapshot()
        with instrument.phase(instrument.SETUP):
            self.model_ = nn.build_model(spec, rng)
            with instrument.phase(instrument.SCHEDULE):
                lrs = [po.lr_schedule(s, ocfg.lr, int(self.warmup_steps), total, self.schedule)
                       for s in range(total)]
        opt = po.AdamW(self.model_.params, ocfg, pa=bool(self.optimizer_pa))
        params = self.model_.params
        step = 0
        for epoch in range(int(self.epochs)):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                self.model_.params = params
                pv = self.model_.param_vars()
                try:
                    with ad.Tape() as tape:
                        loss, _ = nn.model_loss(self.model_, pv, X[idx], Y[idx], numerics, lcfg, rng, True)
                except ps.PADomainError as e:
                    raise TrainingDiverged(f"{e} at epoch {epoch}, step {step}") from e
                if not np.isfinite(loss.value):
                    raise TrainingDiverged(
                        f"non-finite loss {float(loss.value)} at epoch {epoch}, step {step} "
                        f"(matmul={numerics.matmul}, lr={float(lrs[step])})")
                g = ad.backward(tape, loss, modes=lcfg.derivatives)
                grads = {k: g.get(v, np.zeros_like(v.value)) for k, v in pv.items()}
                params = opt.step(params, grads, lrs[step])
                losses.append(float(loss.value))
                step += 1
            self.model_.params = params
            self.history_.append(self._epoch_row(epoch, losses, baseline, X, Y, eval_set))
        self.optimizer_state_ = opt.state
        self.op_report_ = instrument.since(baseline)
        return self

    def _epoch_row(self, epoch, losses, baseline, X, Y, eval_set):
        report = instrument.since(baseline)
        # Metric bookkeeping only; attributed to the reference phase.
        with instrument.phase(instrument.REFERENCE):
            row = {"epoch": epoch + 1, "loss": float(native.div64(np.sum(losses), len(losses))),
                   "train_metric": self._metric(X, Y)}
            row["eval_metric"] = self._metric(*eval_set) if eval_set is not None else float("nan")
        row["native_ops_train"] = report.total()
        phases = report.by_phase()
        row["native_ops_setup"] = phases.get(instrument.SETUP, 0) + phases.get(instrument.SCHEDULE, 0)
        return row

    def _logits(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        pv = {k: ad.Var(v, requires_grad=False) for k, v in self.model_.params.items()}
        return self.model_.logits(pv, X, self._numerics(), self._layer_config()).value

    def save(self, path) -> None:
        """Write parameters and optimizer state as a named tensor table."""
        check_is_fitted(self, "model_")
        table = dict(self.model_.params)
        table.update(self.optimizer_state_.tensors())
        pt.save_checkpoint(path, table)

    @staticmethod
    def load_tensors(path) -> dict:
        return pt.load_checkpoint(path)


_COMMON_DOC = """
    Arithmetic is selected per component: ``matmul`` ('pam' or 'standard')
    with ``mantissa_bits`` rounding the PAM operands, and the
    ``softmax_pa``/``layernorm_pa``/``loss_pa``/``optimizer_pa`` flags.
    Derivative modes are 'exact' or 'approx' per group.
"""


class PAMLPClassifier(_PABase, ClassifierMixin):
    __doc__ = "ReLU multilayer perceptron classifier.\n" + _COMMON_DOC

    def __init__(self, hidden=(64, 64), epochs=60, batch_size=32, lr=0.01, beta1=0.9, beta2=0.98,
                 eps=1e-8, weight_decay=0.0, warmup_steps=0, schedule="cosine", label_smoothing=0.0,
                 dropout=0.0, layernorm_eps=1e-5, matmul="pam", mantissa_bits=23, softmax_pa=True,
                 layernorm_pa=True, loss_pa=True, optimizer_pa=True, deriv_matmul="approx",
                 deriv_softmax="approx", deriv_layernorm="approx", deriv_loss="exact",
                 deriv_default="approx", random_state=0):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.schedule = schedule
        self.label_smoothing = label_smoothing
        self.dropout = dropout
        self.layernorm_eps = layernorm_eps
        self.matmul = matmul
        self.mantissa_bits = mantissa_bits
        self.softmax_pa = softmax_pa
        self.layernorm_pa = layernorm_pa
        self.loss_pa = loss_pa
        self.optimizer_pa = optimizer_pa
        self.deriv_matmul = deriv_matmul
        self.deriv_softmax = deriv_softmax
        self.deriv_layernorm = deriv_layernorm
        self.deriv_loss = deriv_loss
        self.deriv_default = deriv_default
        self.random_state = random_state

    def fit(self, X, y, eval_set=None):
        X, y = check_X_y(X, y, dtype=np.float32)
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        spec = nn.MLPSpec(X.shape[1], tuple(int(h) for h in self.hidden), len(self.classes_))
        if eval_set is not None:
            Xe, ye = check_X_y(*eval_set, dtype=np.float32)
            eval_set = (Xe, np.searchsorted(self.classes_, ye))
        return self._fit_arrays(X, yi, spec, eval_set)

    def _metric(self, X, yi) -> float:
        pred = np.argmax(self._logits(X), axis=-1)
        return float(np.mean(pred == yi))

    def predict(self, X):
        X = check_array(X, dtype=np.float32)
        logits = self._logits(X)
        return self.classes_[np.argmax(logits, axis=-1)]

    def predict_proba(self, X):
        X = check_array(X, dtype=np.float32)
        return nn.softmax(self._logits(X), self.softmax_pa).value


class PATransformerTagger(_PABase):
    __doc__ = ("Transformer encoder predicting one token per input position.\n"
               "``X`` and ``Y`` are integer arrays of shape (n_samples, seq_len).\n" + _COMMON_DOC)

    def __init__(self, layers=2, heads=2, embed_dim=32, ff_dim=64, vocab_size=8, max_len=8,
                 epochs=8, batch_size=32, lr=0.003, beta1=0.9, beta2=0.98, eps=1e-8, weight_decay=0.0,
                 warmup_steps=20, schedule="cosine", label_smoothing=0.1, dropout=0.0,
                 layernorm_eps=1e-5, matmul="pam", mantissa_bits=23, softmax_pa=True, layernorm_pa=True,
                 loss_pa=True, optimizer_pa=True, deriv_matmul="approx", deriv_softmax="approx",
                 deriv_layernorm="approx", deriv_loss="exact", deriv_default="approx", random_state=0):
        self.layers = layers
        self.heads = heads
        self.embed_dim = embed_dim
        self.ff_dim = ff_dim
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.schedule = schedule
        self.label_smoothing = label_smoothing
        self.dropout = dropout
        self.layernorm_eps = layernorm_eps
        self.matmul = matmul
        self.mantissa_bits = mantissa_bits
        self.softmax_pa = softmax_pa
        self.layernorm_pa = layernorm_pa
        self.loss_pa = loss_pa
        self.optimizer_pa = optimizer_pa
        self.deriv_matmul = deriv_matmul
        self.deriv_softmax = deriv_softmax
        self.deriv_layernorm = deriv_layernorm
        self.deriv_loss = deriv_loss
        self.deriv_default = deriv_default
        self.random_state = random_state

    def _check_tokens(self, X, name="X"):
        X = check_array(X, dtype=np.int64)
        if X.min() < 0 or X.max() >= self.vocab_size:
            raise ValueError(f"{name} holds tokens outside [0, {self.vocab_size})")
        return X

    def fit(self, X, Y, eval_set=None):
        X, Y = self._check_tokens(X), self._check_tokens(Y, "Y")
        if X.shape != Y.shape:
            raise ValueError(f"X and Y shapes differ: {X.shape} vs {Y.shape}")
        spec = nn.TransformerSpec(int(self.layers), int(self.heads), int(self.embed_dim), int(self.ff_dim),
                                  int(self.vocab_size), int(self.max_len))
        if eval_set is not None:
            eval_set = (self._check_tokens(eval_set[0]), self._check_tokens(eval_set[1], "Y"))
        return self._fit_arrays(X, Y, spec, eval_set)

    def _metric(self, X, Y) -> float:
        return float(np.mean(self.predict(X) == Y))

    def predict(self, X):
        X = self._check_tokens(X)
        return np.argmax(self._logits(X), axis=-1)

    def score(self, X, Y):
        """Token accuracy."""
        return self._metric(X, np.asarray(Y))
