"""Training loop with dev-EER model selection, and trial scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..records import FeatureMatrix, Label, ScoreSet
from ..scoring import eer_from_arrays
from .asoftmax import asoftmax_loss
from .optim import adam_step
from .senet import BONAFIDE_CLASS, SPOOF_CLASS, ModelState, embed_backward, embed_forward, forward, llr_scores

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 32
    learning_rate: float = 3e-4
    batch_size: int = 8
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    weight_decay: float = 1e-4
    margin: int = 4
    # A-Softmax annealing: lam = max(lambda_min, lambda_base * (1 + lambda_gamma * it) ** -lambda_power)
    lambda_base: float = 1000.0
    lambda_gamma: float = 0.12
    lambda_power: float = 1.0
    lambda_min: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("Adam epsilon must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    def annealing_lambda(self, iteration: int) -> float:
        lam = self.lambda_base * (1.0 + self.lambda_gamma * iteration) ** (-self.lambda_power)
        return max(self.lambda_min, lam)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_eer: float


def label_index(label: Label) -> int:
    return BONAFIDE_CLASS if Label(label) is Label.BONAFIDE else SPOOF_CLASS


def stack_features(features) -> np.ndarray:
    shapes = {f.data.shape for f in features}
    if len(shapes) != 1:
        raise ValueError(f"inconsistent feature shapes: {sorted(shapes)}")
    return np.stack([f.data for f in features])[:, None, :, :]


def loss_and_grads(state: ModelState, x: np.ndarray, y: np.ndarray, margin: int, lam: float):
    """Train-mode forward/backward; returns (loss, grads, input_grad)."""
    emb, cache = embed_forward(state, x, train=True)
    loss, demb, dhead = asoftmax_loss(emb, y, state.params["head.weight"], margin, lam)
    grads, dx = embed_backward(demb, cache)
    grads["head.weight"] = dhead
    return loss, grads, dx


def train_step(state: ModelState, x, y, tc: TrainConfig, lr: float | None = None) -> float:
    lam = tc.annealing_lambda(state.step)
    loss, grads, _ = loss_and_grads(state, x, y, tc.margin, lam)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss} at optimizer step {state.step}")
    adam_step(state, grads, tc.learning_rate if lr is None else lr, tc.beta1, tc.beta2, tc.eps, tc.weight_decay)
    return loss


def score_trials(state: ModelState, features, batch_size: int = 32) -> ScoreSet:
    """Eval-mode log-likelihood-ratio scores, one per feature matrix.

    Evaluation runs in float64 so a trial's score does not depend on which
    batch it lands in.
    """
    features = list(features)
    out = ScoreSet()
    if not features:
        return out
    x = stack_features(features).astype(np.float64)
    state = state.astype(np.float64)
    scores = []
    for i in range(0, len(features), batch_size):
        scores.append(llr_scores(forward(state, x[i : i + batch_size], train=False)))
    for f, s in zip(features, np.concatenate(scores)):
        out.add(f.trial_id, float(s))
    return out


def _dev_eer(state, dev_set) -> float:
    feats = [f for f, _ in dev_set]
    labels = np.array([label_index(lab) for _, lab in dev_set])
    s = score_trials(state, feats).scores()
    bona, spoof = s[labels == BONAFIDE_CLASS], s[labels == SPOOF_CLASS]
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("dev set needs both bonafide and spoof trials")
    return eer_from_arrays(bona, spoof)[0]


def train(state: ModelState, train_set, dev_set, tc: TrainConfig, on_epoch=None):
    """Train for ``tc.epochs`` epochs and return (best_state, log).

    ``train_set`` and ``dev_set`` are sequences of (FeatureMatrix, Label).
    After every epoch the dev EER is computed; the state with the lowest dev
    EER (earliest on ties) is returned. ``state`` itself is updated in place
    and ends at the final epoch.
    """
    if not train_set or not dev_set:
        raise ValueError("train and dev sets must be non-empty")
    feats: list[FeatureMatrix] = [f for f, _ in train_set]
    x_all = stack_features(feats).astype(state.dtype)
    dev_shape = {f.data.shape for f, _ in dev_set}
    if dev_shape != {feats[0].data.shape}:
        raise ValueError(f"dev feature shapes {sorted(dev_shape)} differ from train {feats[0].data.shape}")
    y_all = np.array([label_index(lab) for _, lab in train_set])
    rng = np.random.default_rng(tc.seed)

    history: list[EpochRecord] = []
    best, best_eer = None, np.inf
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(feats))
        losses = []
        for start in range(0, len(order), tc.batch_size):
            idx = order[start : start + tc.batch_size]
            try:
                losses.append(train_step(state, x_all[idx], y_all[idx], tc))
            except TrainingError as exc:
                ids = ", ".join(feats[i].trial_id for i in idx)
                raise TrainingError(f"epoch {epoch}: {exc}; batch trials: {ids}") from None
        rec = EpochRecord(epoch, float(np.mean(losses)), float(_dev_eer(state, dev_set)))
        history.append(rec)
        log.info("epoch %d loss %.5f dev EER %.4f", rec.epoch, rec.train_loss, rec.dev_eer)
        if on_epoch is not None:
            on_epoch(rec)
        if rec.dev_eer < best_eer:
            best, best_eer = state.copy(), rec.dev_eer
    return best, history


def write_log(history, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch,train_loss,dev_eer\n")
        for r in history:
            f.write(f"{r.epoch},{r.train_loss:.17g},{r.dev_eer:.17g}\n")
