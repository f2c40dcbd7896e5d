"""Staged SGD training with parameter freezing and saturation decay."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..core.params import sgd_momentum_step
from ..core.rng import make_rng
from ..errors import NumericError, SamplingError
from ..net.checkpoint import save_checkpoint
from ..net.layers import Dense, Dropout

__all__ = ["scope_parameters", "set_dropout", "train_staged", "TrainResult", "is_saturated"]

log = logging.getLogger(__name__)


def _dense_params(layers):
    return [p for layer in layers if isinstance(layer, Dense) for p in layer.parameters()]


def scope_parameters(network, scope):
    """Parameters trained in a stage of the given scope."""
    if scope == "all":
        return network.parameters()
    if scope == "upper":
        return [p for h in network.heads for p in h.parameters()]
    if scope == "last-dense":
        return [p for h in network.heads for p in h.classifier.parameters()]
    if scope == "all-dense":
        lowers = [network.lower_a] + ([network.lower_b] if network.lower_b is not None else [])
        params = [p for seq in lowers for p in _dense_params(seq.layers)]
        return params + [p for h in network.heads for p in _dense_params(h.trunk.layers)]
    raise ValueError(f"unknown scope {scope!r}")


def set_dropout(network, rate):
    seqs = [network.lower_a, network.lower_b] + [h.trunk for h in network.heads]
    for seq in seqs:
        if seq is None:
            continue
        for layer in seq.layers:
            if isinstance(layer, Dropout):
                layer.rate = rate


def is_saturated(acc_history, window, points):
    """Accuracy (percent) gained less than ``points`` over the last ``window`` epochs."""
    if len(acc_history) <= window:
        return False
    return acc_history[-1] - acc_history[-1 - window] < points


@dataclass
class TrainResult:
    history: list = field(default_factory=list)

    @property
    def losses(self):
        return [h["loss"] for h in self.history]


def _epoch_groups(table, n_views, rng):
    if n_views == 1:
        return rng.permutation(len(table)).reshape(-1, 1)
    groups = table.sample_windows(n_views, rng)
    return groups[rng.permutation(len(groups))]


def train_staged(network, table, pipeline, config, diagnostics_dir=None, log_fn=None):
    """Run the configured stages in order on ``table`` (the training rows).

    Parameters outside a stage's scope are frozen for that stage and stay
    bitwise unchanged.  The stage with ``epochs=None`` runs until the
    epoch budget is spent, multiplying its rate by ``lr_decay_factor``
    whenever training accuracy saturates.  A non-finite loss writes a
    checkpoint to ``diagnostics_dir`` (when given) and raises
    ``NumericError``.
    """
    if len(table) == 0:
        raise SamplingError("training table is empty")
    set_dropout(network, config.dropout_rate)
    params = network.parameters()
    result = TrainResult()
    epoch = 0
    single_stream = not network.spec.two_stream
    for si, stage in enumerate(config.stages):
        active = {id(p) for p in scope_parameters(network, stage.scope)}
        for p in params:
            p.frozen = id(p) not in active
            p.zero_grad()
        lr = stage.base_lr
        n_epochs = stage.epochs if stage.epochs is not None else config.epoch_budget - epoch
        acc_hist = []
        since_decay = 0
        for _ in range(n_epochs):
            rng = make_rng(config.seed, "epoch", epoch)
            groups = _epoch_groups(table, config.n_views, rng)
            total_loss, correct, count = 0.0, 0, 0
            for start in range(0, len(groups), config.batch_size):
                g = groups[start:start + config.batch_size]
                xv, xd = pipeline.train_batch(table, g, rng)
                y = table.labels[g[:, 0]]
                loss, probs, _, _ = network.loss_and_grad(
                    xv, None if single_stream else xd, y, training=True, rng=rng,
                    n_views=config.n_views, combiner=config.combiner, input_grad=False)
                if not math.isfinite(loss):
                    if diagnostics_dir is not None:
                        save_checkpoint(network, diagnostics_dir, stage=f"diverged-{si}",
                                        extra={"epoch": epoch, "loss": repr(loss)})
                    raise NumericError(f"non-finite loss at epoch {epoch} (stage {si})")
                sgd_momentum_step(params, lr, config.momentum)
                total_loss += loss * len(g)
                correct += int((probs.argmax(axis=1) == y).sum())
                count += len(g)
            acc = 100.0 * correct / count
            rec = {"epoch": epoch, "stage": si, "scope": stage.scope, "lr": lr,
                   "loss": total_loss / count, "train_acc": acc}
            result.history.append(rec)
            if log_fn is not None:
                log_fn(rec)
            log.info("epoch %d stage %d lr %.3g loss %.4f acc %.2f", epoch, si, lr,
                     rec["loss"], acc)
            epoch += 1
            acc_hist.append(acc)
            since_decay += 1
            if stage.epochs is None and since_decay >= config.saturation_window and \
                    is_saturated(acc_hist, config.saturation_window, config.saturation_points):
                lr *= config.lr_decay_factor
                since_decay = 0
    for p in params:
        p.frozen = False
        p.zero_grad()
    return result
